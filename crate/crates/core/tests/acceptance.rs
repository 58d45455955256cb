//! Acceptance criteria A1-A8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use mpforge::analog_map::{variant_error, Budget, CellKind, CellLibrary};
use mpforge::apps::ann::{ann_eval, iris, iris_weights};
use mpforge::apps::ldpc::{ber_sweep, decoder_map, fixture_32, lift_protograph, BerConfig, Protograph};
use mpforge::apps::query::{bn_query, QueryConfig};
use mpforge::compute_graph::brute_force_marginal;
use mpforge::graph_ir::{bn_to_factor_graph, parity_to_factor_graph, parse_bn_file, BayesianNetwork};
use mpforge::mp_kernel::{mp_root, MpConfig};
use mpforge::netlist::{build_netlist, emit_spice, parse_spice, same_structure};
use mpforge::sim::DecoderConfig;
use mpforge::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const PREY: &str = include_str!("../data/prey.bn");

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn a1() -> Outcome {
    let t = Instant::now();
    let bn = parse_bn_file(PREY).map_err(e2s)?;
    let fg = bn_to_factor_graph(&bn).map_err(e2s)?;
    let truth = brute_force_marginal(&fg, 4, &[(1, 1)]).map_err(e2s)?;
    let ev = [("V".to_string(), 1)];
    let lib = CellLibrary::builtin();
    let exact = bn_query(&bn, "C", &ev, &QueryConfig::default(), &lib).map_err(e2s)?;
    let mp_cfg = QueryConfig {
        mode: Mode::Mp,
        ..QueryConfig::default()
    };
    let mp = bn_query(&bn, "C", &ev, &mp_cfg, &lib).map_err(e2s)?;
    let elapsed = t.elapsed();
    let d_exact = (exact.probability - truth).abs();
    let d_mp = (mp.probability - truth).abs();
    let ands = exact.map.count(CellKind::SoftAnd);
    ensure(d_exact <= 1e-9, format!("EXACT off by {d_exact:e} (tol 1e-9)"))?;
    ensure(d_mp <= 0.06, format!("MP off by {d_mp:.4} (tol 0.06)"))?;
    ensure(ands == 8, format!("{ands} SOFT_AND instances, want 8"))?;
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?} (limit 1 s)"))?;
    Ok(format!(
        "oracle {truth:.6}, EXACT |d|={d_exact:.1e} (tol 1e-9), MP {:.6} |d|={d_mp:.4} (tol 0.06), SOFT_AND={ands} (want 8), {:.1} ms",
        mp.probability,
        elapsed.as_secs_f64() * 1e3
    ))
}

fn a2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lib = CellLibrary::builtin();
    let mut worst: f64 = 0.0;
    let t = Instant::now();
    let mut cases = 0;
    while cases < 200 {
        let n = rng.random_range(1..=8);
        let bn = BayesianNetwork::random(n, 3, &mut rng);
        let fg = bn_to_factor_graph(&bn).map_err(e2s)?;
        let q = rng.random_range(0..n);
        let mut ev = Vec::new();
        for v in 0..n {
            if v != q && rng.random_bool(0.3) {
                ev.push((v, rng.random_range(0..=1u8)));
            }
        }
        let truth = brute_force_marginal(&fg, q, &ev).map_err(e2s)?;
        let names = bn.dag().names();
        let named: Vec<(String, u8)> = ev.iter().map(|&(v, b)| (names[v].clone(), b)).collect();
        let run = bn_query(&bn, &names[q], &named, &QueryConfig::default(), &lib)
            .map_err(|e| format!("case {cases}: {e}"))?;
        let d = (run.probability - truth).abs();
        worst = worst.max(d);
        ensure(d <= 1e-9, format!("case {cases}: |d| = {d:e} (tol 1e-9)"))?;
        cases += 1;
    }
    Ok(format!(
        "200 random networks (<= 8 nodes), max |d| = {worst:.1e} (tol 1e-9), {:.0} ms",
        t.elapsed().as_secs_f64() * 1e3
    ))
}

fn a3() -> Outcome {
    let t = Instant::now();
    let h = fixture_32();
    let snr = [1.0, 2.0, 3.0, 4.0, 5.0];
    let base = BerConfig {
        min_frames: 10_000,
        max_frames: 10_000,
        min_frame_errors: usize::MAX,
        seed: 1,
        decoder: DecoderConfig::default(),
    };
    let exact = ber_sweep(&h, &snr, &base).map_err(e2s)?;
    let mp_cfg = BerConfig {
        decoder: DecoderConfig {
            check_mode: Mode::Mp,
            ..DecoderConfig::default()
        },
        ..base
    };
    let mp = ber_sweep(&h, &snr, &mp_cfg).map_err(e2s)?;
    let mut worst_ratio: f64 = 1.0;
    for w in exact.points.windows(2) {
        ensure(
            w[1].ber < w[0].ber,
            format!("EXACT BER not decreasing: {} dB {:.3e} -> {} dB {:.3e}", w[0].ebn0_db, w[0].ber, w[1].ebn0_db, w[1].ber),
        )?;
    }
    for (e, m) in exact.points.iter().zip(&mp.points) {
        ensure(e.fer >= e.ber && m.fer >= m.ber, format!("FER < BER at {} dB", e.ebn0_db))?;
        ensure(e.frames >= 10_000 && m.frames >= 10_000, "fewer than 1e4 frames")?;
        let ratio = if e.ber > 0.0 && m.ber > 0.0 {
            (m.ber / e.ber).max(e.ber / m.ber)
        } else if e.ber == m.ber {
            1.0
        } else {
            f64::INFINITY
        };
        worst_ratio = worst_ratio.max(ratio);
        ensure(ratio <= 3.0, format!("MP/EXACT BER ratio {ratio:.2} at {} dB (limit 3)", e.ebn0_db))?;
    }
    let ber: Vec<String> = exact.points.iter().map(|p| format!("{:.2e}", p.ber)).collect();
    Ok(format!(
        "EXACT BER [{}] strictly decreasing, FER >= BER, worst MP/EXACT ratio {worst_ratio:.3} (limit 3), 1e4 frames/point, {:.1} s",
        ber.join(", "),
        t.elapsed().as_secs_f64()
    ))
}

fn a4() -> Outcome {
    let base = fixture_32();
    let lib = CellLibrary::builtin();
    let mut parts = Vec::new();
    for z in [2usize, 3] {
        let h = lift_protograph(&Protograph::from_matrix(&base, z), 4).map_err(e2s)?;
        ensure(h.rows() == 24 * z && h.cols() == 32 * z, format!("Z={z}: {}x{}", h.rows(), h.cols()))?;
        ensure(h.col_weights().iter().all(|&w| w == 3), format!("Z={z}: column weight changed"))?;
        ensure(h.row_weights().iter().all(|&w| w == 4), format!("Z={z}: row weight changed"))?;
        let fg = parity_to_factor_graph(&h).map_err(e2s)?;
        let am = decoder_map(&fg, &lib, &Budget::default()).map_err(e2s)?;
        let text = emit_spice(&am, &lib, &MpConfig::default(), &format!("ldpc {}", h.cols())).map_err(e2s)?;
        let back = parse_spice(&text).map_err(e2s)?.to_analog_map().map_err(e2s)?;
        ensure(same_structure(&am, &back), format!("Z={z}: netlist does not round-trip"))?;
        parts.push(format!("{}-bit ({} cells)", h.cols(), am.instances().len()));
    }
    Ok(format!("{}: weights (3,4) preserved, netlists valid", parts.join(", ")))
}

fn a5() -> Outcome {
    let (_, test) = iris().split_every(5);
    let spec = iris_weights();
    let lib = CellLibrary::builtin();
    let mp = MpConfig::default();
    let e = ann_eval(&spec, &test, Mode::Exact, &mp, &lib, &Budget::default()).map_err(e2s)?;
    let m = ann_eval(&spec, &test, Mode::Mp, &mp, &lib, &Budget::default()).map_err(e2s)?;
    let gap = (e.accuracy - m.accuracy).abs();
    ensure(e.accuracy >= 0.88, format!("EXACT accuracy {:.3} (min 0.88)", e.accuracy))?;
    ensure(gap <= 0.02 + 1e-12, format!("MP accuracy {:.3} vs EXACT {:.3} (max gap 0.02)", m.accuracy, e.accuracy))?;
    Ok(format!(
        "IRIS test split ({} samples): EXACT {:.3} (min 0.88), MP {:.3}, gap {gap:.3} (max 0.02)",
        test.len(),
        e.accuracy,
        m.accuracy
    ))
}

fn a6() -> Outcome {
    let lib = CellLibrary::builtin();
    let mp = MpConfig::default();
    let mut lines = Vec::new();
    let mut worst = Duration::ZERO;
    let bn = parse_bn_file(PREY).map_err(e2s)?;
    let run = bn_query(&bn, "C", &[("V".to_string(), 1)], &QueryConfig::default(), &lib).map_err(e2s)?;
    let synth: Duration = run.timings.0.iter().filter(|(s, _)| *s != "sim").map(|(_, d)| *d).sum();
    worst = worst.max(synth);
    let stages: Vec<String> =
        run.timings.0.iter().map(|(s, d)| format!("{s} {:.2}", d.as_secs_f64() * 1e3)).collect();
    lines.push(format!("prey [{}] ms", stages.join(", ")));
    for z in [1usize, 2, 3] {
        let t = Instant::now();
        let h = if z == 1 {
            fixture_32()
        } else {
            lift_protograph(&Protograph::from_matrix(&fixture_32(), z), 4).map_err(e2s)?
        };
        let fg = parity_to_factor_graph(&h).map_err(e2s)?;
        let t_fg = t.elapsed();
        let am = decoder_map(&fg, &lib, &Budget::default()).map_err(e2s)?;
        let t_map = t.elapsed();
        let text = emit_spice(&am, &lib, &mp, "ldpc").map_err(e2s)?;
        let total = t.elapsed();
        ensure(!text.is_empty(), "empty netlist")?;
        worst = worst.max(total);
        lines.push(format!(
            "{}-bit [factor {:.2}, map {:.2}, netlist {:.2}] ms",
            h.cols(),
            t_fg.as_secs_f64() * 1e3,
            (t_map - t_fg).as_secs_f64() * 1e3,
            (total - t_map).as_secs_f64() * 1e3
        ));
    }
    let t = Instant::now();
    let cg = mpforge::apps::ann::build_ann_graph(&iris_weights()).map_err(e2s)?;
    let am = mpforge::analog_map::map_compute_graph(&cg, &lib, &Budget::default()).map_err(e2s)?;
    emit_spice(&am, &lib, &mp, "ann").map_err(e2s)?;
    let ann = t.elapsed();
    worst = worst.max(ann);
    lines.push(format!("iris {:.2} ms", ann.as_secs_f64() * 1e3));
    ensure(worst < Duration::from_secs(1), format!("slowest synthesis {worst:?} (limit 1 s)"))?;
    Ok(format!("{}; slowest {:.1} ms (limit 1000)", lines.join("; "), worst.as_secs_f64() * 1e3))
}

/// Root of `sum max(L - z, 0) = gamma` by bisection, independent of the
/// sorted active-set solver.
fn bisect_root(l: &[f64], gamma: f64) -> f64 {
    let f = |z: f64| l.iter().map(|&x| (x - z).max(0.0)).sum::<f64>() - gamma;
    let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (mx - gamma - 1.0, mx);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn a7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_bisect: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let gamma = rng.random_range(0.01..4.0);
        let z = mp_root(&l, gamma).map_err(e2s)?;
        let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ensure(mx - gamma <= z + 1e-12 && z < mx, format!("case {case}: bounds violated"))?;
        let c = rng.random_range(-3.0..3.0);
        let shifted: Vec<f64> = l.iter().map(|x| x + c).collect();
        let zs = mp_root(&shifted, gamma).map_err(e2s)?;
        ensure((zs - z - c).abs() <= 1e-9, format!("case {case}: shift equivariance off by {:e}", zs - z - c))?;
        let i = rng.random_range(0..n);
        let mut up = l.clone();
        up[i] += rng.random_range(0.0..1.0);
        ensure(mp_root(&up, gamma).map_err(e2s)? >= z - 1e-12, format!("case {case}: not monotone in inputs"))?;
        ensure(
            mp_root(&l, gamma * 1.5).map_err(e2s)? <= z + 1e-12,
            format!("case {case}: not monotone in gamma"),
        )?;
        let zl = mp_root(&l, 1e-6).map_err(e2s)?;
        ensure((zl - mx).abs() <= 1e-5, format!("case {case}: gamma -> 0 limit off by {:e}", zl - mx))?;
        let d = (bisect_root(&l, gamma) - z).abs();
        worst_bisect = worst_bisect.max(d);
        ensure(d <= 1e-9, format!("case {case}: bisection disagrees by {d:e}"))?;
    }
    let mut errs = BTreeMap::new();
    for kind in [CellKind::SoftAnd, CellKind::SoftOr, CellKind::MpNorm, CellKind::MpMac] {
        let e: Vec<f64> = [4, 8, 16].iter().map(|&s| variant_error(kind, s)).collect();
        ensure(e[0] > e[1] && e[1] > e[2], format!("{kind} error not decreasing: {e:?}"))?;
        errs.insert(kind.name(), e);
    }
    let and = &errs["SOFT_AND"];
    Ok(format!(
        "1000 cases: bounds, shift (1e-9), monotone in L and gamma, gamma=1e-6 limit (1e-5), bisection max |d| {worst_bisect:.1e} (tol 1e-9); SOFT_AND error {:.3}/{:.3}/{:.3} at 4/8/16 splines, all gates decreasing",
        and[0], and[1], and[2]
    ))
}

fn a8() -> Outcome {
    let lib = CellLibrary::builtin();
    let mp = MpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let am = common::random_map(&mut rng);
        let nl = build_netlist(&am, &lib, &mp, "fuzz").map_err(|e| format!("map {case}: {e}"))?;
        let text = nl.to_text();
        let parsed = parse_spice(&text).map_err(|e| format!("map {case}: {e}"))?;
        ensure(parsed == nl, format!("map {case}: parsed model differs"))?;
        ensure(parsed.to_text() == text, format!("map {case}: re-emission differs"))?;
        let back = parsed.to_analog_map().map_err(|e| format!("map {case}: {e}"))?;
        ensure(same_structure(&am, &back), format!("map {case}: structure differs"))?;
    }
    let bn = parse_bn_file(PREY).map_err(e2s)?;
    let prey = bn_query(&bn, "C", &[("V".to_string(), 1)], &QueryConfig::default(), &lib).map_err(e2s)?;
    common::check_golden("prey.sp", &prey.netlist)?;
    let fg = parity_to_factor_graph(&fixture_32()).map_err(e2s)?;
    let dec = decoder_map(&fg, &lib, &Budget::default()).map_err(e2s)?;
    common::check_golden("ldpc32.sp", &emit_spice(&dec, &lib, &mp, "ldpc 32").map_err(e2s)?)?;
    Ok("1000 fuzzed maps: parse(emit) identical, byte-identical re-emission, structure preserved; prey.sp and ldpc32.sp golden match".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("{name} PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{name} FAIL  {msg}");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
