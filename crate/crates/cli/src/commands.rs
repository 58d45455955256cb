//! Subcommand bodies. Each returns the text printed on stdout; artifacts go
//! under `--out` with fixed names.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use mpforge::analog_map::{map_compute_graph, project_metrics, AnalogMap, CellKind, CellLibrary};
use mpforge::apps::ann::{ann_eval, build_ann_graph, iris, iris_weights, parse_labeled_csv, parse_weights, reference_accuracy};
use mpforge::apps::ldpc::{analog_decode, awgn_sigma, ber_sweep, decoder_map, fixture_32, frame_llrs, gf2_rank, lift_protograph, BerConfig, Protograph};
use mpforge::apps::query::{bn_query, QueryConfig, Timings};
use mpforge::compute_graph::{eliminate, relevant_subgraph, OrderSpec, ToDot};
use mpforge::graph_ir::{bn_to_factor_graph, parity_to_factor_graph, parse_alist, parse_bn_file, ParityCheckMatrix};
use mpforge::netlist::{build_netlist, emit_testbench, parse_spice, Stimulus};
use mpforge::sim::{dc_solve, DecoderConfig, SolveConfig};

use crate::config::{RunConfig, Stage};

/// Output directory; writes are skipped when none was given.
struct Artifacts(Option<PathBuf>);

impl Artifacts {
    fn new(dir: &Option<PathBuf>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Artifacts(dir.clone()))
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        if let Some(d) = &self.0 {
            let path = d.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// Runs `f` as `stage`, recording its time and tagging any error with the
/// stage name.
fn timed<T>(t: &mut Timings, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().with_context(|| format!("stage {stage}"));
    t.0.push((stage, start.elapsed()));
    out
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn solve_config(cfg: &RunConfig) -> SolveConfig {
    SolveConfig {
        seed: cfg.seed,
        ..SolveConfig::default().with_mode(cfg.mode)
    }
}

fn metrics_text(am: &AnalogMap, lib: &CellLibrary, cfg: &RunConfig) -> Result<String> {
    let p = project_metrics(am, lib, cfg.mp.regime)?;
    let mut s = String::new();
    writeln!(s, "cells = {}", am.instances().len())?;
    for kind in CellKind::ALL {
        let n = am.count(kind);
        if n > 0 {
            writeln!(s, "cells.{} = {n}", kind.name())?;
        }
    }
    writeln!(s, "nets = {}", am.nets().len())?;
    writeln!(s, "regime = {}", cfg.mp.regime)?;
    writeln!(s, "area_units = {:.3}", p.area_units)?;
    writeln!(s, "power_nw = {:.3}", p.power_nw)?;
    writeln!(s, "critical_path_delay_us = {:.6}", p.critical_path_delay_us)?;
    Ok(s)
}

fn finish(mut out: String, t: &Timings) -> String {
    out.push_str(&t.to_text());
    out
}

enum Input {
    Bn(PathBuf),
    Alist(PathBuf),
    Weights(PathBuf),
}

fn classify(path: Option<&PathBuf>) -> Result<Input> {
    let path = path.ok_or_else(|| anyhow!("--in is required"))?.clone();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bn") => Ok(Input::Bn(path)),
        Some("alist") => Ok(Input::Alist(path)),
        Some("weights") => Ok(Input::Weights(path)),
        _ => bail!("cannot tell the input kind of {} (expected .bn, .alist or .weights)", path.display()),
    }
}

/// Runs the pipeline on `--in` up to `--stage`.
pub fn synth(cfg: &RunConfig, lib: &CellLibrary) -> Result<String> {
    let art = Artifacts::new(&cfg.out)?;
    let mut t = Timings::default();
    let mut out = String::new();
    match classify(cfg.input.as_ref())? {
        Input::Bn(path) => synth_bn(cfg, lib, &path, &art, &mut t, &mut out)?,
        Input::Alist(path) => synth_decoder(cfg, lib, &path, &art, &mut t, &mut out)?,
        Input::Weights(path) => synth_ann(cfg, lib, &path, &art, &mut t, &mut out)?,
    }
    Ok(finish(out, &t))
}

fn synth_bn(cfg: &RunConfig, lib: &CellLibrary, path: &Path, art: &Artifacts, t: &mut Timings, out: &mut String) -> Result<()> {
    let fg = timed(t, "factor", || {
        let bn = parse_bn_file(&read(path)?)?;
        Ok(bn_to_factor_graph(&bn)?)
    })?;
    art.write("factor_graph.dot", &fg.to_dot())?;
    writeln!(out, "factor: {} variables, {} factors", fg.variables().len(), fg.factors().len())?;
    if cfg.stage < Stage::Compute {
        return Ok(());
    }
    let query = cfg.query.as_deref().ok_or_else(|| anyhow!("stage compute: --query is required"))?;
    let cg = timed(t, "compute", || {
        let var = |n: &str| fg.var_by_name(n).ok_or_else(|| anyhow!("unknown variable `{n}`"));
        let q = var(query)?;
        let ev = cfg.evidence.iter().map(|(n, v)| Ok((var(n)?, *v))).collect::<Result<Vec<_>>>()?;
        let pruned = relevant_subgraph(&fg, q, &ev)?;
        Ok(eliminate(&pruned.graph, pruned.query, &pruned.evidence, &OrderSpec::Declared)?)
    })?;
    art.write("compute_graph.dot", &cg.to_dot())?;
    let st = cg.stats();
    writeln!(out, "compute: {} MUL, {} ADD", st.mul_count, st.add_count)?;
    if cfg.stage < Stage::Map {
        return Ok(());
    }
    let am = timed(t, "map", || Ok(map_compute_graph(&cg, lib, &cfg.budget)?))?;
    write_map(&am, lib, cfg, art, out)?;
    if cfg.stage < Stage::Netlist {
        return Ok(());
    }
    let stim = Stimulus::new(cg.nominal_bindings().clone())?;
    let tb = timed(t, "netlist", || {
        let nl = build_netlist(&am, lib, &cfg.mp, &format!("query {query}"))?;
        art.write("netlist.sp", &nl.to_text())?;
        Ok(emit_testbench(&nl, &stim)?.to_text())
    })?;
    art.write("testbench.sp", &tb)?;
    writeln!(out, "netlist: {} lines", tb.lines().count())?;
    if cfg.stage < Stage::Sim {
        return Ok(());
    }
    let rep = timed(t, "sim", || {
        let parsed = parse_spice(&tb)?;
        Ok(dc_solve(&parsed.to_analog_map()?, &parsed.stimulus()?, &cfg.mp, &solve_config(cfg))?)
    })?;
    art.write("report.txt", &rep.to_text())?;
    let p = rep.probabilities.get(query).ok_or_else(|| anyhow!("stage sim: no output for `{query}`"))?;
    writeln!(out, "sim: P({query} = 1{}) = {p:.9} ({})", evidence_suffix(&cfg.evidence), cfg.mode)?;
    Ok(())
}

fn write_map(am: &AnalogMap, lib: &CellLibrary, cfg: &RunConfig, art: &Artifacts, out: &mut String) -> Result<()> {
    art.write("map.dot", &am.to_dot())?;
    let metrics = metrics_text(am, lib, cfg).context("stage map")?;
    art.write("metrics.txt", &metrics)?;
    writeln!(out, "map: {} cells", am.instances().len())?;
    Ok(())
}

fn evidence_suffix(ev: &[(String, u8)]) -> String {
    if ev.is_empty() {
        String::new()
    } else {
        let items: Vec<String> = ev.iter().map(|(n, v)| format!("{n} = {v}")).collect();
        format!(" | {}", items.join(", "))
    }
}

fn load_code(cfg: &RunConfig, path: Option<&Path>) -> Result<ParityCheckMatrix> {
    let base = match path {
        Some(p) => parse_alist(&read(p)?)?,
        None => fixture_32(),
    };
    if cfg.lift > 1 {
        Ok(lift_protograph(&Protograph::from_matrix(&base, cfg.lift), cfg.seed)?)
    } else {
        Ok(base)
    }
}

fn synth_decoder(cfg: &RunConfig, lib: &CellLibrary, path: &Path, art: &Artifacts, t: &mut Timings, out: &mut String) -> Result<()> {
    let (h, fg) = timed(t, "factor", || {
        let h = load_code(cfg, Some(path))?;
        let fg = parity_to_factor_graph(&h)?;
        Ok((h, fg))
    })?;
    art.write("factor_graph.dot", &fg.to_dot())?;
    writeln!(out, "factor: {}x{} parity-check matrix", h.rows(), h.cols())?;
    if cfg.stage < Stage::Map {
        return Ok(());
    }
    let am = timed(t, "map", || Ok(decoder_map(&fg, lib, &cfg.budget)?))?;
    write_map(&am, lib, cfg, art, out)?;
    if cfg.stage < Stage::Netlist {
        return Ok(());
    }
    let text = timed(t, "netlist", || Ok(build_netlist(&am, lib, &cfg.mp, &format!("ldpc {}", h.cols()))?.to_text()))?;
    art.write("netlist.sp", &text)?;
    writeln!(out, "netlist: {} lines", text.lines().count())?;
    if cfg.stage < Stage::Sim {
        return Ok(());
    }
    let snr = *cfg.snr.first().ok_or_else(|| anyhow!("stage sim: --snr is empty"))?;
    let (bits, rep) = timed(t, "sim", || {
        let rate = (h.cols() - gf2_rank(&h)) as f64 / h.cols() as f64;
        let llrs = frame_llrs(h.cols(), awgn_sigma(snr, rate), cfg.seed, 0);
        let am = parse_spice(&text)?.to_analog_map()?;
        Ok(analog_decode(&am, &llrs, &cfg.mp, &solve_config(cfg))?)
    })?;
    let errors = bits.iter().filter(|&&b| b != 0).count();
    let mut report = rep.to_text();
    writeln!(report, "ebn0_db = {snr}\nbit_errors = {errors}")?;
    art.write("report.txt", &report)?;
    writeln!(
        out,
        "sim: one frame at {snr} dB, {errors} bit errors, {} iterations, settled = {}",
        rep.iterations, rep.settled
    )?;
    Ok(())
}

fn synth_ann(cfg: &RunConfig, lib: &CellLibrary, path: &Path, art: &Artifacts, t: &mut Timings, out: &mut String) -> Result<()> {
    let cg = timed(t, "compute", || Ok(build_ann_graph(&parse_weights(&read(path)?)?)?))?;
    art.write("compute_graph.dot", &cg.to_dot())?;
    let st = cg.stats();
    writeln!(out, "compute: {} MUL, {} ADD", st.mul_count, st.add_count)?;
    if cfg.stage < Stage::Map {
        return Ok(());
    }
    let am = timed(t, "map", || Ok(map_compute_graph(&cg, lib, &cfg.budget)?))?;
    write_map(&am, lib, cfg, art, out)?;
    if cfg.stage < Stage::Netlist {
        return Ok(());
    }
    let text = timed(t, "netlist", || Ok(build_netlist(&am, lib, &cfg.mp, "ann")?.to_text()))?;
    art.write("netlist.sp", &text)?;
    writeln!(out, "netlist: {} lines", text.lines().count())?;
    if cfg.stage < Stage::Sim {
        return Ok(());
    }
    let (accuracy, report) = timed(t, "sim", || ann_report(cfg, lib, &read(path)?))?;
    art.write("report.txt", &report)?;
    writeln!(out, "sim: accuracy = {accuracy:.6} ({})", cfg.mode)?;
    Ok(())
}

/// Accuracy of `spec_text` through its netlist on `--data` (every row) or
/// on the held-out fifth of the shipped IRIS set.
fn ann_report(cfg: &RunConfig, lib: &CellLibrary, spec_text: &str) -> Result<(f64, String)> {
    let spec = parse_weights(spec_text)?;
    let data = match &cfg.data {
        Some(p) => parse_labeled_csv(&read(p)?)?,
        None => iris().split_every(5).1,
    };
    let e = ann_eval(&spec, &data, cfg.mode, &cfg.mp, lib, &cfg.budget)?;
    let mut s = format!("mode = {}\nsamples = {}\naccuracy = {:.6}\n", cfg.mode, data.len(), e.accuracy);
    writeln!(s, "reference_accuracy = {:.6}", reference_accuracy(&spec, &data))?;
    writeln!(s, "cells = {}", e.cells)?;
    let preds: Vec<String> = e.predictions.iter().map(usize::to_string).collect();
    writeln!(s, "predictions = {}", preds.join(","))?;
    Ok((e.accuracy, s))
}

/// Decoder synthesis timing and the Monte-Carlo BER sweep.
pub fn ldpc(cfg: &RunConfig, lib: &CellLibrary) -> Result<String> {
    let art = Artifacts::new(&cfg.out)?;
    let mut t = Timings::default();
    let mut out = String::new();
    let (h, fg) = timed(&mut t, "factor", || {
        let h = load_code(cfg, cfg.input.as_deref())?;
        let fg = parity_to_factor_graph(&h)?;
        Ok((h, fg))
    })?;
    art.write("code.alist", &h.to_alist())?;
    let am = timed(&mut t, "map", || Ok(decoder_map(&fg, lib, &cfg.budget)?))?;
    art.write("metrics.txt", &metrics_text(&am, lib, cfg)?)?;
    let text = timed(&mut t, "netlist", || Ok(build_netlist(&am, lib, &cfg.mp, &format!("ldpc {}", h.cols()))?.to_text()))?;
    art.write("decoder.sp", &text)?;
    let synth_ms: f64 = t.0.iter().map(|(_, d)| d.as_secs_f64() * 1e3).sum();
    writeln!(
        out,
        "code: {}x{}, rank {}, decoder: {} cells, synthesis {synth_ms:.3} ms",
        h.rows(),
        h.cols(),
        gf2_rank(&h),
        am.instances().len()
    )?;
    if cfg.frames > 0 {
        let ber_cfg = BerConfig {
            min_frames: cfg.frames,
            max_frames: cfg.frames,
            min_frame_errors: usize::MAX,
            seed: cfg.seed,
            decoder: DecoderConfig {
                check_mode: cfg.mode,
                mp: cfg.mp,
                ..DecoderConfig::default()
            },
        };
        let res = timed(&mut t, "sim", || Ok(ber_sweep(&h, &cfg.snr, &ber_cfg)?))?;
        let csv = res.to_csv();
        art.write("ber.csv", &csv)?;
        art.write("ber.gp", &res.gnuplot_script("ber.csv", "ber.png"))?;
        out.push_str(&csv);
    }
    Ok(finish(out, &t))
}

/// IRIS-style evaluation of a weights file through the synthesized netlist.
pub fn ann(cfg: &RunConfig, lib: &CellLibrary) -> Result<String> {
    let art = Artifacts::new(&cfg.out)?;
    let mut t = Timings::default();
    let mut out = String::new();
    let (spec_text, cg) = timed(&mut t, "compute", || {
        let text = match &cfg.input {
            Some(p) => read(p)?,
            None => iris_weights().to_weights_text(),
        };
        let cg = build_ann_graph(&parse_weights(&text)?)?;
        Ok((text, cg))
    })?;
    let am = timed(&mut t, "map", || Ok(map_compute_graph(&cg, lib, &cfg.budget)?))?;
    art.write("metrics.txt", &metrics_text(&am, lib, cfg)?)?;
    let text = timed(&mut t, "netlist", || Ok(build_netlist(&am, lib, &cfg.mp, "ann")?.to_text()))?;
    art.write("ann.sp", &text)?;
    let (_, report) = timed(&mut t, "sim", || ann_report(cfg, lib, &spec_text))?;
    art.write("report.txt", &report)?;
    out.push_str(&report);
    Ok(finish(out, &t))
}

/// `P(query = 1 | evidence)` via the full pipeline.
pub fn query(cfg: &RunConfig, lib: &CellLibrary) -> Result<String> {
    let art = Artifacts::new(&cfg.out)?;
    let path = cfg.input.as_ref().ok_or_else(|| anyhow!("--in is required"))?;
    let query = cfg.query.as_deref().ok_or_else(|| anyhow!("--query is required"))?;
    let bn = parse_bn_file(&read(path)?).context("stage factor")?;
    let qc = QueryConfig {
        mode: cfg.mode,
        mp: cfg.mp,
        budget: cfg.budget,
        solve: solve_config(cfg),
        ..QueryConfig::default()
    };
    let run = bn_query(&bn, query, &cfg.evidence, &qc, lib).with_context(|| format!("query `{query}`"))?;
    art.write("factor_graph.dot", &run.factor_graph.to_dot())?;
    art.write("compute_graph.dot", &run.compute.to_dot())?;
    art.write("map.dot", &run.map.to_dot())?;
    art.write("metrics.txt", &metrics_text(&run.map, lib, cfg)?)?;
    art.write("netlist.sp", &run.netlist)?;
    art.write("testbench.sp", &run.testbench)?;
    art.write("report.txt", &run.report.to_text())?;
    let out = format!(
        "P({query} = 1{}) = {:.9} ({})\n",
        evidence_suffix(&cfg.evidence),
        run.probability,
        cfg.mode
    );
    Ok(finish(out, &run.timings))
}
