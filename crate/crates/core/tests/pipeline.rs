mod common;

use mpforge::analog_map::{map_compute_graph, Budget, CellLibrary};
use mpforge::compute_graph::{brute_force_marginal, eliminate, evaluate_exact, relevant_subgraph, simplify, OrderSpec, SimplifyRules};
use mpforge::graph_ir::{bn_to_factor_graph, BayesianNetwork};
use mpforge::mp_kernel::MpConfig;
use mpforge::netlist::{build_netlist, emit_testbench, parse_spice, same_structure, Stimulus};
use mpforge::sim::{dc_solve, SolveConfig};
use mpforge::Mode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    bn: BayesianNetwork,
    query: usize,
    evidence: Vec<(usize, u8)>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=7);
    let bn = BayesianNetwork::random(n, 3, &mut rng);
    let query = rng.random_range(0..n);
    let mut evidence = Vec::new();
    for v in 0..n {
        if v != query && rng.random_bool(0.3) {
            evidence.push((v, rng.random_range(0..=1u8)));
        }
    }
    Case { bn, query, evidence }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_solve_matches_graph_evaluation(seed in any::<u64>()) {
        let c = case(seed);
        let fg = bn_to_factor_graph(&c.bn).unwrap();
        let truth = brute_force_marginal(&fg, c.query, &c.evidence).unwrap();
        let pruned = relevant_subgraph(&fg, c.query, &c.evidence).unwrap();
        let cg = eliminate(&pruned.graph, pruned.query, &pruned.evidence, &OrderSpec::Declared).unwrap();
        let name = &c.bn.dag().names()[c.query];
        let direct = evaluate_exact(&cg, cg.nominal_bindings()).unwrap()[name.as_str()];
        prop_assert!((direct - truth).abs() < 1e-9);

        let lib = CellLibrary::builtin();
        let am = map_compute_graph(&cg, &lib, &Budget::default()).unwrap();
        let stim = Stimulus::new(cg.nominal_bindings().clone()).unwrap();
        let solved = dc_solve(&am, &stim, &MpConfig::default(), &SolveConfig::default()).unwrap();
        prop_assert!((solved.probabilities[name.as_str()] - direct).abs() < 1e-9);

        let nl = build_netlist(&am, &lib, &MpConfig::default(), "prop").unwrap();
        let tb = emit_testbench(&nl, &stim).unwrap();
        let parsed = parse_spice(&tb.to_text()).unwrap();
        let back = parsed.to_analog_map().unwrap();
        prop_assert!(same_structure(&am, &back));
        let again = dc_solve(&back, &parsed.stimulus().unwrap(), &MpConfig::default(), &SolveConfig::default()).unwrap();
        prop_assert_eq!(again.probabilities, solved.probabilities);
    }

    #[test]
    fn simplify_preserves_value(seed in any::<u64>()) {
        let c = case(seed);
        let fg = bn_to_factor_graph(&c.bn).unwrap();
        let pruned = relevant_subgraph(&fg, c.query, &c.evidence).unwrap();
        let cg = eliminate(&pruned.graph, pruned.query, &pruned.evidence, &OrderSpec::Declared).unwrap();
        let s = simplify(&cg, SimplifyRules::default());
        let name = c.bn.dag().names()[c.query].as_str();
        let a = evaluate_exact(&cg, cg.nominal_bindings()).unwrap()[name];
        let b = evaluate_exact(&s, s.nominal_bindings()).unwrap()[name];
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(s.stats().mul_count <= cg.stats().mul_count);
    }

    #[test]
    fn mp_solve_stays_a_probability(seed in any::<u64>()) {
        let c = case(seed);
        let fg = bn_to_factor_graph(&c.bn).unwrap();
        let pruned = relevant_subgraph(&fg, c.query, &c.evidence).unwrap();
        let cg = eliminate(&pruned.graph, pruned.query, &pruned.evidence, &OrderSpec::Declared).unwrap();
        let lib = CellLibrary::builtin();
        let am = map_compute_graph(&cg, &lib, &Budget::default()).unwrap();
        let stim = Stimulus::new(cg.nominal_bindings().clone()).unwrap();
        let cfg = SolveConfig::default().with_mode(Mode::Mp);
        let r = dc_solve(&am, &stim, &MpConfig::default(), &cfg).unwrap();
        for p in r.probabilities.values() {
            prop_assert!(p.is_finite() && (0.0..=1.0).contains(p));
        }
    }

    #[test]
    fn fuzzed_maps_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let am = common::random_map(&mut rng);
        let nl = build_netlist(&am, &CellLibrary::builtin(), &MpConfig::default(), "fuzz").unwrap();
        let text = nl.to_text();
        let parsed = parse_spice(&text).unwrap();
        prop_assert_eq!(parsed.to_text(), text);
        prop_assert!(same_structure(&am, &parsed.to_analog_map().unwrap()));
    }

    #[test]
    fn parser_never_panics(text in "[ -~\n]{0,200}") {
        let _ = parse_spice(&text);
    }

    #[test]
    fn parser_rejects_truncation(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let am = common::random_map(&mut rng);
        let text = build_netlist(&am, &CellLibrary::builtin(), &MpConfig::default(), "cut").unwrap().to_text();
        let cut = text.find(".END\n").map(|end| (end as f64 * frac) as usize).unwrap();
        let cut = text[..cut].rfind('\n').map_or(0, |i| i + 1);
        prop_assert!(parse_spice(&text[..cut]).is_err());
    }
}
