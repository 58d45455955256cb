//! Browser bindings for the demo page in `www/`.

use std::collections::BTreeMap;

use mpforge::analog_map::{map_compute_graph, variant_error, Budget, CellKind, CellLibrary};
use mpforge::compute_graph::{brute_force_marginal, eliminate, relevant_subgraph, OrderSpec};
use mpforge::graph_ir::{bn_to_factor_graph, parse_bn_file};
use mpforge::mp_kernel::{mp_root, soft_and, MpConfig, ProbabilityCurrent};
use mpforge::netlist::{build_netlist, Stimulus};
use mpforge::sim::{dc_solve, SolveConfig};
use mpforge::Mode;
use wasm_bindgen::prelude::*;

const PREY: &str = include_str!("../../core/data/prey.bn");

fn js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// `[z, max(L_0 - z, 0), max(L_1 - z, 0), ...]` for the MP constraint
/// `sum max(L_i - z, 0) = gamma`.
pub fn root_and_margins(scores: &[f64], gamma: f64) -> Result<Vec<f64>, String> {
    let z = mp_root(scores, gamma).map_err(|e| e.to_string())?;
    Ok(std::iter::once(z).chain(scores.iter().map(|&l| (l - z).max(0.0))).collect())
}

#[wasm_bindgen]
pub fn mp_margins(scores: &[f64], gamma: f64) -> Result<Vec<f64>, JsValue> {
    root_and_margins(scores, gamma).map_err(js)
}

/// Soft-AND output over `a = 0, 1/(n-1), ..., 1` at fixed `b`, as
/// interleaved `[exact, mp]` pairs.
pub fn soft_and_sweep(b: f64, splines: u32, n: usize) -> Result<Vec<f64>, String> {
    let cfg = MpConfig::default().with_splines(splines);
    let pb = ProbabilityCurrent::from_probability(b, cfg.gamma).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let a = k as f64 / (n.max(2) - 1) as f64;
        let pa = ProbabilityCurrent::from_probability(a, cfg.gamma).map_err(|e| e.to_string())?;
        for mode in [Mode::Exact, Mode::Mp] {
            let y = soft_and(pa, pb, &cfg, mode).map_err(|e| e.to_string())?;
            out.push(y.probability(cfg.gamma));
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn soft_and_curve(b: f64, splines: u32, n: usize) -> Result<Vec<f64>, JsValue> {
    soft_and_sweep(b, splines, n).map_err(js)
}

/// Worst grid error of a gate variant; `kind` is a cell name such as
/// `SOFT_AND`.
#[wasm_bindgen]
pub fn gate_error(kind: &str, splines: u32) -> Result<f64, JsValue> {
    let kind: CellKind = kind.parse().map_err(js)?;
    Ok(variant_error(kind, splines))
}

#[wasm_bindgen]
pub struct QueryResult {
    probability: f64,
    oracle: f64,
    cells: usize,
    soft_ands: usize,
    netlist: String,
}

#[wasm_bindgen]
impl QueryResult {
    #[wasm_bindgen(getter)]
    pub fn probability(&self) -> f64 {
        self.probability
    }

    #[wasm_bindgen(getter)]
    pub fn oracle(&self) -> f64 {
        self.oracle
    }

    #[wasm_bindgen(getter)]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[wasm_bindgen(getter)]
    pub fn soft_ands(&self) -> usize {
        self.soft_ands
    }

    #[wasm_bindgen(getter)]
    pub fn netlist(&self) -> String {
        self.netlist.clone()
    }
}

/// Names of the prey-network variables in declaration order.
#[wasm_bindgen]
pub fn prey_variables() -> Vec<String> {
    parse_bn_file(PREY).expect("shipped network").dag().names().to_vec()
}

/// `P(query = 1 | evidence)` on the prey network. `evidence` is a
/// comma-separated list such as `V=1,M=0`; `mode` is `exact` or `mp`.
pub fn run_prey(query: &str, evidence: &str, mode: &str) -> Result<QueryResult, String> {
    let err = |e: mpforge::Error| e.to_string();
    let mode: Mode = mode.parse().map_err(err)?;
    let fg = bn_to_factor_graph(&parse_bn_file(PREY).map_err(err)?).map_err(err)?;
    let var = |n: &str| fg.var_by_name(n.trim()).ok_or_else(|| format!("unknown variable `{n}`"));
    let q = var(query)?;
    let mut ev = Vec::new();
    for item in evidence.split(',').filter(|s| !s.trim().is_empty()) {
        let (n, v) = item.split_once('=').ok_or_else(|| format!("bad evidence `{item}`"))?;
        let v = match v.trim() {
            "0" => 0,
            "1" => 1,
            _ => return Err(format!("bad evidence `{item}`")),
        };
        ev.push((var(n)?, v));
    }
    let oracle = brute_force_marginal(&fg, q, &ev).map_err(err)?;
    let pruned = relevant_subgraph(&fg, q, &ev).map_err(err)?;
    let cg = eliminate(&pruned.graph, pruned.query, &pruned.evidence, &OrderSpec::Declared).map_err(err)?;
    let lib = CellLibrary::builtin();
    let mp = MpConfig::default();
    let am = map_compute_graph(&cg, &lib, &Budget::default()).map_err(err)?;
    let netlist = build_netlist(&am, &lib, &mp, &format!("query {}", query.trim())).map_err(err)?.to_text();
    let stim = Stimulus::new(cg.nominal_bindings().clone()).map_err(err)?;
    let rep = dc_solve(&am, &stim, &mp, &SolveConfig::default().with_mode(mode)).map_err(err)?;
    let probs: &BTreeMap<String, f64> = &rep.probabilities;
    let probability = probs.values().next().copied().ok_or("no output")?;
    Ok(QueryResult {
        probability,
        oracle,
        cells: am.instances().len(),
        soft_ands: am.count(CellKind::SoftAnd),
        netlist,
    })
}

#[wasm_bindgen]
pub fn prey_query(query: &str, evidence: &str, mode: &str) -> Result<QueryResult, JsValue> {
    run_prey(query, evidence, mode).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_sum_to_gamma() {
        let m = root_and_margins(&[1.0, 0.2, -0.5], 0.7).unwrap();
        assert!((m[1..].iter().sum::<f64>() - 0.7).abs() < 1e-12);
        assert!(root_and_margins(&[], 1.0).is_err());
    }

    #[test]
    fn soft_and_endpoints() {
        let c = soft_and_sweep(0.6, 16, 11).unwrap();
        assert_eq!(c.len(), 22);
        assert!((c[20] - 0.6).abs() < 1e-12);
        assert!(c.chunks(2).all(|p| (p[0] - p[1]).abs() < 0.03));
        assert!(gate_error("SOFT_AND", 4).unwrap() > gate_error("SOFT_AND", 16).unwrap());
    }

    #[test]
    fn prey_matches_oracle() {
        let r = run_prey("C", "V=1", "exact").unwrap();
        assert!((r.probability - 0.568).abs() < 1e-9);
        assert!((r.oracle - 0.568).abs() < 1e-9);
        assert_eq!(r.soft_ands, 8);
        assert!(r.netlist.ends_with(".END\n"));
        let m = run_prey("C", "V=1", "mp").unwrap();
        assert!((m.probability - m.oracle).abs() < 0.06);
        assert!(run_prey("Q", "", "exact").is_err());
        assert!(run_prey("C", "V=2", "exact").is_err());
        assert_eq!(prey_variables(), ["A", "V", "F", "M", "C"]);
    }
}
