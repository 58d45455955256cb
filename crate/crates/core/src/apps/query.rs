//! End-to-end Bayesian-network queries through all five stages.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::analog_map::{map_compute_graph, AnalogMap, Budget, CellLibrary};
use crate::compute_graph::{eliminate, relevant_subgraph, simplify, ComputeGraph, OrderSpec, Pruned, SimplifyRules};
use crate::graph_ir::{bn_to_factor_graph, BayesianNetwork, FactorGraph};
use crate::mp_kernel::MpConfig;
use crate::netlist::{build_netlist, emit_testbench, parse_spice, Stimulus};
use crate::sim::{dc_solve, SolveConfig, SolveReport};
use crate::{Error, Mode, Result};

/// Wall-clock time per stage, in run order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timings(pub Vec<(&'static str, Duration)>);

impl Timings {
    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.0.push((stage, t.elapsed()));
        out
    }

    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }

    pub fn get(&self, stage: &str) -> Option<Duration> {
        self.0.iter().find(|(s, _)| *s == stage).map(|(_, d)| *d)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (stage, d) in &self.0 {
            let _ = writeln!(s, "{stage:<8} {:10.3} ms", d.as_secs_f64() * 1e3);
        }
        let _ = writeln!(s, "{:<8} {:10.3} ms", "total", self.total().as_secs_f64() * 1e3);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConfig {
    pub mode: Mode,
    pub order: OrderSpec,
    /// Run the simplifier before mapping.
    pub simplify: bool,
    pub mp: MpConfig,
    pub budget: Budget,
    pub solve: SolveConfig,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            mode: Mode::Exact,
            order: OrderSpec::Declared,
            simplify: false,
            mp: MpConfig::default(),
            budget: Budget::default(),
            solve: SolveConfig::default(),
        }
    }
}

/// Every artifact of one query run.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub probability: f64,
    pub factor_graph: FactorGraph,
    pub pruned: Pruned,
    pub compute: ComputeGraph,
    pub map: AnalogMap,
    pub netlist: String,
    pub testbench: String,
    pub report: SolveReport,
    pub timings: Timings,
}

/// `P(query = 1 | evidence)` synthesized and solved: factor graph,
/// elimination, cell map, netlist and testbench text, then a DC solve of
/// the parsed testbench.
pub fn bn_query(
    bn: &BayesianNetwork,
    query: &str,
    evidence: &[(String, u8)],
    cfg: &QueryConfig,
    lib: &CellLibrary,
) -> Result<QueryRun> {
    let mut t = Timings::default();
    let (fg, pruned) = t.time("factor", || {
        let fg = bn_to_factor_graph(bn)?;
        let var = |name: &str| fg.var_by_name(name).ok_or_else(|| Error::Query(format!("unknown variable `{name}`")));
        let q = var(query)?;
        let ev = evidence.iter().map(|(n, v)| Ok((var(n)?, *v))).collect::<Result<Vec<_>>>()?;
        let pruned = relevant_subgraph(&fg, q, &ev)?;
        Ok((fg, pruned))
    })?;
    let compute = t.time("compute", || {
        let cg = eliminate(&pruned.graph, pruned.query, &pruned.evidence, &cfg.order)?;
        Ok(if cfg.simplify { simplify(&cg, SimplifyRules::default()) } else { cg })
    })?;
    let map = t.time("map", || map_compute_graph(&compute, lib, &cfg.budget))?;
    let stim = Stimulus::new(compute.nominal_bindings().clone())?;
    let (netlist, testbench) = t.time("netlist", || {
        let nl = build_netlist(&map, lib, &cfg.mp, &format!("query {query}"))?;
        let tb = emit_testbench(&nl, &stim)?;
        Ok((nl.to_text(), tb.to_text()))
    })?;
    let report = t.time("sim", || {
        let parsed = parse_spice(&testbench)?;
        let am = parsed.to_analog_map()?;
        dc_solve(&am, &parsed.stimulus()?, &cfg.mp, &cfg.solve.with_mode(cfg.mode))
    })?;
    let probability = report
        .probabilities
        .get(query)
        .copied()
        .ok_or_else(|| Error::Query(format!("no output for `{query}`")))?;
    Ok(QueryRun {
        probability,
        factor_graph: fg,
        pruned,
        compute,
        map,
        netlist,
        testbench,
        report,
        timings: t,
    })
}
