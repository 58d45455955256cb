//! Behavioral simulation: DC solve of cell maps, damped settling of maps
//! with feedback, and the flooding sum-product decoder.

use std::collections::BTreeMap;

use crate::analog_map::{cell_output, AnalogMap, CellKind, Driver, InstId};
use crate::graph_ir::{FactorGraph, FactorKind};
use crate::mp_kernel::{self, LogMap, MpConfig};
use crate::netlist::Stimulus;
use crate::{Error, Mode, Result};

/// LLR magnitude clamp for decoder messages.
pub const LLR_CLAMP: f64 = 30.0;

/// Iterations over which the divergence test compares residuals.
const DIVERGENCE_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub mode: Mode,
    /// Sweep cap for maps with feedback.
    pub max_iters: usize,
    /// Relaxation factor in `(0, 1]` applied to cells on feedback loops.
    pub damping: f64,
    /// Settling threshold on the largest net change, in µA.
    pub residual_tol: f64,
    /// Route maps with feedback to [`settle_cyclic`] instead of rejecting.
    pub allow_cyclic: bool,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            mode: Mode::Exact,
            max_iters: 200,
            damping: 0.5,
            residual_tol: 1e-6,
            allow_cyclic: true,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Invalid(format!("damping must be in (0,1], got {}", self.damping)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Invalid("residual tolerance must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Invalid("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Output currents in µA.
    pub currents: BTreeMap<String, f64>,
    /// Output currents divided by gamma.
    pub probabilities: BTreeMap<String, f64>,
    pub iterations: usize,
    pub settled: bool,
}

impl SolveReport {
    /// `key = value` lines in output-name order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, i) in &self.currents {
            s.push_str(&format!("current {name} = {i:.9} uA\n"));
            s.push_str(&format!("probability {name} = {:.9}\n", self.probabilities[name]));
        }
        s.push_str(&format!("iterations = {}\nsettled = {}\n", self.iterations, self.settled));
        s
    }
}

fn source_values(am: &AnalogMap, stim: &Stimulus) -> Result<Vec<f64>> {
    for input in am.inputs() {
        if stim.get(input).is_none() {
            return Err(Error::UnboundInput(input.clone()));
        }
    }
    Ok(am
        .nets()
        .iter()
        .map(|n| match &n.driver {
            Some(Driver::Stimulus { input, complement }) => {
                let p = stim.get(input).expect("checked");
                if *complement {
                    1.0 - p
                } else {
                    p
                }
            }
            Some(Driver::Fixed(v)) => *v,
            _ => 0.0,
        })
        .collect())
}

fn report(am: &AnalogMap, values: &[f64], mp: &MpConfig, iterations: usize, settled: bool) -> SolveReport {
    let probabilities: BTreeMap<String, f64> =
        am.outputs().iter().map(|(name, n)| (name.clone(), values[*n])).collect();
    SolveReport {
        currents: probabilities.iter().map(|(k, v)| (k.clone(), v * mp.gamma)).collect(),
        probabilities,
        iterations,
        settled,
    }
}

fn eval_instance(am: &AnalogMap, id: InstId, values: &[f64], mp: &MpConfig, mode: Mode) -> Result<f64> {
    let inst = &am.instances()[id];
    let x: Vec<f64> = inst.inputs.iter().map(|&n| values[n]).collect();
    cell_output(inst, &x, mp, mode)
}

/// Topological evaluation of an acyclic map. Maps with feedback go to
/// [`settle_cyclic`] when `cfg.allow_cyclic` is set.
pub fn dc_solve(am: &AnalogMap, stim: &Stimulus, mp: &MpConfig, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    mp.validate()?;
    am.validate()?;
    let Some(order) = am.topo_order() else {
        if cfg.allow_cyclic {
            return settle_cyclic(am, stim, mp, cfg);
        }
        return Err(Error::Structural("map has a feedback loop and cyclic solving is disabled".into()));
    };
    let mut values = source_values(am, stim)?;
    for id in order {
        let v = eval_instance(am, id, &values, mp, cfg.mode)?;
        values[am.instances()[id].output] = v;
    }
    Ok(report(am, &values, mp, 1, true))
}

/// Strongly connected components of the instance graph (Tarjan), returned
/// in dependency order with members sorted by id.
fn components(am: &AnalogMap) -> Vec<Vec<InstId>> {
    let n = am.instances().len();
    let preds: Vec<Vec<InstId>> = am
        .instances()
        .iter()
        .map(|inst| {
            inst.inputs
                .iter()
                .filter_map(|&net| match am.net(net).driver {
                    Some(Driver::Instance(s)) => Some(s),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut k)) = work.last_mut() {
            if *k < preds[v].len() {
                let w = preds[v][*k];
                *k += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Relaxation of a map with feedback. Cells are swept in dependency order
/// (Gauss-Seidel); feedback cells, whose output is read earlier in the
/// sweep than it is written, update as `x <- (1 - d) x + d F(x)`, the rest
/// take `F(x)` directly. Stops when the largest change falls below the
/// tolerance (settled) or after `max_iters` sweeps (not settled). A
/// residual that grows tenfold over the window and exceeds full scale
/// (`gamma`) is reported as divergence; bounded oscillation is not.
pub fn settle_cyclic(am: &AnalogMap, stim: &Stimulus, mp: &MpConfig, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    mp.validate()?;
    am.validate()?;
    let mut values = source_values(am, stim)?;
    let order: Vec<InstId> = components(am).into_iter().flatten().collect();
    let mut pos = vec![0; order.len()];
    for (k, &id) in order.iter().enumerate() {
        pos[id] = k;
    }
    // Feedback cells: read in a sweep before they are written.
    let mut looped = vec![false; am.instances().len()];
    for inst in am.instances() {
        for &net in &inst.inputs {
            if let Some(Driver::Instance(src)) = am.net(net).driver {
                if pos[src] >= pos[inst.id] {
                    looped[src] = true;
                }
            }
        }
    }
    // Only feedback cells are read before they are written; they start at
    // mid-scale, the uninformative message.
    for inst in am.instances() {
        if looped[inst.id] {
            values[inst.output] = 0.5;
        }
    }
    let mut trace: Vec<f64> = Vec::new();
    for it in 1..=cfg.max_iters {
        let mut residual: f64 = 0.0;
        for &id in &order {
            let f = eval_instance(am, id, &values, mp, cfg.mode)?;
            let out = am.instances()[id].output;
            let new = if looped[id] {
                (1.0 - cfg.damping) * values[out] + cfg.damping * f
            } else {
                f
            };
            residual = residual.max((new - values[out]).abs() * mp.gamma);
            values[out] = new;
        }
        trace.push(residual);
        if !residual.is_finite()
            || (it > DIVERGENCE_WINDOW && residual > 10.0 * trace[it - 1 - DIVERGENCE_WINDOW] && residual > mp.gamma)
        {
            let tail = trace[trace.len().saturating_sub(DIVERGENCE_WINDOW)..].to_vec();
            return Err(Error::Diverged {
                iterations: it,
                trace: tail,
            });
        }
        if residual < cfg.residual_tol {
            return Ok(report(am, &values, mp, it, true));
        }
    }
    Ok(report(am, &values, mp, cfg.max_iters, false))
}

/// Check- and variable-node arithmetic of the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub max_iters: usize,
    /// EXACT uses the exact boxplus, MP the MP boxplus.
    pub check_mode: Mode,
    /// MP passes every incoming message through the spline-quantized log
    /// map before summation.
    pub variable_mode: Mode,
    pub mp: MpConfig,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            max_iters: 200,
            check_mode: Mode::Exact,
            variable_mode: Mode::Exact,
            mp: MpConfig::default(),
        }
    }
}

impl DecoderConfig {
    /// Same mode on both node types.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.check_mode = mode;
        self.variable_mode = mode;
        self
    }
}

/// Messages on every edge in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    /// Edge list as `(variable, factor)`, grouped by factor.
    pub edges: Vec<(usize, usize)>,
    pub m_v2f: Vec<f64>,
    pub m_f2v: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
    pub posterior: Vec<f64>,
}

fn clamp_llr(x: f64) -> f64 {
    x.clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// Spline-quantized LLR: `log(sigmoid(l)) - log(1 - sigmoid(l))` through
/// the MP log map.
fn quantize_llr(l: f64, lm: &LogMap) -> f64 {
    let p0 = 1.0 / (1.0 + (-l).exp());
    lm.log(p0) - lm.log(1.0 - p0)
}

/// Flooding sum-product decoder with LLRs `ln(p0/p1)`. Returns as soon as
/// the hard decision satisfies every check.
pub fn spa_decode(fg: &FactorGraph, channel_llrs: &[f64], cfg: &DecoderConfig) -> Result<DecodeResult> {
    let nv = fg.variables().len();
    if channel_llrs.len() != nv {
        return Err(Error::Invalid(format!("{} channel LLRs for {nv} variables", channel_llrs.len())));
    }
    if let Some(f) = fg.factors().iter().find(|f| f.kind != FactorKind::Parity) {
        return Err(Error::InvalidGraph(format!("factor `{}` is not a parity check", f.label)));
    }
    cfg.mp.validate()?;
    let mut st = MessageState {
        edges: Vec::new(),
        m_v2f: Vec::new(),
        m_f2v: Vec::new(),
        iteration: 0,
    };
    let mut ranges = Vec::with_capacity(fg.factors().len());
    for f in fg.factors() {
        let start = st.edges.len();
        st.edges.extend(f.scope.iter().map(|&v| (v, f.id)));
        ranges.push(start..st.edges.len());
    }
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (e, &(v, _)) in st.edges.iter().enumerate() {
        var_edges[v].push(e);
    }
    let ch: Vec<f64> = channel_llrs.iter().map(|&l| clamp_llr(l)).collect();
    st.m_v2f = st.edges.iter().map(|&(v, _)| ch[v]).collect();
    st.m_f2v = vec![0.0; st.edges.len()];
    let lm = LogMap::new(cfg.mp.spline_count);

    let mut bits = vec![0u8; nv];
    let mut posterior = ch.clone();
    for it in 1..=cfg.max_iters {
        st.iteration = it;
        for r in &ranges {
            for e in r.clone() {
                let mut acc: Option<f64> = None;
                for o in r.clone().filter(|&o| o != e) {
                    let m = st.m_v2f[o];
                    acc = Some(match acc {
                        None => m,
                        Some(a) => match cfg.check_mode {
                            Mode::Exact => mp_kernel::boxplus_exact(a, m),
                            Mode::Mp => mp_kernel::mp_boxplus(a, m, &cfg.mp)?,
                        },
                    });
                }
                // A degree-one check forces its bit to zero.
                st.m_f2v[e] = clamp_llr(acc.unwrap_or(LLR_CLAMP));
            }
        }
        for v in 0..nv {
            let incoming = |e: usize| match cfg.variable_mode {
                Mode::Exact => st.m_f2v[e],
                Mode::Mp => quantize_llr(st.m_f2v[e], &lm),
            };
            let total = ch[v] + var_edges[v].iter().map(|&e| incoming(e)).sum::<f64>();
            for &e in &var_edges[v] {
                st.m_v2f[e] = clamp_llr(total - incoming(e));
            }
            posterior[v] = total;
            bits[v] = u8::from(total < 0.0);
        }
        let satisfied = ranges
            .iter()
            .all(|r| r.clone().fold(0u8, |acc, e| acc ^ bits[st.edges[e].0]) == 0);
        if satisfied {
            return Ok(DecodeResult {
                bits,
                converged: true,
                iterations: it,
                posterior,
            });
        }
    }
    Ok(DecodeResult {
        bits,
        converged: false,
        iterations: cfg.max_iters,
        posterior,
    })
}

/// Cells of a map that are not pure wiring (everything except KCL nets).
pub fn active_cells(am: &AnalogMap) -> usize {
    am.instances().iter().filter(|i| i.kind != CellKind::KclSum).count()
}
