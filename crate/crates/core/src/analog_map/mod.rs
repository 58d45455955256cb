//! Standard-cell library and the mapper from compute graphs to cell
//! instances.
//!
//! Every net carries one signal current. Values are kept in units of
//! `gamma` (a probability for dual-rail nets), so a net value `u` stands for
//! `u * gamma` µA on the true rail and `(1 - u) * gamma` on the complement.

mod library;

pub use library::{
    parse_cell_library, select_cell, variant_error, Budget, CellKind, CellLibrary, CellSpec, Metrics, Port, PortDir,
    CELL_LIB_ENV, DEFAULT_TARGET_ERROR,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compute_graph::{dot, evaluate_exact, ComputeGraph, NodeId, Op, ToDot};
use crate::mp_kernel::{self, LogMap, MpConfig, ProbabilityCurrent, Regime};
use crate::{Error, Mode, Result};

pub type NetId = usize;
pub type InstId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Driver {
    Instance(InstId),
    /// One rail of a named input.
    Stimulus { input: String, complement: bool },
    /// Fixed current in units of gamma.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub id: NetId,
    pub name: String,
    pub driver: Option<Driver>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstId,
    pub kind: CellKind,
    /// Selected variant; 0 for cells without a log map.
    pub splines: u32,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    /// `w1..wk` and `b` for MP_MAC.
    pub params: Vec<(String, f64)>,
}

/// Graph of cell instances connected by nets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalogMap {
    nets: Vec<Net>,
    instances: Vec<Instance>,
    inputs: Vec<String>,
    outputs: Vec<(String, NetId)>,
}

/// Replaces characters that are not legal in SPICE node names.
pub fn sanitize(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "x".to_string()
    } else {
        trimmed.to_string()
    }
}

impl AnalogMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles a map from parsed parts and validates it.
    pub(crate) fn from_parts(
        nets: Vec<Net>,
        instances: Vec<Instance>,
        inputs: Vec<String>,
        outputs: Vec<(String, NetId)>,
    ) -> Result<Self> {
        let am = AnalogMap {
            nets,
            instances,
            inputs,
            outputs,
        };
        am.validate()?;
        Ok(am)
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id]
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(String, NetId)] {
        &self.outputs
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.instances.iter().filter(|i| i.kind == kind).count()
    }

    /// An undriven net, to be driven later by [`AnalogMap::drive`].
    pub fn add_net(&mut self, name: impl Into<String>) -> NetId {
        let id = self.nets.len();
        self.nets.push(Net {
            id,
            name: name.into(),
            driver: None,
        });
        id
    }

    fn unique_name(&self, base: String) -> String {
        if !self.nets.iter().any(|n| n.name == base) {
            return base;
        }
        (2..).map(|k| format!("{base}_{k}")).find(|c| !self.nets.iter().any(|n| &n.name == c)).unwrap()
    }

    /// True and complement stimulus nets for a named input.
    pub fn stimulus(&mut self, input: &str) -> (NetId, NetId) {
        let base = self.unique_name(format!("in_{}", sanitize(input)));
        let t = self.add_net(base.clone());
        self.nets[t].driver = Some(Driver::Stimulus {
            input: input.to_string(),
            complement: false,
        });
        let c = self.add_net(format!("{base}_c"));
        self.nets[c].driver = Some(Driver::Stimulus {
            input: input.to_string(),
            complement: true,
        });
        self.inputs.push(input.to_string());
        (t, c)
    }

    /// Fixed true/complement rails for a constant.
    pub fn fixed(&mut self, value: f64) -> (NetId, NetId) {
        let k = self.nets.len();
        let t = self.add_net(format!("k{k}"));
        self.nets[t].driver = Some(Driver::Fixed(value));
        let c = self.add_net(format!("k{k}_c"));
        self.nets[c].driver = Some(Driver::Fixed(1.0 - value));
        (t, c)
    }

    /// Adds an instance driving a fresh net `n<id>`.
    pub fn instance(&mut self, kind: CellKind, splines: u32, inputs: Vec<NetId>, params: Vec<(String, f64)>) -> NetId {
        let id = self.instances.len();
        let out = self.add_net(format!("n{id}"));
        self.push_instance(kind, splines, inputs, out, params);
        out
    }

    /// Adds an instance driving an existing undriven net (for feedback
    /// loops).
    pub fn drive(
        &mut self,
        net: NetId,
        kind: CellKind,
        splines: u32,
        inputs: Vec<NetId>,
        params: Vec<(String, f64)>,
    ) -> Result<InstId> {
        if self.nets[net].driver.is_some() {
            return Err(Error::Structural(format!("net {} already driven", self.nets[net].name)));
        }
        Ok(self.push_instance(kind, splines, inputs, net, params))
    }

    fn push_instance(
        &mut self,
        kind: CellKind,
        splines: u32,
        inputs: Vec<NetId>,
        output: NetId,
        params: Vec<(String, f64)>,
    ) -> InstId {
        let id = self.instances.len();
        self.nets[output].driver = Some(Driver::Instance(id));
        self.instances.push(Instance {
            id,
            kind,
            splines,
            inputs,
            output,
            params,
        });
        id
    }

    /// Marks a net as a named output and renames it `out_<name>`.
    pub fn set_output(&mut self, name: &str, net: NetId) {
        if !self.outputs.iter().any(|(_, n)| *n == net) {
            let new = self.unique_name(format!("out_{}", sanitize(name)));
            self.nets[net].name = new;
        }
        self.outputs.push((name.to_string(), net));
    }

    /// Structural problems; empty when the map is well formed.
    pub fn structural_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mut loads = vec![0usize; self.nets.len()];
        for inst in &self.instances {
            for &n in &inst.inputs {
                match loads.get_mut(n) {
                    Some(l) => *l += 1,
                    None => issues.push(format!("X{} references missing net {n}", inst.id)),
                }
            }
            let ok = match inst.kind.fixed_arity() {
                Some(a) => inst.inputs.len() == a,
                None => !inst.inputs.is_empty(),
            };
            if !ok {
                issues.push(format!("X{} ({}) has {} inputs", inst.id, inst.kind, inst.inputs.len()));
            }
            if inst.kind == CellKind::MpMac && inst.params.len() != inst.inputs.len() + 1 {
                issues.push(format!("X{} (MP_MAC) needs one weight per input plus a bias", inst.id));
            }
            if self.nets.get(inst.output).and_then(|n| n.driver.as_ref()) != Some(&Driver::Instance(inst.id)) {
                issues.push(format!("X{} does not drive its output net", inst.id));
            }
        }
        for &(_, n) in &self.outputs {
            if let Some(l) = loads.get_mut(n) {
                *l += 1;
            }
        }
        let mut names: Vec<&str> = self.nets.iter().map(|n| n.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            issues.push(format!("duplicate net name {}", w[0]));
        }
        for net in &self.nets {
            if net.driver.is_none() {
                issues.push(format!("net {} has no driver", net.name));
            } else if loads[net.id] == 0 {
                issues.push(format!("net {} is dangling", net.name));
            }
        }
        issues
    }

    pub fn validate(&self) -> Result<()> {
        match self.structural_issues().first() {
            Some(first) => Err(Error::Structural(first.clone())),
            None => Ok(()),
        }
    }

    /// Instance ids in evaluation order, or `None` when instances form a
    /// feedback loop.
    pub fn topo_order(&self) -> Option<Vec<InstId>> {
        let n = self.instances.len();
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<InstId>> = vec![Vec::new(); n];
        for inst in &self.instances {
            for &net in &inst.inputs {
                if let Some(Driver::Instance(src)) = self.nets[net].driver {
                    indeg[inst.id] += 1;
                    users[src].push(inst.id);
                }
            }
        }
        let mut ready: std::collections::BTreeSet<InstId> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.insert(u);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Behavior of one instance given its input net values (units of gamma).
pub fn cell_output(inst: &Instance, x: &[f64], cfg: &MpConfig, mode: Mode) -> Result<f64> {
    let cfg = if inst.splines > 0 {
        cfg.with_splines(inst.splines)
    } else {
        *cfg
    };
    let param = |name: &str| inst.params.iter().find(|(k, _)| k == name).map(|p| p.1);
    Ok(match inst.kind {
        CellKind::CurrentSrc => x[0],
        CellKind::Inv => 1.0 - x[0],
        CellKind::KclSum => x.iter().sum(),
        CellKind::ReluCell => mp_kernel::relu(x[0]),
        CellKind::SoftAnd | CellKind::SoftOr => {
            let or = inst.kind == CellKind::SoftOr;
            match mode {
                Mode::Exact if or => 1.0 - (1.0 - x[0]) * (1.0 - x[1]),
                Mode::Exact => x[0] * x[1],
                Mode::Mp => match (as_probability(x[0]), as_probability(x[1])) {
                    (Some(a), Some(b)) => {
                        let (a, b) = (
                            ProbabilityCurrent::from_probability(a, cfg.gamma)?,
                            ProbabilityCurrent::from_probability(b, cfg.gamma)?,
                        );
                        let y = if or {
                            mp_kernel::soft_or(a, b, &cfg, mode)?
                        } else {
                            mp_kernel::soft_and(a, b, &cfg, mode)?
                        };
                        y.probability(cfg.gamma)
                    }
                    // Out-of-range operands (sums of products from generic
                    // tables) fall back to the plain log-domain product.
                    _ if !or && x[0] >= 0.0 && x[1] >= 0.0 => {
                        let lm = LogMap::new(cfg.spline_count);
                        lm.exp_any(lm.log_any(x[0]) + lm.log_any(x[1]))
                    }
                    _ => {
                        return Err(Error::InvalidCurrent(format!(
                            "X{} ({}) inputs {:?} outside [0,1]",
                            inst.id, inst.kind, x
                        )))
                    }
                },
            }
        }
        CellKind::MpNorm => {
            if x[1] == 0.0 {
                return Err(Error::DegenerateEvidence(inst.id));
            }
            match mode {
                Mode::Exact => x[0] / x[1],
                Mode::Mp => mp_kernel::mp_ratio(x[0].max(0.0), x[1], &cfg, mode)?,
            }
        }
        CellKind::MpMac => {
            let weights: Vec<f64> = (1..=x.len())
                .map(|k| param(&format!("w{k}")).ok_or_else(|| Error::Structural(format!("X{} lacks w{k}", inst.id))))
                .collect::<Result<_>>()?;
            let bias = param("b").unwrap_or(0.0);
            mp_kernel::mp_mac(x, &weights, bias, &cfg, mode)?
        }
    })
}

fn as_probability(v: f64) -> Option<f64> {
    const SLACK: f64 = 1e-9;
    (-SLACK..=1.0 + SLACK).contains(&v).then(|| v.clamp(0.0, 1.0))
}

/// How a compute node is realized.
#[derive(Debug, Clone)]
enum Plan {
    Source,
    Const(f64),
    Gate(CellKind, Vec<NodeId>),
    /// Chain of two-input SOFT_ANDs.
    AndChain(Vec<NodeId>),
    Mac { xs: Vec<NodeId>, ws: Vec<f64>, bias: f64 },
}

fn plan_node(cg: &ComputeGraph, uses: &[usize], id: NodeId) -> Result<Plan> {
    let n = cg.node(id);
    let single_use = |o: NodeId| uses[o] == 1;
    Ok(match n.op {
        Op::Input => Plan::Source,
        Op::Const => Plan::Const(n.const_value),
        Op::Mul => Plan::AndChain(n.operands.clone()),
        Op::Add => {
            let mut xs = Vec::new();
            let mut ws = Vec::new();
            let mut bias = 0.0;
            let mut is_mac = true;
            for &o in &n.operands {
                let on = cg.node(o);
                if on.op == Op::Const {
                    bias += on.const_value;
                    continue;
                }
                let weighted = on.op == Op::Mul
                    && on.operands.len() == 2
                    && single_use(o)
                    && on.operands.iter().filter(|&&k| cg.node(k).op == Op::Const).count() == 1;
                if !weighted {
                    is_mac = false;
                    break;
                }
                let (c, x) = if cg.node(on.operands[0]).op == Op::Const {
                    (on.operands[0], on.operands[1])
                } else {
                    (on.operands[1], on.operands[0])
                };
                xs.push(x);
                ws.push(cg.node(c).const_value);
            }
            if is_mac && !xs.is_empty() {
                Plan::Mac { xs, ws, bias }
            } else {
                Plan::Gate(CellKind::KclSum, n.operands.clone())
            }
        }
        Op::Sub => {
            let inner = cg.node(n.operands[0]);
            let or_pattern = inner.op == Op::Mul
                && inner.operands.len() == 2
                && single_use(inner.id)
                && inner.operands.iter().all(|&k| cg.node(k).op == Op::Sub);
            if or_pattern {
                let a = cg.node(inner.operands[0]).operands[0];
                let b = cg.node(inner.operands[1]).operands[0];
                Plan::Gate(CellKind::SoftOr, vec![a, b])
            } else {
                Plan::Gate(CellKind::Inv, n.operands.clone())
            }
        }
        Op::Norm => Plan::Gate(CellKind::MpNorm, n.operands.clone()),
        Op::Relu => Plan::Gate(CellKind::ReluCell, n.operands.clone()),
        Op::Max => {
            return Err(Error::Unmappable {
                node: id,
                op: n.op.to_string(),
            })
        }
    })
}

fn plan_operands(p: &Plan) -> &[NodeId] {
    match p {
        Plan::Source | Plan::Const(_) => &[],
        Plan::Gate(_, ops) | Plan::AndChain(ops) => ops,
        Plan::Mac { xs, .. } => xs,
    }
}

/// Maps a compute graph onto library cells: MUL to SOFT_AND, ADD to a KCL
/// net merge, `1 - x` to INV, `1 - (1-a)(1-b)` to SOFT_OR, weighted sums of
/// constants to MP_MAC, NORM to MP_NORM and RELU to RELU_CELL. Inputs and
/// constants become CURRENT_SRC cells.
pub fn map_compute_graph(cg: &ComputeGraph, lib: &CellLibrary, budget: &Budget) -> Result<AnalogMap> {
    cg.validate()?;
    budget.validate()?;
    let mut uses = vec![0usize; cg.nodes().len()];
    for n in cg.nodes() {
        for &o in &n.operands {
            uses[o] += 1;
        }
    }
    for &(_, o) in cg.outputs() {
        uses[o] += 1;
    }

    // Plan from the outputs so nodes absorbed by a pattern are skipped.
    let mut plans: Vec<Option<Plan>> = vec![None; cg.nodes().len()];
    let mut stack: Vec<NodeId> = cg.outputs().iter().map(|&(_, o)| o).collect();
    while let Some(id) = stack.pop() {
        if plans[id].is_some() {
            continue;
        }
        let p = plan_node(cg, &uses, id)?;
        stack.extend(plan_operands(&p).iter().copied().filter(|&o| plans[o].is_none()));
        plans[id] = Some(p);
    }

    let mut variant: BTreeMap<CellKind, u32> = BTreeMap::new();
    let mut splines_for = |kind: CellKind| -> Result<u32> {
        if let Some(&s) = variant.get(&kind) {
            return Ok(s);
        }
        let s = select_cell(kind, budget, lib)?.splines;
        variant.insert(kind, s);
        Ok(s)
    };

    let mut am = AnalogMap::new();
    let mut net_of: HashMap<NodeId, NetId> = HashMap::new();
    for (id, plan) in plans.iter().enumerate() {
        let Some(plan) = plan else { continue };
        let src = CellKind::CurrentSrc;
        let net = match plan {
            Plan::Source => {
                let (t, c) = am.stimulus(&cg.node(id).label);
                am.instance(src, splines_for(src)?, vec![t, c], vec![])
            }
            Plan::Const(v) => {
                let (t, c) = am.fixed(*v);
                am.instance(src, splines_for(src)?, vec![t, c], vec![])
            }
            Plan::Gate(kind, ops) => {
                let ins = ops.iter().map(|o| net_of[o]).collect();
                am.instance(*kind, splines_for(*kind)?, ins, vec![])
            }
            Plan::AndChain(ops) => {
                let s = splines_for(CellKind::SoftAnd)?;
                let mut acc = net_of[&ops[0]];
                for o in &ops[1..] {
                    acc = am.instance(CellKind::SoftAnd, s, vec![acc, net_of[o]], vec![]);
                }
                acc
            }
            Plan::Mac { xs, ws, bias } => {
                let ins = xs.iter().map(|o| net_of[o]).collect();
                let mut params: Vec<(String, f64)> =
                    ws.iter().enumerate().map(|(k, w)| (format!("w{}", k + 1), *w)).collect();
                params.push(("b".into(), *bias));
                am.instance(CellKind::MpMac, splines_for(CellKind::MpMac)?, ins, params)
            }
        };
        net_of.insert(id, net);
    }
    for (name, o) in cg.outputs() {
        am.set_output(name, net_of[o]);
    }
    am.validate()?;
    let area = project_metrics(&am, lib, budget.regime)?.area_units;
    if area > budget.max_area_units {
        return Err(Error::AreaBudget {
            area,
            max: budget.max_area_units,
        });
    }
    Ok(am)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Projection {
    pub area_units: f64,
    pub power_nw: f64,
    pub critical_path_delay_us: f64,
}

/// Sums area and power over instances; delay is the longest chain of cell
/// delays ending at an output. Feedback edges (closing a loop in DFS order)
/// are ignored, so a loop contributes one pass.
pub fn project_metrics(am: &AnalogMap, lib: &CellLibrary, regime: Regime) -> Result<Projection> {
    let mut p = Projection::default();
    let mut delay = Vec::with_capacity(am.instances.len());
    for inst in &am.instances {
        let m = lib
            .variant(inst.kind, inst.splines)
            .ok_or_else(|| Error::MissingMetric(format!("{} with {} splines", inst.kind, inst.splines)))?
            .metrics;
        p.area_units += m.area_units;
        p.power_nw += m.power(regime);
        delay.push(m.delay(regime));
    }
    // Longest path via memoized DFS over drivers.
    const UNSEEN: u8 = 0;
    const ACTIVE: u8 = 1;
    const DONE: u8 = 2;
    let mut state = vec![UNSEEN; am.instances.len()];
    let mut arrival = vec![0.0f64; am.instances.len()];
    for &(_, out) in &am.outputs {
        let Some(Driver::Instance(root)) = am.nets[out].driver else { continue };
        let mut stack = vec![(root, 0usize)];
        state[root] = ACTIVE;
        while let Some(&mut (i, ref mut k)) = stack.last_mut() {
            let inst = &am.instances[i];
            if *k < inst.inputs.len() {
                let net = inst.inputs[*k];
                *k += 1;
                if let Some(Driver::Instance(src)) = am.nets[net].driver {
                    if state[src] == UNSEEN {
                        state[src] = ACTIVE;
                        stack.push((src, 0));
                    }
                }
            } else {
                let worst_in = inst
                    .inputs
                    .iter()
                    .filter_map(|&net| match am.nets[net].driver {
                        Some(Driver::Instance(src)) if state[src] == DONE => Some(arrival[src]),
                        _ => None,
                    })
                    .fold(0.0, f64::max);
                arrival[i] = worst_in + delay[i];
                state[i] = DONE;
                stack.pop();
            }
        }
        p.critical_path_delay_us = p.critical_path_delay_us.max(arrival[root]);
    }
    Ok(p)
}

/// Result of [`validate_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub samples: usize,
    pub max_error: f64,
    pub structural: Vec<String>,
    pub pass: bool,
}

/// Compares EXACT-mode evaluation of the map with the compute graph over
/// random input probabilities.
pub fn validate_map(am: &AnalogMap, cg: &ComputeGraph, n_samples: usize, tol: f64, seed: u64) -> Result<MapReport> {
    let mut structural = am.structural_issues();
    if am.outputs.len() != cg.outputs().len() {
        structural.push(format!(
            "map has {} outputs, graph has {}",
            am.outputs.len(),
            cg.outputs().len()
        ));
    }
    if !structural.is_empty() {
        return Ok(MapReport {
            samples: 0,
            max_error: f64::NAN,
            structural,
            pass: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = crate::sim::SolveConfig::default();
    let mut max_error: f64 = 0.0;
    for _ in 0..n_samples {
        let stim: BTreeMap<String, f64> = cg
            .inputs()
            .iter()
            .map(|(n, _)| (n.clone(), rng.random_range(0.0..=1.0)))
            .collect();
        let want = match evaluate_exact(cg, &stim) {
            Ok(w) => w,
            Err(Error::DegenerateEvidence(_)) => continue,
            Err(e) => return Err(e),
        };
        let got = crate::sim::dc_solve(am, &crate::netlist::Stimulus::new(stim)?, &MpConfig::default(), &cfg)?;
        for (name, w) in &want {
            let g = got.probabilities.get(name).copied().unwrap_or(f64::NAN);
            let e = (g - w).abs();
            max_error = if e.is_nan() { f64::INFINITY } else { max_error.max(e) };
        }
    }
    Ok(MapReport {
        samples: n_samples,
        max_error,
        structural,
        pass: max_error <= tol,
    })
}

impl ToDot for AnalogMap {
    fn to_dot(&self) -> String {
        let mut body = String::new();
        for inst in &self.instances {
            let label = if inst.splines > 0 {
                format!("{} s{}", inst.kind, inst.splines)
            } else {
                inst.kind.to_string()
            };
            let _ = writeln!(body, "  X{} [shape=box,label=\"{}\"];", inst.id, dot::escape(&label));
        }
        for net in &self.nets {
            match &net.driver {
                Some(Driver::Instance(_)) | None => {}
                Some(_) => {
                    let _ = writeln!(body, "  {} [shape=plaintext];", net.name);
                }
            }
        }
        for inst in &self.instances {
            for &n in &inst.inputs {
                let net = &self.nets[n];
                let from = match net.driver {
                    Some(Driver::Instance(src)) => format!("X{src}"),
                    _ => net.name.clone(),
                };
                let _ = writeln!(body, "  {from} -> X{} [label=\"{}\"];", inst.id, net.name);
            }
        }
        for (name, n) in &self.outputs {
            if let Some(Driver::Instance(src)) = self.nets[*n].driver {
                let _ = writeln!(body, "  {} [shape=plaintext,label=\"{}\"];", self.nets[*n].name, dot::escape(name));
                let _ = writeln!(body, "  X{src} -> {};", self.nets[*n].name);
            }
        }
        dot::digraph(&body)
    }
}
