//! Arithmetic DAG produced from a factor graph by variable elimination.

pub(crate) mod dot;
mod eliminate;
mod oracle;
mod simplify;

pub use dot::ToDot;
pub use eliminate::{eliminate, relevant_subgraph, EliminationOrder, OrderSpec, PruneReport, Pruned};
pub use oracle::{brute_force_marginal, MAX_ENUM_VARS};
pub use simplify::{simplify, SimplifyRules};

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

pub type NodeId = usize;

/// Evidence as `(variable, value)` pairs.
pub type Evidence = [(crate::graph_ir::VarId, u8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Input,
    Const,
    Mul,
    Add,
    /// `1 - x`.
    Sub,
    Max,
    Relu,
    /// `numerator / denominator`.
    Norm,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Input => "INPUT",
            Op::Const => "CONST",
            Op::Mul => "MUL",
            Op::Add => "ADD",
            Op::Sub => "SUB",
            Op::Max => "MAX",
            Op::Relu => "RELU",
            Op::Norm => "NORM",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeNode {
    pub id: NodeId,
    pub op: Op,
    pub operands: Vec<NodeId>,
    /// Only meaningful for `Const`.
    pub const_value: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub mul_count: usize,
    pub add_count: usize,
}

/// Nodes are stored in topological order: operands always precede users.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComputeGraph {
    nodes: Vec<ComputeNode>,
    inputs: Vec<(String, NodeId)>,
    outputs: Vec<(String, NodeId)>,
    /// Nominal input values (CPT entries for elimination graphs).
    nominal: BTreeMap<String, f64>,
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[ComputeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ComputeNode {
        &self.nodes[id]
    }

    pub fn inputs(&self) -> &[(String, NodeId)] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    pub fn nominal_bindings(&self) -> &BTreeMap<String, f64> {
        &self.nominal
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, id)| id)
    }

    fn push(&mut self, op: Op, operands: Vec<NodeId>, const_value: f64, label: String) -> NodeId {
        let id = self.nodes.len();
        debug_assert!(operands.iter().all(|&o| o < id));
        self.nodes.push(ComputeNode {
            id,
            op,
            operands,
            const_value,
            label,
        });
        id
    }

    /// Adds (or reuses) a named input.
    pub fn input(&mut self, name: &str, nominal: Option<f64>) -> NodeId {
        if let Some(&(_, id)) = self.inputs.iter().find(|(n, _)| n == name) {
            return id;
        }
        let id = self.push(Op::Input, vec![], 0.0, name.to_string());
        self.inputs.push((name.to_string(), id));
        if let Some(v) = nominal {
            self.nominal.insert(name.to_string(), v);
        }
        id
    }

    pub fn constant(&mut self, value: f64, label: impl Into<String>) -> NodeId {
        self.push(Op::Const, vec![], value, label.into())
    }

    pub fn op(&mut self, op: Op, operands: Vec<NodeId>, label: impl Into<String>) -> NodeId {
        self.push(op, operands, 0.0, label.into())
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId, label: impl Into<String>) -> NodeId {
        self.op(Op::Mul, vec![a, b], label)
    }

    pub fn add(&mut self, operands: Vec<NodeId>, label: impl Into<String>) -> NodeId {
        self.op(Op::Add, operands, label)
    }

    pub fn sub(&mut self, a: NodeId, label: impl Into<String>) -> NodeId {
        self.op(Op::Sub, vec![a], label)
    }

    pub fn norm(&mut self, num: NodeId, den: NodeId, label: impl Into<String>) -> NodeId {
        self.op(Op::Norm, vec![num, den], label)
    }

    pub fn set_output(&mut self, name: &str, id: NodeId) {
        match self.outputs.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = id,
            None => self.outputs.push((name.to_string(), id)),
        }
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats::default();
        for n in &self.nodes {
            match n.op {
                Op::Mul => s.mul_count += 1,
                Op::Add => s.add_count += 1,
                _ => {}
            }
        }
        s
    }

    /// Checks arity and ordering invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Structural(format!("node id {} stored at {i}", n.id)));
            }
            if let Some(&o) = n.operands.iter().find(|&&o| o >= i) {
                return Err(Error::Structural(format!("node {i} references later node {o}")));
            }
            let ok = match n.op {
                Op::Input | Op::Const => n.operands.is_empty(),
                Op::Mul | Op::Add | Op::Max => n.operands.len() >= 2,
                Op::Sub | Op::Relu => n.operands.len() == 1,
                Op::Norm => n.operands.len() == 2,
            };
            if !ok {
                return Err(Error::Structural(format!(
                    "node {i} ({}) has arity {}",
                    n.op,
                    n.operands.len()
                )));
            }
        }
        for (name, id) in self.outputs.iter().chain(&self.inputs) {
            if *id >= self.nodes.len() {
                return Err(Error::Structural(format!("`{name}` points past the graph")));
            }
        }
        Ok(())
    }

    /// Drops nodes unreachable from the outputs, renumbering densely.
    pub fn prune_dead(&self) -> ComputeGraph {
        let mut live = vec![false; self.nodes.len()];
        for &(_, o) in &self.outputs {
            live[o] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if live[i] {
                for &o in &self.nodes[i].operands {
                    live[o] = true;
                }
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut out = ComputeGraph::new();
        for n in &self.nodes {
            if !live[n.id] {
                continue;
            }
            let operands = n.operands.iter().map(|&o| remap[o]).collect();
            remap[n.id] = out.push(n.op, operands, n.const_value, n.label.clone());
        }
        out.inputs = self
            .inputs
            .iter()
            .filter(|(_, id)| live[*id])
            .map(|(n, id)| (n.clone(), remap[*id]))
            .collect();
        out.outputs = self.outputs.iter().map(|(n, id)| (n.clone(), remap[*id])).collect();
        out.nominal = self
            .nominal
            .iter()
            .filter(|(k, _)| out.inputs.iter().any(|(n, _)| n == *k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        out
    }
}

/// Values of every node in topological order.
pub fn evaluate_nodes(cg: &ComputeGraph, bindings: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut vals = vec![0.0; cg.nodes.len()];
    for n in &cg.nodes {
        let arg = |k: usize| vals[n.operands[k]];
        vals[n.id] = match n.op {
            Op::Input => *bindings.get(&n.label).ok_or_else(|| Error::UnboundInput(n.label.clone()))?,
            Op::Const => n.const_value,
            Op::Mul => n.operands.iter().fold(1.0, |acc, &o| acc * vals[o]),
            Op::Add => n.operands.iter().fold(0.0, |acc, &o| acc + vals[o]),
            Op::Sub => 1.0 - arg(0),
            Op::Max => n.operands.iter().fold(f64::NEG_INFINITY, |acc, &o| acc.max(vals[o])),
            Op::Relu => arg(0).max(0.0),
            Op::Norm => {
                if arg(1) == 0.0 {
                    return Err(Error::DegenerateEvidence(n.id));
                }
                arg(0) / arg(1)
            }
        };
    }
    Ok(vals)
}

/// Double-precision evaluation of the named outputs.
pub fn evaluate_exact(cg: &ComputeGraph, bindings: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let vals = evaluate_nodes(cg, bindings)?;
    Ok(cg.outputs.iter().map(|(n, id)| (n.clone(), vals[*id])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_only_graph() {
        let mut cg = ComputeGraph::new();
        let a = cg.constant(0.25, "a");
        let b = cg.constant(0.5, "b");
        let m = cg.mul(a, b, "m");
        cg.set_output("y", m);
        let out = evaluate_exact(&cg, &BTreeMap::new()).unwrap();
        assert_eq!(out["y"], 0.125);
    }

    #[test]
    fn degenerate_norm() {
        let mut cg = ComputeGraph::new();
        let a = cg.constant(0.3, "a");
        let z = cg.constant(0.0, "z");
        let n = cg.norm(a, z, "n");
        cg.set_output("y", n);
        assert_eq!(evaluate_exact(&cg, &BTreeMap::new()), Err(Error::DegenerateEvidence(n)));
    }

    #[test]
    fn unbound_input_named() {
        let mut cg = ComputeGraph::new();
        let x = cg.input("p(X=1)", None);
        cg.set_output("y", x);
        assert_eq!(evaluate_exact(&cg, &BTreeMap::new()), Err(Error::UnboundInput("p(X=1)".into())));
    }

    #[test]
    fn validate_catches_arity() {
        let mut cg = ComputeGraph::new();
        let x = cg.constant(1.0, "x");
        cg.op(Op::Mul, vec![x], "bad");
        assert!(cg.validate().is_err());
    }

    #[test]
    fn prune_dead_keeps_outputs() {
        let mut cg = ComputeGraph::new();
        let a = cg.input("a", Some(0.2));
        let b = cg.input("b", Some(0.3));
        let _dead = cg.sub(b, "dead");
        let s = cg.sub(a, "s");
        cg.set_output("y", s);
        let p = cg.prune_dead();
        assert_eq!(p.nodes().len(), 2);
        assert_eq!(p.inputs().len(), 1);
        assert_eq!(p.nominal_bindings().len(), 1);
        let out = evaluate_exact(&p, p.nominal_bindings()).unwrap();
        assert!((out["y"] - 0.8).abs() < 1e-15);
    }
}
