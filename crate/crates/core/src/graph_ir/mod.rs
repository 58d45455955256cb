//! Factor-graph IR and its frontends.
//!
//! A [`FactorGraph`] is a bipartite graph of binary variables and factors.
//! Factor tables are indexed by the assignment of the factor scope with the
//! first scope variable as the most significant bit.

mod bn;
mod dataset;
mod parity;

pub use bn::{bn_to_factor_graph, learn_cpts, parse_bn_file, BayesianNetwork, Dag, DEFAULT_ALPHA};
pub use dataset::{parse_csv, parse_schema, sample_dataset, CsvSchema, Dataset};
pub use parity::{parity_to_factor_graph, parse_alist, ParityCheckMatrix};

use crate::{Error, Result};

pub type VarId = usize;
pub type FactorId = usize;

/// Tolerance for CPT rows summing to one.
pub const CPT_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VariableNode {
    pub id: VarId,
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorKind {
    /// Conditional probability table; `scope[0]` is the child.
    Cpt,
    /// Even-parity indicator over the scope; stores no table.
    Parity,
    GenericTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorNode {
    pub id: FactorId,
    pub kind: FactorKind,
    pub scope: Vec<VarId>,
    /// Entries over scope assignments (`2^scope.len()` of them); empty for
    /// parity factors.
    pub table: Vec<f64>,
    pub label: String,
}

impl FactorNode {
    /// Value of the factor at a scope assignment given as bits in scope
    /// order.
    pub fn value(&self, bits: &[u8]) -> f64 {
        match self.kind {
            FactorKind::Parity => {
                if bits.iter().fold(0u8, |acc, b| acc ^ b) == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.table[assignment_index(bits)],
        }
    }
}

/// Table index of a scope assignment (first bit most significant).
pub fn assignment_index(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Bipartite variable/factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    variables: Vec<VariableNode>,
    factors: Vec<FactorNode>,
    var_factors: Vec<Vec<FactorId>>,
    normalization: f64,
}

impl FactorGraph {
    /// Builds a graph and checks scope consistency. Factor and variable ids
    /// are reassigned to their positions.
    pub fn new(
        mut variables: Vec<VariableNode>,
        mut factors: Vec<FactorNode>,
        normalization: f64,
    ) -> Result<Self> {
        for (i, v) in variables.iter_mut().enumerate() {
            v.id = i;
        }
        for (i, f) in factors.iter_mut().enumerate() {
            f.id = i;
        }
        let mut var_factors = vec![Vec::new(); variables.len()];
        for f in &factors {
            for &v in &f.scope {
                if v >= variables.len() {
                    return Err(Error::InvalidGraph(format!(
                        "factor `{}` references unknown variable {v}",
                        f.label
                    )));
                }
                if var_factors[v].last() == Some(&f.id) {
                    return Err(Error::InvalidGraph(format!(
                        "factor `{}` lists variable {v} twice",
                        f.label
                    )));
                }
                var_factors[v].push(f.id);
            }
        }
        let fg = FactorGraph {
            variables,
            factors,
            var_factors,
            normalization,
        };
        fg.check()?;
        Ok(fg)
    }

    pub fn variables(&self) -> &[VariableNode] {
        &self.variables
    }

    pub fn factors(&self) -> &[FactorNode] {
        &self.factors
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Factors adjacent to a variable, in factor-id order.
    pub fn factors_of(&self, v: VarId) -> &[FactorId] {
        &self.var_factors[v]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn edge_count(&self) -> usize {
        self.factors.iter().map(|f| f.scope.len()).sum()
    }

    /// Edges as (variable, factor) pairs ordered by factor then scope slot.
    pub fn edges(&self) -> Vec<(VarId, FactorId)> {
        self.factors
            .iter()
            .flat_map(|f| f.scope.iter().map(move |&v| (v, f.id)))
            .collect()
    }

    /// Bipartite and scope-consistency invariants.
    pub fn check(&self) -> Result<()> {
        for (i, v) in self.variables.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidGraph(format!("variable id {} at {i}", v.id)));
            }
            if v.cardinality != 2 {
                return Err(Error::InvalidGraph(format!(
                    "variable `{}` has cardinality {}; only binary variables are supported",
                    v.name, v.cardinality
                )));
            }
        }
        for f in &self.factors {
            let mut seen = f.scope.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != f.scope.len() {
                return Err(Error::InvalidGraph(format!("factor `{}` has repeated scope", f.label)));
            }
            match f.kind {
                FactorKind::Parity => {
                    if !f.table.is_empty() {
                        return Err(Error::InvalidGraph(format!(
                            "parity factor `{}` carries a table",
                            f.label
                        )));
                    }
                    if f.scope.is_empty() {
                        return Err(Error::InvalidGraph(format!("parity factor `{}` has empty scope", f.label)));
                    }
                }
                FactorKind::Cpt | FactorKind::GenericTable => {
                    if f.table.len() != 1 << f.scope.len() {
                        return Err(Error::InvalidGraph(format!(
                            "factor `{}` table has {} entries for scope of {}",
                            f.label,
                            f.table.len(),
                            f.scope.len()
                        )));
                    }
                    if f.table.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                        return Err(Error::InvalidGraph(format!(
                            "factor `{}` has entries outside [0,1]",
                            f.label
                        )));
                    }
                }
            }
            if f.kind == FactorKind::Cpt {
                if f.scope.is_empty() {
                    return Err(Error::InvalidGraph(format!("CPT `{}` has empty scope", f.label)));
                }
                let rows = 1 << (f.scope.len() - 1);
                for r in 0..rows {
                    let s = f.table[r] + f.table[rows + r];
                    if (s - 1.0).abs() > CPT_ROW_TOL {
                        return Err(Error::MalformedCpt {
                            node: self.variables[f.scope[0]].name.clone(),
                            msg: format!("row {r} sums to {s}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Product of all factor values at a full assignment (Z not applied).
    pub fn unnormalized(&self, assignment: &[u8]) -> f64 {
        let mut bits = Vec::new();
        self.factors.iter().fold(1.0, |acc, f| {
            bits.clear();
            bits.extend(f.scope.iter().map(|&v| assignment[v]));
            acc * f.value(&bits)
        })
    }

    /// Subgraph keeping the given variables and factors; ids are remapped
    /// densely in their original order.
    pub fn restrict(&self, keep_vars: &[bool], keep_factors: &[bool]) -> Result<FactorGraph> {
        let mut remap = vec![usize::MAX; self.variables.len()];
        let mut variables = Vec::new();
        for (v, keep) in keep_vars.iter().enumerate() {
            if *keep {
                remap[v] = variables.len();
                variables.push(self.variables[v].clone());
            }
        }
        let mut factors = Vec::new();
        for (f, keep) in keep_factors.iter().enumerate() {
            if *keep {
                let mut fac = self.factors[f].clone();
                for v in fac.scope.iter_mut() {
                    if remap[*v] == usize::MAX {
                        return Err(Error::InvalidGraph(format!(
                            "kept factor `{}` references dropped variable",
                            fac.label
                        )));
                    }
                    *v = remap[*v];
                }
                factors.push(fac);
            }
        }
        FactorGraph::new(variables, factors, self.normalization)
    }
}

pub(crate) fn binary_var(id: VarId, name: impl Into<String>) -> VariableNode {
    VariableNode {
        id,
        name: name.into(),
        cardinality: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_scope() {
        let vars = vec![binary_var(0, "a")];
        let f = FactorNode {
            id: 0,
            kind: FactorKind::GenericTable,
            scope: vec![1],
            table: vec![0.5, 0.5],
            label: "f".into(),
        };
        assert!(matches!(FactorGraph::new(vars, vec![f], 1.0), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn parity_value_is_even_indicator() {
        let f = FactorNode {
            id: 0,
            kind: FactorKind::Parity,
            scope: vec![0, 1, 2],
            table: vec![],
            label: "c".into(),
        };
        assert_eq!(f.value(&[1, 1, 0]), 1.0);
        assert_eq!(f.value(&[1, 0, 0]), 0.0);
    }

    #[test]
    fn malformed_cpt_names_node() {
        let vars = vec![binary_var(0, "rain")];
        let f = FactorNode {
            id: 0,
            kind: FactorKind::Cpt,
            scope: vec![0],
            table: vec![0.5, 0.6],
            label: "p(rain)".into(),
        };
        match FactorGraph::new(vars, vec![f], 1.0) {
            Err(Error::MalformedCpt { node, .. }) => assert_eq!(node, "rain"),
            other => panic!("{other:?}"),
        }
    }
}
