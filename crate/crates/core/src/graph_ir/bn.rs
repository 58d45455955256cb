//! Bayesian-network frontend: DAGs, CPTs, the `.bn` text format and CPT
//! learning from binarized data.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use super::{binary_var, Dataset, FactorGraph, FactorKind, FactorNode};
use crate::{Error, Result};

/// Laplace pseudocount used when none is given.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Directed acyclic graph over named binary variables. Parent order is the
/// declared order and fixes the bit order of CPT rows (first parent is the
/// most significant bit).
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(names: Vec<String>, parents: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != parents.len() {
            return Err(Error::InvalidGraph("parent list count differs from node count".into()));
        }
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if seen.insert(n.as_str(), i).is_some() {
                return Err(Error::DuplicateNode(n.clone()));
            }
        }
        for (child, ps) in parents.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                if p >= names.len() {
                    return Err(Error::InvalidGraph(format!("parent index {p} out of range")));
                }
                if p == child || ps[..k].contains(&p) {
                    return Err(Error::InvalidGraph(format!(
                        "invalid parent `{}` of `{}`",
                        names[p], names[child]
                    )));
                }
            }
        }
        let dag = Dag { names, parents };
        dag.topo_order()?;
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Kahn's algorithm; lowest index first among ready nodes.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.names.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0);
            return Err(Error::CycleDetected(self.names[stuck].clone()));
        }
        Ok(order)
    }
}

/// A DAG with one CPT per node, stored as `p(node = 1 | parent row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    dag: Dag,
    p_true: Vec<Vec<f64>>,
}

impl BayesianNetwork {
    pub fn new(dag: Dag, p_true: Vec<Vec<f64>>) -> Result<Self> {
        if p_true.len() != dag.len() {
            return Err(Error::InvalidGraph("CPT count differs from node count".into()));
        }
        for (i, rows) in p_true.iter().enumerate() {
            let want = 1usize << dag.parents(i).len();
            if rows.len() != want {
                return Err(Error::MalformedCpt {
                    node: dag.names[i].clone(),
                    msg: format!("expected {want} rows, found {}", rows.len()),
                });
            }
            if let Some(bad) = rows.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::MalformedCpt {
                    node: dag.names[i].clone(),
                    msg: format!("probability {bad} outside [0,1]"),
                });
            }
        }
        Ok(BayesianNetwork { dag, p_true })
    }

    /// Builds from full two-column tables `[p(x=0|row), p(x=1|row)]`,
    /// rejecting rows that do not sum to one.
    pub fn from_tables(dag: Dag, tables: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let mut p_true = Vec::with_capacity(tables.len());
        for (i, rows) in tables.iter().enumerate() {
            let mut col = Vec::with_capacity(rows.len());
            for (r, [p0, p1]) in rows.iter().enumerate() {
                if ((p0 + p1) - 1.0).abs() > super::CPT_ROW_TOL {
                    return Err(Error::MalformedCpt {
                        node: dag.names.get(i).cloned().unwrap_or_default(),
                        msg: format!("row {r} sums to {}", p0 + p1),
                    });
                }
                col.push(*p1);
            }
            p_true.push(col);
        }
        Self::new(dag, p_true)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// `p(node = 1 | parents = row)`; `row` packs parent bits MSB-first.
    pub fn p_true(&self, node: usize, row: usize) -> f64 {
        self.p_true[node][row]
    }

    pub fn cpt(&self, node: usize) -> &[f64] {
        &self.p_true[node]
    }

    /// Chain-rule joint probability of a full assignment.
    pub fn joint(&self, assignment: &[u8]) -> f64 {
        (0..self.dag.len()).fold(1.0, |acc, i| {
            let row = self
                .dag
                .parents(i)
                .iter()
                .fold(0usize, |r, &p| (r << 1) | assignment[p] as usize);
            let p1 = self.p_true[i][row];
            acc * if assignment[i] == 1 { p1 } else { 1.0 - p1 }
        })
    }

    /// Random network whose node `i` draws up to `max_parents` parents among
    /// nodes `< i`; CPT entries uniform in `[0.05, 0.95]`.
    pub fn random<R: Rng>(n: usize, max_parents: usize, rng: &mut R) -> Self {
        let names = (0..n).map(|i| format!("X{i}")).collect();
        let mut parents = Vec::with_capacity(n);
        for i in 0..n {
            let k = rng.random_range(0..=max_parents.min(i));
            let mut pool: Vec<usize> = (0..i).collect();
            let mut ps = Vec::with_capacity(k);
            for _ in 0..k {
                let j = rng.random_range(0..pool.len());
                ps.push(pool.swap_remove(j));
            }
            parents.push(ps);
        }
        let dag = Dag::new(names, parents).expect("forward edges are acyclic");
        let p_true = (0..n)
            .map(|i| {
                (0..1usize << dag.parents(i).len())
                    .map(|_| rng.random_range(0.05..0.95))
                    .collect()
            })
            .collect();
        BayesianNetwork::new(dag, p_true).expect("valid random CPTs")
    }

    /// Normalized `.bn` text: nodes, then edges grouped by child, then CPT
    /// rows in ascending parent-bit order.
    pub fn to_bn_text(&self) -> String {
        let mut out = String::new();
        for n in &self.dag.names {
            let _ = writeln!(out, "node {n}");
        }
        for (c, ps) in self.dag.parents.iter().enumerate() {
            for &p in ps {
                let _ = writeln!(out, "edge {} {}", self.dag.names[p], self.dag.names[c]);
            }
        }
        for (i, rows) in self.p_true.iter().enumerate() {
            let np = self.dag.parents(i).len();
            for (r, p) in rows.iter().enumerate() {
                if np == 0 {
                    let _ = writeln!(out, "cpt {} {p}", self.dag.names[i]);
                } else {
                    let _ = writeln!(out, "cpt {} {:0width$b} {p}", self.dag.names[i], r, width = np);
                }
            }
        }
        out
    }
}

/// Lowers a Bayesian network to a factor graph with one CPT factor per node.
/// Scope is `[node] + parents`; normalization is one.
pub fn bn_to_factor_graph(bn: &BayesianNetwork) -> Result<FactorGraph> {
    bn.dag.topo_order()?;
    let dag = &bn.dag;
    let variables = dag.names.iter().enumerate().map(|(i, n)| binary_var(i, n.clone())).collect();
    let mut factors = Vec::with_capacity(dag.len());
    for i in 0..dag.len() {
        let rows = &bn.p_true[i];
        if let Some(bad) = rows.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::MalformedCpt {
                node: dag.names[i].clone(),
                msg: format!("probability {bad} outside [0,1]"),
            });
        }
        let mut scope = vec![i];
        scope.extend_from_slice(dag.parents(i));
        let mut table: Vec<f64> = rows.iter().map(|p| 1.0 - p).collect();
        table.extend_from_slice(rows);
        let label = if dag.parents(i).is_empty() {
            format!("p({})", dag.names[i])
        } else {
            let ps: Vec<&str> = dag.parents(i).iter().map(|&p| dag.names[p].as_str()).collect();
            format!("p({}|{})", dag.names[i], ps.join(","))
        };
        factors.push(FactorNode {
            id: i,
            kind: FactorKind::Cpt,
            scope,
            table,
            label,
        });
    }
    FactorGraph::new(variables, factors, 1.0)
}

/// Fits CPTs by smoothed counting:
/// `(count + alpha) / (total + 2 alpha)` per parent row.
pub fn learn_cpts(dag: &Dag, data: &Dataset, alpha: f64) -> Result<BayesianNetwork> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Invalid(format!("smoothing alpha must be >= 0, got {alpha}")));
    }
    let cols: Vec<usize> = dag
        .names
        .iter()
        .map(|n| data.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
        .collect::<Result<_>>()?;
    if data.rows().is_empty() && alpha == 0.0 {
        return Err(Error::EmptyDataset);
    }
    let mut p_true = Vec::with_capacity(dag.len());
    for i in 0..dag.len() {
        let ps = dag.parents(i);
        let nrows = 1usize << ps.len();
        let mut ones = vec![0u64; nrows];
        let mut total = vec![0u64; nrows];
        for row in data.rows() {
            let r = ps.iter().fold(0usize, |acc, &p| (acc << 1) | row[cols[p]] as usize);
            total[r] += 1;
            ones[r] += row[cols[i]] as u64;
        }
        let mut col = Vec::with_capacity(nrows);
        for r in 0..nrows {
            let denom = total[r] as f64 + 2.0 * alpha;
            if denom == 0.0 {
                return Err(Error::MalformedCpt {
                    node: dag.names[i].clone(),
                    msg: format!("parent row {r} unobserved with zero smoothing"),
                });
            }
            col.push((ones[r] as f64 + alpha) / denom);
        }
        p_true.push(col);
    }
    BayesianNetwork::new(dag.clone(), p_true)
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "bn",
        line,
        col,
        msg: msg.into(),
    }
}

/// Parses the line-oriented `.bn` format:
///
/// ```text
/// node <name>
/// edge <parent> <child>
/// cpt <name> [<parent bits>] <p(name = 1)>
/// ```
///
/// Lines may appear in any order; a child's parents are ordered by the
/// order of its `edge` lines. `#` starts a comment.
pub fn parse_bn_file(text: &str) -> Result<BayesianNetwork> {
    struct CptLine {
        line: usize,
        col: usize,
        bits: Option<String>,
        p: f64,
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(usize, usize, String, String)> = Vec::new();
    let mut cpts: Vec<(String, CptLine)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<(usize, &str)> = tokens(content);
        let Some(&(kcol, kw)) = toks.first() else { continue };
        match kw {
            "node" => {
                if toks.len() != 2 {
                    return Err(perr(line_no, kcol, "expected `node <name>`"));
                }
                let name = toks[1].1.to_string();
                if index.insert(name.clone(), names.len()).is_some() {
                    return Err(perr(line_no, toks[1].0, format!("duplicate node `{name}`")));
                }
                names.push(name);
            }
            "edge" => {
                if toks.len() != 3 {
                    return Err(perr(line_no, kcol, "expected `edge <parent> <child>`"));
                }
                edges.push((line_no, toks[1].0, toks[1].1.to_string(), toks[2].1.to_string()));
            }
            "cpt" => {
                let (bits, ptok) = match toks.len() {
                    3 => (None, toks[2]),
                    4 => (Some(toks[2].1.to_string()), toks[3]),
                    _ => return Err(perr(line_no, kcol, "expected `cpt <name> [bits] <p>`")),
                };
                let p: f64 = ptok
                    .1
                    .parse()
                    .map_err(|_| perr(line_no, ptok.0, format!("bad probability `{}`", ptok.1)))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(perr(line_no, ptok.0, format!("probability {p} outside [0,1]")));
                }
                cpts.push((
                    toks[1].1.to_string(),
                    CptLine {
                        line: line_no,
                        col: toks[1].0,
                        bits,
                        p,
                    },
                ));
            }
            other => return Err(perr(line_no, kcol, format!("unknown directive `{other}`"))),
        }
    }

    let mut parents = vec![Vec::new(); names.len()];
    for (line, col, p, c) in edges {
        let pi = *index.get(&p).ok_or_else(|| perr(line, col, format!("unknown node `{p}`")))?;
        let ci = *index.get(&c).ok_or_else(|| perr(line, col, format!("unknown node `{c}`")))?;
        if parents[ci].contains(&pi) {
            return Err(perr(line, col, format!("duplicate edge {p} -> {c}")));
        }
        parents[ci].push(pi);
    }
    let dag = Dag::new(names, parents)?;

    let mut rows: Vec<Vec<Option<f64>>> =
        (0..dag.len()).map(|i| vec![None; 1 << dag.parents(i).len()]).collect();
    for (name, c) in cpts {
        let i = *index
            .get(&name)
            .ok_or_else(|| perr(c.line, c.col, format!("unknown node `{name}`")))?;
        let np = dag.parents(i).len();
        let r = match (&c.bits, np) {
            (None, 0) => 0,
            (Some(b), n) if b.len() == n && n > 0 && b.chars().all(|ch| ch == '0' || ch == '1') => {
                usize::from_str_radix(b, 2).expect("validated bits")
            }
            _ => {
                return Err(perr(
                    c.line,
                    c.col,
                    format!("`{name}` has {np} parents; row bits must have that many 0/1 digits"),
                ))
            }
        };
        if rows[i][r].replace(c.p).is_some() {
            return Err(perr(c.line, c.col, format!("duplicate CPT row for `{name}`")));
        }
    }
    let mut p_true = Vec::with_capacity(dag.len());
    for (i, r) in rows.into_iter().enumerate() {
        let mut col = Vec::with_capacity(r.len());
        for (k, v) in r.into_iter().enumerate() {
            col.push(v.ok_or_else(|| Error::MalformedCpt {
                node: dag.names[i].clone(),
                msg: format!("missing CPT row {k}"),
            })?);
        }
        p_true.push(col);
    }
    BayesianNetwork::new(dag, p_true)
}

/// Whitespace tokens with 1-based columns.
pub(crate) fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}
