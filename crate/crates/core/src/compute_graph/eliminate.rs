use std::collections::{BTreeSet, HashMap};

use super::{ComputeGraph, Evidence, NodeId};
use crate::graph_ir::{FactorGraph, FactorKind, VarId};
use crate::{Error, Result};

/// Variables to sum out, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder(pub Vec<VarId>);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum OrderSpec {
    /// Min-degree, lowest id on ties.
    #[default]
    Auto,
    /// Variable id order.
    Declared,
    Explicit(EliminationOrder),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PruneReport {
    pub removed_variables: Vec<String>,
    pub removed_factors: Vec<String>,
}

/// A pruned graph with the query and evidence renumbered into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub graph: FactorGraph,
    pub query: VarId,
    pub evidence: Vec<(VarId, u8)>,
    pub report: PruneReport,
}

fn evidence_slots(fg: &FactorGraph, query: VarId, evidence: &Evidence) -> Result<Vec<Option<u8>>> {
    let n = fg.variables().len();
    if query >= n {
        return Err(Error::Query(format!("unknown query variable {query}")));
    }
    let mut slots = vec![None; n];
    for &(v, b) in evidence {
        if v >= n {
            return Err(Error::Query(format!("unknown evidence variable {v}")));
        }
        if b > 1 {
            return Err(Error::Query(format!("evidence value {b} is not binary")));
        }
        if slots[v].is_some_and(|old| old != b) {
            return Err(Error::Query(format!("conflicting evidence on `{}`", fg.variables()[v].name)));
        }
        slots[v] = Some(b);
    }
    if slots[query].is_some() {
        return Err(Error::Query(format!(
            "query `{}` is also evidence",
            fg.variables()[query].name
        )));
    }
    Ok(slots)
}

/// Drops barren non-ancestors (graphs made only of CPTs) and everything
/// outside the query's connected component.
pub fn relevant_subgraph(fg: &FactorGraph, query: VarId, evidence: &Evidence) -> Result<Pruned> {
    let slots = evidence_slots(fg, query, evidence)?;
    let nv = fg.variables().len();
    let nf = fg.factors().len();
    let mut keep_f = vec![true; nf];

    if fg.factors().iter().all(|f| f.kind == FactorKind::Cpt) {
        let mut cpt_of = vec![None; nv];
        for f in fg.factors() {
            cpt_of[f.scope[0]] = Some(f.id);
        }
        let mut anc = vec![false; nv];
        let mut stack: Vec<VarId> = std::iter::once(query)
            .chain((0..nv).filter(|&v| slots[v].is_some()))
            .collect();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut anc[v], true) {
                continue;
            }
            if let Some(f) = cpt_of[v] {
                stack.extend(fg.factors()[f].scope[1..].iter().copied().filter(|&p| !anc[p]));
            }
        }
        for f in fg.factors() {
            keep_f[f.id] = anc[f.scope[0]];
        }
    }

    let mut keep_v = vec![false; nv];
    let mut reach_f = vec![false; nf];
    let mut stack = vec![query];
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut keep_v[v], true) {
            continue;
        }
        for &f in fg.factors_of(v) {
            if keep_f[f] && !reach_f[f] {
                reach_f[f] = true;
                stack.extend(fg.factors()[f].scope.iter().copied().filter(|&u| !keep_v[u]));
            }
        }
    }

    let report = PruneReport {
        removed_variables: (0..nv)
            .filter(|&v| !keep_v[v])
            .map(|v| fg.variables()[v].name.clone())
            .collect(),
        removed_factors: (0..nf)
            .filter(|&f| !reach_f[f])
            .map(|f| fg.factors()[f].label.clone())
            .collect(),
    };
    let mut remap = vec![usize::MAX; nv];
    let mut next = 0;
    for v in 0..nv {
        if keep_v[v] {
            remap[v] = next;
            next += 1;
        }
    }
    Ok(Pruned {
        graph: fg.restrict(&keep_v, &reach_f)?,
        query: remap[query],
        evidence: (0..nv)
            .filter_map(|v| slots[v].filter(|_| keep_v[v]).map(|b| (remap[v], b)))
            .collect(),
        report,
    })
}

/// Symbolic factor: sorted scope and one node per scope assignment.
#[derive(Debug, Clone)]
struct SymFactor {
    scope: Vec<VarId>,
    vals: Vec<NodeId>,
}

fn index_of(scope: &[VarId], assign: &[u8]) -> usize {
    scope.iter().fold(0, |acc, &v| (acc << 1) | assign[v] as usize)
}

fn leaf(cg: &mut ComputeGraph, fg: &FactorGraph, f: usize, idx: usize, cache: &mut HashMap<(usize, usize), NodeId>) -> NodeId {
    if let Some(&id) = cache.get(&(f, idx)) {
        return id;
    }
    let fac = &fg.factors()[f];
    let vars = fg.variables();
    let bit = |k: usize| (idx >> (fac.scope.len() - 1 - k)) & 1;
    let id = match fac.kind {
        FactorKind::Cpt => {
            let rows = fac.table.len() / 2;
            let child = &vars[fac.scope[0]].name;
            if idx < rows {
                let one = leaf(cg, fg, f, idx + rows, cache);
                let parents = cond_text(fac, vars, &bit);
                cg.sub(one, format!("p({child}=0{parents})"))
            } else {
                let name = format!("p({child}=1{})", cond_text(fac, vars, &bit));
                cg.input(&name, Some(fac.table[idx]))
            }
        }
        FactorKind::Parity => {
            let ones = (0..fac.scope.len()).map(bit).sum::<usize>();
            cg.constant(if ones % 2 == 0 { 1.0 } else { 0.0 }, format!("{}[{idx}]", fac.label))
        }
        FactorKind::GenericTable => cg.constant(fac.table[idx], format!("{}[{idx}]", fac.label)),
    };
    cache.insert((f, idx), id);
    id
}

fn cond_text(fac: &crate::graph_ir::FactorNode, vars: &[crate::graph_ir::VariableNode], bit: &dyn Fn(usize) -> usize) -> String {
    if fac.scope.len() == 1 {
        return String::new();
    }
    let parts: Vec<String> = (1..fac.scope.len())
        .map(|k| format!("{}={}", vars[fac.scope[k]].name, bit(k)))
        .collect();
    format!("|{}", parts.join(","))
}

fn auto_order(factors: &[SymFactor], free: &[VarId], nv: usize) -> Vec<VarId> {
    let mut adj: Vec<BTreeSet<VarId>> = vec![BTreeSet::new(); nv];
    for f in factors {
        for &a in &f.scope {
            for &b in &f.scope {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut left: BTreeSet<VarId> = free.iter().copied().collect();
    let mut order = Vec::with_capacity(free.len());
    while let Some(&v) = left.iter().min_by_key(|&&v| (adj[v].len(), v)) {
        left.remove(&v);
        order.push(v);
        let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[v].clear();
    }
    order
}

/// Lowers `P(query = 1 | evidence)` to an arithmetic DAG by summing out
/// every other free variable. The result's single output is named after the
/// query variable.
pub fn eliminate(fg: &FactorGraph, query: VarId, evidence: &Evidence, order: &OrderSpec) -> Result<ComputeGraph> {
    let slots = evidence_slots(fg, query, evidence)?;
    let nv = fg.variables().len();
    let vars = fg.variables();
    if fg.factors_of(query).is_empty() {
        return Err(Error::Query(format!("query `{}` is not connected to any factor", vars[query].name)));
    }
    let mut cg = ComputeGraph::new();
    let mut cache = HashMap::new();

    // Slice every factor on the evidence. Factors left with an empty scope
    // scale numerator and denominator alike and are dropped.
    let mut factors = Vec::new();
    for fac in fg.factors() {
        let mut scope: Vec<VarId> = fac.scope.iter().copied().filter(|&v| slots[v].is_none()).collect();
        scope.sort_unstable();
        if scope.is_empty() {
            continue;
        }
        let mut assign = vec![0u8; nv];
        let mut vals = Vec::with_capacity(1 << scope.len());
        for code in 0..1usize << scope.len() {
            for (k, &v) in scope.iter().enumerate() {
                assign[v] = ((code >> (scope.len() - 1 - k)) & 1) as u8;
            }
            let orig = fac
                .scope
                .iter()
                .fold(0, |acc, &v| (acc << 1) | slots[v].unwrap_or(assign[v]) as usize);
            vals.push(leaf(&mut cg, fg, fac.id, orig, &mut cache));
        }
        factors.push(SymFactor { scope, vals });
    }

    let free: Vec<VarId> = (0..nv)
        .filter(|&v| v != query && slots[v].is_none() && !fg.factors_of(v).is_empty())
        .collect();
    let order = match order {
        OrderSpec::Auto => auto_order(&factors, &free, nv),
        OrderSpec::Declared => free.clone(),
        OrderSpec::Explicit(EliminationOrder(o)) => {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != free {
                return Err(Error::Query(format!(
                    "elimination order {o:?} must be a permutation of {free:?}"
                )));
            }
            o.clone()
        }
    };

    for &v in &order {
        let (bucket, rest): (Vec<SymFactor>, Vec<SymFactor>) =
            factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = rest;
        let name = &vars[v].name;
        let mut union: Vec<VarId> = bucket.iter().flat_map(|f| f.scope.iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        let mut assign = vec![0u8; nv];
        let mut prod = Vec::with_capacity(1 << union.len());
        for code in 0..1usize << union.len() {
            for (k, &u) in union.iter().enumerate() {
                assign[u] = ((code >> (union.len() - 1 - k)) & 1) as u8;
            }
            let mut acc = bucket[0].vals[index_of(&bucket[0].scope, &assign)];
            for f in &bucket[1..] {
                let x = f.vals[index_of(&f.scope, &assign)];
                acc = cg.mul(acc, x, format!("prod {name}"));
            }
            prod.push(acc);
        }
        let pos = union.iter().position(|&u| u == v).expect("bucket variable");
        let shift = union.len() - 1 - pos;
        let scope: Vec<VarId> = union.iter().copied().filter(|&u| u != v).collect();
        let mut vals = Vec::with_capacity(1 << scope.len());
        for code in 0..1usize << scope.len() {
            let hi = (code >> shift) << (shift + 1);
            let lo = code & ((1 << shift) - 1);
            let i0 = hi | lo;
            let i1 = i0 | (1 << shift);
            vals.push(cg.add(vec![prod[i0], prod[i1]], format!("sum {name}")));
        }
        if !scope.is_empty() {
            factors.push(SymFactor { scope, vals });
        }
        // An empty scope here is a scalar independent of the query; it
        // cancels under normalization.
    }

    let qname = vars[query].name.clone();
    let mut pair = [None::<NodeId>; 2];
    for f in &factors {
        debug_assert_eq!(f.scope, [query]);
        for b in 0..2 {
            pair[b] = Some(match pair[b] {
                None => f.vals[b],
                Some(acc) => cg.mul(acc, f.vals[b], format!("prod {qname}")),
            });
        }
    }
    let (num0, num1) = match pair {
        [Some(a), Some(b)] => (a, b),
        _ => return Err(Error::Query(format!("query `{qname}` lost its factors"))),
    };
    let den = if evidence.is_empty() && is_closed_bn(fg) {
        cg.constant(fg.normalization(), "Z")
    } else {
        cg.add(vec![num1, num0], format!("evidence {qname}"))
    };
    let out = cg.norm(num1, den, format!("norm {qname}"));
    cg.set_output(&qname, out);
    let cg = cg.prune_dead();
    cg.validate()?;
    Ok(cg)
}

/// Every variable is the child of exactly one CPT and nothing else is present,
/// so the factor product sums to one.
fn is_closed_bn(fg: &FactorGraph) -> bool {
    let mut owners = vec![0usize; fg.variables().len()];
    for f in fg.factors() {
        if f.kind != FactorKind::Cpt {
            return false;
        }
        owners[f.scope[0]] += 1;
    }
    owners.iter().all(|&c| c == 1)
}

#[cfg(test)]
mod tests {
    use super::super::{brute_force_marginal, evaluate_exact, Op};
    use super::*;
    use crate::graph_ir::{bn_to_factor_graph, parse_bn_file, BayesianNetwork};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prey() -> FactorGraph {
        bn_to_factor_graph(&parse_bn_file(include_str!("../../data/prey.bn")).unwrap()).unwrap()
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (FactorGraph, VarId, Vec<(VarId, u8)>) {
        let n = rng.random_range(1..=8);
        let fg = bn_to_factor_graph(&BayesianNetwork::random(n, 3, rng)).unwrap();
        let q = rng.random_range(0..n);
        let mut ev = Vec::new();
            for v in 0..n {
                if v != q && rng.random_bool(0.3) {
                    ev.push((v, rng.random_range(0..=1u8)));
                }
            }
        (fg, q, ev)
    }

    fn value(cg: &ComputeGraph) -> f64 {
        let out = evaluate_exact(cg, cg.nominal_bindings()).unwrap();
        *out.values().next().unwrap()
    }

    #[test]
    fn prey_prunes_mood_branch() {
        let fg = prey();
        let p = relevant_subgraph(&fg, 4, &[(1, 1)]).unwrap();
        assert_eq!(p.report.removed_variables, ["M"]);
        assert_eq!(p.report.removed_factors, ["p(M|V)"]);
        assert_eq!(p.graph.variables().len(), 4);
        assert_eq!(p.graph.variables()[p.query].name, "C");
    }

    #[test]
    fn single_factor_unchanged() {
        let fg = bn_to_factor_graph(&parse_bn_file("node X\ncpt X 0.3\n").unwrap()).unwrap();
        let p = relevant_subgraph(&fg, 0, &[]).unwrap();
        assert_eq!(p.graph, fg);
        assert_eq!(p.report, PruneReport::default());
    }

    #[test]
    fn query_in_evidence_rejected() {
        assert!(relevant_subgraph(&prey(), 4, &[(4, 1)]).is_err());
        assert!(eliminate(&prey(), 4, &[(4, 0)], &OrderSpec::Auto).is_err());
    }

    #[test]
    fn pruning_preserves_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (fg, q, ev) = random_case(&mut rng);
            let p = relevant_subgraph(&fg, q, &ev).unwrap();
            let full = brute_force_marginal(&fg, q, &ev).unwrap();
            let pruned = brute_force_marginal(&p.graph, p.query, &p.evidence).unwrap();
            assert!((full - pruned).abs() < 1e-12);
        }
    }

    #[test]
    fn prey_naive_counts() {
        let p = relevant_subgraph(&prey(), 4, &[(1, 1)]).unwrap();
        let cg = eliminate(&p.graph, p.query, &p.evidence, &OrderSpec::Declared).unwrap();
        let s = cg.stats();
        assert_eq!(s.mul_count, 8);
        assert_eq!(s.add_count, 5);
        let truth = brute_force_marginal(&prey(), 4, &[(1, 1)]).unwrap();
        assert!((value(&cg) - truth).abs() < 1e-15);
    }

    #[test]
    fn root_query_is_input_over_constant() {
        let fg = prey();
        let p = relevant_subgraph(&fg, 0, &[]).unwrap();
        let cg = eliminate(&p.graph, p.query, &p.evidence, &OrderSpec::Auto).unwrap();
        let ops: Vec<Op> = cg.nodes().iter().map(|n| n.op).collect();
        assert_eq!(ops, [Op::Input, Op::Const, Op::Norm]);
        assert_eq!(cg.node(1).const_value, 1.0);
        assert_eq!(value(&cg), 0.6);
    }

    #[test]
    fn elimination_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let (fg, q, ev) = random_case(&mut rng);
            let truth = brute_force_marginal(&fg, q, &ev).unwrap();
            let direct = eliminate(&fg, q, &ev, &OrderSpec::Auto).unwrap();
            assert!((value(&direct) - truth).abs() < 1e-9);
            let p = relevant_subgraph(&fg, q, &ev).unwrap();
            let cg = eliminate(&p.graph, p.query, &p.evidence, &OrderSpec::Declared).unwrap();
            assert!((value(&cg) - truth).abs() < 1e-9);
        }
    }

    #[test]
    fn order_does_not_change_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (fg, q, ev) = random_case(&mut rng);
            let slots: Vec<usize> = ev.iter().map(|e| e.0).collect();
            let mut free: Vec<VarId> = (0..fg.variables().len())
                .filter(|&v| v != q && !slots.contains(&v) && !fg.factors_of(v).is_empty())
                .collect();
            let base = value(&eliminate(&fg, q, &ev, &OrderSpec::Auto).unwrap());
            for _ in 0..3 {
                free.shuffle(&mut rng);
                let o = OrderSpec::Explicit(EliminationOrder(free.clone()));
                assert!((value(&eliminate(&fg, q, &ev, &o).unwrap()) - base).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn explicit_order_validated() {
        let o = OrderSpec::Explicit(EliminationOrder(vec![0]));
        assert!(eliminate(&prey(), 4, &[(1, 1)], &o).is_err());
    }

    #[test]
    fn parity_factor_marginal() {
        use crate::graph_ir::{parity_to_factor_graph, FactorGraph, FactorNode, ParityCheckMatrix};
        let h = ParityCheckMatrix::from_dense(&[vec![1, 1, 1]]).unwrap();
        let tanner = parity_to_factor_graph(&h).unwrap();
        // Attach channel priors as generic unary tables.
        let mut factors = tanner.factors().to_vec();
        for (v, p1) in [0.2, 0.7, 0.4].into_iter().enumerate() {
            factors.push(FactorNode {
                id: 0,
                kind: FactorKind::GenericTable,
                scope: vec![v],
                table: vec![1.0 - p1, p1],
                label: format!("ch{v}"),
            });
        }
        let fg = FactorGraph::new(tanner.variables().to_vec(), factors, 1.0).unwrap();
        let truth = brute_force_marginal(&fg, 0, &[]).unwrap();
        let cg = eliminate(&fg, 0, &[], &OrderSpec::Auto).unwrap();
        assert!((value(&cg) - truth).abs() < 1e-12);
    }
}
