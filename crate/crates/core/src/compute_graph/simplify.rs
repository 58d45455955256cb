use std::collections::HashMap;

use super::{ComputeGraph, NodeId, Op};

/// Rewrite families applied by [`simplify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplifyRules {
    pub const_fold: bool,
    /// `x*1`, `x*0`, `x+0`, `1-(1-x)`, `norm(x, 1)`.
    pub identities: bool,
    /// Inline nested sums into one variable-arity ADD.
    pub flatten: bool,
    pub cse: bool,
    /// `a*b + a*(1-b) -> a` and `x + (1-x) -> 1`.
    pub complement_fusion: bool,
}

impl Default for SimplifyRules {
    fn default() -> Self {
        SimplifyRules {
            const_fold: true,
            identities: true,
            flatten: true,
            cse: true,
            complement_fusion: true,
        }
    }
}

impl SimplifyRules {
    pub fn none() -> Self {
        SimplifyRules {
            const_fold: false,
            identities: false,
            flatten: false,
            cse: false,
            complement_fusion: false,
        }
    }
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Input(String),
    Const(u64),
    Op(Op, Vec<NodeId>),
}

struct Builder {
    rules: SimplifyRules,
    out: ComputeGraph,
    cons: HashMap<Key, NodeId>,
}

impl Builder {
    fn konst(&self, id: NodeId) -> Option<f64> {
        let n = self.out.node(id);
        (n.op == Op::Const).then_some(n.const_value)
    }

    fn is_sub_of(&self, s: NodeId, x: NodeId) -> bool {
        let n = self.out.node(s);
        n.op == Op::Sub && n.operands[0] == x
    }

    fn complementary(&self, a: NodeId, b: NodeId) -> bool {
        self.is_sub_of(a, b) || self.is_sub_of(b, a)
    }

    fn mk_const(&mut self, v: f64, label: &str) -> NodeId {
        let key = Key::Const(v.to_bits());
        if self.rules.cse {
            if let Some(&id) = self.cons.get(&key) {
                return id;
            }
        }
        let id = self.out.constant(v, label);
        self.cons.insert(key, id);
        id
    }

    fn mk(&mut self, op: Op, mut ops: Vec<NodeId>, label: &str) -> NodeId {
        let r = self.rules;
        match op {
            Op::Input | Op::Const => unreachable!("leaves are built directly"),
            Op::Sub => {
                let x = ops[0];
                if r.identities && self.out.node(x).op == Op::Sub {
                    return self.out.node(x).operands[0];
                }
                if r.const_fold {
                    if let Some(c) = self.konst(x) {
                        return self.mk_const(1.0 - c, label);
                    }
                }
            }
            Op::Relu => {
                if r.const_fold {
                    if let Some(c) = self.konst(ops[0]) {
                        return self.mk_const(c.max(0.0), label);
                    }
                }
            }
            Op::Max => {
                if r.const_fold && ops.iter().all(|&o| self.konst(o).is_some()) {
                    let v = ops.iter().fold(f64::NEG_INFINITY, |m, &o| m.max(self.konst(o).unwrap()));
                    return self.mk_const(v, label);
                }
                if r.identities {
                    ops.sort_unstable();
                    ops.dedup();
                    if ops.len() == 1 {
                        return ops[0];
                    }
                }
            }
            Op::Norm => {
                if r.const_fold {
                    if let (Some(a), Some(b)) = (self.konst(ops[0]), self.konst(ops[1])) {
                        if b != 0.0 {
                            return self.mk_const(a / b, label);
                        }
                    }
                }
                if r.identities && self.konst(ops[1]) == Some(1.0) {
                    return ops[0];
                }
            }
            Op::Mul => {
                if r.const_fold {
                    let (cs, mut rest): (Vec<NodeId>, Vec<NodeId>) =
                        ops.iter().partition(|&&o| self.konst(o).is_some());
                    if cs.len() > 1 {
                        let v = cs.iter().map(|&o| self.konst(o).unwrap()).product();
                        rest.push(self.mk_const(v, label));
                        ops = rest;
                    }
                }
                if r.identities {
                    if ops.iter().any(|&o| self.konst(o) == Some(0.0)) {
                        return self.mk_const(0.0, label);
                    }
                    ops.retain(|&o| self.konst(o) != Some(1.0));
                    match ops.len() {
                        0 => return self.mk_const(1.0, label),
                        1 => return ops[0],
                        _ => {}
                    }
                }
            }
            Op::Add => {
                if r.flatten {
                    ops = ops
                        .iter()
                        .flat_map(|&o| {
                            let n = self.out.node(o);
                            if n.op == Op::Add {
                                n.operands.clone()
                            } else {
                                vec![o]
                            }
                        })
                        .collect();
                }
                if r.complement_fusion {
                    ops = self.fuse(ops, label);
                }
                if r.const_fold {
                    let (cs, mut rest): (Vec<NodeId>, Vec<NodeId>) =
                        ops.iter().partition(|&&o| self.konst(o).is_some());
                    if cs.len() > 1 {
                        let v = cs.iter().map(|&o| self.konst(o).unwrap()).sum();
                        rest.push(self.mk_const(v, label));
                        ops = rest;
                    }
                }
                if r.identities {
                    ops.retain(|&o| self.konst(o) != Some(0.0));
                    match ops.len() {
                        0 => return self.mk_const(0.0, label),
                        1 => return ops[0],
                        _ => {}
                    }
                }
            }
        }
        if ops.len() < 2 && matches!(op, Op::Mul | Op::Add | Op::Max) {
            // Only reachable with identities off; keep the arity invariant.
            let one = self.mk_const(if op == Op::Mul { 1.0 } else { 0.0 }, label);
            ops.push(one);
        }
        if r.cse {
            if matches!(op, Op::Mul | Op::Add | Op::Max) {
                ops.sort_unstable();
            }
            let key = Key::Op(op, ops.clone());
            if let Some(&id) = self.cons.get(&key) {
                return id;
            }
            let id = self.out.op(op, ops, label);
            self.cons.insert(key, id);
            id
        } else {
            self.out.op(op, ops, label)
        }
    }

    /// Repeatedly replaces complementary pairs inside a sum.
    fn fuse(&mut self, mut ops: Vec<NodeId>, label: &str) -> Vec<NodeId> {
        'again: loop {
            for i in 0..ops.len() {
                for j in i + 1..ops.len() {
                    let (a, b) = (ops[i], ops[j]);
                    let replacement = if self.complementary(a, b) {
                        Some(self.mk_const(1.0, label))
                    } else {
                        self.fuse_products(a, b, label)
                    };
                    if let Some(new) = replacement {
                        ops.remove(j);
                        ops[i] = new;
                        continue 'again;
                    }
                }
            }
            return ops;
        }
    }

    /// `S*b + S*(1-b) -> S` for products with the same remaining factors.
    fn fuse_products(&mut self, a: NodeId, b: NodeId, label: &str) -> Option<NodeId> {
        let (na, nb) = (self.out.node(a), self.out.node(b));
        if na.op != Op::Mul || nb.op != Op::Mul || na.operands.len() != nb.operands.len() {
            return None;
        }
        let (pa, pb) = (na.operands.clone(), nb.operands.clone());
        for (i, &x) in pa.iter().enumerate() {
            for (j, &y) in pb.iter().enumerate() {
                if !self.complementary(x, y) {
                    continue;
                }
                let mut ra = pa.clone();
                ra.remove(i);
                let mut rb = pb.clone();
                rb.remove(j);
                ra.sort_unstable();
                rb.sort_unstable();
                if ra == rb {
                    return Some(if ra.len() == 1 {
                        ra[0]
                    } else {
                        self.mk(Op::Mul, ra, label)
                    });
                }
            }
        }
        None
    }

    fn leaf(&mut self, src: &ComputeGraph, id: NodeId) -> NodeId {
        let n = src.node(id);
        match n.op {
            Op::Input => {
                let key = Key::Input(n.label.clone());
                if let Some(&id) = self.cons.get(&key) {
                    return id;
                }
                let nominal = src.nominal_bindings().get(&n.label).copied();
                let id = self.out.input(&n.label, nominal);
                self.cons.insert(key, id);
                id
            }
            Op::Const => {
                if self.rules.cse {
                    self.mk_const(n.const_value, &n.label)
                } else {
                    self.out.constant(n.const_value, n.label.clone())
                }
            }
            _ => unreachable!(),
        }
    }
}

fn pass(cg: &ComputeGraph, rules: SimplifyRules) -> ComputeGraph {
    let mut b = Builder {
        rules,
        out: ComputeGraph::new(),
        cons: HashMap::new(),
    };
    let mut remap = vec![0; cg.nodes().len()];
    for n in cg.nodes() {
        remap[n.id] = match n.op {
            Op::Input | Op::Const => b.leaf(cg, n.id),
            op => {
                let ops = n.operands.iter().map(|&o| remap[o]).collect();
                b.mk(op, ops, &n.label)
            }
        };
    }
    for (name, id) in cg.outputs() {
        b.out.set_output(name, remap[*id]);
    }
    b.out.prune_dead()
}

/// Semantics-preserving rewrite to a fixpoint (bounded to a few passes).
pub fn simplify(cg: &ComputeGraph, rules: SimplifyRules) -> ComputeGraph {
    let mut cur = pass(cg, rules);
    for _ in 0..8 {
        let next = pass(&cur, rules);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::super::{eliminate, evaluate_exact, relevant_subgraph, OrderSpec};
    use super::*;
    use crate::graph_ir::{bn_to_factor_graph, parse_bn_file, BayesianNetwork};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn random_bindings(cg: &ComputeGraph, rng: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
        cg.inputs().iter().map(|(n, _)| (n.clone(), rng.random_range(0.0..1.0))).collect()
    }

    fn assert_sound(before: &ComputeGraph, after: &ComputeGraph, rng: &mut ChaCha8Rng, vectors: usize) {
        for _ in 0..vectors {
            let b = random_bindings(before, rng);
            let x = evaluate_exact(before, &b).unwrap();
            let y = evaluate_exact(after, &b).unwrap();
            for (k, v) in &x {
                assert!((v - y[k]).abs() <= 1e-12, "{k}: {v} vs {}", y[k]);
            }
        }
    }

    #[test]
    fn mul_by_one_is_identity() {
        let mut cg = ComputeGraph::new();
        let x = cg.input("x", None);
        let one = cg.constant(1.0, "one");
        let m = cg.mul(x, one, "m");
        cg.set_output("y", m);
        let s = simplify(&cg, SimplifyRules::default());
        assert_eq!(s.nodes().len(), 1);
        assert_eq!(s.output("y"), Some(0));
    }

    #[test]
    fn absorption() {
        let mut cg = ComputeGraph::new();
        let a = cg.input("a", None);
        let b = cg.input("b", None);
        let nb = cg.sub(b, "nb");
        let ab = cg.mul(a, b, "ab");
        let anb = cg.mul(nb, a, "anb");
        let s = cg.add(vec![ab, anb], "s");
        cg.set_output("y", s);
        let out = simplify(&cg, SimplifyRules::default());
        assert_eq!(out.output("y"), Some(0));
        assert_eq!(out.nodes().len(), 1);
        let none = simplify(&cg, SimplifyRules::none());
        assert_eq!(none.stats(), cg.stats());
    }

    #[test]
    fn zero_and_constants() {
        let mut cg = ComputeGraph::new();
        let x = cg.input("x", None);
        let z = cg.constant(0.0, "z");
        let h = cg.constant(0.5, "h");
        let m = cg.mul(x, z, "m");
        let s = cg.add(vec![m, h, x], "s");
        let d = cg.sub(h, "d");
        let t = cg.add(vec![s, d], "t");
        cg.set_output("y", t);
        let out = simplify(&cg, SimplifyRules::default());
        assert_eq!(out.stats().mul_count, 0);
        assert_eq!(out.stats().add_count, 1);
        let v = evaluate_exact(&out, &BTreeMap::from([("x".into(), 0.25)])).unwrap();
        assert_eq!(v["y"], 1.25);
    }

    #[test]
    fn prey_shrinks_and_stays_equal() {
        let fg = bn_to_factor_graph(&parse_bn_file(include_str!("../../data/prey.bn")).unwrap()).unwrap();
        let p = relevant_subgraph(&fg, 4, &[(1, 1)]).unwrap();
        let cg = eliminate(&p.graph, p.query, &p.evidence, &OrderSpec::Declared).unwrap();
        let s = simplify(&cg, SimplifyRules::default());
        s.validate().unwrap();
        assert_eq!(s.stats().mul_count, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_sound(&cg, &s, &mut rng, 1000);
    }

    #[test]
    fn random_networks_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.random_range(1..=7);
            let fg = bn_to_factor_graph(&BayesianNetwork::random(n, 3, &mut rng)).unwrap();
            let q = rng.random_range(0..n);
            let mut ev = Vec::new();
            for v in 0..n {
                if v != q && rng.random_bool(0.3) {
                    ev.push((v, rng.random_range(0..=1u8)));
                }
            }
            let cg = eliminate(&fg, q, &ev, &OrderSpec::Auto).unwrap();
            let s = simplify(&cg, SimplifyRules::default());
            s.validate().unwrap();
            assert!(s.stats().mul_count <= cg.stats().mul_count);
            assert_sound(&cg, &s, &mut rng, 1000);
        }
    }
}
