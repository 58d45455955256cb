use std::fmt::Write as _;

use super::{ComputeGraph, Op};
use crate::graph_ir::FactorGraph;

/// Graphviz rendering with nodes in id order.
pub trait ToDot {
    fn to_dot(&self) -> String;
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Wraps pre-rendered statements; an empty body gives `digraph g { }`.
pub(crate) fn digraph(body: &str) -> String {
    if body.is_empty() {
        "digraph g { }\n".to_string()
    } else {
        format!("digraph g {{\n{body}}}\n")
    }
}

impl ToDot for ComputeGraph {
    fn to_dot(&self) -> String {
        let mut body = String::new();
        for n in self.nodes() {
            let text = match n.op {
                Op::Const => format!("CONST {}", n.const_value),
                op => format!("{op} {}", n.label),
            };
            let _ = writeln!(body, "  n{} [label=\"{}\"];", n.id, escape(&text));
        }
        for n in self.nodes() {
            for (k, &o) in n.operands.iter().enumerate() {
                let _ = writeln!(body, "  n{o} -> n{} [label=\"{k}\"];", n.id);
            }
        }
        for (name, id) in self.outputs() {
            let _ = writeln!(body, "  out_{id} [shape=box,label=\"{}\"];", escape(name));
            let _ = writeln!(body, "  n{id} -> out_{id};");
        }
        digraph(&body)
    }
}

impl ToDot for FactorGraph {
    fn to_dot(&self) -> String {
        let mut body = String::new();
        for v in self.variables() {
            let _ = writeln!(body, "  v{} [shape=ellipse,label=\"{}\"];", v.id, escape(&v.name));
        }
        for f in self.factors() {
            let _ = writeln!(body, "  f{} [shape=box,label=\"{}\"];", f.id, escape(&f.label));
        }
        for (v, f) in self.edges() {
            let _ = writeln!(body, "  v{v} -> f{f} [dir=none];");
        }
        digraph(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{eliminate, relevant_subgraph, OrderSpec};
    use super::*;
    use crate::graph_ir::{bn_to_factor_graph, parse_bn_file};

    #[test]
    fn empty_graph() {
        assert_eq!(ComputeGraph::new().to_dot(), "digraph g { }\n");
    }

    #[test]
    fn prey_has_eight_mul_nodes() {
        let fg = bn_to_factor_graph(&parse_bn_file(include_str!("../../data/prey.bn")).unwrap()).unwrap();
        let p = relevant_subgraph(&fg, 4, &[(1, 1)]).unwrap();
        let cg = eliminate(&p.graph, p.query, &p.evidence, &OrderSpec::Declared).unwrap();
        let dot = cg.to_dot();
        assert_eq!(dot.matches("label=\"MUL ").count(), 8);
        assert_eq!(dot, cg.to_dot());
        assert!(dot.starts_with("digraph g {\n") && dot.ends_with("}\n"));
        let fdot = fg.to_dot();
        assert_eq!(fdot.matches("dir=none").count(), fg.edge_count());
    }
}
