use std::fmt::Write as _;

use super::StructuredProblem;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering of the connection graph.
pub fn to_dot(problem: &StructuredProblem) -> String {
    let mut out = String::from("graph connections {\n  rankdir=LR;\n");
    for c in problem.clauses() {
        let _ = writeln!(
            out,
            "  {} [shape=box, label={}];",
            quote(&c.id),
            quote(&format!("{} ({})", c.id, c.status))
        );
    }
    for p in problem.parameters() {
        let _ = writeln!(out, "  {} [shape=ellipse];", quote(&p.symbol));
    }
    for v in problem.variables() {
        let _ = writeln!(out, "  {} [shape=diamond];", quote(&v.symbol));
    }
    let graph = problem.graph();
    for (c, s) in graph.parameter_edges() {
        let _ = writeln!(out, "  {} -- {};", quote(c), quote(s));
    }
    for (c, s) in graph.variable_edges() {
        let _ = writeln!(out, "  {} -- {} [style=dashed];", quote(c), quote(s));
    }
    out.push_str("}\n");
    out
}
