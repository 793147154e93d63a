use std::fmt::Write;

use super::Dfa;

/// Renders the automaton as a Graphviz `digraph`. Accepting states are
/// double circles; states and edges appear in (source, symbol) order so the
/// output is byte-stable.
pub fn export_dot(dfa: &Dfa) -> String {
    let mut out = String::new();
    out.push_str("digraph dfa {\n");
    out.push_str("    rankdir=LR;\n");
    out.push_str("    node [shape=circle];\n");
    out.push_str("    start [shape=point];\n");
    for state in dfa.states() {
        if dfa.is_accepting(state) {
            writeln!(out, "    {state} [shape=doublecircle];").unwrap();
        } else {
            writeln!(out, "    {state};").unwrap();
        }
    }
    writeln!(out, "    start -> {};", dfa.start()).unwrap();
    for (p, c, q) in dfa.transitions() {
        writeln!(out, "    {p} -> {q} [label=\"{c}\"];").unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{compile, decorate_reexec_loops, CompileLimits};
    use crate::script::parse_script;

    #[test]
    fn single_edge() {
        let dfa = compile(&parse_script("C1").unwrap(), &CompileLimits::default()).unwrap();
        let dot = export_dot(&dfa);
        assert_eq!(
            dot,
            "digraph dfa {\n    rankdir=LR;\n    node [shape=circle];\n    start [shape=point];\n    \
             q0;\n    q1 [shape=doublecircle];\n    start -> q0;\n    q0 -> q1 [label=\"C1\"];\n}\n"
        );
    }

    #[test]
    fn stable_output() {
        let ast = parse_script("(C7 ?C10 [(C12 C14)(C16 C18)])").unwrap();
        let a = decorate_reexec_loops(&compile(&ast, &CompileLimits::default()).unwrap());
        let b = decorate_reexec_loops(&compile(&ast, &CompileLimits::default()).unwrap());
        assert_eq!(export_dot(&a), export_dot(&b));
        let dot = export_dot(&a);
        assert_eq!(dot.matches("[label=").count(), a.num_transitions());
        assert!(dot.contains("q1 -> q1 [label=\"C7\"];"));
    }
}
