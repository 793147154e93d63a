//! Test oracles and fixtures shared by the integration suites. Nothing here
//! calls into the automaton code: languages are expanded syntactically and
//! replays are classified against the set of word prefixes.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use moon_core::analytics::TraceClass;
use moon_core::notebook::{parse_notebook, CellRef, NotebookDoc};
use moon_core::script::{parse_script, CellNode, Node, ScriptAst};
use rand::Rng;

pub type Word = Vec<CellRef>;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

pub fn load_notebook(name: &str) -> NotebookDoc {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    parse_notebook(&text).unwrap()
}

pub fn load_script(name: &str) -> ScriptAst {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    parse_script(&text).unwrap()
}

pub const IMAGES_SCRIPT: &str =
    "((C1~T0 C3~T2 C5~T4 C7~T6 C3~T8 C5 C7 ?C10~T9) [(C12~T11 C14~T13) (C16~T15 C18~T17)])";
pub const BRANCH_SCRIPT: &str = "(C7 ?C10 [(C12 C14)(C16 C18)])";

pub fn c(i: usize) -> CellRef {
    CellRef::code(i)
}

pub fn t(i: usize) -> CellRef {
    CellRef::text(i)
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

fn concat_all(parts: &[BTreeSet<Word>]) -> BTreeSet<Word> {
    let mut acc: BTreeSet<Word> = BTreeSet::from([Vec::new()]);
    for part in parts {
        let mut next = BTreeSet::new();
        for a in &acc {
            for b in part {
                let mut w = a.clone();
                w.extend_from_slice(b);
                next.insert(w);
            }
        }
        acc = next;
    }
    acc
}

/// Brute-force expansion of a script into the finite set of code-cell
/// sequences it permits.
pub fn oracle_language(node: &Node) -> BTreeSet<Word> {
    match node {
        Node::Cell(cell) => BTreeSet::from([vec![cell.code]]),
        Node::Opt(child) => {
            let mut l = oracle_language(child);
            l.insert(Vec::new());
            l
        }
        Node::Seq(children) => {
            let parts: Vec<_> = children.iter().map(oracle_language).collect();
            concat_all(&parts)
        }
        Node::Any(children) => {
            let parts: Vec<_> = children.iter().map(oracle_language).collect();
            permutations(&parts)
                .iter()
                .flat_map(|order| concat_all(order))
                .collect()
        }
    }
}

/// Replay classification against the prefix set of `language`.
pub fn oracle_classify(language: &BTreeSet<Word>, log: &[CellRef]) -> Vec<TraceClass> {
    let prefixes: BTreeSet<&[CellRef]> = language
        .iter()
        .flat_map(|w| (0..=w.len()).map(move |i| &w[..i]))
        .collect();
    let mut trace: Vec<CellRef> = Vec::new();
    let mut out = Vec::new();
    for &cell in log {
        let mut extended = trace.clone();
        extended.push(cell);
        if prefixes.contains(extended.as_slice()) {
            trace = extended;
            out.push(TraceClass::Green);
        } else if trace.last() == Some(&cell) {
            out.push(TraceClass::Orange);
        } else if let Some(i) = trace.iter().rposition(|&x| x == cell) {
            trace.truncate(i + 1);
            out.push(TraceClass::Orange);
        } else {
            out.push(TraceClass::Red);
        }
    }
    out
}

pub fn collapse_adjacent(seq: &[CellRef]) -> Vec<CellRef> {
    let mut out = seq.to_vec();
    out.dedup();
    out
}

/// Random script: nesting depth at most `max_depth`, any-order groups of at
/// most `max_any` children, at most `max_cells` cell occurrences drawn from
/// `C0..C<pool>`.
pub fn random_script<R: Rng>(
    rng: &mut R,
    max_depth: usize,
    max_any: usize,
    max_cells: usize,
    pool: usize,
) -> ScriptAst {
    fn node<R: Rng>(
        rng: &mut R,
        depth: usize,
        max_depth: usize,
        max_any: usize,
        budget: &mut usize,
        pool: usize,
    ) -> Node {
        let leaf = || CellNode {
            code: CellRef::code(0),
            texts: Vec::new(),
        };
        if depth >= max_depth || *budget <= 1 || rng.random_bool(0.35) {
            *budget -= 1;
            let mut cell = leaf();
            cell.code = CellRef::code(rng.random_range(0..pool));
            return Node::Cell(cell);
        }
        match rng.random_range(0..3) {
            0 => Node::opt(node(rng, depth + 1, max_depth, max_any, budget, pool)),
            kind => {
                let limit = if kind == 1 { 4 } else { max_any };
                let want = rng.random_range(1..=limit.min(*budget));
                let mut children = Vec::new();
                for _ in 0..want {
                    if *budget == 0 {
                        break;
                    }
                    children.push(node(rng, depth + 1, max_depth, max_any, budget, pool));
                }
                if kind == 1 {
                    Node::Seq(children)
                } else {
                    Node::Any(children)
                }
            }
        }
    }
    let mut budget = max_cells;
    ScriptAst {
        root: node(rng, 1, max_depth, max_any, &mut budget, pool),
    }
}

/// Words of `language` in which no cell follows itself.
pub fn words_without_adjacent_repeats(language: &BTreeSet<Word>) -> Vec<Word> {
    language
        .iter()
        .filter(|w| w.windows(2).all(|p| p[0] != p[1]))
        .cloned()
        .collect()
}
