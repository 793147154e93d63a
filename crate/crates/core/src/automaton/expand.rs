use crate::notebook::CellRef;
use crate::script::{Node, ScriptAst};

use super::{CompileError, CompileLimits};

/// Upper bound on the number of symbol occurrences after any-order expansion.
/// Past this the nondeterministic automaton alone would dominate memory.
pub const MAX_EXPANDED_SYMBOLS: u128 = 2_000_000;

/// A script with any-order groups rewritten into unions of sequences and
/// text associations dropped. The remaining operators are those of a
/// star-free regular expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Sym(CellRef),
    Concat(Vec<Pattern>),
    Union(Vec<Pattern>),
    Opt(Box<Pattern>),
}

impl Pattern {
    pub fn symbols(&self) -> usize {
        match self {
            Pattern::Sym(_) => 1,
            Pattern::Concat(p) | Pattern::Union(p) => p.iter().map(Pattern::symbols).sum(),
            Pattern::Opt(p) => p.symbols(),
        }
    }
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).fold(1u128, |acc, n| acc.saturating_mul(n))
}

fn check_groups(node: &Node, limits: &CompileLimits) -> Result<(), CompileError> {
    match node {
        Node::Any(children) if children.len() > limits.max_any_elements => {
            Err(CompileError::AnyOrderBlowup {
                group: node.to_string(),
                elements: children.len(),
                limit: limits.max_any_elements,
            })
        }
        Node::Seq(children) | Node::Any(children) => {
            children.iter().try_for_each(|c| check_groups(c, limits))
        }
        Node::Opt(child) => check_groups(child, limits),
        Node::Cell(_) => Ok(()),
    }
}

fn expanded_symbols(node: &Node) -> u128 {
    match node {
        Node::Cell(_) => 1,
        Node::Opt(child) => expanded_symbols(child),
        Node::Seq(children) => children
            .iter()
            .fold(0u128, |acc, c| acc.saturating_add(expanded_symbols(c))),
        Node::Any(children) => {
            let one_order = children
                .iter()
                .fold(0u128, |acc, c| acc.saturating_add(expanded_symbols(c)));
            factorial(children.len()).saturating_mul(one_order)
        }
    }
}

/// Heap's algorithm, iterative form; yields all `k!` orderings of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut out = vec![perm.clone()];
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            out.push(perm.clone());
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn lower(node: &Node) -> Pattern {
    match node {
        Node::Cell(cell) => Pattern::Sym(cell.code),
        Node::Opt(child) => Pattern::Opt(Box::new(lower(child))),
        Node::Seq(children) => Pattern::Concat(children.iter().map(lower).collect()),
        Node::Any(children) if children.len() == 1 => lower(&children[0]),
        Node::Any(children) => {
            let blocks: Vec<Pattern> = children.iter().map(lower).collect();
            let mut orders = permutations(blocks.len());
            orders.sort();
            Pattern::Union(
                orders
                    .into_iter()
                    .map(|order| {
                        Pattern::Concat(order.into_iter().map(|i| blocks[i].clone()).collect())
                    })
                    .collect(),
            )
        }
    }
}

/// Rewrites every any-order group into the union of all orderings of its
/// child blocks. Each block runs to completion before the next starts.
pub fn expand_any(ast: &ScriptAst, limits: &CompileLimits) -> Result<Pattern, CompileError> {
    check_groups(&ast.root, limits)?;
    let size = expanded_symbols(&ast.root);
    if size > MAX_EXPANDED_SYMBOLS {
        return Err(CompileError::TooLarge {
            what: "expanded script symbols",
            count: size.min(usize::MAX as u128) as usize,
            limit: MAX_EXPANDED_SYMBOLS as usize,
        });
    }
    Ok(lower(&ast.root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::parse_script;

    fn sym(i: usize) -> Pattern {
        Pattern::Sym(CellRef::code(i))
    }

    #[test]
    fn heap_permutations_are_complete() {
        for k in 0..=6 {
            let mut p = permutations(k);
            let n = p.len();
            p.sort();
            p.dedup();
            assert_eq!(p.len(), n);
            assert_eq!(n as u128, factorial(k));
        }
    }

    #[test]
    fn pair_gives_two_orders() {
        let ast = parse_script("[C1 C2]").unwrap();
        let p = expand_any(&ast, &CompileLimits::default()).unwrap();
        assert_eq!(
            p,
            Pattern::Union(vec![
                Pattern::Concat(vec![sym(1), sym(2)]),
                Pattern::Concat(vec![sym(2), sym(1)]),
            ])
        );
    }

    #[test]
    fn singleton_group_is_identity() {
        let ast = parse_script("[C4]").unwrap();
        assert_eq!(expand_any(&ast, &CompileLimits::default()).unwrap(), sym(4));
    }

    #[test]
    fn blocks_are_not_interleaved() {
        let ast = parse_script("[(C12 C14)(C16 C18)]").unwrap();
        let Pattern::Union(orders) = expand_any(&ast, &CompileLimits::default()).unwrap() else {
            panic!()
        };
        assert_eq!(orders.len(), 2);
        let a = Pattern::Concat(vec![sym(12), sym(14)]);
        let b = Pattern::Concat(vec![sym(16), sym(18)]);
        assert!(orders.contains(&Pattern::Concat(vec![a.clone(), b.clone()])));
        assert!(orders.contains(&Pattern::Concat(vec![b, a])));
    }

    #[test]
    fn blowup_names_the_group() {
        let ast = parse_script("(C0 [C1 C2 C3 C4 C5 C6 C7])").unwrap();
        let err = expand_any(&ast, &CompileLimits::default()).unwrap_err();
        assert_eq!(
            err,
            CompileError::AnyOrderBlowup {
                group: "[C1 C2 C3 C4 C5 C6 C7]".into(),
                elements: 7,
                limit: 6
            }
        );
        let six = parse_script("[C1 C2 C3 C4 C5 C6]").unwrap();
        let Pattern::Union(orders) = expand_any(&six, &CompileLimits::default()).unwrap() else {
            panic!()
        };
        assert_eq!(orders.len(), 720);
    }

    #[test]
    fn nested_groups_hit_the_size_guard() {
        let ast = parse_script(
            "[[C1 C2 C3 C4 C5 C6] [C7 C8 C9 C10 C11 C12] [C13 C14 C15 C16 C17 C18] C19 C20 C21]",
        )
        .unwrap();
        assert!(matches!(
            expand_any(&ast, &CompileLimits::default()),
            Err(CompileError::TooLarge { .. })
        ));
    }
}
