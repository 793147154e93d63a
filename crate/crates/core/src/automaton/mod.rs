//! Compilation of scripts into minimal deterministic automata over code cells.
//!
//! Pipeline: any-order expansion, nondeterministic construction, subset
//! construction, partition-refinement minimization, then a canonical
//! renumbering of states (depth-first from `q0` in symbol order, states
//! without outgoing transitions last).

mod construct;
mod dot;
mod expand;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::notebook::CellRef;
use crate::script::ScriptAst;

pub use dot::export_dot;
pub use expand::{expand_any, Pattern, MAX_EXPANDED_SYMBOLS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("any-order group {group} has {elements} elements (limit {limit})")]
    AnyOrderBlowup {
        group: String,
        elements: usize,
        limit: usize,
    },
    #[error("too many {what}: {count} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        count: usize,
        limit: usize,
    },
    #[error("invalid compile limits: {0}")]
    InvalidLimits(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileLimits {
    /// Largest any-order group accepted (its expansion has `k!` orderings).
    pub max_any_elements: usize,
    pub max_states: usize,
}

impl CompileLimits {
    pub const DEFAULT_MAX_ANY: usize = 6;
    pub const DEFAULT_MAX_STATES: usize = 10_000;

    pub fn new(max_any_elements: usize, max_states: usize) -> Result<Self, CompileError> {
        if max_any_elements == 0 || max_states == 0 {
            return Err(CompileError::InvalidLimits(
                "both limits must be at least 1".into(),
            ));
        }
        Ok(CompileLimits {
            max_any_elements,
            max_states,
        })
    }
}

impl Default for CompileLimits {
    fn default() -> Self {
        CompileLimits {
            max_any_elements: Self::DEFAULT_MAX_ANY,
            max_states: Self::DEFAULT_MAX_STATES,
        }
    }
}

/// Automaton state, rendered `q<n>`. The start state is always `q0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

impl serde::Serialize for StateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Deterministic automaton with a partial transition function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    alphabet: BTreeSet<CellRef>,
    delta: Vec<BTreeMap<CellRef, StateId>>,
    accepting: BTreeSet<StateId>,
}

impl Dfa {
    /// Builds an automaton from explicit transitions. Fails if two
    /// transitions share a source and symbol, or a state is out of range.
    pub fn from_transitions(
        states: usize,
        transitions: impl IntoIterator<Item = (usize, CellRef, usize)>,
        accepting: impl IntoIterator<Item = usize>,
    ) -> Result<Self, String> {
        if states == 0 {
            return Err("an automaton needs at least a start state".into());
        }
        let mut delta = vec![BTreeMap::new(); states];
        let mut alphabet = BTreeSet::new();
        for (p, c, q) in transitions {
            if p >= states || q >= states {
                return Err(format!("transition q{p} -{c}-> q{q} leaves the state set"));
            }
            if delta[p].insert(c, StateId(q)).is_some() {
                return Err(format!("two transitions from q{p} on {c}"));
            }
            alphabet.insert(c);
        }
        let accepting = accepting
            .into_iter()
            .map(|s| {
                (s < states)
                    .then_some(StateId(s))
                    .ok_or(format!("accepting state q{s} out of range"))
            })
            .collect::<Result<_, _>>()?;
        Ok(Dfa {
            alphabet,
            delta,
            accepting,
        })
    }

    pub fn start(&self) -> StateId {
        StateId(0)
    }

    pub fn num_states(&self) -> usize {
        self.delta.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.delta.len()).map(StateId)
    }

    pub fn alphabet(&self) -> &BTreeSet<CellRef> {
        &self.alphabet
    }

    pub fn accepting(&self) -> &BTreeSet<StateId> {
        &self.accepting
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.accepting.contains(&state)
    }

    pub fn next(&self, state: StateId, cell: CellRef) -> Option<StateId> {
        self.delta.get(state.0)?.get(&cell).copied()
    }

    /// Outgoing transitions of `state`, ordered by symbol.
    pub fn outgoing(&self, state: StateId) -> impl Iterator<Item = (CellRef, StateId)> + '_ {
        self.delta[state.0].iter().map(|(&c, &t)| (c, t))
    }

    /// All transitions ordered by (source, symbol).
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, CellRef, StateId)> + '_ {
        self.delta
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |(&c, &t)| (StateId(s), c, t)))
    }

    pub fn num_transitions(&self) -> usize {
        self.delta.iter().map(BTreeMap::len).sum()
    }

    /// State reached from the start by `seq`, if every step is defined.
    pub fn run(&self, seq: &[CellRef]) -> Option<StateId> {
        seq.iter()
            .try_fold(self.start(), |state, &c| self.next(state, c))
    }

    /// Checks structural identity up to a renaming of states.
    pub fn isomorphic_to(&self, other: &Dfa) -> bool {
        if self.num_states() != other.num_states()
            || self.num_transitions() != other.num_transitions()
            || self.accepting.len() != other.accepting.len()
        {
            return false;
        }
        let mut map: Vec<Option<StateId>> = vec![None; self.num_states()];
        let mut used = vec![false; other.num_states()];
        map[0] = Some(other.start());
        used[0] = true;
        let mut queue = VecDeque::from([(self.start(), other.start())]);
        while let Some((a, b)) = queue.pop_front() {
            if self.is_accepting(a) != other.is_accepting(b) {
                return false;
            }
            let left: Vec<_> = self.outgoing(a).collect();
            let right: Vec<_> = other.outgoing(b).collect();
            if left.len() != right.len() {
                return false;
            }
            for ((c1, t1), (c2, t2)) in left.into_iter().zip(right) {
                if c1 != c2 {
                    return false;
                }
                match map[t1.0] {
                    Some(m) if m != t2 => return false,
                    Some(_) => {}
                    None => {
                        if used[t2.0] {
                            return false;
                        }
                        map[t1.0] = Some(t2);
                        used[t2.0] = true;
                        queue.push_back((t1, t2));
                    }
                }
            }
        }
        map.iter().all(Option::is_some)
    }
}

/// Compiles a script into its minimal automaton.
pub fn compile(ast: &ScriptAst, limits: &CompileLimits) -> Result<Dfa, CompileError> {
    let pattern = expand_any(ast, limits)?;
    let (raw, alphabet) = construct::subset_construction(&pattern, limits.max_states)?;
    let (delta, accepting, start) = construct::minimize(&raw, &alphabet);
    Ok(construct::canonical(delta, accepting, start, alphabet))
}

/// Adds a self-loop `(q, c, q)` for every transition `(p, c, q)` with
/// `p != q` into a non-accepting `q` that has no outgoing `c` transition.
/// These loops model re-running the cell that was just executed.
pub fn decorate_reexec_loops(dfa: &Dfa) -> Dfa {
    let mut out = dfa.clone();
    for (p, c, q) in dfa.transitions() {
        if p != q && !dfa.is_accepting(q) && dfa.next(q, c).is_none() {
            out.delta[q.0].insert(c, q);
        }
    }
    out
}

/// True iff `seq` drives the start state to an accepting state.
pub fn accepts(dfa: &Dfa, seq: &[CellRef]) -> bool {
    dfa.run(seq).is_some_and(|s| dfa.is_accepting(s))
}

/// Longest sequence length [`enumerate_language`] accepts.
pub const MAX_ENUMERATION_LENGTH: usize = 20;

/// Every accepted sequence of length at most `max_length`, by breadth-first
/// path enumeration.
///
/// # Panics
///
/// If `max_length` exceeds [`MAX_ENUMERATION_LENGTH`].
pub fn enumerate_language(dfa: &Dfa, max_length: usize) -> BTreeSet<Vec<CellRef>> {
    assert!(
        max_length <= MAX_ENUMERATION_LENGTH,
        "enumeration length {max_length} exceeds {MAX_ENUMERATION_LENGTH}"
    );
    let mut out = BTreeSet::new();
    let mut frontier = vec![(dfa.start(), Vec::new())];
    for depth in 0..=max_length {
        let mut next = Vec::new();
        for (state, path) in frontier {
            if dfa.is_accepting(state) {
                out.insert(path.clone());
            }
            if depth < max_length {
                for (c, t) in dfa.outgoing(state) {
                    let mut p = path.clone();
                    p.push(c);
                    next.push((t, p));
                }
            }
        }
        frontier = next;
    }
    out
}
