//! Nondeterministic construction, subset construction and partition-refinement
//! minimization.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::notebook::CellRef;

use super::expand::Pattern;
use super::{CompileError, Dfa, StateId};

#[derive(Default)]
struct Nfa {
    eps: Vec<Vec<usize>>,
    moves: Vec<Vec<(CellRef, usize)>>,
}

impl Nfa {
    fn state(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.moves.push(Vec::new());
        self.eps.len() - 1
    }

    /// Adds the fragment for `p`; returns its (entry, exit) states.
    fn fragment(&mut self, p: &Pattern) -> (usize, usize) {
        match p {
            Pattern::Sym(c) => {
                let (s, t) = (self.state(), self.state());
                self.moves[s].push((*c, t));
                (s, t)
            }
            Pattern::Concat(parts) => {
                let start = self.state();
                let mut end = start;
                for part in parts {
                    let (s, t) = self.fragment(part);
                    self.eps[end].push(s);
                    end = t;
                }
                (start, end)
            }
            Pattern::Union(alts) => {
                let (start, end) = (self.state(), self.state());
                for alt in alts {
                    let (s, t) = self.fragment(alt);
                    self.eps[start].push(s);
                    self.eps[t].push(end);
                }
                (start, end)
            }
            Pattern::Opt(inner) => {
                let (s, t) = self.fragment(inner);
                self.eps[s].push(t);
                (s, t)
            }
        }
    }

    fn closure(&self, seed: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        let mut stack: Vec<usize> = seed.into_iter().collect();
        while let Some(s) = stack.pop() {
            if set.insert(s) {
                stack.extend(self.eps[s].iter().copied());
            }
        }
        set
    }
}

fn alphabet(p: &Pattern, out: &mut BTreeSet<CellRef>) {
    match p {
        Pattern::Sym(c) => {
            out.insert(*c);
        }
        Pattern::Concat(ps) | Pattern::Union(ps) => ps.iter().for_each(|q| alphabet(q, out)),
        Pattern::Opt(q) => alphabet(q, out),
    }
}

/// Raw deterministic automaton straight out of the subset construction.
pub(super) struct RawDfa {
    pub delta: Vec<BTreeMap<CellRef, usize>>,
    pub accepting: Vec<bool>,
}

pub(super) fn subset_construction(
    p: &Pattern,
    max_states: usize,
) -> Result<(RawDfa, BTreeSet<CellRef>), CompileError> {
    let mut nfa = Nfa::default();
    let (entry, exit) = nfa.fragment(p);
    let mut symbols = BTreeSet::new();
    alphabet(p, &mut symbols);

    let start = nfa.closure([entry]);
    let mut index: HashMap<BTreeSet<usize>, usize> = HashMap::new();
    let mut sets = vec![start.clone()];
    index.insert(start, 0);
    let mut raw = RawDfa {
        delta: vec![BTreeMap::new()],
        accepting: Vec::new(),
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(d) = queue.pop_front() {
        let mut targets: BTreeMap<CellRef, Vec<usize>> = BTreeMap::new();
        for &s in &sets[d] {
            for &(c, t) in &nfa.moves[s] {
                targets.entry(c).or_default().push(t);
            }
        }
        for (c, seed) in targets {
            let set = nfa.closure(seed);
            let id = match index.get(&set) {
                Some(&id) => id,
                None => {
                    let id = sets.len();
                    if id >= max_states {
                        return Err(CompileError::TooLarge {
                            what: "automaton states",
                            count: id + 1,
                            limit: max_states,
                        });
                    }
                    index.insert(set.clone(), id);
                    sets.push(set);
                    raw.delta.push(BTreeMap::new());
                    queue.push_back(id);
                    id
                }
            };
            raw.delta[d].insert(c, id);
        }
    }
    raw.accepting = sets.iter().map(|s| s.contains(&exit)).collect();
    Ok((raw, symbols))
}

/// Drops states that cannot reach an accepting state.
fn trim(raw: &RawDfa) -> Vec<bool> {
    let n = raw.delta.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in raw.delta.iter().enumerate() {
        for &t in row.values() {
            rev[t].push(s);
        }
    }
    let mut live = raw.accepting.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &rev[t] {
            if !live[s] {
                live[s] = true;
                stack.push(s);
            }
        }
    }
    live
}

/// Moore-style partition refinement over the trimmed automaton, treating
/// missing transitions as going to an implicit dead state.
pub(super) fn minimize(
    raw: &RawDfa,
    symbols: &BTreeSet<CellRef>,
) -> (Vec<BTreeMap<CellRef, usize>>, Vec<bool>, usize) {
    let live = trim(raw);
    let n = raw.delta.len();
    let mut class: Vec<usize> = (0..n).map(|s| usize::from(raw.accepting[s])).collect();
    let mut classes = 0;
    loop {
        let mut sigs: HashMap<(usize, Vec<Option<usize>>), usize> = HashMap::new();
        let mut next = vec![usize::MAX; n];
        for s in (0..n).filter(|&s| live[s]) {
            let row: Vec<Option<usize>> = symbols
                .iter()
                .map(|c| raw.delta[s].get(c).filter(|&&t| live[t]).map(|&t| class[t]))
                .collect();
            let fresh = sigs.len();
            next[s] = *sigs.entry((class[s], row)).or_insert(fresh);
        }
        let count = sigs.len();
        class = next;
        if count == classes {
            break;
        }
        classes = count;
    }

    let mut delta = vec![BTreeMap::new(); classes];
    let mut accepting = vec![false; classes];
    for s in (0..n).filter(|&s| live[s]) {
        let k = class[s];
        accepting[k] = raw.accepting[s];
        for (&c, &t) in &raw.delta[s] {
            if live[t] {
                delta[k].insert(c, class[t]);
            }
        }
    }
    (delta, accepting, class[0])
}

/// Renumbers states in depth-first preorder from the start state, taking
/// transitions in symbol order; states without outgoing transitions are
/// numbered after all others.
pub(super) fn canonical(
    delta: Vec<BTreeMap<CellRef, usize>>,
    accepting: Vec<bool>,
    start: usize,
    alphabet: BTreeSet<CellRef>,
) -> Dfa {
    let n = delta.len();
    let mut seen = vec![false; n];
    let mut order = vec![start];
    seen[start] = true;
    let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
    while let Some((s, next_edge)) = stack.last_mut() {
        let s = *s;
        let found = delta[s]
            .values()
            .enumerate()
            .skip(*next_edge)
            .find(|(_, &t)| !seen[t]);
        match found {
            Some((i, &t)) => {
                *next_edge = i + 1;
                seen[t] = true;
                order.push(t);
                stack.push((t, 0));
            }
            None => {
                stack.pop();
            }
        }
    }
    let (inner, sinks): (Vec<usize>, Vec<usize>) = order
        .into_iter()
        .partition(|&s| s == start || !delta[s].is_empty());
    let mut rename = vec![usize::MAX; n];
    for (new, old) in inner.into_iter().chain(sinks).enumerate() {
        rename[old] = new;
    }

    let mut out_delta = vec![BTreeMap::new(); n];
    let mut out_accepting = BTreeSet::new();
    for old in 0..n {
        let new = rename[old];
        debug_assert_ne!(
            new,
            usize::MAX,
            "minimized automaton has an unreachable state"
        );
        out_delta[new] = delta[old]
            .iter()
            .map(|(&c, &t)| (c, StateId(rename[t])))
            .collect();
        if accepting[old] {
            out_accepting.insert(StateId(new));
        }
    }
    Dfa {
        alphabet,
        delta: out_delta,
        accepting: out_accepting,
    }
}
