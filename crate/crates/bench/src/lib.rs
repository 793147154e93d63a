//! Inputs shared by the benchmarks.

use moon_core::notebook::{CellRef, LogTrace};

pub const BRANCH_SCRIPT: &str = "(C7 ?C10 [(C12 C14)(C16 C18)])";

pub const FULL_SCRIPT: &str =
    "((C1~T0 C3~T2 C5~T4 C7~T6 C3~T8 C5 C7 ?C10~T9) [(C12~T11 C14~T13) (C16~T15 C18~T17)])";

/// An any-order group at the default size limit.
pub const WIDE_ANY_SCRIPT: &str = "[C1 C2 C3 C4 C5 C6]";

/// `(C0 C1 ... C<n-1>)`
pub fn linear_script(n: usize) -> String {
    let cells: Vec<String> = (0..n).map(|i| format!("C{i}")).collect();
    format!("({})", cells.join(" "))
}

/// A long log for the linear script: the scenario run `rounds` times with a
/// repeat and a stray cell after every step.
pub fn noisy_log(n: usize, rounds: usize) -> LogTrace {
    let mut cells = Vec::new();
    for _ in 0..rounds {
        for i in 0..n {
            cells.push(CellRef::code(i));
            cells.push(CellRef::code(i));
            cells.push(CellRef::code(n + i % 3));
        }
    }
    LogTrace::from_cells(cells)
}
