//! Scenario engine for educational notebooks.
//!
//! An author writes the intended execution order of a notebook's code cells
//! as a small script (`(...)` linear, `[...]` any order, `?` optional,
//! `C<i>~T<j>` a code cell with its instruction cells). The script compiles to
//! a minimal deterministic automaton that drives a live [`Session`]
//! (green / orange / red cells, automatic backtracking, back and reset), and
//! recorded execution logs are scored offline for fitness and completeness.

pub mod analytics;
pub mod automaton;
pub mod notebook;
pub mod script;
pub mod session;

pub use analytics::{
    classify_replay, cohort_report, completeness, fitness, simplify_trace, AnnotatedTrace,
    CohortReport, MetricError, TraceClass,
};
pub use automaton::{
    accepts, compile, decorate_reexec_loops, enumerate_language, expand_any, export_dot,
    CompileError, CompileLimits, Dfa, StateId,
};
pub use notebook::{
    cell_label, parse_notebook, read_log_trace, write_log_trace, CellKind, CellRef, LogEntry,
    LogTrace, NotebookDoc, NotebookError,
};
pub use script::{parse_script, validate_script, ScriptAst, SyntaxError, ValidationReport};
pub use session::{
    start_session, Classification, Color, ExecOutcome, Session, SessionError, TraceStep,
};
