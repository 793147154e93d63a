//! Live guidance of a student through a scenario.
//!
//! A [`Session`] ties a notebook to a compiled scenario. Cells are addressed
//! by their *current* label (position in the notebook); the scenario keeps
//! using the labels the script was written against. The two are linked
//! through each cell's stable id, so inserting or deleting free cells never
//! disturbs the automaton or the traces.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{compile, CompileError, CompileLimits, Dfa, StateId};
use crate::notebook::{
    read_log_trace, write_log_trace, Cell, CellKind, CellRef, LogEntry, LogTrace, NotebookDoc,
    NotebookError,
};
use crate::script::{validate_script, ScriptAst, ValidationReport};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("script does not match the notebook:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Notebook(#[from] NotebookError),
    #[error("no cell {0} in the notebook")]
    UnknownCell(CellRef),
    #[error("{0} is not a code cell")]
    NotCode(CellRef),
    #[error("{0} belongs to the scenario and cannot be deleted")]
    Forbidden(CellRef),
}

/// Display state of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    /// Can be executed next.
    Green,
    /// Already executed on the current path.
    Orange,
    /// Not reachable from the current state.
    Red,
    /// Outside the scenario.
    White,
}

impl Color {
    pub fn emoji(self) -> &'static str {
        match self {
            Color::Green => "▶",
            Color::Orange => "✔",
            Color::Red => "⛔",
            Color::White => "✏",
        }
    }

    fn rank(self) -> u8 {
        match self {
            Color::Green => 3,
            Color::Orange => 2,
            Color::Red => 1,
            Color::White => 0,
        }
    }
}

/// How an execution was interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// A defined transition was taken.
    Advance,
    /// The most recent cell ran again; nothing moves.
    ReexecStay,
    /// An earlier cell ran again; the trace was cut back to its last occurrence.
    Backtrack,
    /// The cell is not executable now; nothing moves.
    Deviation,
    /// The cell is outside the scenario.
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExecOutcome {
    pub classification: Classification,
    pub new_state: StateId,
    pub complete: bool,
}

/// One valid transition: the scenario cell and the state it led to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub cell: CellRef,
    pub state: StateId,
}

/// The automaton cursor and user trace, without any notebook attached.
/// Offline replay drives one of these with the same rules as a live session.
#[derive(Debug, Clone)]
pub struct Guide {
    dfa: Arc<Dfa>,
    current: StateId,
    trace: Vec<TraceStep>,
}

impl Guide {
    pub fn new(dfa: Arc<Dfa>) -> Self {
        let current = dfa.start();
        Guide {
            dfa,
            current,
            trace: Vec::new(),
        }
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    pub fn is_complete(&self) -> bool {
        self.dfa.is_accepting(self.current)
    }

    /// Applies one execution of a scenario cell. Rules, first match wins:
    /// a defined transition advances; re-running the last traced cell stays
    /// put; running any other traced cell truncates the trace after its last
    /// occurrence; anything else is a deviation.
    pub fn execute(&mut self, cell: CellRef) -> Classification {
        if let Some(next) = self.dfa.next(self.current, cell) {
            self.trace.push(TraceStep { cell, state: next });
            self.current = next;
            return Classification::Advance;
        }
        if self.trace.last().is_some_and(|s| s.cell == cell) {
            return Classification::ReexecStay;
        }
        match self.trace.iter().rposition(|s| s.cell == cell) {
            Some(i) => {
                self.trace.truncate(i + 1);
                self.current = self.trace[i].state;
                Classification::Backtrack
            }
            None => Classification::Deviation,
        }
    }

    pub fn step_back(&mut self) {
        if self.trace.pop().is_some() {
            self.current = self.trace.last().map_or(self.dfa.start(), |s| s.state);
        }
    }

    pub fn reset(&mut self) {
        self.trace.clear();
        self.current = self.dfa.start();
    }

    /// Color of a scenario code cell in the current state.
    pub fn color_of(&self, cell: CellRef) -> Color {
        if self.dfa.next(self.current, cell).is_some() {
            Color::Green
        } else if self.trace.iter().any(|s| s.cell == cell) {
            Color::Orange
        } else {
            Color::Red
        }
    }
}

/// A guided notebook session.
#[derive(Debug, Clone)]
pub struct Session {
    guide: Guide,
    script: ScriptAst,
    doc: NotebookDoc,
    log: LogTrace,
    /// stable id -> scenario label
    bindings: BTreeMap<String, CellRef>,
    /// scenario code cell -> its instruction cells (scenario labels)
    text_assoc: BTreeMap<CellRef, BTreeSet<CellRef>>,
    /// scenario text cell -> code cells it documents
    text_owners: BTreeMap<CellRef, BTreeSet<CellRef>>,
    next_ts: u64,
    fresh_ids: u64,
    last_executed: Option<String>,
}

/// Validates and compiles `script` against `doc` and opens a session at `q0`.
/// A log already stored in the notebook is picked up and extended.
pub fn start_session(
    doc: NotebookDoc,
    script: ScriptAst,
    limits: &CompileLimits,
) -> Result<Session, SessionError> {
    let report = validate_script(&script, &doc);
    if !report.ok() {
        return Err(SessionError::Invalid(report));
    }
    let dfa = Arc::new(compile(&script, limits)?);
    Session::with_dfa(doc, script, dfa)
}

impl Session {
    /// Opens a session with an already compiled automaton for `script`.
    pub fn with_dfa(
        doc: NotebookDoc,
        script: ScriptAst,
        dfa: Arc<Dfa>,
    ) -> Result<Self, SessionError> {
        let report = validate_script(&script, &doc);
        if !report.ok() {
            return Err(SessionError::Invalid(report));
        }
        let log = read_log_trace(&doc)?;
        let bindings = script
            .scenario_cells()
            .into_iter()
            .map(|r| (doc.cells[r.index].stable_id.clone(), r))
            .collect();
        let text_assoc = script.text_associations();
        let mut text_owners: BTreeMap<CellRef, BTreeSet<CellRef>> = BTreeMap::new();
        for (code, texts) in &text_assoc {
            for t in texts {
                text_owners.entry(*t).or_default().insert(*code);
            }
        }
        Ok(Session {
            guide: Guide::new(dfa),
            script,
            next_ts: log.next_ts(),
            doc,
            log,
            bindings,
            text_assoc,
            text_owners,
            fresh_ids: 0,
            last_executed: None,
        })
    }

    pub fn dfa(&self) -> &Dfa {
        self.guide.dfa()
    }

    pub fn doc(&self) -> &NotebookDoc {
        &self.doc
    }

    pub fn script(&self) -> &ScriptAst {
        &self.script
    }

    pub fn current(&self) -> StateId {
        self.guide.current()
    }

    pub fn user_trace(&self) -> &[TraceStep] {
        self.guide.trace()
    }

    pub fn log_trace(&self) -> &LogTrace {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.guide.is_complete()
    }

    pub fn text_associations(&self) -> &BTreeMap<CellRef, BTreeSet<CellRef>> {
        &self.text_assoc
    }

    /// Scenario label of the cell currently displayed as `display`, or
    /// `None` for a free (white) cell.
    pub fn scenario_label(&self, display: CellRef) -> Option<CellRef> {
        let cell = self.doc.cell(display.index)?;
        (cell.kind == display.kind)
            .then(|| self.bindings.get(&cell.stable_id).copied())
            .flatten()
    }

    /// Current label of the cell the script calls `scenario`.
    pub fn display_label(&self, scenario: CellRef) -> Option<CellRef> {
        self.doc
            .cells
            .iter()
            .find(|c| self.bindings.get(&c.stable_id) == Some(&scenario))
            .map(Cell::label)
    }

    /// Current label of the most recently executed cell.
    pub fn last_executed(&self) -> Option<CellRef> {
        let id = self.last_executed.as_deref()?;
        self.doc.position_of(id).map(|p| self.doc.cells[p].label())
    }

    /// Runs the code cell currently labelled `cell`.
    pub fn execute_cell(&mut self, cell: CellRef) -> Result<ExecOutcome, SessionError> {
        let target = self
            .doc
            .cell(cell.index)
            .filter(|c| c.kind == cell.kind)
            .ok_or(SessionError::UnknownCell(cell))?;
        if target.kind != CellKind::Code {
            return Err(SessionError::NotCode(cell));
        }
        let ts = self.next_ts;
        self.next_ts += 1;
        self.last_executed = Some(target.stable_id.clone());
        let classification = match self.bindings.get(&target.stable_id).copied() {
            Some(scenario) => {
                self.log.entries.push(LogEntry::new(scenario, ts));
                self.guide.execute(scenario)
            }
            None => {
                self.log.entries.push(LogEntry::white(cell, ts));
                Classification::White
            }
        };
        Ok(ExecOutcome {
            classification,
            new_state: self.current(),
            complete: self.is_complete(),
        })
    }

    fn scenario_color(&self, scenario: CellRef) -> Color {
        match scenario.kind {
            CellKind::Code => self.guide.color_of(scenario),
            CellKind::Text => self
                .text_owners
                .get(&scenario)
                .into_iter()
                .flatten()
                .map(|&code| self.guide.color_of(code))
                .max_by_key(|c| c.rank())
                .unwrap_or(Color::White),
        }
    }

    /// Color of every cell, keyed by current label.
    pub fn colors(&self) -> BTreeMap<CellRef, Color> {
        self.doc
            .cells
            .iter()
            .map(|cell| {
                let color = self
                    .bindings
                    .get(&cell.stable_id)
                    .map_or(Color::White, |&s| self.scenario_color(s));
                (cell.label(), color)
            })
            .collect()
    }

    pub fn color(&self, display: CellRef) -> Option<Color> {
        let cell = self
            .doc
            .cell(display.index)
            .filter(|c| c.kind == display.kind)?;
        Some(
            self.bindings
                .get(&cell.stable_id)
                .map_or(Color::White, |&s| self.scenario_color(s)),
        )
    }

    /// Green code cells in notebook order.
    pub fn next_cells(&self) -> Vec<CellRef> {
        self.doc
            .cells
            .iter()
            .filter(|c| c.kind == CellKind::Code)
            .filter(|c| {
                self.bindings
                    .get(&c.stable_id)
                    .is_some_and(|&s| self.dfa().next(self.current(), s).is_some())
            })
            .map(Cell::label)
            .collect()
    }

    /// Drops the last valid transition.
    pub fn step_back(&mut self) {
        self.guide.step_back();
    }

    /// Clears the user trace and returns to `q0`; the log is kept.
    pub fn reset(&mut self) {
        self.guide.reset();
    }

    /// Inserts an empty free cell at `position` and returns its label.
    pub fn insert_cell(
        &mut self,
        position: usize,
        kind: CellKind,
    ) -> Result<CellRef, SessionError> {
        let id = loop {
            self.fresh_ids += 1;
            let id = format!("moon-new-{}", self.fresh_ids);
            if self.doc.position_of(&id).is_none() {
                break id;
            }
        };
        self.doc
            .insert_cell(position, Cell::new(id, position, kind))?;
        Ok(CellRef {
            kind,
            index: position,
        })
    }

    /// Removes the free cell at `position`. Scenario cells are refused.
    pub fn delete_cell(&mut self, position: usize) -> Result<(), SessionError> {
        let cell = self.doc.cell(position).ok_or(NotebookError::OutOfRange {
            position,
            count: self.doc.len(),
        })?;
        if self.bindings.contains_key(&cell.stable_id) {
            return Err(SessionError::Forbidden(cell.label()));
        }
        self.doc.remove_cell(position)?;
        Ok(())
    }

    /// The script rewritten with current cell labels.
    pub fn remapped_script(&self) -> ScriptAst {
        ScriptAst {
            root: self
                .script
                .root
                .map_refs(&|r| self.display_label(r).unwrap_or(r)),
        }
    }

    /// The notebook as it stands, with the log stored in its metadata.
    pub fn snapshot(&self) -> NotebookDoc {
        write_log_trace(&self.doc, &self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::parse_script;

    fn c(i: usize) -> CellRef {
        CellRef::code(i)
    }

    fn linear_doc(n: usize) -> NotebookDoc {
        NotebookDoc::from_cells((0..n).map(|_| (CellKind::Code, "")))
    }

    fn session(doc: NotebookDoc, src: &str) -> Session {
        start_session(doc, parse_script(src).unwrap(), &CompileLimits::default()).unwrap()
    }

    #[test]
    fn last_occurrence_backtracking() {
        let mut s = session(linear_doc(6), "(C0 C2 C0 C4 C5)");
        for i in [0, 2, 0, 4] {
            assert_eq!(
                s.execute_cell(c(i)).unwrap().classification,
                Classification::Advance
            );
        }
        assert_eq!(s.current(), StateId(4));
        let out = s.execute_cell(c(0)).unwrap();
        assert_eq!(out.classification, Classification::Backtrack);
        assert_eq!(out.new_state, StateId(3));
        assert_eq!(s.next_cells(), vec![c(4)]);
    }

    #[test]
    fn back_button_pops() {
        let mut s = session(linear_doc(6), "(C0 C2 C0 C4 C5)");
        for i in [0, 2, 0, 4] {
            s.execute_cell(c(i)).unwrap();
        }
        for _ in 0..3 {
            s.step_back();
        }
        assert_eq!(s.current(), StateId(1));
        s.step_back();
        assert_eq!(s.current(), StateId(0));
        s.step_back();
        assert_eq!(s.current(), StateId(0));
        assert!(s.user_trace().is_empty());
        assert_eq!(s.log_trace().len(), 4);
    }

    #[test]
    fn single_back_reenables_first_cell() {
        let mut s = session(linear_doc(2), "(C0 C1)");
        s.execute_cell(c(0)).unwrap();
        assert_eq!(s.color(c(0)), Some(Color::Orange));
        s.step_back();
        assert_eq!(s.current(), StateId(0));
        assert_eq!(s.color(c(0)), Some(Color::Green));
    }

    #[test]
    fn reexec_stays() {
        let mut s = session(linear_doc(3), "(C0 C1 C2)");
        s.execute_cell(c(0)).unwrap();
        let out = s.execute_cell(c(0)).unwrap();
        assert_eq!(out.classification, Classification::ReexecStay);
        assert_eq!(s.user_trace().len(), 1);
        assert_eq!(s.log_trace().len(), 2);
    }

    #[test]
    fn reset_keeps_log() {
        let mut s = session(linear_doc(3), "(C0 C1 C2)");
        s.reset();
        assert_eq!(s.current(), StateId(0));
        s.execute_cell(c(0)).unwrap();
        s.execute_cell(c(1)).unwrap();
        s.reset();
        assert_eq!(s.current(), StateId(0));
        assert!(s.user_trace().is_empty());
        assert_eq!(s.log_trace().len(), 2);
        assert_eq!(s.next_cells(), vec![c(0)]);
    }

    #[test]
    fn white_cells() {
        let mut s = session(linear_doc(4), "(C0 C2)");
        assert_eq!(s.color(c(1)), Some(Color::White));
        let out = s.execute_cell(c(1)).unwrap();
        assert_eq!(out.classification, Classification::White);
        assert_eq!(s.current(), StateId(0));
        assert!(s.log_trace().entries[0].white);
        assert!(matches!(
            s.execute_cell(c(9)),
            Err(SessionError::UnknownCell(_))
        ));
    }

    #[test]
    fn text_cells_cannot_be_executed() {
        let doc = NotebookDoc::from_cells([(CellKind::Text, ""), (CellKind::Code, "")]);
        let mut s = session(doc, "C1~T0");
        assert!(matches!(
            s.execute_cell(CellRef::text(0)),
            Err(SessionError::NotCode(_))
        ));
        // label kind must match the cell
        assert!(matches!(
            s.execute_cell(c(0)),
            Err(SessionError::UnknownCell(_))
        ));
        assert_eq!(s.color(CellRef::text(0)), Some(Color::Green));
    }

    #[test]
    fn insertion_shifts_labels_only() {
        let mut s = session(linear_doc(4), "(C0 C1 C3)");
        s.execute_cell(c(0)).unwrap();
        let new = s.insert_cell(1, CellKind::Code).unwrap();
        assert_eq!(new, c(1));
        assert_eq!(s.color(c(1)), Some(Color::White));
        assert_eq!(s.scenario_label(c(2)), Some(c(1)));
        assert_eq!(s.next_cells(), vec![c(2)]);
        let out = s.execute_cell(c(2)).unwrap();
        assert_eq!(out.classification, Classification::Advance);
        assert_eq!(s.user_trace()[1].cell, c(1));
        assert_eq!(s.remapped_script().to_string(), "(C0 C2 C4)");

        let end = s.doc().len();
        s.insert_cell(end, CellKind::Text).unwrap();
        assert_eq!(s.display_label(c(3)), Some(c(4)));
        assert!(s.insert_cell(99, CellKind::Code).is_err());
    }

    #[test]
    fn deletion_rules() {
        let mut s = session(linear_doc(3), "(C0 C2)");
        assert!(matches!(s.delete_cell(0), Err(SessionError::Forbidden(r)) if r == c(0)));
        s.delete_cell(1).unwrap();
        assert_eq!(s.doc().len(), 2);
        assert_eq!(s.display_label(c(2)), Some(c(1)));
        assert!(matches!(
            s.delete_cell(5),
            Err(SessionError::Notebook(NotebookError::OutOfRange { .. }))
        ));
    }

    #[test]
    fn rejects_invalid_scripts() {
        let err = start_session(
            linear_doc(2),
            parse_script("C5").unwrap(),
            &CompileLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SessionError::Invalid(_)));
    }

    #[test]
    fn resumes_stored_log() {
        let doc = write_log_trace(&linear_doc(2), &LogTrace::from_cells([c(0), c(1), c(1)]));
        let mut s = session(doc, "(C0 C1)");
        assert_eq!(s.log_trace().len(), 3);
        assert_eq!(s.current(), StateId(0));
        s.execute_cell(c(0)).unwrap();
        assert_eq!(s.log_trace().entries[3].ts, 3);
        let snap = s.snapshot();
        assert_eq!(read_log_trace(&snap).unwrap().len(), 4);
    }
}
