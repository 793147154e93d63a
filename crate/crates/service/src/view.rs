use moon_core::automaton::StateId;
use moon_core::notebook::{CellKind, CellRef, LogTrace};
use moon_core::session::{Color, Session, TraceStep};
use serde::Serialize;

/// What the browser renders: every cell with its color, plus the frontier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct View {
    pub version: u64,
    pub state: StateId,
    pub complete: bool,
    pub next_cells: Vec<CellRef>,
    pub last_executed: Option<CellRef>,
    pub cells: Vec<CellView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellView {
    pub label: CellRef,
    pub kind: CellKind,
    pub source: String,
    pub color: Color,
    pub emoji: &'static str,
    /// Label the scenario script uses for this cell, if it belongs to it.
    pub scenario: Option<CellRef>,
    pub is_last_executed: bool,
}

impl View {
    pub fn of(session: &Session, version: u64) -> Self {
        let colors = session.colors();
        let last = session.last_executed();
        let cells = session
            .doc()
            .cells
            .iter()
            .map(|cell| {
                let label = cell.label();
                let color = colors[&label];
                CellView {
                    label,
                    kind: cell.kind,
                    source: cell.source.clone(),
                    color,
                    emoji: color.emoji(),
                    scenario: session.scenario_label(label),
                    is_last_executed: last == Some(label),
                }
            })
            .collect();
        View {
            version,
            state: session.current(),
            complete: session.is_complete(),
            next_cells: session.next_cells(),
            last_executed: last,
            cells,
        }
    }
}

/// Both traces of a session. User-trace cells carry scenario labels.
#[derive(Debug, Clone, Serialize)]
pub struct TraceView {
    pub log: LogTrace,
    pub user: Vec<TraceStep>,
    pub current: StateId,
}

impl TraceView {
    pub fn of(session: &Session) -> Self {
        TraceView {
            log: session.log_trace().clone(),
            user: session.user_trace().to_vec(),
            current: session.current(),
        }
    }
}
