use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use moon_core::automaton::CompileLimits;
use moon_core::notebook::{CellKind, CellRef, NotebookDoc};
use moon_core::script::{parse_script, ScriptAst};
use moon_core::session::{start_session, ExecOutcome, Session};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};

use crate::error::ApiError;
use crate::view::{TraceView, View};

const EVENT_BUFFER: usize = 64;

/// A user gesture, as posted to `/sessions/{id}/actions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase", deny_unknown_fields)]
pub enum Action {
    Execute {
        cell: CellRef,
    },
    Back,
    Reset,
    Insert {
        position: usize,
        #[serde(default = "default_kind")]
        kind: CellKind,
    },
    Delete {
        position: usize,
    },
}

fn default_kind() -> CellKind {
    CellKind::Code
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionResponse {
    pub view: View,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ExecOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inserted: Option<CellRef>,
}

struct Slot {
    session: Session,
    version: u64,
}

struct Entry {
    slot: Mutex<Slot>,
    events: broadcast::Sender<View>,
}

/// All live sessions. Cheap to clone; clones share the registry.
///
/// Each session sits behind its own async mutex, so actions on one session
/// are applied one at a time in arrival order while different sessions
/// proceed independently. Reads take the same lock and therefore always see
/// a state between two actions.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Entry>>>>,
    limits: CompileLimits,
}

impl Default for AppState {
    fn default() -> Self {
        AppState::new(CompileLimits::default())
    }
}

/// 128 random bits, hex encoded.
fn fresh_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl AppState {
    pub fn new(limits: CompileLimits) -> Self {
        AppState {
            sessions: Arc::default(),
            limits,
        }
    }

    pub fn limits(&self) -> &CompileLimits {
        &self.limits
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("registry lock").len()
    }

    /// Parses, validates and compiles `script` against `doc`, then registers
    /// a new session.
    pub fn create(&self, doc: NotebookDoc, script: &str) -> Result<(String, View), ApiError> {
        let ast = parse_script(script)?;
        self.create_parsed(doc, ast)
    }

    pub fn create_parsed(
        &self,
        doc: NotebookDoc,
        script: ScriptAst,
    ) -> Result<(String, View), ApiError> {
        let session = start_session(doc, script, &self.limits)?;
        let view = View::of(&session, 0);
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let entry = Arc::new(Entry {
            slot: Mutex::new(Slot {
                session,
                version: 0,
            }),
            events,
        });
        let mut sessions = self.sessions.write().expect("registry lock");
        let id = loop {
            let id = fresh_id();
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        sessions.insert(id.clone(), entry);
        Ok((id, view))
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub async fn view(&self, id: &str) -> Result<View, ApiError> {
        let entry = self.entry(id)?;
        let slot = entry.slot.lock().await;
        Ok(View::of(&slot.session, slot.version))
    }

    pub async fn trace(&self, id: &str) -> Result<TraceView, ApiError> {
        let entry = self.entry(id)?;
        let slot = entry.slot.lock().await;
        Ok(TraceView::of(&slot.session))
    }

    /// The notebook with the log written into its metadata.
    pub async fn snapshot(&self, id: &str) -> Result<serde_json::Value, ApiError> {
        let entry = self.entry(id)?;
        let slot = entry.slot.lock().await;
        Ok(slot.session.snapshot().to_value())
    }

    /// Applies one action. On success the version goes up by one and the
    /// new view is pushed to subscribers; on failure nothing changes.
    pub async fn apply(&self, id: &str, action: Action) -> Result<ActionResponse, ApiError> {
        let entry = self.entry(id)?;
        let mut slot = entry.slot.lock().await;
        let session = &mut slot.session;
        let mut outcome = None;
        let mut inserted = None;
        match action {
            Action::Execute { cell } => outcome = Some(session.execute_cell(cell)?),
            Action::Back => session.step_back(),
            Action::Reset => session.reset(),
            Action::Insert { position, kind } => {
                inserted = Some(session.insert_cell(position, kind)?)
            }
            Action::Delete { position } => session.delete_cell(position)?,
        }
        slot.version += 1;
        let view = View::of(&slot.session, slot.version);
        // No subscribers is not an error.
        let _ = entry.events.send(view.clone());
        Ok(ActionResponse {
            view,
            outcome,
            inserted,
        })
    }

    /// The current view together with a receiver for every later one.
    pub async fn subscribe(&self, id: &str) -> Result<(View, broadcast::Receiver<View>), ApiError> {
        let entry = self.entry(id)?;
        let slot = entry.slot.lock().await;
        let rx = entry.events.subscribe();
        Ok((View::of(&slot.session, slot.version), rx))
    }
}
