//! HTTP front end for guided sessions.
//!
//! Sessions live in memory. The browser creates one from a notebook and a
//! script, posts actions to it, and either reads the returned view or
//! listens on the event stream. The wire format is described in
//! `docs/protocol.md`.

mod error;
mod registry;
mod routes;
mod view;

pub use error::ApiError;
pub use registry::{Action, ActionResponse, AppState};
pub use routes::router;
pub use view::{CellView, TraceView, View};

use tokio::net::TcpListener;

/// Serves `state` on `listener` until the process is stopped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
