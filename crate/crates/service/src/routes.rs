use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use moon_core::notebook::{notebook_from_value, parse_notebook, NotebookDoc};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::registry::{Action, AppState};
use crate::view::View;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_view))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/trace", get(get_trace))
        .route("/sessions/{id}/notebook", get(get_notebook))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    /// The `.ipynb` document, as a JSON object or as its text.
    notebook: Value,
    script: String,
}

fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid body: {e}")))
}

fn notebook_of(value: Value) -> Result<NotebookDoc, ApiError> {
    Ok(match value {
        Value::String(text) => parse_notebook(&text)?,
        other => notebook_from_value(other)?,
    })
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: CreateRequest = decode(&body)?;
    let doc = notebook_of(request.notebook)?;
    let (id, view) = state.create(doc, &request.script)?;
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "view": view }))))
}

async fn get_view(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<View>, ApiError> {
    Ok(Json(state.view(&id).await?))
}

async fn post_action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    // Check the session first so an unknown id is a 404 whatever the body.
    state.view(&id).await?;
    let action: Action = decode(&body)?;
    Ok(Json(state.apply(&id, action).await?))
}

async fn get_trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.trace(&id).await?))
}

async fn get_notebook(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.snapshot(&id).await?))
}

fn view_event(view: &View) -> Event {
    Event::default()
        .event("view")
        .id(view.version.to_string())
        .json_data(view)
        .expect("views always serialize")
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let (current, rx) = state.subscribe(&id).await?;
    let first = stream::once(async move { Ok(view_event(&current)) });
    let rest = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(view) => return Some((Ok(view_event(&view)), rx)),
                // A slow client skipped some views; the next one is complete anyway.
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(first.chain(rest)).keep_alive(KeepAlive::default()))
}
