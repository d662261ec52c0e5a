//! HTTP/JSON service over a [`ReviewState`], persisting every decision to an
//! append-only JSONL log before answering.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::corpus::Corpus;
use crate::linker::{LinkDecision, LinkTable};
use crate::review::{DecisionRequest, ReviewError, ReviewState};
use crate::{Error, Result};

const DEFAULT_LIMIT: usize = 50;

pub struct AppState {
    snapshot: RwLock<Arc<ReviewState>>,
    log: tokio::sync::Mutex<File>,
    log_path: PathBuf,
}

impl AppState {
    /// Loads the state, replaying any decisions already in the log.
    pub fn open(corpus: Corpus, table: LinkTable, log_path: &Path) -> Result<Arc<AppState>> {
        let log = read_log(log_path)?;
        let state = ReviewState::replay(corpus, table, &log)?;
        let file = OpenOptions::new().create(true).append(true).open(log_path)?;
        drop_torn_tail(&file, log_path)?;
        Ok(Arc::new(AppState {
            snapshot: RwLock::new(Arc::new(state)),
            log: tokio::sync::Mutex::new(file),
            log_path: log_path.to_path_buf(),
        }))
    }

    pub fn snapshot(&self) -> Arc<ReviewState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }
}

/// Decisions recorded in a JSONL log; a missing file is an empty log. A
/// torn final line (no trailing newline) is ignored.
pub fn read_log(path: &Path) -> Result<Vec<LinkDecision>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn drop_torn_tail(file: &File, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        file.set_len(keep as u64)?;
        file.sync_all()?;
    }
    Ok(())
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct QueueParams {
    limit: Option<String>,
}

async fn queue(State(app): State<Arc<AppState>>, Query(q): Query<QueueParams>) -> Response {
    let limit = match q.limit.as_deref().map(str::parse::<usize>) {
        None => DEFAULT_LIMIT,
        Some(Ok(n)) if n > 0 => n,
        _ => return error(StatusCode::BAD_REQUEST, "limit must be a positive integer"),
    };
    Json(app.snapshot().queue(limit)).into_response()
}

async fn stats(State(app): State<Arc<AppState>>) -> Response {
    Json(app.snapshot().stats()).into_response()
}

async fn export(State(app): State<Arc<AppState>>) -> Response {
    match app.snapshot().export() {
        Ok(text) => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn decision(
    State(app): State<Arc<AppState>>,
    body: std::result::Result<Json<DecisionRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    // Holding the log lock serializes writers; readers keep using the
    // previous snapshot until the swap below.
    let mut log = app.log.lock().await;
    let current = app.snapshot();
    let d = match current.decide(&req, uuid::Uuid::new_v4().to_string(), now_ms()) {
        Ok(d) => d,
        Err(e @ ReviewError::NotFound(_)) => return error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ ReviewError::AlreadyResolved(_)) => return error(StatusCode::CONFLICT, e.to_string()),
        Err(e @ ReviewError::Unprocessable(_)) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let mut next = (*current).clone();
    if let Err(e) = next.apply(&d) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    let mut line = serde_json::to_string(&d).expect("decision serializes");
    line.push('\n');
    if let Err(e) = log.write_all(line.as_bytes()).and_then(|_| log.sync_data()) {
        return error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("could not persist decision: {e}"),
        );
    }
    let item = next.item(&req.item_id);
    *app.snapshot.write().expect("snapshot lock") = Arc::new(next);
    drop(log);
    Json(json!({ "decision": d, "item": item })).into_response()
}

pub fn router(app: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(health))
        .route("/queue", get(queue))
        .route("/decision", post(decision))
        .route("/stats", get(stats))
        .route("/export", get(export))
        .layer(cors)
        .with_state(app)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_reader_skips_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        assert!(read_log(&p).unwrap().is_empty());
        let d = r#"{"decision_id":"a","mention":{"locator":{"doc_id":"d","sent_id":"s","start":1,"end":1},"text":"X","head_lemma":"X","corpus_id":"c"},"action":"reject","timestamp":0,"annotator":""}"#;
        std::fs::write(&p, format!("{d}\n{{\"decision_id\":")).unwrap();
        assert_eq!(read_log(&p).unwrap().len(), 1);
        std::fs::write(&p, "garbage\n").unwrap();
        assert!(matches!(read_log(&p), Err(Error::Parse { line: 1, .. })));
    }
}
