//! HTTP service for human Best-Worst annotation.
//!
//! Annotators fetch their next tuple, submit a best/worst pick, and the service
//! appends every accepted judgment to a JSONL journal that is replayed on start.

mod campaign;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bwsq_core::annotate::{AnnotatorId, JsonlStore, Judgment, StoreError};
use bwsq_core::TupleId;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub use campaign::{Campaign, CampaignFile, TupleTexts};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("campaign configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const PLACEHOLDER_UI: &str = r#"<!doctype html>
<html lang="de">
<head><meta charset="utf-8"><title>BWS annotation</title></head>
<body>
<h1>BWS annotation service</h1>
<p>No UI bundle is configured. Start the service with <code>--ui-dir</code> pointing at the built annotation UI,
or use the JSON API under <code>/api/v1/</code>.</p>
</body>
</html>
"#;

pub struct AppState {
    pub campaign: Campaign,
    pub journal: JsonlStore<Judgment>,
    /// Serializes the check-then-append of submissions.
    submit: Mutex<()>,
}

impl AppState {
    pub fn new(campaign: Campaign, journal: JsonlStore<Judgment>) -> Self {
        Self {
            campaign,
            journal,
            submit: Mutex::new(()),
        }
    }

    fn judged(&self, annotator: &str, tuple: &TupleId) -> Option<Judgment> {
        self.journal
            .get(&(tuple.clone(), AnnotatorId::human(annotator)))
            .filter(|j| j.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub annotator_id: String,
    pub tuple_id: TupleId,
    /// Member texts in presentation order; positions are 1-based.
    pub texts: Vec<String>,
    /// 1-based index of this tuple within the annotator's subset.
    pub index: usize,
    pub total: usize,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub annotator_id: String,
    pub tuple_id: TupleId,
    pub best_index: usize,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: bool,
    /// True when an identical judgment was already stored.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub campaign: Option<String>,
    pub annotators: Vec<AnnotatorProgress>,
    pub judged: usize,
    pub total: usize,
    /// Share of assigned tuples with a valid judgment, in `[0, 1]`.
    pub completion: f64,
    pub complete: bool,
}

fn reject(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(Rejection { reason: reason.into() })).into_response()
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_assignment(State(st): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(annotator) = q.annotator.filter(|a| !a.is_empty()) else {
        return reject(StatusCode::BAD_REQUEST, "missing annotator parameter");
    };
    let Some(ids) = st.campaign.annotators.get(&annotator) else {
        return reject(StatusCode::NOT_FOUND, format!("unknown annotator {annotator}"));
    };
    let next = ids
        .iter()
        .enumerate()
        .find(|(_, id)| st.judged(&annotator, id).is_none());
    match next {
        None => StatusCode::NO_CONTENT.into_response(),
        Some((i, id)) => {
            let t = &st.campaign.tuples[id];
            Json(Assignment {
                annotator_id: annotator.clone(),
                tuple_id: id.clone(),
                texts: t.texts.clone(),
                index: i + 1,
                total: ids.len(),
                issued_at: Utc::now(),
            })
            .into_response()
        }
    }
}

/// Validates a submission against the campaign; returns the reason on rejection.
fn validate(st: &AppState, s: &Submission) -> Result<(), String> {
    if !st.campaign.annotators.contains_key(&s.annotator_id) {
        return Err(format!("unknown annotator {}", s.annotator_id));
    }
    if !st.campaign.is_assigned(&s.annotator_id, &s.tuple_id) {
        return Err(format!("tuple {} is not assigned to {}", s.tuple_id, s.annotator_id));
    }
    let k = st.campaign.tuples[&s.tuple_id].texts.len();
    for (name, v) in [("best_index", s.best_index), ("worst_index", s.worst_index)] {
        if !(1..=k).contains(&v) {
            return Err(format!("{name} {v} out of range 1..={k}"));
        }
    }
    if s.best_index == s.worst_index {
        return Err("tie: best and worst must be different texts".into());
    }
    Ok(())
}

async fn submit_judgment(State(st): State<Arc<AppState>>, body: Result<Json<Submission>, JsonRejection>) -> Response {
    let s = match body {
        Ok(Json(s)) => s,
        Err(e) => return reject(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    if let Err(reason) = validate(&st, &s) {
        return reject(StatusCode::UNPROCESSABLE_ENTITY, reason);
    }
    let _guard = st.submit.lock().await;
    if let Some(prev) = st.judged(&s.annotator_id, &s.tuple_id) {
        return if prev.picks() == Some((s.best_index, s.worst_index)) {
            (StatusCode::CREATED, Json(Accepted { accepted: true, duplicate: true })).into_response()
        } else {
            reject(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("tuple {} was already judged by {} with a different answer", s.tuple_id, s.annotator_id),
            )
        };
    }
    let mut j = Judgment::new_valid(
        s.tuple_id.clone(),
        AnnotatorId::human(&s.annotator_id),
        s.best_index,
        s.worst_index,
    );
    j.raw_response = serde_json::to_string(&s).unwrap_or_default();
    if let Err(e) = st.journal.append(j) {
        tracing::error!(error = %e, "journal append failed");
        return reject(StatusCode::INTERNAL_SERVER_ERROR, "could not persist judgment");
    }
    (StatusCode::CREATED, Json(Accepted { accepted: true, duplicate: false })).into_response()
}

pub fn progress(st: &AppState) -> Progress {
    let annotators: Vec<AnnotatorProgress> = st
        .campaign
        .annotators
        .iter()
        .map(|(a, ids)| AnnotatorProgress {
            annotator_id: a.clone(),
            judged: ids.iter().filter(|id| st.judged(a, id).is_some()).count(),
            total: ids.len(),
        })
        .collect();
    let judged = annotators.iter().map(|a| a.judged).sum();
    let total = st.campaign.total();
    Progress {
        campaign: st.campaign.name.clone(),
        annotators,
        judged,
        total,
        completion: if total == 0 { 1.0 } else { judged as f64 / total as f64 },
        complete: judged == total,
    }
}

async fn get_progress(State(st): State<Arc<AppState>>) -> Json<Progress> {
    Json(progress(&st))
}

async fn export(State(st): State<Arc<AppState>>) -> Response {
    let mut buf = Vec::new();
    if let Err(e) = st.journal.export(&mut buf) {
        return reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response()
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_UI)
}

/// API routes plus static UI assets from `ui_dir`, or a placeholder page.
pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/assignments/next", get(next_assignment))
        .route("/api/v1/judgments", post(submit_judgment))
        .route("/api/v1/progress", get(get_progress))
        .route("/api/v1/export", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub journal: PathBuf,
    pub campaign: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

/// Loads the campaign, replays the journal and serves until Ctrl-C.
pub async fn serve(opts: ServeOptions) -> Result<(), ServiceError> {
    let campaign = CampaignFile::read(&opts.campaign)?.load()?;
    let journal = JsonlStore::open(&opts.journal)?;
    let state = Arc::new(AppState::new(campaign, journal));
    let p = progress(&state);
    tracing::info!(judged = p.judged, total = p.total, "journal replayed");
    let listener = tokio::net::TcpListener::bind(opts.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, opts.ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
