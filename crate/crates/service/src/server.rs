//! JSON HTTP API over [`Tutor`].
//!
//! | method | path                          | success |
//! |--------|-------------------------------|---------|
//! | GET    | `/exercises`                  | 200     |
//! | POST   | `/sessions`                   | 201     |
//! | GET    | `/sessions/{id}`              | 200     |
//! | POST   | `/sessions/{id}/messages`     | 200     |
//! | GET    | `/reports/learning-gain`      | 200     |
//!
//! Errors are `{"error": "..."}` with 404 (unknown id), 409 (session
//! finished) or 422 (malformed body or empty message).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use qfeedback::eval::{learning_gain_report, learning_gain_reports, LearningGainReport};
use qfeedback::{Error, FeedbackModel, Phase};

use crate::tutor::{ExerciseSummary, MessageReply, SessionResource, Tutor};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::State(m) => ApiError::Conflict(m),
            Error::EmptyInput(_) | Error::Validation(_) => ApiError::Invalid(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Invalid(r.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(m) => {
                tracing::error!(error = %m, "request failed");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Shared = Arc<Mutex<SessionResource>>;

/// Live sessions, each behind its own lock, optionally mirrored to one JSON
/// file per session.
pub struct SessionRegistry {
    sessions: RwLock<HashMap<String, Shared>>,
    dir: Option<PathBuf>,
}

impl SessionRegistry {
    pub fn in_memory() -> Self {
        SessionRegistry { sessions: RwLock::new(HashMap::new()), dir: None }
    }

    /// Restores snapshots found in `dir` and persists future changes there.
    pub fn persistent(dir: &Path) -> qfeedback::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let s: SessionResource = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(SessionRegistry { sessions: RwLock::new(sessions), dir: Some(dir.to_path_buf()) })
    }

    async fn get(&self, id: &str) -> Option<Shared> {
        self.sessions.read().await.get(id).cloned()
    }

    fn persist(&self, session: &SessionResource) -> Result<(), ApiError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", session.session_id));
        let tmp = dir.join(format!(".{}.json.tmp", session.session_id));
        let body = serde_json::to_vec_pretty(session).map_err(|e| ApiError::Internal(e.to_string()))?;
        std::fs::write(&tmp, body)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| ApiError::Internal(format!("persist session: {e}")))
    }
}

#[derive(Clone)]
pub struct AppState {
    pub tutor: Arc<Tutor>,
    pub sessions: Arc<SessionRegistry>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/exercises", get(list_exercises))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/reports/learning-gain", get(learning_gain))
        .with_state(state)
}

async fn list_exercises(State(app): State<AppState>) -> Json<Vec<ExerciseSummary>> {
    Json(app.tutor.exercises().iter().map(ExerciseSummary::from).collect())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub exercise_id: String,
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionResource>), ApiError> {
    let Json(body) = body?;
    if app.tutor.exercise(&body.exercise_id).is_none() {
        return Err(ApiError::NotFound(format!("unknown exercise {}", body.exercise_id)));
    }
    let id = uuid::Uuid::new_v4().to_string();
    let session = app.tutor.start(&body.exercise_id, id.clone())?;
    app.sessions.persist(&session)?;
    app.sessions.sessions.write().await.insert(id, Arc::new(Mutex::new(session.clone())));
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionResource>, ApiError> {
    let shared = app.sessions.get(&id).await.ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))?;
    let snapshot = shared.lock().await.clone();
    Ok(Json(snapshot))
}

/// Exactly one of `text` or `mcq_choice`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentMessage {
    pub text: Option<String>,
    pub mcq_choice: Option<String>,
}

async fn post_message(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<StudentMessage>, JsonRejection>,
) -> Result<Json<MessageReply>, ApiError> {
    let shared = app.sessions.get(&id).await.ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))?;
    let Json(body) = body?;
    let input = match (body.text, body.mcq_choice) {
        (Some(t), None) | (None, Some(t)) => t,
        _ => return Err(ApiError::Invalid("send exactly one of text or mcq_choice".into())),
    };
    let mut guard = shared.lock().await;
    if guard.state.phase == Phase::Done {
        return Err(ApiError::Conflict(format!("session {id} is finished")));
    }
    // Backends may block on network calls; keep them off the async workers.
    let tutor = app.tutor.clone();
    let mut working = guard.clone();
    let (working, reply) = tokio::task::spawn_blocking(move || {
        let reply = tutor.respond(&mut working, &input);
        (working, reply)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    let reply = reply?;
    app.sessions.persist(&working)?;
    *guard = working;
    Ok(Json(reply))
}

#[derive(Debug, Deserialize)]
pub struct GainQuery {
    pub model: Option<String>,
}

async fn learning_gain(
    State(app): State<AppState>,
    Query(q): Query<GainQuery>,
) -> Result<Json<Vec<LearningGainReport>>, ApiError> {
    let records = app.tutor.store().records()?;
    match q.model {
        None => Ok(Json(learning_gain_reports(&records))),
        Some(m) => {
            let label: FeedbackModel = m.parse()?;
            match learning_gain_report(&records, label) {
                Ok(r) => Ok(Json(vec![r])),
                Err(Error::EmptyInput(_)) => Ok(Json(Vec::new())),
                Err(e) => Err(e.into()),
            }
        }
    }
}

pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
