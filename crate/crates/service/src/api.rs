//! HTTP handlers and payloads.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use tidyup_core::{Error, ErrorKind, NamedArrangement};

use crate::session::{Engine, Probe, Session, SessionSettings, SessionSnapshot};
use crate::AppState;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(alias = "C")]
    pub containers: usize,
    #[serde(alias = "P")]
    pub probes: usize,
    pub seed: u64,
    /// Objects to arrange; defaults to the server's object list.
    #[serde(default)]
    pub objects: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub first_probe: Option<Probe>,
    pub arrangement: NamedArrangement,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerBody {
    pub pair: [String; 2],
    pub rating: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AnswerResponse {
    pub next_probe: Option<Probe>,
    pub arrangement: NamedArrangement,
    pub answered: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MoveBody {
    pub object: String,
    pub to_container: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct MoveResponse {
    pub arrangement: NamedArrangement,
    pub changed_probes: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no model is loaded")
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }

    /// Errors in a request body that parsed but cannot be honoured.
    fn invalid(err: Error, status: StatusCode) -> Self {
        match err.kind() {
            ErrorKind::Numerical | ErrorKind::Io => Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string()),
            ErrorKind::Validation | ErrorKind::Abstention => Self::new(status, err.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, rejection.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn engine(state: &AppState) -> ApiResult<Arc<Engine>> {
    state.engine().ok_or_else(ApiError::unavailable)
}

/// Run `work` on the session off the async runtime.
async fn with_session<T, F>(state: &AppState, id: &str, work: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine, &mut Session) -> ApiResult<T> + Send + 'static,
{
    let engine = engine(state)?;
    let session = state.session(id).ok_or_else(|| ApiError::unknown_session(id))?;
    tokio::task::spawn_blocking(move || {
        let mut guard = session.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        work(&engine, &mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let engine = engine(&state)?;
    let Json(body) = body?;
    let id = state.next_id();
    let settings = SessionSettings {
        containers: body.containers,
        probes: body.probes,
        seed: body.seed,
        objects: body.objects.unwrap_or_else(|| engine.objects.clone()),
    };
    let session = tokio::task::spawn_blocking(move || {
        Session::new(&engine, id, settings).and_then(|s| Ok((s.next_probe(&engine)?, s)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::invalid(e, StatusCode::BAD_REQUEST))?;
    let (first_probe, session) = session;
    let created =
        SessionCreated { session_id: session.id.clone(), first_probe, arrangement: session.arrangement().clone() };
    state.insert(session);
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn answer(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> ApiResult<Json<AnswerResponse>> {
    engine(&state)?;
    state.session(&id).ok_or_else(|| ApiError::unknown_session(&id))?;
    let Json(body) = body?;
    let response = with_session(&state, &id, move |engine, session| {
        let [a, b] = &body.pair;
        session
            .answer(engine, a, b, body.rating)
            .and_then(|()| {
                Ok(AnswerResponse {
                    next_probe: session.next_probe(engine)?,
                    arrangement: session.arrangement().clone(),
                    answered: session.probes().len(),
                })
            })
            .map_err(|e| ApiError::invalid(e, StatusCode::UNPROCESSABLE_ENTITY))
    })
    .await?;
    Ok(Json(response))
}

pub async fn move_object(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MoveBody>, JsonRejection>,
) -> ApiResult<Json<MoveResponse>> {
    engine(&state)?;
    state.session(&id).ok_or_else(|| ApiError::unknown_session(&id))?;
    let Json(body) = body?;
    let response = with_session(&state, &id, move |engine, session| {
        session
            .move_object(engine, &body.object, body.to_container)
            .map(|changed_probes| MoveResponse { arrangement: session.arrangement().clone(), changed_probes })
            .map_err(|e| ApiError::invalid(e, StatusCode::UNPROCESSABLE_ENTITY))
    })
    .await?;
    Ok(Json(response))
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSnapshot>> {
    let snapshot = with_session(&state, &id, |engine, session| {
        session.snapshot(engine).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    })
    .await?;
    Ok(Json(snapshot))
}
