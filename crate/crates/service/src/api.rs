use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex as StdMutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coverdx::{
    Finding, ObservationState, ScoredHypothesis, SessionConfig, SessionState, SessionStatus, SessionSummary,
    StoppingReason, TranscriptEntry, Violation,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Mutex;
use uuid::Uuid;

use crate::config::ServiceConfig;
use crate::journal::{self, Journal, Record};
use crate::store::{valid_kb_name, KbStore};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub symptom: String,
    pub question: String,
    pub cost: f64,
}

/// The JSON body returned for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: Uuid,
    pub kb: String,
    pub status: SessionStatus,
    pub stopping_reason: StoppingReason,
    pub observations: ObservationState,
    pub candidates: Vec<ScoredHypothesis>,
    pub next_question: Option<QuestionView>,
    pub transcript: Vec<TranscriptEntry>,
}

impl SessionView {
    pub fn new(id: Uuid, kb: &str, state: &SessionState) -> Self {
        Self {
            id,
            kb: kb.to_owned(),
            status: state.status(),
            stopping_reason: state.stopping_reason(),
            observations: state.observations().clone(),
            candidates: state.candidates().to_vec(),
            next_question: state.next_question().map(|s| {
                let node = state.kb().symptom_by_id(s).expect("next question is a KB symptom");
                QuestionView {
                    symptom: node.id.clone(),
                    question: node.prompt(),
                    cost: node.cost,
                }
            }),
            transcript: state.transcript().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub id: Uuid,
    pub kb: String,
    #[serde(flatten)]
    pub summary: SessionSummary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub kb: String,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub symptom: String,
    pub finding: Finding,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    violations: &'a [Violation],
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    violations: Vec<Violation>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn not_found(what: &str, id: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} {id} not found"))
    }
}

impl From<coverdx::Error> for ApiError {
    fn from(e: coverdx::Error) -> Self {
        use coverdx::Error as E;
        let status = match &e {
            E::AlreadyObserved(_) | E::NotInProgress(_) => StatusCode::CONFLICT,
            E::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let violations = match &e {
            E::Invalid(v) => v.clone(),
            _ => Vec::new(),
        };
        Self {
            status,
            message: e.to_string(),
            violations,
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        tracing::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            violations: &self.violations,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug)]
struct Slot {
    kb_name: String,
    state: SessionState,
    journal: Journal,
}

/// Shared state behind the router.
#[derive(Debug)]
pub struct Service {
    config: ServiceConfig,
    kbs: KbStore,
    sessions: StdMutex<HashMap<Uuid, Arc<Mutex<Slot>>>>,
    open: AtomicUsize,
}

impl Service {
    /// Loads the KB directory and replays every stored session log.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let kbs = KbStore::open(&config.kb_dir)?;
        let mut sessions = HashMap::new();
        let mut open = 0;
        for path in journal::logs_in(&config.store)? {
            let r = journal::recover(&path)?;
            if r.state.status() == SessionStatus::InProgress {
                open += 1;
            }
            let slot = Slot {
                kb_name: r.kb_name,
                state: r.state,
                journal: r.journal,
            };
            sessions.insert(r.id, Arc::new(Mutex::new(slot)));
        }
        tracing::info!(kbs = ?kbs.names(), sessions = sessions.len(), "service state loaded");
        Ok(Self {
            config,
            kbs,
            sessions: StdMutex::new(sessions),
            open: AtomicUsize::new(open),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    /// Current view of one session, if it exists.
    pub async fn view(&self, id: Uuid) -> Option<SessionView> {
        let slot = self.slot(id).ok()?;
        let slot = slot.lock().await;
        Some(SessionView::new(id, &slot.kb_name, &slot.state))
    }

    fn slot(&self, id: Uuid) -> ApiResult<Arc<Mutex<Slot>>> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn reserve(&self) -> ApiResult<()> {
        let max = self.config.max_sessions;
        self.open
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < max).then_some(n + 1))
            .map(|_| ())
            .map_err(|_| {
                ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    format!("too many sessions in progress (limit {max})"),
                )
            })
    }

    fn release(&self) {
        self.open.fetch_sub(1, Ordering::SeqCst);
    }

    async fn create(&self, req: CreateSession) -> ApiResult<SessionView> {
        let kb = self
            .kbs
            .get(&req.kb)
            .ok_or_else(|| ApiError::not_found("knowledge base", &req.kb))?;
        let config = req.config.unwrap_or_default();
        let state = coverdx::start_session(kb.clone(), config.clone())?;
        let in_progress = state.status() == SessionStatus::InProgress;
        if in_progress {
            self.reserve()?;
        }
        let id = Uuid::new_v4();
        let journal = match Journal::create(&self.config.store, id, &req.kb, &kb, &config) {
            Ok(j) => j,
            Err(e) => {
                if in_progress {
                    self.release();
                }
                return Err(e.into());
            }
        };
        let view = SessionView::new(id, &req.kb, &state);
        let slot = Slot {
            kb_name: req.kb,
            state,
            journal,
        };
        self.sessions
            .lock()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(slot)));
        Ok(view)
    }

    async fn answer(&self, id: Uuid, answer: Answer) -> ApiResult<SessionView> {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().await;
        let next = coverdx::submit_answer(&slot.state, &answer.symptom, answer.finding)?;
        slot.journal.append(&Record::Answer {
            symptom: answer.symptom,
            finding: answer.finding,
        })?;
        if next.status() != SessionStatus::InProgress {
            self.release();
        }
        slot.state = next;
        Ok(SessionView::new(id, &slot.kb_name, &slot.state))
    }

    async fn what_if(&self, id: Uuid, answer: Answer) -> ApiResult<SessionView> {
        let slot = self.slot(id)?;
        let slot = slot.lock().await;
        let preview = coverdx::what_if(&slot.state, &answer.symptom, answer.finding)?;
        Ok(SessionView::new(id, &slot.kb_name, &preview))
    }

    async fn summary(&self, id: Uuid) -> ApiResult<SummaryView> {
        let slot = self.slot(id)?;
        let slot = slot.lock().await;
        Ok(SummaryView {
            id,
            kb: slot.kb_name.clone(),
            summary: slot.state.summary(),
        })
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/kb/{name}", get(get_kb).put(put_kb))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/whatif", post(post_what_if))
        .route("/sessions/{id}/summary", get(get_summary))
        .with_state(service)
}

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::not_found("session", raw))
}

async fn get_kb(State(svc): State<Arc<Service>>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let kb = svc.kbs.get(&name).ok_or_else(|| ApiError::not_found("knowledge base", &name))?;
    Ok(Json(serde_json::to_value(kb.to_document()).expect("KB documents always serialize")))
}

async fn put_kb(
    State(svc): State<Arc<Service>>,
    Path(name): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    if !valid_kb_name(&name) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("invalid knowledge base name {name:?}")));
    }
    let Json(doc) = body?;
    let warnings = svc.kbs.put(&name, doc)?;
    Ok(Json(serde_json::json!({ "name": name, "warnings": warnings })))
}

async fn create_session(
    State(svc): State<Arc<Service>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let view = svc.create(req).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let id = parse_id(&id)?;
    svc.view(id)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::not_found("session", id))
}

async fn post_answer(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<Answer>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let id = parse_id(&id)?;
    let Json(answer) = body?;
    svc.answer(id, answer).await.map(Json)
}

async fn post_what_if(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<Answer>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let id = parse_id(&id)?;
    let Json(answer) = body?;
    svc.what_if(id, answer).await.map(Json)
}

async fn get_summary(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<SummaryView>> {
    let id = parse_id(&id)?;
    svc.summary(id).await.map(Json)
}
