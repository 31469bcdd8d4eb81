//! HTTP session API under `/api/v1`.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use atelier_core::embedding::Vocab;
use atelier_core::engine::session::{Artist, LogEvent, Session};
use atelier_core::engine::{Decision, EngineError, FeedbackEvent, Judgement, LoopConfig, LoopSettings, Stage};
use atelier_core::labanstr::{serialize_score, Score};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::store::{LogStore, Recovery, StoreError};

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "engine", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body<'a> {
            code: &'a str,
            message: String,
        }
        (self.status, Json(Body { code: self.code, message: self.message })).into_response()
    }
}

/// Read-side view of a session, replaced after every appended event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub stage: Option<Stage>,
    pub iteration: usize,
    pub awaiting_feedback: bool,
    pub accepted: bool,
    pub latest_score: Option<String>,
    pub ratings: Vec<f64>,
    pub best_ratings: Vec<f64>,
    pub last_seq: u64,
    pub vocab: Vec<String>,
}

struct Mailbox<'a>(&'a mut VecDeque<FeedbackEvent>);

impl Artist for Mailbox<'_> {
    fn feedback(&mut self, iteration: usize, _score: &Score) -> Result<Option<FeedbackEvent>, EngineError> {
        match self.0.pop_front() {
            Some(fb) if fb.iteration == iteration => Ok(Some(fb)),
            Some(fb) => Err(EngineError::Feedback(format!("mailbox holds iteration {}, expected {iteration}", fb.iteration))),
            None => Ok(None),
        }
    }
}

/// A live session: in-memory state, its durable log and the feedback mailbox.
#[derive(Debug)]
pub struct SessionHandle {
    pub id: String,
    pub session: Session,
    pub store: LogStore,
    pub mailbox: VecDeque<FeedbackEvent>,
    pub max_iterations: usize,
}

impl SessionHandle {
    /// Starts a new log at `path` holding only `session_created`.
    pub fn create(id: String, path: &Path, session: Session, fsync: bool) -> Result<Self, StoreError> {
        let mut store = LogStore::create(path, fsync)?;
        for e in &session.log {
            store.append(e)?;
        }
        Ok(SessionHandle { id, session, store, mailbox: VecDeque::new(), max_iterations: DEFAULT_MAX_ITERATIONS })
    }

    pub fn open(id: String, path: &Path, fsync: bool) -> Result<(Self, Recovery), ApiError> {
        let (store, events, recovery) = LogStore::open(path, fsync)?;
        let session = Session::from_log(events)?;
        Ok((SessionHandle { id, session, store, mailbox: VecDeque::new(), max_iterations: DEFAULT_MAX_ITERATIONS }, recovery))
    }

    pub fn awaiting_feedback(&self) -> bool {
        let s = &self.session.state;
        s.stage == Some(Stage::ArtistEval) && !s.stage_done && !s.accepted
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = &self.session.state;
        Snapshot {
            id: self.id.clone(),
            stage: s.stage,
            iteration: s.iteration,
            awaiting_feedback: self.awaiting_feedback(),
            accepted: s.accepted,
            latest_score: s.latest_score().map(serialize_score),
            ratings: s.ratings.clone(),
            best_ratings: s.best_ratings.clone(),
            last_seq: s.last_seq,
            vocab: s.vocab.entries().iter().map(|e| e.text.clone()).collect(),
        }
    }

    /// Steps until the session pauses or finishes. Each event is on disk
    /// before `publish` sees it.
    pub fn drive(&mut self, mut publish: impl FnMut(&LogEvent, &SessionHandle)) -> Result<(), ApiError> {
        loop {
            let stepped = {
                let SessionHandle { session, mailbox, max_iterations, .. } = self;
                session.step(&mut Mailbox(mailbox), *max_iterations).map(|e| e.cloned())
            };
            let event = match stepped {
                Ok(Some(e)) => e,
                Ok(None) => return Ok(()),
                Err(e) => return Err(e.into()),
            };
            if let Err(e) = self.store.append(&event) {
                self.resync()?;
                return Err(e.into());
            }
            publish(&event, self);
        }
    }

    /// Rebuilds memory from disk after a failed write.
    fn resync(&mut self) -> Result<(), ApiError> {
        let (store, events, _) = LogStore::open(self.store.path(), false)?;
        self.session = Session::from_log(events)?;
        self.store = store;
        self.mailbox.clear();
        Ok(())
    }
}

struct View {
    snapshot: Snapshot,
    log: Vec<LogEvent>,
}

struct Slot {
    handle: Mutex<SessionHandle>,
    view: RwLock<View>,
}

impl Slot {
    fn new(handle: SessionHandle) -> Arc<Self> {
        let view = View { snapshot: handle.snapshot(), log: handle.session.log.clone() };
        Arc::new(Slot { handle: Mutex::new(handle), view: RwLock::new(view) })
    }

    fn publish(&self, event: &LogEvent, handle: &SessionHandle) {
        let mut view = self.view.write().expect("view lock");
        view.log.push(event.clone());
        view.snapshot = handle.snapshot();
    }

    fn drive(&self, handle: &mut SessionHandle) -> Result<(), ApiError> {
        let out = handle.drive(|e, h| self.publish(e, h));
        if out.is_err() {
            let mut view = self.view.write().expect("view lock");
            *view = View { snapshot: handle.snapshot(), log: handle.session.log.clone() };
        }
        out
    }
}

/// Shared server state: the data directory and every session it holds.
#[derive(Clone)]
pub struct AppState {
    data: PathBuf,
    fsync: bool,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
}

impl AppState {
    pub fn new(data: &Path, fsync: bool) -> Self {
        AppState { data: data.to_owned(), fsync, sessions: Arc::default() }
    }

    /// Opens every `*.jsonl` log in the data directory, repairing torn
    /// tails. Returns each session id with what its recovery did.
    pub fn load_existing(&self) -> Result<Vec<(String, Recovery)>, ApiError> {
        let mut found = Vec::new();
        let entries = std::fs::read_dir(&self.data)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", format!("{}: {e}", self.data.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(String::from) else { continue };
            let (handle, recovery) = SessionHandle::open(id.clone(), &path, self.fsync)?;
            self.sessions.write().expect("sessions lock").insert(id.clone(), Slot::new(handle));
            found.push((id, recovery));
        }
        Ok(found)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions.read().expect("sessions lock").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/feedback", post(post_feedback))
        .route("/api/v1/sessions/{id}/events", get(get_events))
        .route("/api/v1/sessions/{id}/artifact/latest", get(get_artifact))
        .with_state(state)
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| bad_request(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    /// `key = value` config text; defaults when absent.
    #[serde(default)]
    config: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = json_body(body)?;
    let config = match &req.config {
        Some(text) => LoopConfig::parse(text),
        None => LoopConfig::new(LoopSettings::default()),
    }
    .map_err(|e| bad_request(e.to_string()))?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let path = app.data.join(format!("{id}.jsonl"));
    let session = Session::create(config, Vocab::standard(), req.seed);
    let mut handle = SessionHandle::create(id.clone(), &path, session, app.fsync)?;
    if let Some(max) = req.max_iterations {
        handle.max_iterations = max;
    }
    let slot = Slot::new(handle);
    app.sessions.write().expect("sessions lock").insert(id.clone(), slot.clone());
    blocking(move || {
        let mut handle = slot.handle.lock().expect("session lock");
        slot.drive(&mut handle)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Snapshot>, ApiError> {
    let slot = app.slot(&id)?;
    let snapshot = slot.view.read().expect("view lock").snapshot.clone();
    Ok(Json(snapshot))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    /// When given, must name the iteration being rated.
    #[serde(default)]
    iteration: Option<usize>,
    rating: f64,
    #[serde(default)]
    judgement: Judgement,
    #[serde(default)]
    decision: Decision,
}

async fn post_feedback(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<Snapshot>, ApiError> {
    let req = json_body(body)?;
    let slot = app.slot(&id)?;
    blocking(move || {
        let mut handle = slot.handle.lock().expect("session lock");
        if !handle.awaiting_feedback() || !handle.mailbox.is_empty() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "not_awaiting_feedback",
                format!("session {} is not waiting for feedback", handle.id),
            ));
        }
        let iteration = handle.session.state.iteration + 1;
        if req.iteration.is_some_and(|i| i != iteration) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale_iteration",
                format!("feedback names iteration {}, session is at {iteration}", req.iteration.unwrap_or(0)),
            ));
        }
        let fb = FeedbackEvent {
            iteration,
            rating: req.rating,
            judgement: req.judgement,
            decision: req.decision,
        };
        fb.validate(&handle.session.state.vocab)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback", e.to_string()))?;
        handle.mailbox.push_back(fb);
        slot.drive(&mut handle)?;
        Ok(handle.snapshot())
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn get_events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<Since>, QueryRejection>,
) -> Result<Json<Vec<LogEvent>>, ApiError> {
    let Query(Since { since }) = query.map_err(|e| bad_request(e.body_text()))?;
    let slot = app.slot(&id)?;
    let view = slot.view.read().expect("view lock");
    Ok(Json(view.log.iter().filter(|e| e.seq > since).cloned().collect()))
}

async fn get_artifact(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let latest = slot.view.read().expect("view lock").snapshot.latest_score.clone();
    let text = latest.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_artifact", format!("session {id} has no score yet")))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}
