//! Local HTTP service around one shared engine.
//!
//! Converts read the current snapshot and never wait for a select; selects
//! are serialized through the engine mutex and run on the blocking pool, so
//! an online-training flush only delays other selects.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Json, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use oime_core::engine::{Conversion, Engine, Input, Snapshot};
use oime_core::model::{DecodeOptions, ModelConfig};
use oime_core::pinyin::parse_syllables;
use oime_core::{Error as CoreError, Real};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Candidates per displayed page.
pub const PAGE_SIZE: usize = 5;

#[derive(Debug)]
struct Session {
    #[allow(dead_code)]
    created_at: u64,
    turn_counter: u64,
    /// The latest conversion, awaiting selection.
    pending: Option<(u64, Conversion)>,
}

/// Shared service state.
pub struct AppState {
    engine: Mutex<Engine>,
    snapshot: RwLock<Arc<Snapshot>>,
    stats: RwLock<Stats>,
    decode: DecodeOptions,
    sessions: Mutex<HashMap<String, Session>>,
}

impl AppState {
    pub fn new(engine: Engine) -> Arc<Self> {
        Arc::new(AppState {
            snapshot: RwLock::new(engine.snapshot()),
            stats: RwLock::new(Stats::of(&engine)),
            decode: *engine.decode_options(),
            engine: Mutex::new(engine),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    /// Runs `f` with the engine locked (e.g. to save it).
    pub fn with_engine<T>(&self, f: impl FnOnce(&Engine) -> T) -> T {
        f(&self.engine.lock().expect("engine lock poisoned"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Stats {
    pub vocab_size: usize,
    pub model_config: ModelConfig,
    pub turns: u64,
    pub last_flush_turn: Option<u64>,
}

impl Stats {
    fn of(e: &Engine) -> Self {
        Stats { vocab_size: e.vocab().len(), model_config: *e.model().config(), turns: e.turns(), last_flush_turn: e.last_flush_turn() }
    }
}

/// Error body: `{error_code, message, offset?}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    #[serde(skip)]
    status: u16,
    pub error_code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), error_code: code.to_string(), message: message.into(), offset: None }
    }

    fn unknown_session() -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", "no such session")
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        let mut out = match &e {
            CoreError::Unsegmentable { .. } => Self::new(unprocessable, "unsegmentable_pinyin", e.to_string()),
            CoreError::InvalidSyllable(_) => Self::new(unprocessable, "invalid_syllable", e.to_string()),
            CoreError::LengthMismatch(_) => Self::new(unprocessable, "length_mismatch", e.to_string()),
            CoreError::Empty(_) => Self::new(unprocessable, "empty_input", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        };
        if let CoreError::Unsegmentable { offset, .. } = e {
            out.offset = Some(offset);
        }
        out
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConvertRequest {
    pub session_id: String,
    pub pinyin: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateBody {
    pub text: String,
    pub score: Real,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConvertResponse {
    pub turn_id: u64,
    pub candidates: Vec<CandidateBody>,
    pub page_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectRequest {
    pub session_id: String,
    pub turn_id: u64,
    pub chosen_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectResponse {
    pub added_words: Vec<String>,
    pub vocab_size: usize,
    pub flush_performed: bool,
}

/// Letters, or syllables separated by apostrophes or spaces.
pub fn parse_input(pinyin: &str) -> Result<Input, CoreError> {
    let p = pinyin.trim();
    if p.is_empty() {
        return Err(CoreError::Empty("pinyin"));
    }
    if p.contains(['\'', ' ']) {
        Ok(Input::Syllables(parse_syllables(p)?))
    } else {
        Ok(Input::Letters(p.to_string()))
    }
}

async fn create_session(State(st): State<Arc<AppState>>) -> Json<SessionResponse> {
    let id = Uuid::new_v4().to_string();
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    st.sessions.lock().expect("sessions lock poisoned").insert(id.clone(), Session { created_at, turn_counter: 0, pending: None });
    Json(SessionResponse { session_id: id })
}

async fn convert(State(st): State<Arc<AppState>>, Json(req): Json<ConvertRequest>) -> Result<Json<ConvertResponse>, ApiError> {
    if !st.sessions.lock().expect("sessions lock poisoned").contains_key(&req.session_id) {
        return Err(ApiError::unknown_session());
    }
    let input = parse_input(&req.pinyin)?;
    let snap = Arc::clone(&st.snapshot.read().expect("snapshot lock poisoned"));
    let decode = st.decode;
    let conv = tokio::task::spawn_blocking(move || snap.convert(&input, &decode))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let candidates = conv.shown.iter().map(|c| CandidateBody { text: c.text.clone(), score: c.score }).collect();
    let mut sessions = st.sessions.lock().expect("sessions lock poisoned");
    let s = sessions.get_mut(&req.session_id).ok_or_else(ApiError::unknown_session)?;
    s.turn_counter += 1;
    s.pending = Some((s.turn_counter, conv));
    Ok(Json(ConvertResponse { turn_id: s.turn_counter, candidates, page_size: PAGE_SIZE }))
}

async fn select(State(st): State<Arc<AppState>>, Json(req): Json<SelectRequest>) -> Result<Json<SelectResponse>, ApiError> {
    let conv = {
        let mut sessions = st.sessions.lock().expect("sessions lock poisoned");
        let s = sessions.get_mut(&req.session_id).ok_or_else(ApiError::unknown_session)?;
        match &s.pending {
            Some((id, conv)) if *id == req.turn_id => conv.clone(),
            _ => return Err(ApiError::new(StatusCode::CONFLICT, "stale_turn", format!("turn {} is not awaiting a selection", req.turn_id))),
        }
    };
    let shared = Arc::clone(&st);
    let chosen = req.chosen_text.clone();
    let turn = tokio::task::spawn_blocking(move || {
        let mut engine = shared.engine.lock().expect("engine lock poisoned");
        let turn = engine.submit_choice(&conv, &chosen)?;
        *shared.snapshot.write().expect("snapshot lock poisoned") = engine.snapshot();
        *shared.stats.write().expect("stats lock poisoned") = Stats::of(&engine);
        Ok::<_, CoreError>(turn)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    if let Some(s) = st.sessions.lock().expect("sessions lock poisoned").get_mut(&req.session_id) {
        if s.pending.as_ref().is_some_and(|(id, _)| *id == req.turn_id) {
            s.pending = None;
        }
    }
    for e in &turn.update.added {
        log::info!("learned {} ({})", e.hanzi, oime_core::pinyin::join_syllables(&e.pinyin));
    }
    Ok(Json(SelectResponse {
        added_words: turn.update.added.iter().map(|e| e.hanzi.clone()).collect(),
        vocab_size: turn.vocab_size,
        flush_performed: turn.flushed,
    }))
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<Stats> {
    Json(st.stats.read().expect("stats lock poisoned").clone())
}

/// The API routes, plus the static UI under `/` when `ui_dir` is given.
pub fn router(state: Arc<AppState>, ui_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/convert", post(convert))
        .route("/api/select", post(select))
        .route("/api/stats", get(stats))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, host: &str, port: u16, ui_dir: Option<&std::path::Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
