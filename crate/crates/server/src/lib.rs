//! HTTP/JSON service exposing a loaded checkpoint for chat and inspection.
//!
//! Routes:
//! - `POST /session` -> `{sessionId}`
//! - `GET /session/{id}` -> `{sessionId, seed, history}`
//! - `POST /session/{id}/utterance` `{text}` -> [`UtteranceResponse`]
//! - `GET /model` -> [`ModelInfo`]
//!
//! Every route answers 503 while no checkpoint is loaded. `attentionHeatMap`
//! is omitted for models without attention and `snapshotTrace` for models
//! trained without snapshot learning.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use snapdial::analysis::{heatmap_from, trace_from, DecodedTurn, HeatMap, NeuronTrace};
use snapdial::corpus::Lexicon;
use snapdial::decoding::{respond, BeamConfig, Conversation, LiveTurn};
use snapdial::model::{Model, World};
use snapdial::tracker::summarize_slot;
use snapdial::training::{Checkpoint, TrainConfig};

pub const DEFAULT_IDLE: Duration = Duration::from_secs(30 * 60);

/// A restored checkpoint, shared read-only by every request.
#[derive(Debug)]
pub struct Loaded {
    pub model: Model,
    pub world: World,
    pub lexicon: Lexicon,
    pub beam: BeamConfig,
}

impl Loaded {
    pub fn from_checkpoint(ckpt: &Checkpoint, beam: BeamConfig) -> snapdial::Result<Self> {
        let (model, world) = ckpt.restore()?;
        let lexicon = Lexicon::new(&world.ontology, &world.database);
        Ok(Loaded {
            model,
            world,
            lexicon,
            beam,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryTurn {
    pub role: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skeletal: Option<Vec<String>>,
}

#[derive(Debug)]
struct Session {
    seed: u64,
    conversation: Conversation,
    history: Vec<HistoryTurn>,
}

#[derive(Debug)]
struct Slot {
    session: Arc<tokio::sync::Mutex<Session>>,
    last_used: Instant,
}

/// Shared server state: the checkpoint (if any) and live sessions.
#[derive(Debug, Clone)]
pub struct AppState {
    loaded: Option<Arc<Loaded>>,
    sessions: Arc<Mutex<HashMap<String, Slot>>>,
    idle: Duration,
}

impl AppState {
    pub fn new(loaded: Option<Loaded>) -> Self {
        AppState {
            loaded: loaded.map(Arc::new),
            sessions: Arc::default(),
            idle: DEFAULT_IDLE,
        }
    }

    pub fn with_idle(mut self, idle: Duration) -> Self {
        self.idle = idle;
        self
    }

    /// The served checkpoint, if one is loaded.
    pub fn current(&self) -> Option<Arc<Loaded>> {
        self.loaded.clone()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    /// Drop sessions idle for longer than the configured limit. Returns how
    /// many were removed.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut map = self.sessions.lock().expect("session map");
        let before = map.len();
        map.retain(|_, s| now.saturating_duration_since(s.last_used) <= self.idle);
        before - map.len()
    }

    fn loaded(&self) -> Result<Arc<Loaded>, ApiError> {
        self.loaded
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no checkpoint loaded"))
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        let mut map = self.sessions.lock().expect("session map");
        let slot = map
            .get_mut(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
        slot.last_used = Instant::now();
        Ok(slot.session.clone())
    }
}

/// Error body: `{error, stage?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: msg.into(),
                stage: None,
            },
        }
    }

    fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                error: format!("{stage} failed: {err}"),
                stage: Some(stage.to_string()),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NewSession {
    /// Seed of the session's entity-pointer stream; defaults to the
    /// checkpoint's training seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub session_id: String,
    pub seed: u64,
    pub history: Vec<HistoryTurn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
}

/// Summary belief of one informable slot: mass on concrete values, on
/// dontcare and on not-mentioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BeliefRow {
    pub slot: String,
    pub top: String,
    pub value: f64,
    pub dontcare: f64,
    pub none: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRow {
    pub slot: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UtteranceResponse {
    pub surface: String,
    /// Generated tokens, end-of-sentence included; aligned with the rows of
    /// the heat map and trace.
    pub skeletal: Vec<String>,
    pub belief_summary: Vec<BeliefRow>,
    pub requested: Vec<RequestRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_heat_map: Option<HeatMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_trace: Option<NeuronTrace>,
    pub db_match_bin: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offered_entity: Option<String>,
    /// Delexicalised tokens that could not be filled in.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelInfo {
    pub config: TrainConfig,
    pub variant: String,
    pub attention: bool,
    pub snapshot: bool,
    pub vocab_size: usize,
    pub indicator_spec: Vec<String>,
    pub trackers: Vec<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/utterance", post(utterance))
        .route("/model", get(model_info))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<NewSession>>,
) -> Result<Json<SessionCreated>, ApiError> {
    let loaded = state.loaded()?;
    state.evict_idle(Instant::now());
    let seed = body.and_then(|b| b.0.seed).unwrap_or(loaded.model.config.seed);
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        seed,
        conversation: Conversation::new(&loaded.world, seed),
        history: Vec::new(),
    };
    state.sessions.lock().expect("session map").insert(
        id.clone(),
        Slot {
            session: Arc::new(tokio::sync::Mutex::new(session)),
            last_used: Instant::now(),
        },
    );
    Ok(Json(SessionCreated { session_id: id }))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    state.loaded()?;
    let session = state.session(&id)?;
    let s = session.lock().await;
    Ok(Json(SessionView {
        session_id: id,
        seed: s.seed,
        history: s.history.clone(),
    }))
}

async fn utterance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Utterance>,
) -> Result<Json<UtteranceResponse>, ApiError> {
    let loaded = state.loaded()?;
    let session = state.session(&id)?;
    let text = body.text.trim().to_string();
    if text.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "text must be non-empty"));
    }
    // Holding the session lock across the pipeline serialises requests
    // within one session.
    let mut s = session.lock().await;
    let conversation = s.conversation.clone();
    let (conversation, reply) = tokio::task::spawn_blocking(move || {
        let mut conv = conversation;
        let reply = run_turn(&loaded, &mut conv, &text);
        (conv, reply)
    })
    .await
    .map_err(|e| ApiError::stage("pipeline", e))?;
    let reply = reply?;
    s.conversation = conversation;
    s.history.push(HistoryTurn {
        role: "user".into(),
        text: body.text,
        skeletal: None,
    });
    s.history.push(HistoryTurn {
        role: "system".into(),
        text: reply.surface.clone(),
        skeletal: Some(reply.skeletal.clone()),
    });
    Ok(Json(reply))
}

/// The turn pipeline plus inspection payloads for one utterance.
fn run_turn(loaded: &Loaded, conv: &mut Conversation, text: &str) -> Result<UtteranceResponse, ApiError> {
    let model = &loaded.model;
    let LiveTurn { input, response, .. } = respond(model, &loaded.world, &loaded.lexicon, conv, text, &loaded.beam)
        .map_err(|e| ApiError::stage("decode", e))?;
    let tokens = response.candidates[0].tokens.clone();
    let context = model.context(&input).map_err(|e| ApiError::stage("analysis", e))?;
    let steps = model.replay(&context, &tokens);
    let decoded = DecodedTurn { context, tokens, steps };
    let attention_heat_map = if model.config.attention {
        Some(heatmap_from(model, &decoded).map_err(|e| ApiError::stage("analysis", e))?)
    } else {
        None
    };
    let snapshot_trace = if model.config.snapshot {
        Some(trace_from(model, &decoded).map_err(|e| ApiError::stage("analysis", e))?)
    } else {
        None
    };
    let ontology = &loaded.world.ontology;
    let tops = input.belief.top_labels(ontology);
    let belief_summary = input
        .belief
        .informable
        .iter()
        .zip(ontology.informable_slots())
        .zip(tops)
        .map(|((p, slot), top)| {
            let [value, dontcare, none] = summarize_slot(p);
            BeliefRow {
                slot: slot.to_string(),
                top: String::from(top),
                value,
                dontcare,
                none,
            }
        })
        .collect();
    let requested = ontology
        .requestable
        .iter()
        .zip(&input.belief.requestable)
        .map(|(slot, &probability)| RequestRow {
            slot: slot.clone(),
            probability,
        })
        .collect();
    Ok(UtteranceResponse {
        surface: response.surface,
        skeletal: response.skeletal,
        belief_summary,
        requested,
        attention_heat_map,
        snapshot_trace,
        db_match_bin: input.bin,
        offered_entity: response.offered_entity,
        missing: response.missing,
    })
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelInfo>, ApiError> {
    let loaded = state.loaded()?;
    let m = &loaded.model;
    Ok(Json(ModelInfo {
        config: m.config.clone(),
        variant: m.config.variant.to_string(),
        attention: m.config.attention,
        snapshot: m.config.snapshot,
        vocab_size: m.vocab.len(),
        indicator_spec: m.spec.0.clone(),
        trackers: m.tracker_names.clone(),
    }))
}

/// Bind and serve until the process is stopped, sweeping idle sessions
/// once a minute.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.evict_idle(Instant::now());
            if n > 0 {
                tracing::info!(evicted = n, "idle sessions removed");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
