//! Real-time correction API over an immutable (checkpoint, index) snapshot.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use typofix::alphabet::Alphabet;
use typofix::index::{EmbeddingIndex, EXACT_THRESHOLD};
use typofix::model::{Checkpoint, ModelParams};

use crate::config::ServiceConfig;

pub const DIGEST_HEADER: &str = "x-index-digest";

/// Everything one request needs, swapped as a unit.
pub struct Snapshot {
    pub params: ModelParams,
    pub index: EmbeddingIndex,
    pub alphabet: Alphabet,
    pub checkpoint_digest: String,
    pub index_digest: String,
}

impl Snapshot {
    pub fn from_parts(
        checkpoint: Checkpoint,
        checkpoint_digest: String,
        index: EmbeddingIndex,
    ) -> typofix::Result<Self> {
        if index.checkpoint_digest() != checkpoint_digest {
            return Err(typofix::Error::StaleIndex {
                index_digest: index.checkpoint_digest().to_string(),
                checkpoint_digest,
            });
        }
        let index_digest = index.digest()?;
        Ok(Self {
            params: checkpoint.params,
            index,
            alphabet: Alphabet::default(),
            checkpoint_digest,
            index_digest,
        })
    }

    /// Reads both files and checks that the index belongs to the checkpoint.
    pub fn load(checkpoint: &Path, index: &Path) -> typofix::Result<Self> {
        let (ckpt, digest) = Checkpoint::read(checkpoint)?;
        let bytes = std::fs::read(index)?;
        let index = EmbeddingIndex::load(&bytes, &digest)?;
        Self::from_parts(ckpt, digest, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchBody {
    pub name: String,
    pub class: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub query: String,
    pub canonical: String,
    pub exact: bool,
    pub matches: Vec<MatchBody>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub index_digest: String,
    pub catalog_size: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub swapped: bool,
    pub index_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub latency_ms: f64,
}

#[derive(Debug, Default, Deserialize)]
pub struct ReloadRequest {
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    pub config: ServiceConfig,
}

impl AppState {
    pub fn new(snapshot: Snapshot, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            config,
        })
    }

    /// The snapshot current at the time of the call; later swaps do not
    /// affect it.
    pub fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Replaces the snapshot and returns the previous one.
    pub fn swap(&self, next: Snapshot) -> Arc<Snapshot> {
        let mut guard = self.snapshot.write().expect("snapshot lock");
        std::mem::replace(&mut *guard, Arc::new(next))
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

fn with_digest(mut resp: Response, digest: &str) -> Response {
    if let Ok(v) = HeaderValue::from_str(digest) {
        resp.headers_mut().insert(DIGEST_HEADER, v);
    }
    resp
}

fn error(status: StatusCode, message: impl Into<String>, start: Instant, digest: &str) -> Response {
    let body = ErrorBody {
        error: message.into(),
        latency_ms: elapsed_ms(start),
    };
    with_digest((status, Json(body)).into_response(), digest)
}

#[derive(Debug, Deserialize)]
pub struct CorrectParams {
    q: Option<String>,
    k: Option<String>,
}

/// Computes a correction against one snapshot.
pub fn correct(
    snapshot: &Snapshot,
    config: &ServiceConfig,
    q: &str,
    k: usize,
) -> Result<CorrectionResponse, (StatusCode, String)> {
    let start = Instant::now();
    if q.chars().count() > config.max_query_len {
        return Err((
            StatusCode::BAD_REQUEST,
            format!("query longer than {} characters", config.max_query_len),
        ));
    }
    let canonical = snapshot.alphabet.canonicalize(q);
    if canonical.is_empty() {
        return Err((
            StatusCode::BAD_REQUEST,
            "query is empty after canonicalization".into(),
        ));
    }
    let matches = snapshot
        .index
        .query(&snapshot.params, &snapshot.alphabet, &canonical, k)
        .map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
    let exact = matches
        .first()
        .is_some_and(|m| m.similarity >= EXACT_THRESHOLD);
    Ok(CorrectionResponse {
        query: q.to_string(),
        canonical,
        exact,
        matches: matches
            .into_iter()
            .map(|m| MatchBody {
                name: m.name,
                class: m.class_index,
                score: m.similarity,
            })
            .collect(),
        latency_ms: elapsed_ms(start),
    })
}

async fn correct_handler(
    State(state): State<Arc<AppState>>,
    Query(params): Query<CorrectParams>,
) -> Response {
    let start = Instant::now();
    let snapshot = state.current();
    let digest = snapshot.index_digest.as_str();
    let Some(q) = params.q.filter(|q| !q.is_empty()) else {
        return error(
            StatusCode::BAD_REQUEST,
            "missing query parameter q",
            start,
            digest,
        );
    };
    let k = match params.k.as_deref().map(str::parse::<usize>) {
        None => state.config.default_k,
        Some(Ok(k)) if k >= 1 => k,
        Some(_) => {
            return error(
                StatusCode::BAD_REQUEST,
                "k must be a positive integer",
                start,
                digest,
            )
        }
    };
    match correct(&snapshot, &state.config, &q, k) {
        Ok(mut body) => {
            body.latency_ms = elapsed_ms(start);
            with_digest(Json(body).into_response(), digest)
        }
        Err((status, msg)) => error(status, msg, start, digest),
    }
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let start = Instant::now();
    let snapshot = state.current();
    let body = HealthResponse {
        status: "ok".into(),
        index_digest: snapshot.index_digest.clone(),
        catalog_size: snapshot.index.len(),
        latency_ms: elapsed_ms(start),
    };
    with_digest(Json(body).into_response(), &snapshot.index_digest)
}

async fn reload_handler(
    State(state): State<Arc<AppState>>,
    body: Option<Json<ReloadRequest>>,
) -> Response {
    let start = Instant::now();
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let checkpoint = req
        .checkpoint
        .unwrap_or_else(|| state.config.checkpoint.clone());
    let index = req.index.unwrap_or_else(|| state.config.index.clone());
    let loaded = tokio::task::spawn_blocking(move || Snapshot::load(&checkpoint, &index)).await;
    let (status, resp) = match loaded {
        Ok(Ok(next)) => {
            let digest = next.index_digest.clone();
            state.swap(next);
            (
                StatusCode::OK,
                ReloadResponse {
                    swapped: true,
                    index_digest: digest,
                    error: None,
                    latency_ms: 0.0,
                },
            )
        }
        Ok(Err(e)) => {
            let status = match e {
                typofix::Error::StaleIndex { .. } => StatusCode::CONFLICT,
                _ => StatusCode::BAD_REQUEST,
            };
            let current = state.current();
            (
                status,
                ReloadResponse {
                    swapped: false,
                    index_digest: current.index_digest.clone(),
                    error: Some(e.to_string()),
                    latency_ms: 0.0,
                },
            )
        }
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            ReloadResponse {
                swapped: false,
                index_digest: state.current().index_digest.clone(),
                error: Some(e.to_string()),
                latency_ms: 0.0,
            },
        ),
    };
    let digest = resp.index_digest.clone();
    let resp = ReloadResponse {
        latency_ms: elapsed_ms(start),
        ..resp
    };
    with_digest((status, Json(resp)).into_response(), &digest)
}

async fn not_found() -> Response {
    let body = ErrorBody {
        error: "no such endpoint".into(),
        latency_ms: 0.0,
    };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/correct", get(correct_handler))
        .route("/v1/healthz", get(health_handler))
        .route("/v1/reload", post(reload_handler))
        .fallback(not_found)
        .with_state(state)
}

/// Binds and serves until the task is dropped; returns the bound address.
pub async fn spawn(
    state: Arc<AppState>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        axum::serve(listener, router(state))
            .await
            .expect("server loop");
    });
    Ok((local, handle))
}

/// Loads the configured snapshot and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let snapshot = Snapshot::load(&config.checkpoint, &config.index)?;
    let addr: SocketAddr = format!("{}:{}", config.host, config.port).parse()?;
    let state = AppState::new(snapshot, config);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
