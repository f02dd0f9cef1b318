//! Routes, shared state and the server entry point.

use std::collections::HashMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{SystemTime, UNIX_EPOCH};

use apohf_core::domain::{load_contextual, load_domain, Arm, ArmDomain};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use uuid::Uuid;

use crate::embed::{EmbedConfig, EmbeddingClient};
use crate::error::{ServiceError, ServiceResult};
use crate::session::{PairView, Session, SessionConfig, SessionDomain, Side, SubmitOutcome};
use crate::store::SnapshotStore;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// Directory that `domain_ref` paths are resolved against. Unset
    /// disables `domain_ref`.
    pub domains_dir: Option<PathBuf>,
    pub embedding: Option<EmbedConfig>,
}

/// `None` in a slot means the session must be (re)loaded from disk.
type Slot = Arc<Mutex<Option<Session>>>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: SnapshotStore,
    domains_dir: Option<PathBuf>,
    embedder: Option<EmbeddingClient>,
    slots: StdMutex<HashMap<String, Slot>>,
}

impl AppState {
    pub fn new(
        store: SnapshotStore,
        domains_dir: Option<PathBuf>,
        embedder: Option<EmbeddingClient>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                domains_dir,
                embedder,
                slots: StdMutex::new(HashMap::new()),
            }),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> ServiceResult<Self> {
        let store = SnapshotStore::open(&config.data_dir)?;
        let embedder = config
            .embedding
            .clone()
            .map(EmbeddingClient::new)
            .transpose()?;
        Ok(Self::new(store, config.domains_dir.clone(), embedder))
    }

    fn slot(&self, id: &str) -> Slot {
        let mut slots = self.inner.slots.lock().expect("slot map poisoned");
        slots.entry(id.to_owned()).or_default().clone()
    }

    fn forget(&self, id: &str) {
        self.inner
            .slots
            .lock()
            .expect("slot map poisoned")
            .remove(id);
    }

    /// Locks the session, loading it from its snapshot if it is not in memory.
    async fn open(&self, id: &str) -> ServiceResult<tokio::sync::OwnedMutexGuard<Option<Session>>> {
        if Uuid::parse_str(id).is_err() {
            return Err(ServiceError::NotFound(id.to_owned()));
        }
        let mut guard = self.slot(id).lock_owned().await;
        if guard.is_none() {
            let store = self.inner.store.clone();
            let key = id.to_owned();
            let loaded = blocking(move || match store.load(&key)? {
                Some(snapshot) => Session::restore(snapshot).map(Some),
                None => Ok(None),
            })
            .await?;
            match loaded {
                Some(session) => *guard = Some(session),
                None => {
                    drop(guard);
                    self.forget(id);
                    return Err(ServiceError::NotFound(id.to_owned()));
                }
            }
        }
        Ok(guard)
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ServiceResult<T> + Send + 'static,
) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/preference", post(submit_preference))
        .route("/sessions/{id}/best", get(get_best))
        .with_state(state)
}

/// Binds and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> ServiceResult<()> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, data = %config.data_dir.display(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ServiceResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ServiceError::Validation(format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
struct TextCandidate {
    id: String,
    #[serde(default)]
    text: String,
}

/// Exactly one domain source must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    config: SessionConfig,
    domain: Option<Vec<Value>>,
    domain_jsonl: Option<String>,
    contextual: Option<Vec<Value>>,
    contextual_jsonl: Option<String>,
    domain_ref: Option<String>,
    candidates: Option<Vec<TextCandidate>>,
}

#[derive(Debug, Serialize)]
struct CreateResponse {
    session_id: String,
    pair: PairView,
    iteration: u64,
}

fn as_jsonl(rows: &[Value]) -> String {
    rows.iter().map(|v| format!("{v}\n")).collect()
}

fn fixed(text: &str) -> ServiceResult<SessionDomain> {
    Ok(SessionDomain::Fixed {
        arms: load_domain(Cursor::new(text))?,
    })
}

fn contextual(text: &str) -> ServiceResult<SessionDomain> {
    Ok(SessionDomain::Contextual {
        rounds: load_contextual(Cursor::new(text))?,
    })
}

/// Resolves a relative path inside `root`, refusing anything that could
/// climb out of it.
fn confined(root: &Path, reference: &str) -> ServiceResult<PathBuf> {
    let rel = Path::new(reference);
    if reference.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(ServiceError::Validation(format!(
            "domain_ref {reference:?} must be a plain relative path"
        )));
    }
    Ok(root.join(rel))
}

impl AppState {
    async fn domain_from(&self, req: &mut CreateRequest) -> ServiceResult<SessionDomain> {
        let given = [
            req.domain.is_some(),
            req.domain_jsonl.is_some(),
            req.contextual.is_some(),
            req.contextual_jsonl.is_some(),
            req.domain_ref.is_some(),
            req.candidates.is_some(),
        ];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(ServiceError::Validation(
                "give exactly one of domain, domain_jsonl, contextual, contextual_jsonl, domain_ref, candidates".into(),
            ));
        }
        if let Some(rows) = &req.domain {
            return fixed(&as_jsonl(rows));
        }
        if let Some(text) = &req.domain_jsonl {
            return fixed(text);
        }
        if let Some(rows) = &req.contextual {
            return contextual(&as_jsonl(rows));
        }
        if let Some(text) = &req.contextual_jsonl {
            return contextual(text);
        }
        if let Some(reference) = &req.domain_ref {
            let root = self.inner.domains_dir.as_deref().ok_or_else(|| {
                ServiceError::Validation(
                    "domain_ref is disabled: no domains directory configured".into(),
                )
            })?;
            let path = confined(root, reference)?;
            let text = tokio::fs::read_to_string(&path).await.map_err(|e| {
                ServiceError::Validation(format!("cannot read domain_ref {reference:?}: {e}"))
            })?;
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            let is_contextual =
                serde_json::from_str::<Value>(first).is_ok_and(|v| v.get("candidates").is_some());
            return if is_contextual {
                contextual(&text)
            } else {
                fixed(&text)
            };
        }
        let candidates = req.candidates.take().unwrap_or_default();
        if candidates.is_empty() {
            return Err(apohf_core::Error::EmptyDomain.into());
        }
        let embedder = self.inner.embedder.as_ref().ok_or_else(|| {
            ServiceError::Validation(
                "candidates need an embedding service; none is configured".into(),
            )
        })?;
        let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
        let embeddings = embedder.embed(&texts).await?;
        let arms = candidates
            .into_iter()
            .zip(embeddings)
            .map(|(c, embedding)| Arm {
                id: c.id,
                text: c.text,
                embedding,
            })
            .collect();
        Ok(SessionDomain::Fixed {
            arms: ArmDomain::new(arms)?,
        })
    }
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> ServiceResult<impl IntoResponse> {
    let mut req: CreateRequest = parse_body(&body)?;
    let domain = state.domain_from(&mut req).await?;
    let config = req.config;
    config.validate()?;
    let id = Uuid::new_v4().to_string();
    let store = state.inner.store.clone();
    let key = id.clone();
    let session = blocking(move || {
        let session = Session::create(key, domain, config, now())?;
        store.save(&session.snapshot())?;
        Ok(session)
    })
    .await?;
    let response = CreateResponse {
        session_id: id.clone(),
        pair: session.pending().expect("new sessions pose a pair"),
        iteration: session.completed(),
    };
    *state.slot(&id).lock().await = Some(session);
    tracing::info!(session = %id, "created");
    Ok((StatusCode::CREATED, Json(response)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceRequest {
    chosen: Side,
    token: Option<String>,
    iteration: Option<u64>,
}

async fn submit_preference(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ServiceResult<Json<SubmitOutcome>> {
    let mut guard = state.open(&id).await?;
    let req: PreferenceRequest = parse_body(&body)?;
    let mut session = guard.take().expect("open loads the session");
    let store = state.inner.store.clone();
    // The session travels to a worker thread and only comes back if every
    // step, including the durable write, succeeded or nothing was changed.
    let (session, result) = tokio::task::spawn_blocking(move || {
        let before = session.completed();
        let token_seen = req.token.as_deref().is_some_and(|t| session.has_token(t));
        match session.submit(req.chosen, req.token.as_deref(), req.iteration, now()) {
            Ok(outcome) if token_seen => (Some(session), Ok(outcome)),
            Ok(outcome) => match store.save(&session.snapshot()) {
                Ok(()) => (Some(session), Ok(outcome)),
                Err(e) => (None, Err(ServiceError::from(e))),
            },
            Err(e @ ServiceError::Conflict(_)) if session.completed() == before => {
                (Some(session), Err(e))
            }
            Err(e) => (None, Err(e)),
        }
    })
    .await
    .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?;
    *guard = session;
    if guard.is_none() {
        tracing::warn!(session = %id, "evicted after a failed submit; will reload from disk");
    }
    result.map(Json)
}

async fn get_best(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ServiceResult<Json<Value>> {
    let guard = state.open(&id).await?;
    let session = guard.as_ref().expect("open loads the session");
    let best = session
        .best()
        .ok_or_else(|| ServiceError::Conflict("no preference has been submitted yet".into()))?;
    Ok(Json(
        serde_json::to_value(best).map_err(|e| ServiceError::Internal(e.to_string()))?,
    ))
}

async fn get_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ServiceResult<Json<Value>> {
    let guard = state.open(&id).await?;
    let session = guard.as_ref().expect("open loads the session");
    Ok(Json(
        serde_json::to_value(session.public_state())
            .map_err(|e| ServiceError::Internal(e.to_string()))?,
    ))
}
