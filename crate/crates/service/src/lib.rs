//! JSON-over-HTTP facade for a [`Workspace`].
//!
//! | method | path                            | body                               | reply                 |
//! |--------|---------------------------------|------------------------------------|-----------------------|
//! | POST   | `/documents`                    | `{citation_key, title, text}`      | `{doc_id}`            |
//! | POST   | `/documents/{doc_id}/distill`   | `{target_ratio?}`                  | distillation report   |
//! | POST   | `/index/rebuild`                |                                    | `{chunks_indexed}`    |
//! | GET    | `/documents`                    |                                    | document list         |
//! | POST   | `/sessions`                     | `{}`                               | `{session_id}`        |
//! | POST   | `/sessions/{session_id}/messages` | `{query}`                        | chat turn             |
//! | GET    | `/sessions/{session_id}`        |                                    | full transcript       |
//! | GET    | `/healthz`                      |                                    | `{status, mock_mode}` |
//!
//! Errors are `{code, message, stage?}` with `code` from [`ApiErrorCode`].
//! Handlers only decode requests and call into the workspace, on the
//! blocking pool since backends perform synchronous HTTP.

mod error;

pub use error::{error_code, ApiError, ApiErrorCode};

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use paperchat_core::{ChatSession, ChatTurn, DistillationReport, DocId, DocumentMeta, Workspace};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub struct AppState {
    workspace: RwLock<Workspace>,
    sessions: Mutex<HashMap<String, Arc<Mutex<ChatSession>>>>,
}

impl AppState {
    pub fn new(workspace: Workspace) -> Arc<Self> {
        Arc::new(AppState {
            workspace: RwLock::new(workspace),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<ChatSession>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(ApiErrorCode::NotFound, format!("session {id} not found")))
    }
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(state: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(ApiErrorCode::InternalError, e.to_string()))?
        .map(Json)
}

/// Malformed JSON is an `invalid_request`.
fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ApiErrorCode::InvalidRequest, e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct NewDocument {
    pub citation_key: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub doc_id: DocId,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct DistillRequest {
    pub target_ratio: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Rebuilt {
    pub chunks_indexed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct MessageRequest {
    pub query: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mock_mode: bool,
}

async fn create_document(State(state): State<Shared>, body: Bytes) -> ApiResult<Created> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(ApiErrorCode::EmptyInput, "request body is empty"));
    }
    let req: NewDocument = decode(&body)?;
    blocking(state, move |s| {
        let meta = s
            .workspace
            .write()
            .unwrap()
            .ingest(&req.text, &req.citation_key, &req.title)?;
        Ok(Created { doc_id: meta.doc_id })
    })
    .await
}

async fn distill(
    State(state): State<Shared>,
    Path(doc_id): Path<String>,
    body: Bytes,
) -> ApiResult<DistillationReport> {
    let req: DistillRequest = if body.is_empty() {
        DistillRequest::default()
    } else {
        decode(&body)?
    };
    blocking(state, move |s| {
        let id = DocId::new(doc_id);
        let distillation = s
            .workspace
            .read()
            .unwrap()
            .compute_distillation(&id, req.target_ratio)?;
        s.workspace.write().unwrap().store_distillation(&distillation)?;
        Ok(distillation.report)
    })
    .await
}

async fn rebuild_index(State(state): State<Shared>) -> ApiResult<Rebuilt> {
    blocking(state, |s| {
        let kb = s.workspace.read().unwrap().build_knowledge()?;
        let chunks_indexed = s.workspace.write().unwrap().install_knowledge(kb)?;
        Ok(Rebuilt { chunks_indexed })
    })
    .await
}

async fn list_documents(State(state): State<Shared>) -> ApiResult<Vec<DocumentMeta>> {
    blocking(state, |s| Ok(s.workspace.read().unwrap().documents())).await
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> ApiResult<SessionCreated> {
    if !body.is_empty() {
        decode::<serde_json::Value>(&body)?;
    }
    let session_id = uuid::Uuid::new_v4().to_string();
    let session = state.workspace.read().unwrap().new_session(session_id.clone());
    state
        .sessions
        .lock()
        .unwrap()
        .insert(session_id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(SessionCreated { session_id }))
}

async fn post_message(State(state): State<Shared>, Path(session_id): Path<String>, body: Bytes) -> ApiResult<ChatTurn> {
    let req: MessageRequest = if body.is_empty() {
        MessageRequest::default()
    } else {
        decode(&body)?
    };
    let session = state.session(&session_id)?;
    blocking(state, move |s| {
        let mut session = match session.try_lock() {
            Ok(guard) => guard,
            Err(TryLockError::WouldBlock) => {
                return Err(ApiError::new(
                    ApiErrorCode::SessionBusy,
                    "a turn is already running for this session",
                ))
            }
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        Ok(s.workspace.read().unwrap().run_turn(&mut session, &req.query)?)
    })
    .await
}

async fn get_session(State(state): State<Shared>, Path(session_id): Path<String>) -> ApiResult<ChatSession> {
    let session = state.session(&session_id)?;
    let snapshot = session.lock().unwrap_or_else(|p| p.into_inner()).clone();
    Ok(Json(snapshot))
}

async fn healthz(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        mock_mode: state.workspace.read().unwrap().settings().mock_mode,
    })
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/documents", post(create_document).get(list_documents))
        .route("/documents/{doc_id}/distill", post(distill))
        .route("/index/rebuild", post(rebuild_index))
        .route("/sessions", post(create_session))
        .route("/sessions/{session_id}", get(get_session))
        .route("/sessions/{session_id}/messages", post(post_message))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, workspace: Workspace) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(workspace))).await
}
