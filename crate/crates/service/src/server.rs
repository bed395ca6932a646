//! HTTP/JSON transport for the enrollment server.
//!
//! `POST /api/v1/enroll`, `POST /api/v1/authenticate`, `GET /api/v1/users`,
//! `GET /api/v1/health`. Errors are `{code, message}` bodies.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, Semaphore};

use crate::{authenticate_stored, enroll, AuthenticateRequest, Decision, EnrollRequest, EnrollResponse, FeatureStore, ServiceConfig, ServiceError};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub api_version: u32,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserList {
    pub users: Vec<String>,
}

struct AppState {
    store: Arc<FeatureStore>,
    cfg: ServiceConfig,
    // One lock per user id serialises enrollments of the same user.
    user_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    fn user_lock(&self, user: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.user_locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(user.to_string()).or_default().clone()
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

fn bad_json(r: JsonRejection) -> ServiceError {
    ServiceError::InvalidRequest(r.body_text())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn enroll_handler(
    State(st): State<Arc<AppState>>,
    body: Result<Json<EnrollRequest>, JsonRejection>,
) -> Result<Json<EnrollResponse>, ServiceError> {
    let Json(req) = body.map_err(bad_json)?;
    crate::store::validate_user_id(&req.user_id)?;
    let lock = st.user_lock(&req.user_id);
    let _user = lock.lock_owned().await;
    let _permit = st
        .workers
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let store = st.store.clone();
    let cfg = st.cfg;
    blocking(move || enroll(&req, &store, &cfg)).await.map(Json)
}

async fn authenticate_handler(
    State(st): State<Arc<AppState>>,
    body: Result<Json<AuthenticateRequest>, JsonRejection>,
) -> Result<Json<Decision>, ServiceError> {
    let Json(req) = body.map_err(bad_json)?;
    let store = st.store.clone();
    blocking(move || authenticate_stored(&req, &store)).await.map(Json)
}

async fn users_handler(State(st): State<Arc<AppState>>) -> Result<Json<UserList>, ServiceError> {
    let store = st.store.clone();
    let users = blocking(move || store.list_users()).await?;
    Ok(Json(UserList { users }))
}

async fn health_handler(State(st): State<Arc<AppState>>) -> Result<Json<Health>, ServiceError> {
    let store = st.store.clone();
    let users = blocking(move || store.list_users()).await?.len();
    Ok(Json(Health {
        status: "ok".into(),
        api_version: API_VERSION,
        users,
    }))
}

async fn not_found() -> ServiceError {
    ServiceError::NotFound("no such endpoint".into())
}

pub fn router(store: Arc<FeatureStore>, cfg: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        store,
        cfg,
        user_locks: Mutex::new(HashMap::new()),
        workers: Arc::new(Semaphore::new(cfg.workers.max(1))),
    });
    Router::new()
        .route("/api/v1/enroll", post(enroll_handler))
        .route("/api/v1/authenticate", post(authenticate_handler))
        .route("/api/v1/users", get(users_handler))
        .route("/api/v1/health", get(health_handler))
        .fallback(not_found)
        .with_state(state)
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Serves until the process exits.
pub fn run(addr: SocketAddr, store: Arc<FeatureStore>, cfg: ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    cfg.validate()?;
    let rt = runtime().map_err(|e| ServiceError::Internal(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| ServiceError::Internal(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| ServiceError::Internal(e.to_string()))?;
        on_bound(local);
        axum::serve(listener, router(store, cfg))
            .await
            .map_err(|e| ServiceError::Internal(e.to_string()))
    })
}

/// A server running on a background thread, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn spawn(addr: SocketAddr, store: Arc<FeatureStore>, cfg: ServiceConfig) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let (tx, rx) = oneshot::channel::<()>();
        let (bound_tx, bound_rx) = std::sync::mpsc::channel();
        let thread = std::thread::spawn(move || {
            let rt = match runtime() {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = bound_tx.send(Err(ServiceError::Internal(e.to_string())));
                    return;
                }
            };
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(addr).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = bound_tx.send(Err(ServiceError::Internal(format!("bind {addr}: {e}"))));
                        return;
                    }
                };
                let _ = bound_tx.send(listener.local_addr().map_err(|e| ServiceError::Internal(e.to_string())));
                let _ = axum::serve(listener, router(store, cfg))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        let addr = bound_rx
            .recv()
            .map_err(|_| ServiceError::Internal("server thread exited".into()))??;
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
