//! HTTP service for live probing sessions: the server asks a user about
//! object pairs, re-solves their profile after every answer or move, and
//! returns the arrangement the answers imply.

pub mod api;
pub mod session;

use std::collections::BTreeMap;
use std::future::Future;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use session::{Engine, Session, SessionRecord, SessionSettings, SessionSnapshot};

struct Shared {
    engine: Option<Arc<Engine>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

/// Shared server state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        Self::build(Some(engine))
    }

    /// A server that answers every request with 503.
    pub fn without_model() -> Self {
        Self::build(None)
    }

    fn build(engine: Option<Engine>) -> Self {
        Self {
            shared: Arc::new(Shared {
                engine: engine.map(Arc::new),
                sessions: RwLock::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.shared.engine.clone()
    }

    fn next_id(&self) -> String {
        format!("s{}", self.shared.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.shared.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    fn insert(&self, session: Session) {
        let mut sessions = self.shared.sessions.write().unwrap_or_else(|p| p.into_inner());
        sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
    }

    pub fn session_count(&self) -> usize {
        self.shared.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        let sessions = self.shared.sessions.read().unwrap_or_else(|p| p.into_inner());
        sessions.values().map(|s| s.lock().unwrap_or_else(|p| p.into_inner()).to_record()).collect()
    }

    /// Adopt saved sessions. New ids continue after the largest restored one.
    pub fn restore(&self, records: Vec<SessionRecord>) -> tidyup_core::Result<usize> {
        let engine = self.engine().ok_or_else(|| tidyup_core::Error::Config("no model is loaded".into()))?;
        let sessions =
            records.into_iter().map(|r| Session::from_record(&engine, r)).collect::<tidyup_core::Result<Vec<_>>>()?;
        let count = sessions.len();
        for session in sessions {
            if let Some(n) = session.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                self.shared.next_id.fetch_max(n + 1, Ordering::Relaxed);
            }
            self.insert(session);
        }
        Ok(count)
    }

    pub fn save_sessions(&self, path: impl AsRef<Path>) -> tidyup_core::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.records())?)?;
        Ok(())
    }

    pub fn load_sessions(&self, path: impl AsRef<Path>) -> tidyup_core::Result<usize> {
        let records: Vec<SessionRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        self.restore(records)
    }
}

/// CORS for the given UI origin, or any origin when `None`.
pub fn cors(origin: Option<&str>) -> Result<CorsLayer, axum::http::header::InvalidHeaderValue> {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o)?),
        None => AllowOrigin::any(),
    };
    Ok(CorsLayer::new().allow_origin(allow).allow_methods(Any).allow_headers(Any))
}

pub fn router(state: AppState, cors: CorsLayer) -> Router {
    Router::new()
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/answers", post(api::answer))
        .route("/sessions/{id}/moves", post(api::move_object))
        .layer(cors)
        .with_state(state)
}

/// Serve until `shutdown` resolves, then write sessions to `sessions_file`
/// if one is given.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    cors: CorsLayer,
    sessions_file: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> tidyup_core::Result<()> {
    axum::serve(listener, router(state.clone(), cors)).with_graceful_shutdown(shutdown).await?;
    if let Some(path) = sessions_file {
        state.save_sessions(path)?;
    }
    Ok(())
}
