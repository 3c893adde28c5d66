//! HTTP JSON API over a curation workspace.
//!
//! Routes live under `/v1`. Errors are JSON objects
//! `{"error": {"code", "message"}}` with a stable `code`. State is kept in
//! plain files in the workspace directory, so a restarted service picks up
//! where it stopped.

mod api;
pub mod error;
pub mod rules;
pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::Router;

pub use error::ApiError;
use rules::RuleSlot;
use store::{Data, RULES_DIR};

pub const DEFAULT_PORT: u16 = 8080;

/// Settings read from the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub workspace: PathBuf,
    pub port: u16,
    /// Allowed browser origin; any origin when unset.
    pub ui_origin: Option<String>,
    /// Static bearer token required on every request when set.
    pub token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { workspace: PathBuf::from("workspace"), port: DEFAULT_PORT, ui_origin: None, token: None }
    }
}

impl ServiceConfig {
    /// `CURATE_WORKSPACE`, `CURATE_PORT`, `CURATE_UI_ORIGIN`, `CURATE_TOKEN`.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        if let Ok(w) = std::env::var("CURATE_WORKSPACE") {
            c.workspace = PathBuf::from(w);
        }
        if let Ok(p) = std::env::var("CURATE_PORT") {
            c.port = p.parse().map_err(|_| format!("CURATE_PORT `{p}` is not a port number"))?;
        }
        c.ui_origin = std::env::var("CURATE_UI_ORIGIN").ok().filter(|s| !s.is_empty());
        c.token = std::env::var("CURATE_TOKEN").ok().filter(|s| !s.is_empty());
        Ok(c)
    }
}

pub struct AppState {
    data: RwLock<Data>,
    ingesting: AtomicBool,
    rules: Mutex<BTreeMap<String, Arc<RuleSlot>>>,
    token: Option<String>,
    ui_origin: Option<String>,
}

impl AppState {
    /// Loads the configured workspace, creating it if needed.
    pub fn open(config: &ServiceConfig) -> Result<Arc<Self>, ApiError> {
        let root = config.workspace.as_path();
        let data = Data::open(root)?;
        let mut rules = BTreeMap::new();
        let dir = root.join(RULES_DIR);
        let entries = std::fs::read_dir(&dir).map_err(|e| store::io_err(&dir, e))?;
        for entry in entries.flatten() {
            let p = entry.path();
            if p.is_dir() {
                let slot = RuleSlot::load(p)?;
                rules.insert(slot.meta.id.clone(), Arc::new(slot));
            }
        }
        Ok(Arc::new(Self {
            data: RwLock::new(data),
            ingesting: AtomicBool::new(false),
            rules: Mutex::new(rules),
            token: config.token.clone(),
            ui_origin: config.ui_origin.clone(),
        }))
    }

    /// Read access to the workspace data; refused while an upload is being
    /// ingested.
    fn read(&self) -> Result<RwLockReadGuard<'_, Data>, ApiError> {
        if self.ingesting.load(Ordering::Acquire) {
            return Err(ApiError::ingesting());
        }
        Ok(self.data.read().unwrap_or_else(|p| p.into_inner()))
    }

    /// Read access that waits out an ingestion instead of failing.
    fn read_wait(&self) -> RwLockReadGuard<'_, Data> {
        self.data.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Data> {
        self.data.write().unwrap_or_else(|p| p.into_inner())
    }

    fn rules(&self) -> MutexGuard<'_, BTreeMap<String, Arc<RuleSlot>>> {
        self.rules.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn slot(&self, id: &str) -> Result<Arc<RuleSlot>, ApiError> {
        self.rules().get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_rule", format!("no rule `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    api::router(state)
}

/// Serves the API until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), String> {
    let state = AppState::open(&config).map_err(|e| e.to_string())?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("cannot listen on {addr}: {e}"))?;
    eprintln!("serving {} on http://{addr}/v1", config.workspace.display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
