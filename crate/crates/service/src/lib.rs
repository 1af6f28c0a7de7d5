//! HTTP JSON API over trained models and the expert vote store.
//!
//! Endpoints live under `/api`; see `docs/api.md` in the repository for
//! request and response shapes. Anything else is served from the optional
//! static asset directory.

pub mod api;
pub mod config;
pub mod query;
pub mod registry;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use patexpand_core::crowd::{CrowdError, VoteStore};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use registry::ModelRegistry;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("vote log: {0}")]
    Votes(#[from] CrowdError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let registry = ModelRegistry::open(&config.model_dir)?;
        let votes = match &config.vote_log {
            Some(path) => VoteStore::open(path)?,
            None => VoteStore::in_memory(),
        };
        Ok(Self {
            registry,
            votes: Arc::new(votes),
            default_k: config.default_k,
        })
    }
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    /// Stops accepting connections and waits for in-flight requests.
    pub async fn stop(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Loads models and votes, binds the listener and starts serving.
pub async fn start(config: &ServiceConfig) -> Result<RunningServer, ServiceError> {
    let state = Arc::new(AppState::from_config(config)?);
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.listen,
            source,
        })?;
    let addr = listener.local_addr()?;
    let app = router(state.clone(), config.static_dir.as_deref());
    let (tx, rx) = oneshot::channel::<()>();

    if config.rescan_secs > 0 {
        let st = state.clone();
        let period = Duration::from_secs(config.rescan_secs);
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(period);
            ticker.tick().await;
            loop {
                ticker.tick().await;
                let st = st.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || st.registry.rescan()).await {
                    tracing::warn!(error = %e, "periodic rescan failed");
                }
            }
        });
    }

    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, models = state.registry.current().len(), "listening");
    Ok(RunningServer {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}

/// Runs until `until` resolves.
pub async fn serve(config: &ServiceConfig, until: impl Future<Output = ()>) -> Result<(), ServiceError> {
    let server = start(config).await?;
    until.await;
    server.stop().await?;
    Ok(())
}
