//! JSON-over-HTTP session service for the coverdx engine.
//!
//! Knowledge bases are loaded from a directory at startup. Each diagnostic
//! session is kept in memory and mirrored to an append-only transcript log,
//! so a restarted service replays its logs and resumes every session in the
//! exact state it had.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub mod api;
pub mod config;
pub mod journal;
pub mod store;

pub use api::{router, QuestionView, Service, SessionView, SummaryView};
pub use config::{ServiceConfig, KB_DIR_ENV};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error("knowledge base {name:?} is invalid: {source}")]
    InvalidKb {
        name: String,
        #[source]
        source: coverdx::Error,
    },
    #[error("no knowledge base found in {}", .0.display())]
    NoKnowledgeBase(PathBuf),
    #[error("cannot replay session log {}: {message}", .path.display())]
    Recovery { path: PathBuf, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Server(#[source] std::io::Error),
}

impl ServiceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Validation findings behind an invalid-KB error, if any.
    pub fn violations(&self) -> &[coverdx::Violation] {
        match self {
            Self::InvalidKb {
                source: coverdx::Error::Invalid(v),
                ..
            } => v,
            _ => &[],
        }
    }
}

/// Runs the service until `shutdown` resolves.
pub async fn serve<F>(config: ServiceConfig, shutdown: F) -> Result<(), ServiceError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let (listener, service) = bind(config).await?;
    let addr = listener.local_addr().map_err(ServiceError::Server)?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Server)
}

async fn bind(config: ServiceConfig) -> Result<(TcpListener, Arc<Service>), ServiceError> {
    let addr = config.address();
    let service = Arc::new(Service::open(config)?);
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    Ok((listener, service))
}

/// A service running on a background task.
#[derive(Debug)]
pub struct RunningService {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        let _ = self.stop.send(());
        match self.task.await {
            Ok(r) => r.map_err(ServiceError::Server),
            Err(e) => Err(ServiceError::Server(std::io::Error::other(e))),
        }
    }

    /// Drops the server task without a graceful shutdown.
    pub async fn kill(self) {
        self.task.abort();
        let _ = self.task.await;
    }
}

/// Starts the service on the current runtime and returns once it is
/// accepting connections.
pub async fn spawn(config: ServiceConfig) -> Result<RunningService, ServiceError> {
    let (listener, service) = bind(config).await?;
    let addr = listener.local_addr().map_err(ServiceError::Server)?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(service.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        service,
        stop,
        task,
    })
}
