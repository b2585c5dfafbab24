use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Environment variable that replaces the configured KB directory.
pub const KB_DIR_ENV: &str = "COVERDX_KB_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    /// Port 0 asks the OS for a free port.
    pub port: u16,
    pub kb_dir: PathBuf,
    /// Directory holding one append-only transcript log per session.
    pub store: PathBuf,
    /// Upper bound on sessions that are still in progress.
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            kb_dir: PathBuf::from("kb"),
            store: PathBuf::from("sessions"),
            max_sessions: 1024,
        }
    }
}

impl ServiceConfig {
    pub fn address(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Applies `COVERDX_KB_DIR` if it is set and non-empty.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(KB_DIR_ENV).filter(|d| !d.is_empty()) {
            self.kb_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_sessions == 0 {
            return Err(ServiceError::Config("max_sessions must be at least 1".into()));
        }
        if !self.kb_dir.is_dir() {
            return Err(ServiceError::Config(format!(
                "kb directory {} is not a readable directory",
                self.kb_dir.display()
            )));
        }
        std::fs::create_dir_all(&self.store).map_err(|e| {
            ServiceError::Config(format!("session store {} is not writable: {e}", self.store.display()))
        })?;
        Ok(())
    }
}
