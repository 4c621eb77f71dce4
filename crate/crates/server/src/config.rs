use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

/// Service settings. Read from a TOML file, then overridden by flags.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// store = "/var/lib/surveystat"
/// static_dir = "/usr/share/surveystat/ui"
/// session_ttl_secs = 3600
/// admin_level = 3
///
/// [transport]
/// kind = "gateway"
/// endpoint = "http://127.0.0.1:9000/send"
///
/// [notify]
/// queue_capacity = 1024
/// max_attempts = 5
/// initial_backoff_ms = 200
/// max_backoff_ms = 10000
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub store: PathBuf,
    pub transport: TransportConfig,
    pub static_dir: Option<PathBuf>,
    pub session_ttl_secs: u64,
    /// Sessions at or above this level may upload datasets.
    pub admin_level: u32,
    pub notify: NotifyConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store: PathBuf::from("surveystat-data"),
            transport: TransportConfig::Disabled,
            static_dir: None,
            session_ttl_secs: 3600,
            admin_level: 3,
            notify: NotifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransportConfig {
    /// Confirmations are not sent.
    Disabled,
    /// Confirmations are kept in memory (tests and demos).
    Capture,
    /// Confirmations are POSTed as JSON to a mail gateway.
    Gateway { endpoint: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NotifyConfig {
    pub queue_capacity: usize,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for NotifyConfig {
    fn default() -> Self {
        Self {
            queue_capacity: 1024,
            max_attempts: 5,
            initial_backoff_ms: 200,
            max_backoff_ms: 10_000,
        }
    }
}

impl NotifyConfig {
    /// Delay before retry number `attempt` (1-based), doubling up to the cap.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("bind port must be in 1..=65535")]
    Port,
    #[error("store root {path} is not writable: {source}")]
    Store {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("gateway transport needs an endpoint URL")]
    Endpoint,
    #[error("notify.queue_capacity and notify.max_attempts must be at least 1")]
    Notify,
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }

    /// Checks the invariants that must hold before serving, creating the
    /// store root if needed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bind.port() == 0 {
            return Err(ConfigError::Port);
        }
        if let TransportConfig::Gateway { endpoint } = &self.transport {
            if endpoint.trim().is_empty() {
                return Err(ConfigError::Endpoint);
            }
        }
        if self.notify.queue_capacity == 0 || self.notify.max_attempts == 0 {
            return Err(ConfigError::Notify);
        }
        let store_err = |source| ConfigError::Store {
            path: self.store.clone(),
            source,
        };
        std::fs::create_dir_all(&self.store).map_err(store_err)?;
        let probe = self.store.join(".write-probe");
        std::fs::write(&probe, b"").map_err(store_err)?;
        std::fs::remove_file(&probe).map_err(store_err)?;
        Ok(())
    }
}
