//! `--tools` file: which external tool servers to attach.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use peil_core::protocol::{AttachError, HttpEndpoint, StdioEndpoint, ToolEndpoint, ToolRouter};
use peil_core::ToolRegistry;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolsConfig {
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
}

fn default_timeout() -> f64 {
    60.0
}

/// Either `url` (HTTP) or `command` (stdio child process).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: Option<String>,
    pub command: Option<Vec<String>>,
    /// Environment variable holding the shared secret header value.
    pub secret_env: Option<String>,
}

#[derive(Debug, Error)]
pub enum ToolsConfigError {
    #[error("cannot read tools config: {0}")]
    Io(#[from] std::io::Error),
    #[error("tools config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("tools config endpoint {0}: give exactly one of `url` or `command`")]
    Shape(usize),
    #[error("tools config endpoint {index}: {source}")]
    Attach {
        index: usize,
        #[source]
        source: AttachError,
    },
    #[error("tools config endpoint {index}: {message}")]
    Spawn { index: usize, message: String },
}

impl ToolsConfig {
    pub fn load(path: &Path) -> Result<Self, ToolsConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Local tools plus everything the endpoints advertise.
    pub fn connect(&self) -> Result<(ToolRegistry, ToolRouter), ToolsConfigError> {
        let mut registry = ToolRegistry::local_only();
        let mut router = ToolRouter::new(Duration::from_secs_f64(self.timeout_s));
        for (index, e) in self.endpoints.iter().enumerate() {
            let endpoint = open_endpoint(index, e)?;
            router
                .attach(endpoint, &mut registry)
                .map_err(|source| ToolsConfigError::Attach { index, source })?;
        }
        Ok((registry, router))
    }
}

pub fn open_endpoint(index: usize, e: &EndpointConfig) -> Result<Arc<dyn ToolEndpoint>, ToolsConfigError> {
    match (&e.url, &e.command) {
        (Some(url), None) => {
            let mut http = HttpEndpoint::new(url);
            if let Some(secret) = e.secret_env.as_deref().and_then(|v| std::env::var(v).ok()) {
                http = http.with_secret(&secret);
            }
            Ok(Arc::new(http))
        }
        (None, Some(cmd)) if !cmd.is_empty() => {
            let child = StdioEndpoint::spawn(&cmd[0], &cmd[1..]).map_err(|err| ToolsConfigError::Spawn {
                index,
                message: err.to_string(),
            })?;
            Ok(Arc::new(child))
        }
        _ => Err(ToolsConfigError::Shape(index)),
    }
}
