//! Pluggable completion backends.
//!
//! [`ScriptedBackend`] replays canned completions for tests and desk-scale
//! scenarios; [`HttpBackend`] talks to a chat-completion endpoint.

use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Who is asking. Scripted backends match entries on this tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Role {
    /// Next Thought/Action of the interleaved loop.
    Planner,
    /// Whole up-front plan (reason-only mode).
    Plan,
    /// Self-assessment of a finished trace.
    Evaluator,
    /// Semantic comparison against a ground truth.
    Judge,
    /// A prompt-backed tool, e.g. `tool:knowledge_reason`.
    Tool(String),
}

impl Role {
    pub fn tag(&self) -> String {
        match self {
            Role::Planner => "planner".into(),
            Role::Plan => "plan".into(),
            Role::Evaluator => "evaluator".into(),
            Role::Judge => "judge".into(),
            Role::Tool(name) => format!("tool:{name}"),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub role: Role,
    pub prompt: &'a str,
    pub stop: &'a [&'a str],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("scripted backend exhausted: no entry left for role `{role}`")]
    Exhausted { role: String },
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

pub trait LlmBackend: Send + Sync {
    /// A single-turn completion.
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

/// Cuts `text` at the first occurrence of any stop sequence.
pub fn apply_stop(text: &str, stop: &[&str]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// One canned completion.
///
/// An entry answers the first request whose role matches and whose prompt
/// contains every `when_contains` string and none of the `when_absent`
/// strings. Entries are consumed in order unless `repeat` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when_absent: Vec<String>,
    pub reply: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn new(role: &str, reply: &str) -> Self {
        Self {
            role: role.to_string(),
            when_contains: Vec::new(),
            when_absent: Vec::new(),
            reply: reply.to_string(),
            repeat: false,
        }
    }

    pub fn when(mut self, needle: &str) -> Self {
        self.when_contains.push(needle.to_string());
        self
    }

    pub fn unless(mut self, needle: &str) -> Self {
        self.when_absent.push(needle.to_string());
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn matches(&self, role: &str, prompt: &str) -> bool {
        self.role == role
            && self.when_contains.iter().all(|n| prompt.contains(n.as_str()))
            && !self.when_absent.iter().any(|n| prompt.contains(n.as_str()))
    }
}

/// Record of one call made to a [`ScriptedBackend`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedCall {
    pub role: String,
    pub prompt: String,
    pub reply: Option<String>,
}

#[derive(Debug, Default)]
struct ScriptState {
    used: Vec<bool>,
    calls: Vec<ScriptedCall>,
}

/// Deterministic replay backend.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let used = vec![false; entries.len()];
        Self {
            entries,
            state: Mutex::new(ScriptState {
                used,
                calls: Vec::new(),
            }),
        }
    }

    pub fn calls(&self) -> Vec<ScriptedCall> {
        self.state.lock().expect("script state poisoned").calls.clone()
    }

    pub fn calls_for(&self, role: &Role) -> usize {
        let tag = role.tag();
        self.state
            .lock()
            .expect("script state poisoned")
            .calls
            .iter()
            .filter(|c| c.role == tag)
            .count()
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("script state poisoned");
        self.entries
            .iter()
            .zip(&state.used)
            .filter(|(e, used)| e.repeat || !**used)
            .count()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let tag = request.role.tag();
        let mut state = self.state.lock().expect("script state poisoned");
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| (e.repeat || !state.used[*i]) && e.matches(&tag, request.prompt));
        let reply = hit.map(|(i, e)| {
            state.used[i] = true;
            apply_stop(&e.reply, request.stop)
        });
        state.calls.push(ScriptedCall {
            role: tag.clone(),
            prompt: request.prompt.to_string(),
            reply: reply.clone(),
        });
        reply.ok_or(BackendError::Exhausted { role: tag })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_model() -> String {
    "gpt-4".into()
}

fn default_key_env() -> String {
    "PEIL_API_KEY".into()
}

fn default_timeout_s() -> f64 {
    60.0
}

impl HttpBackendConfig {
    pub fn new(url: &str) -> Self {
        Self {
            url: url.to_string(),
            model: default_model(),
            api_key_env: default_key_env(),
            temperature: 0.0,
            timeout_s: default_timeout_s(),
        }
    }
}

/// Chat-completion client: POSTs `{model, messages, stop, temperature}` and
/// reads `choices[0].message.content` (or `choices[0].text`).
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.config.timeout_s)
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "stop": request.stop,
            "temperature": self.config.temperature,
        });
        let mut call = self.agent.post(&self.config.url);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout()),
            other => BackendError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout()),
            other => BackendError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let choice = &value["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .ok_or_else(|| BackendError::BadResponse("no choices[0].message.content".into()))?;
        Ok(apply_stop(content, request.stop))
    }
}
