use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Describe,
    Invoke,
}

impl Op {
    pub fn path(self) -> &'static str {
        match self {
            Op::Describe => "/describe",
            Op::Invoke => "/invoke",
        }
    }
}

/// Moves one encoded message to a tool server and returns the encoded reply.
/// For `Op::Describe` the body is ignored.
pub trait ToolEndpoint: Send + Sync {
    fn label(&self) -> String;
    fn exchange(&self, op: Op, body: &[u8], timeout: Duration) -> Result<Vec<u8>, ProtocolError>;
}

/// `POST <base>/describe` and `POST <base>/invoke`.
pub struct HttpEndpoint {
    base: String,
    agent: ureq::Agent,
    secret: Option<String>,
}

impl HttpEndpoint {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
            secret: None,
        }
    }

    /// Sent as `X-Tool-Secret` on every request.
    pub fn with_secret(mut self, secret: &str) -> Self {
        self.secret = Some(secret.to_string());
        self
    }
}

impl ToolEndpoint for HttpEndpoint {
    fn label(&self) -> String {
        self.base.clone()
    }

    fn exchange(&self, op: Op, body: &[u8], timeout: Duration) -> Result<Vec<u8>, ProtocolError> {
        let url = format!("{}{}", self.base, op.path());
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(s) = &self.secret {
            req = req.header("X-Tool-Secret", s);
        }
        let req = req.config().timeout_global(Some(timeout)).build();
        let payload: &[u8] = match op {
            Op::Describe => b"{}",
            Op::Invoke => body,
        };
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => ProtocolError::Timeout(timeout),
            other => ProtocolError::Transport(format!("{url}: {other}")),
        };
        let mut resp = req.send(payload).map_err(map_err)?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(2 * super::MAX_INLINE_BYTES as u64 + 1024 * 1024)
            .read_to_vec()
            .map_err(map_err)?;
        if (200..300).contains(&status) || serde_json::from_slice::<Value>(&bytes).is_ok() {
            Ok(bytes)
        } else {
            Err(ProtocolError::Transport(format!(
                "{url}: HTTP {status}: {}",
                String::from_utf8_lossy(&bytes).chars().take(200).collect::<String>()
            )))
        }
    }
}

struct StdioState {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    /// Ids of requests that timed out; their late replies are dropped.
    abandoned: HashSet<String>,
}

/// A child process speaking line-delimited JSON on stdin/stdout.
pub struct StdioEndpoint {
    label: String,
    state: Mutex<StdioState>,
}

impl StdioEndpoint {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ProtocolError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProtocolError::Transport(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            label: std::iter::once(program.to_string())
                .chain(args.iter().cloned())
                .collect::<Vec<_>>()
                .join(" "),
            state: Mutex::new(StdioState {
                child,
                stdin,
                lines: rx,
                abandoned: HashSet::new(),
            }),
        })
    }
}

fn line_id(line: &str) -> Option<String> {
    serde_json::from_str::<Value>(line)
        .ok()?
        .get("id")?
        .as_str()
        .map(str::to_string)
}

impl ToolEndpoint for StdioEndpoint {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn exchange(&self, op: Op, body: &[u8], timeout: Duration) -> Result<Vec<u8>, ProtocolError> {
        let deadline = Instant::now() + timeout;
        let mut state = self
            .state
            .lock()
            .map_err(|_| ProtocolError::Transport("stdio endpoint poisoned".into()))?;
        let (line, request_id) = match op {
            Op::Describe => (br#"{"op":"describe"}"#.to_vec(), None),
            Op::Invoke => {
                let mut l = br#"{"op":"invoke","request":"#.to_vec();
                l.extend_from_slice(body);
                l.push(b'}');
                let id = serde_json::from_slice::<Value>(body)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string));
                (l, id)
            }
        };
        let write = |stdin: &mut ChildStdin| -> std::io::Result<()> {
            stdin.write_all(&line)?;
            stdin.write_all(b"\n")?;
            stdin.flush()
        };
        write(&mut state.stdin).map_err(|e| ProtocolError::Transport(format!("{}: {e}", self.label)))?;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match state.lines.recv_timeout(left) {
                Ok(reply) => {
                    if let Some(id) = line_id(&reply) {
                        if Some(&id) != request_id.as_ref() && state.abandoned.remove(&id) {
                            continue;
                        }
                    }
                    return Ok(reply.into_bytes());
                }
                Err(RecvTimeoutError::Timeout) => {
                    if let Some(id) = request_id {
                        state.abandoned.insert(id);
                    }
                    return Err(ProtocolError::Timeout(timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProtocolError::Transport(format!(
                        "{}: tool process closed its output",
                        self.label
                    )))
                }
            }
        }
    }
}

impl Drop for StdioEndpoint {
    fn drop(&mut self) {
        if let Ok(state) = self.state.get_mut() {
            let _ = state.child.kill();
            let _ = state.child.wait();
        }
    }
}
