//! Wire protocol between the orchestrator and external tool servers.
//!
//! Every message is one JSON document. Over HTTP the paths are `/describe`
//! and `/invoke`; over a child process's standard streams each message is one
//! line, requests wrapped as `{"op":"describe"}` or
//! `{"op":"invoke","request":{...}}`.

mod client;
mod conformance;
mod fixture;
mod transport;

use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grammar::{ArgKind, Execution, QueryKind, ToolSpec};
use crate::inspector::MediaKind;

pub(crate) use client::data_field;
pub use client::{discover, invoke_external, AttachError, ToolRouter};
pub use conformance::{conformance_check, CheckResult, ConformanceReport};
pub use fixture::{narration_schedule, FixtureEntry, FixtureToolServer, NARRATION_FPS};
pub use transport::{HttpEndpoint, Op, StdioEndpoint, ToolEndpoint};

pub const PROTOCOL_VERSION: &str = "1";
/// Largest accepted inline payload, after base64 decoding.
pub const MAX_INLINE_BYTES: usize = 16 * 1024 * 1024;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// A visual input or output: a locator or inline base64 bytes, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcePayload {
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl ResourcePayload {
    pub fn at(kind: MediaKind, locator: &str) -> Self {
        Self {
            kind,
            locator: Some(locator.to_string()),
            data: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn inline(kind: MediaKind, bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() > MAX_INLINE_BYTES {
            return Err(ProtocolError::TooLarge(bytes.len()));
        }
        Ok(Self {
            kind,
            locator: None,
            data: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Decoded inline bytes, if any.
    pub fn inline_bytes(&self) -> Result<Option<Vec<u8>>, String> {
        let Some(data) = &self.data else {
            return Ok(None);
        };
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| format!("inline data is not valid base64: {e}"))?;
        if bytes.len() > MAX_INLINE_BYTES {
            return Err(format!("inline data exceeds {MAX_INLINE_BYTES} bytes"));
        }
        Ok(Some(bytes))
    }

    fn check(&self) -> Result<(), String> {
        match (&self.locator, &self.data) {
            (Some(l), None) if !l.is_empty() => Ok(()),
            (None, Some(_)) => self.inline_bytes().map(|_| ()),
            (Some(_), None) => Err("locator is empty".into()),
            _ => Err("a resource needs exactly one of `locator` and `data`".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRequest {
    pub id: String,
    pub tool: String,
    pub query: Option<String>,
    pub resources: Vec<ResourcePayload>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
}

impl ToolRequest {
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("request id is empty".into());
        }
        if !crate::grammar::is_tool_name(&self.tool) {
            return Err(format!("`{}` is not a tool name", self.tool));
        }
        self.resources.iter().try_for_each(ResourcePayload::check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolResponse {
    pub id: String,
    pub status: ResponseStatus,
    #[serde(default)]
    pub observation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<ResourcePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    /// Tool-specific structured payload: detections, OCR boxes, transcripts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl ToolResponse {
    pub fn ok(id: &str, observation: &str) -> Self {
        Self {
            id: id.to_string(),
            status: ResponseStatus::Ok,
            observation: observation.to_string(),
            artifacts: Vec::new(),
            error: None,
            data: None,
        }
    }

    pub fn failure(id: &str, code: &str, message: &str) -> Self {
        Self {
            id: id.to_string(),
            status: ResponseStatus::Error,
            observation: String::new(),
            artifacts: Vec::new(),
            error: Some(ErrorBody {
                code: code.to_string(),
                message: message.to_string(),
            }),
            data: None,
        }
    }

    fn check(&self) -> Result<(), String> {
        self.artifacts.iter().try_for_each(ResourcePayload::check)
    }

    /// Status, error and artifacts agree with each other.
    pub fn check_consistency(&self) -> Result<(), String> {
        match (self.status, &self.error) {
            (ResponseStatus::Error, None) => Err("status is error but no error object is present".into()),
            (ResponseStatus::Error, Some(_)) if !self.artifacts.is_empty() => {
                Err("an error response carries artifacts".into())
            }
            (ResponseStatus::Error, Some(e)) if e.code.is_empty() || e.message.is_empty() => {
                Err("error code and message must be non-empty".into())
            }
            (ResponseStatus::Ok, Some(_)) => Err("status is ok but an error object is present".into()),
            _ => Ok(()),
        }
    }
}

/// A tool as advertised by a server: the registry contract plus the
/// protocol version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub protocol_version: String,
    pub name: String,
    pub description: String,
    pub query_kind: QueryKind,
    pub resource_kinds: Vec<ArgKind>,
    pub produces_artifact: bool,
    pub execution: Execution,
    #[serde(default)]
    pub multi_resource: bool,
}

impl ToolDescriptor {
    pub fn from_spec(spec: &ToolSpec) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION.to_string(),
            name: spec.name.clone(),
            description: spec.description.clone(),
            query_kind: spec.query_kind,
            resource_kinds: spec.resource_kinds.iter().copied().collect(),
            produces_artifact: spec.produces_artifact,
            execution: spec.execution,
            multi_resource: spec.multi_resource,
        }
    }

    pub fn to_spec(&self) -> Result<ToolSpec, ProtocolError> {
        let kinds: std::collections::BTreeSet<ArgKind> = self.resource_kinds.iter().copied().collect();
        if kinds.len() != self.resource_kinds.len() {
            return Err(ProtocolError::InvalidDescriptor(format!(
                "tool `{}` lists a resource kind twice",
                self.name
            )));
        }
        let spec = ToolSpec {
            name: self.name.clone(),
            description: self.description.clone(),
            query_kind: self.query_kind,
            resource_kinds: kinds,
            produces_artifact: self.produces_artifact,
            execution: self.execution,
            multi_resource: self.multi_resource,
        };
        spec.check()
            .map_err(|e| ProtocolError::InvalidDescriptor(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeResponse {
    pub protocol_version: String,
    pub tools: Vec<ToolDescriptor>,
}

impl DescribeResponse {
    fn check(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for t in &self.tools {
            if !seen.insert(t.name.as_str()) {
                return Err(format!("tool `{}` is advertised twice", t.name));
            }
        }
        Ok(())
    }
}

/// A stdio request line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum StdioMessage {
    Describe,
    Invoke { request: ToolRequest },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot decode message at byte {offset}: {message}")]
pub struct DecodeError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("server error {code}: {message}")]
    Server { code: String, message: String },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("incompatible protocol version `{found}` (expected `{PROTOCOL_VERSION}`)")]
    IncompatibleVersion { found: String },
    #[error("invalid tool descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("response id `{found}` does not match request id `{expected}`")]
    IdMismatch { expected: String, found: String },
    #[error("inconsistent response: {0}")]
    Inconsistent(String),
    #[error("inline payload of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut start = 0;
    for _ in 1..line {
        match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(p) => start += p + 1,
            None => return bytes.len(),
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

fn decode<T: DeserializeOwned>(bytes: &[u8], check: impl Fn(&T) -> Result<(), String>) -> Result<T, DecodeError> {
    let value: T = serde_json::from_slice(bytes).map_err(|e| DecodeError {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    check(&value).map_err(|message| DecodeError { offset: 0, message })?;
    Ok(value)
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("protocol types always serialize")
}

pub fn encode_request(req: &ToolRequest) -> Vec<u8> {
    encode(req)
}

pub fn decode_request(bytes: &[u8]) -> Result<ToolRequest, DecodeError> {
    decode(bytes, ToolRequest::check)
}

pub fn encode_response(resp: &ToolResponse) -> Vec<u8> {
    encode(resp)
}

/// Parses and schema-checks a response. Status consistency is checked
/// separately by [`ToolResponse::check_consistency`].
pub fn decode_response(bytes: &[u8]) -> Result<ToolResponse, DecodeError> {
    decode(bytes, ToolResponse::check)
}

pub fn encode_describe(resp: &DescribeResponse) -> Vec<u8> {
    encode(resp)
}

pub fn decode_describe(bytes: &[u8]) -> Result<DescribeResponse, DecodeError> {
    decode(bytes, DescribeResponse::check)
}

pub fn encode_stdio(msg: &StdioMessage) -> Vec<u8> {
    encode(msg)
}

pub fn decode_stdio(bytes: &[u8]) -> Result<StdioMessage, DecodeError> {
    decode(bytes, |m: &StdioMessage| match m {
        StdioMessage::Describe => Ok(()),
        StdioMessage::Invoke { request } => request.check(),
    })
}
