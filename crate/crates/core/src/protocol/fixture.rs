use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    decode_request, decode_stdio, encode_describe, encode_response, DescribeResponse, Op, ProtocolError,
    ResourcePayload, ResponseStatus, StdioMessage, ToolDescriptor, ToolEndpoint, ToolRequest, ToolResponse,
    PROTOCOL_VERSION,
};
use crate::grammar::{standard_specs, Execution, ToolSpec};
use crate::inspector::MediaKind;

impl Default for ResponseStatus {
    fn default() -> Self {
        ResponseStatus::Ok
    }
}

/// One canned reply. `query` and `locator` narrow the match when set; the
/// most specific matching entry wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator: Option<String>,
    #[serde(default)]
    pub status: ResponseStatus,
    #[serde(default)]
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<ResourcePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    /// Simulated processing time, for timeout tests.
    #[serde(default)]
    pub delay_ms: u64,
}

impl FixtureEntry {
    pub fn ok(tool: &str, observation: &str) -> Self {
        Self {
            tool: tool.to_string(),
            query: None,
            locator: None,
            status: ResponseStatus::Ok,
            observation: observation.to_string(),
            data: None,
            artifacts: Vec::new(),
            error_code: None,
            error_message: None,
            delay_ms: 0,
        }
    }

    pub fn error(tool: &str, code: &str, message: &str) -> Self {
        Self {
            status: ResponseStatus::Error,
            error_code: Some(code.to_string()),
            error_message: Some(message.to_string()),
            ..Self::ok(tool, "")
        }
    }

    pub fn for_query(mut self, query: &str) -> Self {
        self.query = Some(query.to_string());
        self
    }

    pub fn for_locator(mut self, locator: &str) -> Self {
        self.locator = Some(locator.to_string());
        self
    }

    pub fn with_data(mut self, data: Value) -> Self {
        self.data = Some(data);
        self
    }

    pub fn with_artifact(mut self, artifact: ResourcePayload) -> Self {
        self.artifacts.push(artifact);
        self
    }

    pub fn delayed(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    fn specificity(&self, req: &ToolRequest) -> Option<u8> {
        if self.tool != req.tool {
            return None;
        }
        let mut score = 0;
        if let Some(q) = &self.query {
            if req.query.as_deref().map(str::trim) != Some(q.trim()) {
                return None;
            }
            score += 2;
        }
        if let Some(l) = &self.locator {
            if !req.resources.iter().any(|r| r.locator.as_deref() == Some(l.as_str())) {
                return None;
            }
            score += 1;
        }
        Some(score)
    }

    fn respond(&self, id: &str) -> ToolResponse {
        match self.status {
            ResponseStatus::Ok => ToolResponse {
                artifacts: self.artifacts.clone(),
                data: self.data.clone(),
                ..ToolResponse::ok(id, &self.observation)
            },
            ResponseStatus::Error => ToolResponse::failure(
                id,
                self.error_code.as_deref().unwrap_or("model_failure"),
                self.error_message.as_deref().unwrap_or("the tool failed"),
            ),
        }
    }
}

/// Frames per second sampled for video narration.
pub const NARRATION_FPS: f64 = 1.0 / 3.0;

/// Frame timestamps `0, 1/fps, 2/fps, ...` below `duration_s`, rounded to
/// microseconds. `None` unless both arguments are positive and finite.
pub fn narration_schedule(duration_s: f64, fps: f64) -> Option<Vec<f64>> {
    let valid = |x: f64| x.is_finite() && x > 0.0;
    if !valid(duration_s) || !valid(fps) {
        return None;
    }
    let mut out = Vec::new();
    for k in 0u64.. {
        let t = (k as f64 / fps * 1e6).round() / 1e6;
        if t >= duration_s {
            break;
        }
        out.push(t);
    }
    Some(out)
}

/// In-process tool server that answers from canned entries. It backs
/// scripted scenarios and doubles as the reference server in tests.
#[derive(Debug, Clone)]
pub struct FixtureToolServer {
    version: String,
    descriptors: Vec<ToolDescriptor>,
    entries: Vec<FixtureEntry>,
}

impl FixtureToolServer {
    pub fn new<I: IntoIterator<Item = ToolSpec>>(specs: I) -> Self {
        Self {
            version: PROTOCOL_VERSION.to_string(),
            descriptors: specs.into_iter().map(|s| ToolDescriptor::from_spec(&s)).collect(),
            entries: Vec::new(),
        }
    }

    /// Advertises the six model-backed tools, with no canned replies.
    pub fn external_tools() -> Self {
        Self::new(
            standard_specs()
                .into_iter()
                .filter(|s| s.execution == Execution::External),
        )
    }

    /// The model-backed tools with generic deterministic replies for any input.
    pub fn fake_adapter() -> Self {
        let duration = 12.0;
        let narration: Vec<Value> = narration_schedule(duration, NARRATION_FPS)
            .expect("positive arguments")
            .into_iter()
            .map(|t| json!({"start_s": t, "end_s": (t + 1.0 / NARRATION_FPS).min(duration), "text": "a frame of the video"}))
            .collect();
        Self::external_tools().with_entries([
            FixtureEntry::ok("caption", "an image"),
            FixtureEntry::ok("video_narration", "narration of 4 frames").with_data(json!({ "narration": narration })),
            FixtureEntry::ok("object_detect", "no objects detected").with_data(json!({ "detections": [] })),
            FixtureEntry::ok("text_detect", "no text detected").with_data(json!({ "ocr": [] })),
            FixtureEntry::ok("asr", "transcribed 1 line").with_data(json!({
                "transcript": [{"start_s": 0.0, "end_s": 1.0, "text": "hello"}]
            })),
            FixtureEntry::ok("region_ground", "located the region").with_artifact(
                ResourcePayload::at(MediaKind::Image, "fixture://region.png")
                    .with_meta("description", "the located region"),
            ),
        ])
    }

    pub fn with_version(mut self, version: &str) -> Self {
        self.version = version.to_string();
        for d in &mut self.descriptors {
            d.protocol_version = version.to_string();
        }
        self
    }

    pub fn with_entries<I: IntoIterator<Item = FixtureEntry>>(mut self, entries: I) -> Self {
        self.entries.extend(entries);
        self
    }

    pub fn add(&mut self, entry: FixtureEntry) {
        self.entries.push(entry);
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.name.clone()).collect()
    }

    pub fn describe(&self) -> DescribeResponse {
        DescribeResponse {
            protocol_version: self.version.clone(),
            tools: self.descriptors.clone(),
        }
    }

    fn find(&self, req: &ToolRequest) -> Option<&FixtureEntry> {
        let mut best: Option<(u8, &FixtureEntry)> = None;
        for e in &self.entries {
            if let Some(score) = e.specificity(req) {
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, e));
                }
            }
        }
        best.map(|(_, e)| e)
    }

    pub fn respond(&self, req: &ToolRequest) -> ToolResponse {
        if !self.descriptors.iter().any(|d| d.name == req.tool) {
            return ToolResponse::failure(&req.id, "unknown_tool", &format!("no tool named `{}`", req.tool));
        }
        match self.find(req) {
            Some(entry) => entry.respond(&req.id),
            None => ToolResponse::failure(
                &req.id,
                "no_fixture",
                &format!(
                    "no canned response for {}({})",
                    req.tool,
                    req.query
                        .as_deref()
                        .map(|q| format!("{q:?}"))
                        .unwrap_or_else(|| "None".into())
                ),
            ),
        }
    }

    /// Answers one stdio request line with one response line (no newline).
    pub fn handle_line(&self, line: &str) -> String {
        let bytes = match decode_stdio(line.trim().as_bytes()) {
            Ok(StdioMessage::Describe) => encode_describe(&self.describe()),
            Ok(StdioMessage::Invoke { request }) => encode_response(&self.respond(&request)),
            Err(e) => encode_response(&ToolResponse::failure("", "bad_request", &e.to_string())),
        };
        String::from_utf8(bytes).expect("JSON is UTF-8")
    }

    /// Answers an HTTP request body posted to `path`.
    pub fn handle_http(&self, path: &str, body: &[u8]) -> (u16, Vec<u8>) {
        match path {
            "/describe" => (200, encode_describe(&self.describe())),
            "/invoke" => match decode_request(body) {
                Ok(req) => (200, encode_response(&self.respond(&req))),
                Err(e) => (
                    400,
                    encode_response(&ToolResponse::failure("", "bad_request", &e.to_string())),
                ),
            },
            _ => (404, encode_response(&ToolResponse::failure("", "not_found", path))),
        }
    }
}

impl ToolEndpoint for FixtureToolServer {
    fn label(&self) -> String {
        "fixtures".into()
    }

    fn exchange(&self, op: Op, body: &[u8], timeout: Duration) -> Result<Vec<u8>, ProtocolError> {
        match op {
            Op::Describe => Ok(encode_describe(&self.describe())),
            Op::Invoke => {
                let req = decode_request(body)?;
                if let Some(e) = self.find(&req) {
                    let delay = Duration::from_millis(e.delay_ms);
                    if delay > timeout {
                        return Err(ProtocolError::Timeout(timeout));
                    }
                }
                Ok(encode_response(&self.respond(&req)))
            }
        }
    }
}
