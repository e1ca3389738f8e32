use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::{
    decode_describe, decode_response, encode_request, Op, ProtocolError, ResourcePayload, ResponseStatus,
    ToolDescriptor, ToolEndpoint, ToolRequest, ToolResponse, DEFAULT_TIMEOUT, PROTOCOL_VERSION,
};
use crate::grammar::{ActionCall, GrammarError, ToolRegistry};
use crate::inspector::VisualResource;

/// Fetches the advertised tools. The version must match and every
/// descriptor must be a valid tool contract.
pub fn discover(endpoint: &dyn ToolEndpoint, timeout: Duration) -> Result<Vec<ToolDescriptor>, ProtocolError> {
    let bytes = endpoint.exchange(Op::Describe, b"{}", timeout)?;
    let resp = decode_describe(&bytes)?;
    if resp.protocol_version != PROTOCOL_VERSION {
        return Err(ProtocolError::IncompatibleVersion {
            found: resp.protocol_version,
        });
    }
    for d in &resp.tools {
        if d.protocol_version != PROTOCOL_VERSION {
            return Err(ProtocolError::IncompatibleVersion {
                found: d.protocol_version.clone(),
            });
        }
        d.to_spec()?;
    }
    Ok(resp.tools)
}

fn payload_for(resource: &VisualResource) -> ResourcePayload {
    let mut p =
        ResourcePayload::at(resource.kind, &resource.location).with_meta("description", resource.description.clone());
    if let Some(d) = resource.duration_s {
        p = p.with_meta("duration_s", d);
    }
    if let Some(a) = resource.has_audio {
        p = p.with_meta("has_audio", a);
    }
    if let Some(s) = resource.has_subtitles {
        p = p.with_meta("has_subtitles", s);
    }
    if let Some(span) = resource.clip_span {
        p = p.with_meta("start_s", span.start_s).with_meta("end_s", span.end_s);
    }
    p
}

/// One request/response exchange for a validated call. A response with
/// status `error` becomes [`ProtocolError::Server`].
pub fn invoke_external(
    endpoint: &dyn ToolEndpoint,
    id: &str,
    call: &ActionCall,
    resources: &[VisualResource],
    timeout: Duration,
) -> Result<ToolResponse, ProtocolError> {
    let request = ToolRequest {
        id: id.to_string(),
        tool: call.tool.clone(),
        query: call.query.clone(),
        resources: resources.iter().map(payload_for).collect(),
        options: BTreeMap::new(),
    };
    let bytes = endpoint.exchange(Op::Invoke, &encode_request(&request), timeout)?;
    let resp = decode_response(&bytes)?;
    if resp.id != request.id {
        return Err(ProtocolError::IdMismatch {
            expected: request.id,
            found: resp.id,
        });
    }
    resp.check_consistency().map_err(ProtocolError::Inconsistent)?;
    if resp.status == ResponseStatus::Error {
        let e = resp.error.unwrap_or_else(|| unreachable!("checked above"));
        return Err(ProtocolError::Server {
            code: e.code,
            message: e.message,
        });
    }
    Ok(resp)
}

/// Maps external tool names to the endpoints serving them.
pub struct ToolRouter {
    routes: BTreeMap<String, Arc<dyn ToolEndpoint>>,
    counter: AtomicU64,
    timeout: Duration,
}

impl Default for ToolRouter {
    fn default() -> Self {
        Self::new(DEFAULT_TIMEOUT)
    }
}

impl ToolRouter {
    pub fn new(timeout: Duration) -> Self {
        Self {
            routes: BTreeMap::new(),
            counter: AtomicU64::new(0),
            timeout,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn route(&mut self, tool: &str, endpoint: Arc<dyn ToolEndpoint>) {
        self.routes.insert(tool.to_string(), endpoint);
    }

    /// Discovers an endpoint's tools, merges them into `registry` (all or
    /// nothing) and routes them. Returns the added tool names.
    pub fn attach(
        &mut self,
        endpoint: Arc<dyn ToolEndpoint>,
        registry: &mut ToolRegistry,
    ) -> Result<Vec<String>, AttachError> {
        let descriptors = discover(endpoint.as_ref(), self.timeout)?;
        let specs = descriptors
            .iter()
            .map(ToolDescriptor::to_spec)
            .collect::<Result<Vec<_>, _>>()?;
        let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
        registry.merge(specs)?;
        for n in &names {
            self.route(n, endpoint.clone());
        }
        Ok(names)
    }

    pub fn endpoint(&self, tool: &str) -> Option<&Arc<dyn ToolEndpoint>> {
        self.routes.get(tool)
    }

    pub fn routed_tools(&self) -> impl Iterator<Item = &str> {
        self.routes.keys().map(String::as_str)
    }

    /// Request ids are `<tool>-<n>` with a per-router counter.
    pub fn next_id(&self, tool: &str) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        format!("{tool}-{n}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttachError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Reads `data.<key>` from a response as a typed value.
pub(crate) fn data_field<T: serde::de::DeserializeOwned>(resp: &ToolResponse, key: &str) -> Option<Result<T, String>> {
    let v: &Value = resp.data.as_ref()?.get(key)?;
    Some(serde_json::from_value(v.clone()).map_err(|e| format!("`data.{key}` is malformed: {e}")))
}
