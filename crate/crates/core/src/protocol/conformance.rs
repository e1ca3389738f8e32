use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::time::Duration;

use serde::Serialize;

use super::{
    decode_describe, decode_response, encode_request, Op, ResourcePayload, ToolEndpoint, ToolRequest, PROTOCOL_VERSION,
};
use crate::grammar::{ArgKind, QueryKind};
use crate::inspector::MediaKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub endpoint: String,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn record(&mut self, name: &str, result: Result<(), String>) -> bool {
        let passed = result.is_ok();
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail: result.err().unwrap_or_default(),
        });
        passed
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                writeln!(f, "{mark} {}", c.name)?;
            } else {
                writeln!(f, "{mark} {}: {}", c.name, c.detail)?;
            }
        }
        Ok(())
    }
}

fn probe_resources(kinds: &[ArgKind]) -> Vec<ResourcePayload> {
    if kinds.contains(&ArgKind::Image) {
        vec![ResourcePayload::at(MediaKind::Image, "conformance/probe.png").with_meta("description", "probe image")]
    } else if kinds.contains(&ArgKind::Video) {
        vec![ResourcePayload::at(MediaKind::Video, "conformance/probe.mp4")
            .with_meta("description", "probe video")
            .with_meta("duration_s", 10.0)
            .with_meta("has_audio", true)
            .with_meta("has_subtitles", false)]
    } else {
        Vec::new()
    }
}

/// Runs describe, then one probe invoke per advertised tool, and records a
/// check per property. Failures are report entries, never errors.
pub fn conformance_check(endpoint: &dyn ToolEndpoint, timeout: Duration) -> ConformanceReport {
    let mut report = ConformanceReport {
        endpoint: endpoint.label(),
        checks: Vec::new(),
    };
    let described = endpoint
        .exchange(Op::Describe, b"{}", timeout)
        .map_err(|e| e.to_string())
        .and_then(|bytes| decode_describe(&bytes).map_err(|e| e.to_string()));
    let describe = match described {
        Ok(d) => {
            report.record("describe", Ok(()));
            d
        }
        Err(e) => {
            report.record("describe", Err(e));
            return report;
        }
    };
    report.record(
        "protocol_version",
        if describe.protocol_version == PROTOCOL_VERSION {
            Ok(())
        } else {
            Err(format!("server speaks `{}`", describe.protocol_version))
        },
    );
    let mut seen = HashSet::new();
    let dupes: Vec<&str> = describe
        .tools
        .iter()
        .filter(|t| !seen.insert(t.name.as_str()))
        .map(|t| t.name.as_str())
        .collect();
    report.record(
        "unique_names",
        if dupes.is_empty() {
            Ok(())
        } else {
            Err(format!("duplicated: {}", dupes.join(", ")))
        },
    );
    for tool in &describe.tools {
        let name = &tool.name;
        let spec_ok = tool.to_spec().map(|_| ()).map_err(|e| e.to_string()).and_then(|_| {
            if tool.protocol_version == PROTOCOL_VERSION {
                Ok(())
            } else {
                Err(format!("descriptor version `{}`", tool.protocol_version))
            }
        });
        report.record(&format!("descriptor:{name}"), spec_ok);

        let request = ToolRequest {
            id: format!("conformance-{name}"),
            tool: name.clone(),
            query: match tool.query_kind {
                QueryKind::RequiredText => Some("conformance probe".into()),
                QueryKind::NoneLiteral => None,
            },
            resources: probe_resources(&tool.resource_kinds),
            options: BTreeMap::new(),
        };
        let bytes = match endpoint.exchange(Op::Invoke, &encode_request(&request), timeout) {
            Ok(b) => b,
            Err(e) => {
                report.record(&format!("invoke:{name}"), Err(e.to_string()));
                continue;
            }
        };
        report.record(&format!("invoke:{name}"), Ok(()));
        let resp = match decode_response(&bytes) {
            Ok(r) => {
                report.record(&format!("schema:{name}"), Ok(()));
                r
            }
            Err(e) => {
                report.record(&format!("schema:{name}"), Err(e.to_string()));
                continue;
            }
        };
        report.record(
            &format!("id_echo:{name}"),
            if resp.id == request.id {
                Ok(())
            } else {
                Err(format!("sent `{}`, got `{}`", request.id, resp.id))
            },
        );
        report.record(&format!("status:{name}"), resp.check_consistency());
    }
    report
}
