use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActionCall, ArgKind, QueryKind, ToolRegistry};
use crate::inspector::MediaKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    UnknownTool,
    Arity,
    QueryKind,
    BadIndex,
    KindMismatch,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationCode::UnknownTool => "unknown_tool",
            ViolationCode::Arity => "arity",
            ViolationCode::QueryKind => "query_kind",
            ViolationCode::BadIndex => "bad_index",
            ViolationCode::KindMismatch => "kind_mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    fn push(&mut self, code: ViolationCode, message: String) {
        self.violations.push(Violation { code, message });
    }
}

/// Legality check for a call against the registry and the current resource kinds
/// (indexed by resource index). Every failure is reported, not only the first.
pub fn validate_call(call: &ActionCall, registry: &ToolRegistry, catalog: &[MediaKind]) -> ValidationReport {
    let mut report = ValidationReport::default();

    // Index checks do not depend on the tool.
    for &idx in &call.resources {
        if idx >= catalog.len() {
            report.push(
                ViolationCode::BadIndex,
                format!(
                    "{} references visual[{idx}], but only {} visual resource(s) exist",
                    call.tool,
                    catalog.len()
                ),
            );
        }
    }

    let Some(spec) = registry.get(&call.tool) else {
        report.push(
            ViolationCode::UnknownTool,
            format!("there is no tool named {}", call.tool),
        );
        return report;
    };

    match (spec.query_kind, &call.query) {
        (QueryKind::RequiredText, None) => report.push(
            ViolationCode::QueryKind,
            format!("{} requires a quoted text query, not None", spec.name),
        ),
        (QueryKind::RequiredText, Some(q)) if q.trim().is_empty() => report.push(
            ViolationCode::QueryKind,
            format!("{} requires a non-empty text query", spec.name),
        ),
        (QueryKind::NoneLiteral, Some(_)) => report.push(
            ViolationCode::QueryKind,
            format!("{} takes None as its query", spec.name),
        ),
        _ => {}
    }

    if call.resources.is_empty() {
        if !spec.accepts_empty() {
            report.push(
                ViolationCode::Arity,
                format!("{} needs a visual input (visual[i]), got []", spec.name),
            );
        }
    } else if !spec.accepts_visual() {
        report.push(
            ViolationCode::Arity,
            format!("{} takes no visual input; pass []", spec.name),
        );
    } else {
        if call.resources.len() > 1 && !spec.multi_resource {
            report.push(
                ViolationCode::Arity,
                format!(
                    "{} accepts a single visual input, got {}",
                    spec.name,
                    call.resources.len()
                ),
            );
        }
        for &idx in &call.resources {
            let Some(kind) = catalog.get(idx) else { continue };
            let arg = match kind {
                MediaKind::Image => ArgKind::Image,
                MediaKind::Video => ArgKind::Video,
            };
            if !spec.resource_kinds.contains(&arg) {
                report.push(
                    ViolationCode::KindMismatch,
                    format!(
                        "{} accepts {}; visual[{idx}] is {} {kind}",
                        spec.name,
                        spec.accepted_kinds_phrase(),
                        kind.article()
                    ),
                );
            }
        }
    }

    report
}
