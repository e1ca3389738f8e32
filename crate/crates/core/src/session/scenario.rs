//! Scenario files: a query, its resources with sidecars, the scripted
//! completions and the canned external tool replies.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::grammar::{parse_action, ActionCall, Execution, ToolRegistry};
use crate::inspector::{Inspector, MediaKind, ResourceDraft};
use crate::learner::OutcomeKind;
use crate::planner::{parse_planner_output, PlannerStep, ScriptEntry, ScriptedBackend};
use crate::protocol::{FixtureEntry, FixtureToolServer, ResponseStatus, ToolRouter};
use crate::tools::{check_lines, parse_sidecar, OcrBox, TranscriptLine};
use crate::trace::AblationMode;

use super::{plan_lines, ResourceInput};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioFormatError {
    /// 1-based line in the scenario file, 0 when unknown.
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ScenarioFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.field.as_str()) {
            (0, "") => f.write_str(&self.message),
            (0, field) => write!(f, "field `{field}`: {}", self.message),
            (line, "") => write!(f, "line {line}: {}", self.message),
            (line, field) => write!(f, "line {line}, field `{field}`: {}", self.message),
        }
    }
}

/// What a scenario is expected to produce in a given mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// Mode the expectation applies to; any mode when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<AblationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_attempts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioResource {
    pub kind: MediaKind,
    pub location: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_audio: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_subtitles: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles: Option<Vec<TranscriptLine>>,
    /// Sidecar file relative to the scenario file; read at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitles_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narration: Option<Vec<TranscriptLine>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr: Option<Vec<OcrBox>>,
}

impl ScenarioResource {
    pub fn to_input(&self) -> ResourceInput {
        let draft = match self.kind {
            MediaKind::Image => ResourceDraft::image(&self.location, &self.description),
            MediaKind::Video => ResourceDraft::video(
                &self.location,
                &self.description,
                self.duration_s.unwrap_or(0.0),
                self.has_audio.unwrap_or(false),
                self.has_subtitles.unwrap_or(self.subtitles.is_some()),
            ),
        };
        ResourceInput {
            draft,
            subtitles: self.subtitles.clone(),
            narration: self.narration.clone(),
            ocr: self.ocr.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub query: String,
    pub ground_truth: Option<String>,
    pub expected: Option<Expected>,
    pub resources: Vec<ScenarioResource>,
    pub llm: Vec<ScriptEntry>,
    pub tools: Vec<FixtureEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Spanned<String>,
    query: Spanned<String>,
    #[serde(default)]
    ground_truth: Option<String>,
    #[serde(default)]
    expected: Option<Expected>,
    #[serde(default)]
    resources: Vec<Spanned<ScenarioResource>>,
    #[serde(default)]
    llm: Vec<Spanned<ScriptEntry>>,
    #[serde(default)]
    tools: Vec<Spanned<FixtureEntry>>,
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, field: String, message: impl Into<String>) -> ScenarioFormatError {
        ScenarioFormatError {
            line: line_of(self.text, span),
            field,
            message: message.into(),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioFormatError {
        line: 0,
        field: String::new(),
        message: format!("cannot read scenario: {e}"),
    })?;
    Scenario::parse(&text, path.parent())
}

impl Scenario {
    /// Parses and validates a scenario document. `base_dir` resolves
    /// `subtitles_file` entries.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioFormatError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let field = Regex::new(r"`([A-Za-z_]+)`")
                .expect("static regex")
                .captures(e.message())
                .map(|c| c[1].to_string())
                .unwrap_or_default();
            ScenarioFormatError {
                line: e.span().map(|s| line_of(text, s)).unwrap_or(0),
                field,
                message: e.message().trim().to_string(),
            }
        })?;
        let cx = Ctx { text };
        if raw.name.get_ref().trim().is_empty() {
            return Err(cx.err(raw.name.span(), "name".into(), "the name is empty"));
        }
        if raw.query.get_ref().trim().is_empty() {
            return Err(cx.err(raw.query.span(), "query".into(), "the query is empty"));
        }
        if raw.ground_truth.as_deref().is_some_and(|g| g.trim().is_empty()) {
            return Err(ScenarioFormatError {
                line: 0,
                field: "ground_truth".into(),
                message: "the ground truth is empty".into(),
            });
        }

        let mut resources = Vec::new();
        let mut inspector = Inspector::new();
        for (i, r) in raw.resources.iter().enumerate() {
            let span = r.span();
            let mut res = r.get_ref().clone();
            let field = |f: &str| format!("resources[{i}].{f}");
            if let Some(file) = res.subtitles_file.take() {
                if res.subtitles.is_some() {
                    return Err(cx.err(
                        span,
                        field("subtitles_file"),
                        "give subtitles or subtitles_file, not both",
                    ));
                }
                let path = base_dir.unwrap_or(Path::new(".")).join(&file);
                let body = std::fs::read_to_string(&path).map_err(|e| {
                    cx.err(
                        span.clone(),
                        field("subtitles_file"),
                        format!("cannot read {file}: {e}"),
                    )
                })?;
                let lines =
                    parse_sidecar(&body).map_err(|e| cx.err(span.clone(), field("subtitles_file"), e.to_string()))?;
                res.subtitles = Some(lines);
            }
            for (name, lines) in [("subtitles", &res.subtitles), ("narration", &res.narration)] {
                if let Some(lines) = lines {
                    if res.kind != MediaKind::Video {
                        return Err(cx.err(span, field(name), "only videos carry time-stamped text"));
                    }
                    check_lines(lines).map_err(|e| cx.err(span.clone(), field(name), e.to_string()))?;
                }
            }
            if res.has_subtitles == Some(true) && res.subtitles.is_none() {
                return Err(cx.err(
                    span,
                    field("has_subtitles"),
                    "has_subtitles is set but no subtitles are given",
                ));
            }
            if res.has_subtitles == Some(false) && res.subtitles.is_some() {
                return Err(cx.err(
                    span,
                    field("has_subtitles"),
                    "subtitles are given but has_subtitles is false",
                ));
            }
            if let Some(boxes) = &res.ocr {
                if let Some(b) = boxes.iter().find(|b| !b.is_well_formed()) {
                    return Err(cx.err(span, field("ocr"), format!("box of \"{}\" is not well formed", b.text)));
                }
            }
            if res.kind == MediaKind::Video && res.has_subtitles.is_none() {
                res.has_subtitles = Some(res.subtitles.is_some());
            }
            inspector
                .register_resource(res.to_input().draft)
                .map_err(|e| cx.err(span, format!("resources[{i}]"), e.to_string()))?;
            resources.push(res);
        }

        let external: HashSet<String> = FixtureToolServer::external_tools().tool_names().into_iter().collect();
        let mut tools = Vec::new();
        for (i, t) in raw.tools.iter().enumerate() {
            let entry = t.get_ref();
            if !external.contains(&entry.tool) {
                return Err(cx.err(
                    t.span(),
                    format!("tools[{i}].tool"),
                    format!("`{}` is not an external tool", entry.tool),
                ));
            }
            if entry.status == ResponseStatus::Error && entry.error_code.is_none() {
                return Err(cx.err(
                    t.span(),
                    format!("tools[{i}].error_code"),
                    "error replies need an error_code",
                ));
            }
            tools.push(entry.clone());
        }

        let registry = ToolRegistry::standard();
        let llm: Vec<ScriptEntry> = raw.llm.iter().map(|e| e.get_ref().clone()).collect();
        let actions: Vec<(usize, ActionCall)> = raw
            .llm
            .iter()
            .enumerate()
            .flat_map(|(i, e)| scripted_actions(e.get_ref()).into_iter().map(move |c| (i, c)))
            .collect();
        let ocr_boxes: usize = resources.iter().filter_map(|r| r.ocr.as_ref()).map(Vec::len).sum();
        let capacity: usize = actions
            .iter()
            .filter_map(|(_, c)| registry.get(&c.tool))
            .filter(|spec| spec.produces_artifact)
            .map(|spec| match (spec.execution, spec.name.as_str()) {
                (Execution::External, name) => tools
                    .iter()
                    .filter(|t| t.tool == name)
                    .map(|t| t.artifacts.len())
                    .max()
                    .unwrap_or(0)
                    .max(1),
                (_, "text_ground") => ocr_boxes.max(1),
                _ => 1,
            })
            .sum();
        let bound = resources.len() + capacity;
        for (i, e) in raw.llm.iter().enumerate() {
            let role = &e.get_ref().role;
            let known = matches!(role.as_str(), "planner" | "plan" | "evaluator" | "judge")
                || role.strip_prefix("tool:").is_some_and(|t| registry.contains(t));
            if !known {
                return Err(cx.err(e.span(), format!("llm[{i}].role"), format!("unknown role `{role}`")));
            }
        }
        for (i, call) in &actions {
            if let Some(&bad) = call.resources.iter().find(|&&r| r >= bound) {
                let span = raw.llm[*i].span();
                let needle = format!("visual[{bad}]");
                let at = text[span.start..].find(&needle).map_or(span.start, |k| span.start + k);
                return Err(cx.err(
                    at..at,
                    format!("llm[{i}].reply"),
                    format!(
                        "action {} references visual[{bad}], but at most {bound} resources can exist",
                        call.render()
                    ),
                ));
            }
        }

        Ok(Scenario {
            name: raw.name.into_inner(),
            query: raw.query.into_inner(),
            ground_truth: raw.ground_truth,
            expected: raw.expected,
            resources,
            llm,
            tools,
        })
    }

    pub fn inputs(&self) -> Vec<ResourceInput> {
        self.resources.iter().map(ScenarioResource::to_input).collect()
    }

    /// A fresh backend replaying the script from the start.
    pub fn backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(self.llm.clone())
    }

    pub fn tool_server(&self) -> FixtureToolServer {
        FixtureToolServer::external_tools().with_entries(self.tools.clone())
    }

    /// Router sending every external tool to this scenario's fixtures.
    pub fn fixture_router(&self) -> ToolRouter {
        let server = Arc::new(self.tool_server());
        let mut router = ToolRouter::default();
        for name in server.tool_names() {
            router.route(&name, server.clone());
        }
        router
    }
}

/// Parseable actions inside a scripted planner or plan reply.
fn scripted_actions(entry: &ScriptEntry) -> Vec<ActionCall> {
    match entry.role.as_str() {
        "planner" => match parse_planner_output(&entry.reply) {
            Ok(PlannerStep::Step { action_raw, .. }) => parse_action(&action_raw).into_iter().collect(),
            _ => Vec::new(),
        },
        "plan" => plan_lines(&entry.reply)
            .iter()
            .filter_map(|l| parse_action(l).ok())
            .collect(),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
name = "street"
query = "How many cars are there?"
ground_truth = "2"

[[resources]]
kind = "image"
location = "street.png"
description = "a street"

[[llm]]
role = "planner"
reply = """
Thought: count the cars
Action: object_detect("car", visual[0])"""

[[llm]]
role = "planner"
reply = "Final Answer: 2"

[[tools]]
tool = "object_detect"
observation = "2 cars"
"#;

    #[test]
    fn parses() {
        let s = Scenario::parse(GOOD, None).unwrap();
        assert_eq!(s.name, "street");
        assert_eq!(s.llm.len(), 2);
        assert_eq!(s.resources[0].kind, MediaKind::Image);
    }

    #[test]
    fn undeclared_index_is_rejected_with_line() {
        let bad = GOOD.replace(
            "Action: object_detect(\"car\", visual[0])",
            "Action: object_detect(\"car\", visual[3])",
        );
        let e = Scenario::parse(&bad, None).unwrap_err();
        assert_eq!(e.field, "llm[0].reply");
        assert!(e.message.contains("visual[3]"), "{e}");
        assert_eq!(e.line, 15);
    }

    #[test]
    fn missing_field() {
        let e = Scenario::parse("name = \"x\"\n", None).unwrap_err();
        assert_eq!(e.field, "query");
    }

    #[test]
    fn unknown_field_has_line() {
        let e = Scenario::parse(&GOOD.replace("description = \"a street\"", "colour = \"red\""), None).unwrap_err();
        assert_eq!(e.line, 9);
        assert_eq!(e.field, "colour");
    }

    #[test]
    fn video_needs_duration() {
        let text = GOOD.replace("kind = \"image\"", "kind = \"video\"");
        let e = Scenario::parse(&text, None).unwrap_err();
        assert_eq!(e.field, "resources[0]");
    }
}
