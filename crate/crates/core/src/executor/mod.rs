//! Runs one action: legality check, dispatch, post-processing.
//!
//! Nothing here returns an error to the caller. Every failure is rendered as
//! an error observation so the planner can correct itself.

use std::path::Path;

use thiserror::Error;

use crate::grammar::{validate_call, ActionCall, Execution, ToolRegistry, ToolSpec};
use crate::inspector::{Inspector, MediaKind, ResourceDraft, VisualResource};
use crate::planner::LlmBackend;
use crate::protocol::{data_field, invoke_external, ProtocolError, ResourcePayload, ToolResponse, ToolRouter};
use crate::templates::{fill, Templates};
use crate::tools::{
    check_lines, count_objects, fmt_box, fmt_secs, ground_from_transcript, parse_temporal_query, parse_text_query,
    reason_over_text, render_numbered, temporal_reason, text_ground, Detection, GroundOutcome, Interval, OcrBox,
    ReasonKind, TemporalAnswer, TemporalWord, ToolError, TranscriptKind, TranscriptLine,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultStatus {
    Ok,
    Error,
}

/// Tool-family specific result data.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Free text: captions, reason answers, generic external observations.
    Text(String),
    Detections {
        label: String,
        detections: Vec<Detection>,
    },
    Ocr {
        index: usize,
        boxes: Vec<OcrBox>,
    },
    /// ASR output, stored as subtitles.
    Transcript {
        index: usize,
        lines: Vec<TranscriptLine>,
    },
    Narration {
        index: usize,
        lines: Vec<TranscriptLine>,
    },
    Ground {
        index: usize,
        outcome: GroundOutcome,
    },
    Temporal {
        index: usize,
        word: TemporalWord,
        answer: TemporalAnswer,
    },
    TextMatches {
        index: usize,
        text: String,
        boxes: Vec<OcrBox>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolResult {
    pub status: ResultStatus,
    pub payload: Option<Payload>,
    /// New visual resources to register.
    pub artifacts: Vec<ResourceDraft>,
    /// Error text, already phrased for the planner.
    pub message: String,
}

impl ToolResult {
    fn ok(payload: Payload) -> Self {
        Self {
            status: ResultStatus::Ok,
            payload: Some(payload),
            artifacts: Vec::new(),
            message: String::new(),
        }
    }

    fn with_artifacts(mut self, artifacts: Vec<ResourceDraft>) -> Self {
        self.artifacts = artifacts;
        self
    }

    fn error(message: String) -> Self {
        Self {
            status: ResultStatus::Error,
            payload: None,
            artifacts: Vec::new(),
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub text: String,
    pub produced_indices: Vec<usize>,
}

impl Observation {
    fn text_only(text: String) -> Self {
        Self {
            text,
            produced_indices: Vec::new(),
        }
    }
}

/// How a validated call will run.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub route: Execution,
    pub endpoint: Option<String>,
    pub resolved_inputs: Vec<VisualResource>,
    /// Transcript handed to prompt-backed tools.
    pub transcript: Option<Vec<TranscriptLine>>,
    /// OCR boxes handed to text grounding.
    pub ocr: Option<Vec<OcrBox>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("{tool} needs the {sidecar} of visual[{index}]")]
    MissingSidecar {
        tool: String,
        sidecar: &'static str,
        index: usize,
        hint: String,
    },
    #[error("no endpoint serves tool {0}")]
    NoEndpoint(String),
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("visual[{0}] does not exist")]
    NotFound(usize),
}

/// Backends and endpoints tools may call.
pub struct Clients<'a> {
    pub backend: &'a dyn LlmBackend,
    pub router: &'a ToolRouter,
    pub templates: &'a Templates,
}

/// Per-step execution settings.
#[derive(Debug, Clone, Default)]
pub struct StepContext {
    /// Context for knowledge_reason: the reasoning so far.
    pub knowledge_context: String,
    /// When false, produced artifacts are reported but not registered.
    pub register_artifacts: bool,
    /// Edit-distance threshold override for text grounding.
    pub text_threshold: Option<usize>,
}

impl StepContext {
    pub fn new(knowledge_context: String) -> Self {
        Self {
            knowledge_context,
            register_artifacts: true,
            text_threshold: None,
        }
    }
}

fn needs(tool: &str) -> Option<&'static str> {
    match tool {
        "narration_ground" | "narration_reason" => Some("narration"),
        "subtitle_ground" | "subtitle_reason" => Some("subtitles"),
        "text_ground" => Some("OCR results"),
        _ => None,
    }
}

pub fn map_to_executable(
    call: &ActionCall,
    registry: &ToolRegistry,
    inspector: &Inspector,
    router: &ToolRouter,
) -> Result<DispatchPlan, DispatchError> {
    let spec = registry
        .get(&call.tool)
        .ok_or_else(|| DispatchError::UnknownTool(call.tool.clone()))?;
    let resolved_inputs = call
        .resources
        .iter()
        .map(|&i| inspector.get(i).cloned().map_err(|_| DispatchError::NotFound(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut plan = DispatchPlan {
        route: spec.execution,
        endpoint: None,
        resolved_inputs,
        transcript: None,
        ocr: None,
    };
    if spec.execution == Execution::External {
        let ep = router
            .endpoint(&call.tool)
            .ok_or_else(|| DispatchError::NoEndpoint(call.tool.clone()))?;
        plan.endpoint = Some(ep.label());
        return Ok(plan);
    }
    if let (Some(sidecar), Some(first)) = (needs(&call.tool), plan.resolved_inputs.first()) {
        let index = first.index;
        let missing = |hint: String| DispatchError::MissingSidecar {
            tool: call.tool.clone(),
            sidecar,
            index,
            hint,
        };
        match sidecar {
            "narration" => {
                plan.transcript = Some(
                    inspector
                        .narration(index)
                        .ok_or_else(|| missing(format!("Run video_narration on visual[{index}] first.")))?,
                )
            }
            "subtitles" => {
                plan.transcript = Some(inspector.subtitles(index).ok_or_else(|| {
                    missing(if first.has_audio == Some(true) {
                        format!("Run asr(None, visual[{index}]) first.")
                    } else {
                        "The video has neither subtitles nor audio.".to_string()
                    })
                })?)
            }
            _ => {
                plan.ocr = Some(
                    inspector
                        .ocr(index)
                        .map(<[OcrBox]>::to_vec)
                        .ok_or_else(|| missing(format!("Run text_detect(None, visual[{index}]) first.")))?,
                )
            }
        }
    }
    Ok(plan)
}

/// Locator without any media fragment, and the start offset that fragment
/// encoded.
fn split_fragment(location: &str) -> (&str, f64) {
    match location.split_once('#') {
        Some((base, frag)) => {
            let offset = frag
                .strip_prefix("t=")
                .and_then(|t| t.split(',').next())
                .and_then(|s| s.parse::<f64>().ok())
                .unwrap_or(0.0);
            (base, offset)
        }
        None => (location, 0.0),
    }
}

fn clip_draft(
    inspector: &Inspector,
    parent: &VisualResource,
    tool: &str,
    span: Interval,
    description: String,
) -> ResourceDraft {
    let (base, offset) = split_fragment(&parent.location);
    let locator = format!(
        "{base}#t={},{}",
        fmt_secs(offset + span.start_s),
        fmt_secs(offset + span.end_s)
    );
    ResourceDraft::video(
        &locator,
        &description,
        span.duration(),
        parent.has_audio.unwrap_or(false),
        inspector.subtitles(parent.index).is_some() || parent.has_subtitles == Some(true),
    )
    .derived_from(parent.index, tool)
    .with_span(span)
}

fn crop_draft(parent: &VisualResource, tool: &str, b: &[u32; 4], description: String) -> ResourceDraft {
    let (base, _) = split_fragment(&parent.location);
    let locator = format!(
        "{base}#xywh={},{},{},{}",
        b[0],
        b[1],
        b[2].saturating_sub(b[0]),
        b[3].saturating_sub(b[1])
    );
    ResourceDraft::image(&locator, &description).derived_from(parent.index, tool)
}

fn tool_failed(t: &Templates, tool: &str, detail: &str) -> String {
    fill(&t.observations.tool_failed, &[("tool", tool), ("detail", detail)])
}

fn protocol_failure(t: &Templates, tool: &str, err: &ProtocolError) -> String {
    match err {
        ProtocolError::Server { code, message } => tool_failed(t, tool, &format!("{code}: {message}")),
        other => fill(
            &t.observations.transport,
            &[("tool", tool), ("detail", &other.to_string())],
        ),
    }
}

fn meta_f64(p: &ResourcePayload, key: &str) -> Option<f64> {
    p.meta.get(key).and_then(|v| v.as_f64())
}

fn meta_bool(p: &ResourcePayload, key: &str) -> Option<bool> {
    p.meta.get(key).and_then(|v| v.as_bool())
}

/// Turns a returned artifact into a draft, writing inline bytes to the
/// session workspace under the index it will receive.
fn artifact_draft(
    inspector: &Inspector,
    parent: Option<&VisualResource>,
    tool: &str,
    artifact: &ResourcePayload,
    index: usize,
) -> Result<ResourceDraft, String> {
    let location = match (&artifact.locator, artifact.inline_bytes()?) {
        (Some(l), _) => l.clone(),
        (None, Some(bytes)) => {
            let ext = artifact
                .meta
                .get("ext")
                .and_then(|v| v.as_str())
                .unwrap_or(match artifact.kind {
                    MediaKind::Image => "png",
                    MediaKind::Video => "mp4",
                });
            let path = inspector
                .artifact_path(index, ext)
                .ok_or("the tool returned inline data but the session has no workspace")?;
            write_artifact(&path, &bytes)?;
            path.to_string_lossy().into_owned()
        }
        (None, None) => return Err("artifact has neither locator nor data".into()),
    };
    let description = artifact
        .meta
        .get("description")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("output of {tool}"));
    let mut draft = match artifact.kind {
        MediaKind::Image => ResourceDraft::image(&location, &description),
        MediaKind::Video => {
            let span = match (meta_f64(artifact, "start_s"), meta_f64(artifact, "end_s")) {
                (Some(a), Some(b)) => Some(Interval { start_s: a, end_s: b }),
                _ => None,
            };
            let duration = meta_f64(artifact, "duration_s")
                .or(span.map(|s| s.duration()))
                .or(parent.and_then(|p| p.duration_s))
                .unwrap_or(0.0);
            let mut d = ResourceDraft::video(
                &location,
                &description,
                duration,
                meta_bool(artifact, "has_audio").unwrap_or(false),
                meta_bool(artifact, "has_subtitles").unwrap_or(false),
            );
            if parent.is_some_and(|p| p.kind == MediaKind::Video) {
                d.clip_span = span;
            }
            d
        }
    };
    if let Some(p) = parent {
        draft = draft.derived_from(p.index, tool);
    }
    Ok(draft)
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_external(call: &ActionCall, plan: &DispatchPlan, inspector: &Inspector, clients: &Clients<'_>) -> ToolResult {
    let t = clients.templates;
    let Some(endpoint) = clients.router.endpoint(&call.tool) else {
        return ToolResult::error(protocol_failure(
            t,
            &call.tool,
            &ProtocolError::Transport("no endpoint serves this tool".into()),
        ));
    };
    let id = clients.router.next_id(&call.tool);
    let resp: ToolResponse = match invoke_external(
        endpoint.as_ref(),
        &id,
        call,
        &plan.resolved_inputs,
        clients.router.timeout(),
    ) {
        Ok(r) => r,
        Err(e) => return ToolResult::error(protocol_failure(t, &call.tool, &e)),
    };
    let first = plan.resolved_inputs.first();
    let index = first.map(|r| r.index).unwrap_or(0);
    let bad_data = |e: String| ToolResult::error(tool_failed(t, &call.tool, &e));
    let payload = match call.tool.as_str() {
        "object_detect" => match data_field::<Vec<Detection>>(&resp, "detections") {
            Some(Ok(detections)) => Payload::Detections {
                label: call.query.clone().unwrap_or_default(),
                detections,
            },
            Some(Err(e)) => return bad_data(e),
            None => Payload::Text(resp.observation.clone()),
        },
        "text_detect" => match data_field::<Vec<OcrBox>>(&resp, "ocr") {
            Some(Ok(boxes)) if boxes.iter().all(OcrBox::is_well_formed) => Payload::Ocr { index, boxes },
            Some(Ok(_)) => return bad_data("an OCR box is not well formed".into()),
            Some(Err(e)) => return bad_data(e),
            None => Payload::Text(resp.observation.clone()),
        },
        "asr" | "video_narration" => {
            let key = if call.tool == "asr" { "transcript" } else { "narration" };
            match data_field::<Vec<TranscriptLine>>(&resp, key) {
                Some(Ok(lines)) => {
                    if let Err(e) = check_lines(&lines) {
                        return bad_data(e.to_string());
                    }
                    if call.tool == "asr" {
                        Payload::Transcript { index, lines }
                    } else {
                        Payload::Narration { index, lines }
                    }
                }
                Some(Err(e)) => return bad_data(e),
                None => Payload::Text(resp.observation.clone()),
            }
        }
        _ => Payload::Text(if resp.observation.trim().is_empty() {
            format!("{} returned no text.", call.tool)
        } else {
            resp.observation.clone()
        }),
    };
    let mut drafts = Vec::new();
    for (k, artifact) in resp.artifacts.iter().enumerate() {
        match artifact_draft(inspector, first, &call.tool, artifact, inspector.next_index() + k) {
            Ok(d) => drafts.push(d),
            Err(e) => return bad_data(e),
        }
    }
    ToolResult::ok(payload).with_artifacts(drafts)
}

fn run_local(
    call: &ActionCall,
    spec: &ToolSpec,
    plan: &DispatchPlan,
    inspector: &Inspector,
    clients: &Clients<'_>,
    ctx: &StepContext,
) -> Result<ToolResult, ToolError> {
    let query = call.query.as_deref().unwrap_or("");
    let prompts = &clients.templates.prompts;
    let first = plan.resolved_inputs.first();
    let need_first = || first.ok_or_else(|| ToolError::Precondition(format!("{} needs a visual input", call.tool)));
    let transcript = || plan.transcript.clone().unwrap_or_default();
    match call.tool.as_str() {
        "knowledge_reason" => {
            let answer = reason_over_text(
                ReasonKind::Knowledge,
                clients.backend,
                prompts,
                query,
                Some(&ctx.knowledge_context),
            )?;
            Ok(ToolResult::ok(Payload::Text(answer)))
        }
        "narration_reason" | "subtitle_reason" => {
            let kind = if call.tool == "narration_reason" {
                ReasonKind::Narration
            } else {
                ReasonKind::Subtitle
            };
            let context = render_numbered(&transcript());
            let answer = reason_over_text(kind, clients.backend, prompts, query, Some(&context))?;
            Ok(ToolResult::ok(Payload::Text(answer)))
        }
        "narration_ground" | "subtitle_ground" => {
            let parent = need_first()?;
            let kind = if call.tool == "narration_ground" {
                TranscriptKind::Narration
            } else {
                TranscriptKind::Subtitle
            };
            let duration = parent.duration_s.unwrap_or(0.0);
            let outcome = ground_from_transcript(kind, clients.backend, prompts, query, &transcript(), duration)?;
            let artifacts = outcome
                .interval
                .filter(|_| spec.produces_artifact)
                .map(|span| {
                    vec![clip_draft(
                        inspector,
                        parent,
                        &call.tool,
                        span,
                        format!("clip matching \"{query}\""),
                    )]
                })
                .unwrap_or_default();
            Ok(ToolResult::ok(Payload::Ground {
                index: parent.index,
                outcome,
            })
            .with_artifacts(artifacts))
        }
        "temporal_reason" => {
            let parent = need_first()?;
            let q = parse_temporal_query(query)?;
            let answer = temporal_reason(&q, parent.duration_s.unwrap_or(0.0))?;
            let artifacts = if spec.produces_artifact {
                vec![clip_draft(
                    inspector,
                    parent,
                    &call.tool,
                    answer.interval,
                    format!("the {} part of the video", q.word),
                )]
            } else {
                Vec::new()
            };
            Ok(ToolResult::ok(Payload::Temporal {
                index: parent.index,
                word: q.word,
                answer,
            })
            .with_artifacts(artifacts))
        }
        "text_ground" => {
            let parent = need_first()?;
            let boxes = text_ground(query, plan.ocr.as_deref().unwrap_or(&[]), ctx.text_threshold);
            let text = parse_text_query(query).text;
            let artifacts = if spec.produces_artifact {
                boxes
                    .iter()
                    .map(|b| {
                        crop_draft(
                            parent,
                            &call.tool,
                            &b.bbox,
                            format!("region with the text \"{}\"", b.text),
                        )
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok(ToolResult::ok(Payload::TextMatches {
                index: parent.index,
                text,
                boxes,
            })
            .with_artifacts(artifacts))
        }
        other => Err(ToolError::Precondition(format!("no local implementation of {other}"))),
    }
}

/// Language rendering of a result. Error results render as their message.
pub fn render_observation(result: &ToolResult, spec: &ToolSpec, templates: &Templates) -> String {
    let o = &templates.observations;
    let Some(payload) = result.payload.as_ref().filter(|_| result.status == ResultStatus::Ok) else {
        return if result.message.is_empty() {
            tool_failed(templates, &spec.name, "unknown failure")
        } else {
            result.message.clone()
        };
    };
    match payload {
        Payload::Text(t) => t.clone(),
        Payload::Detections { label, detections } => count_objects(detections, label, o).1,
        Payload::Ocr { index, boxes } => {
            let texts = if boxes.is_empty() {
                "none".to_string()
            } else {
                boxes
                    .iter()
                    .map(|b| format!("\"{}\" at {}", b.text, fmt_box(&b.bbox)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            fill(&o.ocr, &[("index", &index.to_string()), ("texts", &texts)])
        }
        Payload::Transcript { index, lines } => fill(
            &o.transcript,
            &[("index", &index.to_string()), ("lines", &lines.len().to_string())],
        ),
        Payload::Narration { index, lines } => fill(
            &o.narration,
            &[
                ("index", &index.to_string()),
                ("lines", &lines.len().to_string()),
                ("text", &render_numbered(lines)),
            ],
        ),
        Payload::Ground { index, outcome } => match outcome.interval {
            Some(iv) => fill(
                &o.ground_found,
                &[
                    ("start", &fmt_secs(iv.start_s)),
                    ("end", &fmt_secs(iv.end_s)),
                    ("index", &index.to_string()),
                ],
            ),
            None => o.ground_not_found.clone(),
        },
        Payload::Temporal { index, word, answer } => fill(
            if answer.clamped {
                &o.temporal_clamped
            } else {
                &o.temporal
            },
            &[
                ("word", &word.to_string()),
                ("start", &fmt_secs(answer.interval.start_s)),
                ("end", &fmt_secs(answer.interval.end_s)),
                ("index", &index.to_string()),
            ],
        ),
        Payload::TextMatches { index, text, boxes } => {
            if boxes.is_empty() {
                fill(&o.text_not_found, &[("text", text), ("index", &index.to_string())])
            } else {
                let b = boxes.iter().map(|b| fmt_box(&b.bbox)).collect::<Vec<_>>().join(", ");
                fill(
                    &o.text_found,
                    &[("text", text), ("boxes", &b), ("index", &index.to_string())],
                )
            }
        }
    }
}

fn attach_sidecars(result: &ToolResult, inspector: &mut Inspector) {
    match &result.payload {
        Some(Payload::Transcript { index, lines }) => {
            let _ = inspector.attach_subtitles(*index, lines.clone());
        }
        Some(Payload::Narration { index, lines }) => {
            let _ = inspector.attach_narration(*index, lines.clone());
        }
        Some(Payload::Ocr { index, boxes }) => {
            let _ = inspector.attach_ocr(*index, boxes.clone());
        }
        _ => {}
    }
}

/// Validation check, module execution, post-processing. Produced artifacts
/// are registered with the inspector; the caller appends their summaries.
pub fn execute(
    call: &ActionCall,
    registry: &ToolRegistry,
    inspector: &mut Inspector,
    clients: &Clients<'_>,
    ctx: &StepContext,
) -> Observation {
    let t = clients.templates;
    let report = validate_call(call, registry, &inspector.kinds());
    if !report.ok() {
        let violations = report
            .violations
            .iter()
            .map(|v| v.message.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        return Observation::text_only(fill(
            &t.observations.validation,
            &[("action", &call.render()), ("violations", &violations)],
        ));
    }
    let spec = registry.get(&call.tool).expect("validated").clone();
    let plan = match map_to_executable(call, registry, inspector, clients.router) {
        Ok(p) => p,
        Err(DispatchError::MissingSidecar {
            tool,
            sidecar,
            index,
            hint,
        }) => {
            return Observation::text_only(fill(
                &t.observations.missing_sidecar,
                &[
                    ("tool", &tool),
                    ("sidecar", sidecar),
                    ("index", &index.to_string()),
                    ("hint", &hint),
                ],
            ))
        }
        Err(e @ DispatchError::NoEndpoint(_)) => {
            return Observation::text_only(protocol_failure(
                t,
                &call.tool,
                &ProtocolError::Transport(e.to_string()),
            ))
        }
        Err(e) => return Observation::text_only(tool_failed(t, &call.tool, &e.to_string())),
    };
    let result = match plan.route {
        Execution::External => run_external(call, &plan, inspector, clients),
        Execution::Builtin | Execution::LlmPrompt => run_local(call, &spec, &plan, inspector, clients, ctx)
            .unwrap_or_else(|e| ToolResult::error(tool_failed(t, &call.tool, &e.to_string()))),
    };
    let mut text = render_observation(&result, &spec, t);
    if result.status == ResultStatus::Error {
        return Observation::text_only(text);
    }
    attach_sidecars(&result, inspector);
    let mut produced = Vec::new();
    if ctx.register_artifacts {
        for draft in result.artifacts {
            match inspector.register_resource(draft) {
                Ok((index, _)) => {
                    produced.push(index);
                    text.push(' ');
                    text.push_str(&fill(&t.observations.new_resource, &[("index", &index.to_string())]));
                }
                Err(e) => {
                    text.push(' ');
                    text.push_str(&tool_failed(t, &call.tool, &format!("artifact rejected: {e}")));
                }
            }
        }
    }
    Observation {
        text,
        produced_indices: produced,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::planner::{ScriptEntry, ScriptedBackend};
    use crate::protocol::{FixtureEntry, FixtureToolServer};

    struct Fixture {
        registry: ToolRegistry,
        inspector: Inspector,
        backend: ScriptedBackend,
        router: ToolRouter,
        templates: Templates,
    }

    impl Fixture {
        fn new(entries: Vec<ScriptEntry>, tools: Vec<FixtureEntry>) -> Self {
            let server = Arc::new(FixtureToolServer::external_tools().with_entries(tools));
            let mut router = ToolRouter::default();
            for name in server.tool_names() {
                router.route(&name, server.clone());
            }
            Self {
                registry: ToolRegistry::standard(),
                inspector: Inspector::new(),
                backend: ScriptedBackend::new(entries),
                router,
                templates: Templates::default(),
            }
        }

        fn run(&mut self, action: &str) -> Observation {
            let call = crate::grammar::parse_action(action).unwrap();
            let clients = Clients {
                backend: &self.backend,
                router: &self.router,
                templates: &self.templates,
            };
            execute(
                &call,
                &self.registry,
                &mut self.inspector,
                &clients,
                &StepContext::new(String::new()),
            )
        }
    }

    #[test]
    fn caption_on_video_is_rejected_without_dispatch() {
        let mut f = Fixture::new(vec![], vec![FixtureEntry::ok("caption", "should not be used")]);
        f.inspector
            .register_resource(ResourceDraft::video("v.mp4", "v", 60.0, false, false))
            .unwrap();
        let obs = f.run("caption(\"what is shown?\", visual[0])");
        assert!(
            obs.text.contains("caption accepts images; visual[0] is a video"),
            "{}",
            obs.text
        );
        assert!(obs.produced_indices.is_empty());
    }

    #[test]
    fn narration_ground_registers_clip() {
        let mut f = Fixture::new(vec![ScriptEntry::new("tool:narration_ground", "12.0 - 34.0")], vec![]);
        f.inspector
            .register_resource(ResourceDraft::video("v.mp4", "cooking", 100.0, true, false))
            .unwrap();
        f.inspector
            .attach_narration(0, vec![TranscriptLine::new(0.0, 50.0, "pepper")])
            .unwrap();
        let obs = f.run("narration_ground(\"pepper\", visual[0])");
        assert!(obs.text.contains("from 12s to 34s"), "{}", obs.text);
        assert_eq!(obs.produced_indices, vec![1]);
        let clip = f.inspector.get(1).unwrap();
        assert_eq!(
            clip.clip_span,
            Some(Interval {
                start_s: 12.0,
                end_s: 34.0
            })
        );
        assert_eq!(clip.location, "v.mp4#t=12,34");
    }

    #[test]
    fn unreachable_endpoint_names_tool() {
        let mut f = Fixture::new(vec![], vec![]);
        f.router = ToolRouter::default();
        f.inspector
            .register_resource(ResourceDraft::image("a.png", "a"))
            .unwrap();
        let obs = f.run("object_detect(\"zebra\", visual[0])");
        assert!(obs.text.contains("object_detect"));
        assert!(obs.text.contains("could not be reached"));
    }

    #[test]
    fn detection_counts() {
        let mut f = Fixture::new(
            vec![],
            vec![FixtureEntry::ok("object_detect", "2 boxes").with_data(json!({
                "detections": [
                    {"label": "zebra", "box": [0, 0, 5, 5]},
                    {"label": "zebra", "box": [10, 10, 20, 20]}
                ]
            }))],
        );
        f.inspector
            .register_resource(ResourceDraft::image("a.png", "a"))
            .unwrap();
        let obs = f.run("object_detect(\"zebra\", visual[0])");
        assert_eq!(obs.text, "Detected 2 zebra(s) at [0, 0, 5, 5], [10, 10, 20, 20].");
    }

    #[test]
    fn asr_attaches_subtitles() {
        let mut f = Fixture::new(
            vec![ScriptEntry::new("tool:subtitle_reason", "two spoons")],
            vec![FixtureEntry::ok("asr", "ok").with_data(json!({
                "transcript": [{"start_s": 0.0, "end_s": 3.0, "text": "add two spoons"}]
            }))],
        );
        f.inspector
            .register_resource(ResourceDraft::video("v.mp4", "v", 10.0, true, false))
            .unwrap();
        let missing = f.run("subtitle_reason(\"how much?\", visual[0])");
        assert!(missing.text.contains("asr(None, visual[0])"), "{}", missing.text);
        let obs = f.run("asr(None, visual[0])");
        assert!(obs.text.starts_with("Transcript registered as subtitles of visual[0]"));
        assert_eq!(f.run("subtitle_reason(\"how much?\", visual[0])").text, "two spoons");
    }

    #[test]
    fn server_failure_becomes_observation() {
        let mut f = Fixture::new(
            vec![],
            vec![FixtureEntry::error("caption", "model_failure", "out of memory")],
        );
        f.inspector
            .register_resource(ResourceDraft::image("a.png", "a"))
            .unwrap();
        let obs = f.run("caption(\"x\", visual[0])");
        assert_eq!(obs.text, "Error: tool caption failed: model_failure: out of memory");
    }

    #[test]
    fn temporal_and_text_ground() {
        let mut f = Fixture::new(vec![], vec![]);
        f.inspector
            .register_resource(ResourceDraft::video("v.mp4", "v", 80.0, false, false))
            .unwrap();
        f.inspector
            .register_resource(ResourceDraft::image("p.png", "phone"))
            .unwrap();
        f.inspector
            .attach_ocr(
                1,
                vec![
                    OcrBox::new("Menu", [0, 0, 10, 10]),
                    OcrBox::new("Main", [20, 0, 30, 10]),
                ],
            )
            .unwrap();
        let obs = f.run("temporal_reason(\"after: 3 - 6\", visual[0])");
        assert!(obs.text.contains("10s to 20s"), "{}", obs.text);
        assert_eq!(obs.produced_indices, vec![2]);
        let obs = f.run("text_ground(\"menu\", visual[1])");
        assert!(obs.text.contains("[0, 0, 10, 10]"), "{}", obs.text);
        assert_eq!(f.inspector.get(3).unwrap().location, "p.png#xywh=0,0,10,10");
        let obs = f.run("temporal_reason(\"before\", visual[0])");
        assert!(
            obs.text.starts_with("Error: tool temporal_reason failed"),
            "{}",
            obs.text
        );
    }

    #[test]
    fn inline_artifact_is_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = Fixture::new(
            vec![],
            vec![FixtureEntry::ok("region_ground", "found it")
                .with_artifact(ResourcePayload::inline(MediaKind::Image, b"png-bytes").unwrap())],
        );
        f.inspector = Inspector::with_workspace(dir.path().join("s1"));
        f.inspector
            .register_resource(ResourceDraft::image("a.png", "a"))
            .unwrap();
        let obs = f.run("region_ground(\"the dog\", visual[0])");
        assert_eq!(obs.produced_indices, vec![1]);
        let path = dir.path().join("s1/artifacts/1.png");
        assert_eq!(std::fs::read(&path).unwrap(), b"png-bytes");
        assert_eq!(f.inspector.get(1).unwrap().location, path.to_string_lossy());
    }
}
