//! The per-query session loop in each ablation mode, scenarios, the suite
//! runner and trace files.

mod scenario;
mod suite;
mod trace_io;

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use regex::Regex;
use thiserror::Error;

use crate::executor::{execute, Clients, StepContext};
use crate::grammar::{parse_action, ActionCall, GrammarError, ToolRegistry};
use crate::inspector::{summarize, Inspector, InspectorError, MediaKind, ResourceDraft, Source};
use crate::learner::{
    run_attempt_loop, AttemptInput, AttemptRecord, LearnerConfig, LearnerMode, LearnerOutcome, MemoryBank,
};
use crate::planner::{
    assemble_prompt, build_instruction, parse_planner_output, CompletionRequest, LlmBackend, PlannerStep, PromptBundle,
    Role, STOP,
};
use crate::protocol::{invoke_external, ToolRouter};
use crate::templates::{fill, Templates};
use crate::tools::{OcrBox, TranscriptLine};
use crate::trace::{ReasoningTrace, Terminal, TraceStep};

pub use crate::trace::AblationMode;
pub use scenario::{load_scenario, Expected, Scenario, ScenarioFormatError, ScenarioResource};
pub use suite::{load_suite, run_scenario, run_suite, ScenarioReport, SuiteError, SuiteOptions, SuiteReport};
pub use trace_io::{
    emit_result, emit_trace, load_trace, normalize_timestamps, trace_records, TraceLoadError, TraceLog, TraceRecord,
    NORMALIZED_TIMESTAMP,
};

pub const DEFAULT_MAX_STEPS: usize = 10;
/// Consecutive unparseable planner outputs that end an attempt.
pub const MAX_CONSECUTIVE_MALFORMED: usize = 2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("mode peil_gt needs a ground truth answer")]
    MissingGroundTruth,
    #[error("invalid resource: {0}")]
    Resource(#[from] InspectorError),
    #[error("invalid tool registry: {0}")]
    Registry(#[from] GrammarError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub mode: AblationMode,
    pub max_attempts: usize,
    pub strict_gt: bool,
    pub examples: usize,
    pub max_steps: usize,
    /// Transcribe user videos that have audio but no subtitles before the
    /// first planner step.
    pub auto_asr: bool,
    /// Caption each user image at registration and use the caption as its
    /// description.
    pub caption_images: bool,
    /// Session workspaces live under this directory, one per attempt.
    pub workspace: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(mode: AblationMode) -> Self {
        Self {
            mode,
            max_attempts: crate::learner::DEFAULT_MAX_ATTEMPTS,
            strict_gt: false,
            examples: 2,
            max_steps: DEFAULT_MAX_STEPS,
            auto_asr: true,
            caption_images: false,
            workspace: None,
        }
    }

    pub fn learner(&self) -> LearnerConfig {
        let mode = match self.mode {
            AblationMode::ReasonOnly | AblationMode::React | AblationMode::Pie => LearnerMode::Off,
            AblationMode::PeilSelf => LearnerMode::SelfCheck,
            AblationMode::PeilGt => LearnerMode::GtCheck,
        };
        let mut c = LearnerConfig::new(mode, self.max_attempts);
        c.strict_gt = self.strict_gt;
        c.examples = self.examples;
        c
    }
}

/// A user-provided resource and whatever sidecar data came with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceInput {
    pub draft: ResourceDraft,
    pub subtitles: Option<Vec<TranscriptLine>>,
    pub narration: Option<Vec<TranscriptLine>>,
    pub ocr: Option<Vec<OcrBox>>,
}

impl ResourceInput {
    pub fn new(draft: ResourceDraft) -> Self {
        Self {
            draft,
            subtitles: None,
            narration: None,
            ocr: None,
        }
    }
}

/// Shared services a session runs against.
pub struct Services<'a> {
    pub registry: &'a ToolRegistry,
    pub backend: &'a dyn LlmBackend,
    pub router: &'a ToolRouter,
    pub templates: &'a Templates,
    pub bank: &'a MemoryBank,
    pub clock: fn() -> DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub mode: AblationMode,
    pub answer: Option<String>,
    pub attempts: Vec<AttemptRecord>,
    pub outcome: LearnerOutcome,
}

impl QueryResult {
    pub fn last_trace(&self) -> &ReasoningTrace {
        &self.attempts.last().expect("at least one attempt").trace
    }
}

/// Runs one query in the configured mode. Learner modes delegate to the
/// attempt loop; the others run a single attempt.
pub fn run_query(
    config: &SessionConfig,
    services: &Services<'_>,
    query: &str,
    resources: &[ResourceInput],
    ground_truth: Option<&str>,
) -> Result<QueryResult, ConfigError> {
    if config.mode == AblationMode::PeilGt && ground_truth.is_none() {
        return Err(ConfigError::MissingGroundTruth);
    }
    if config.max_steps == 0 {
        return Err(ConfigError::Invalid("max_steps must be at least 1".into()));
    }
    let captioned;
    let resources = if config.caption_images {
        captioned = caption_user_images(services, resources)?;
        &captioned[..]
    } else {
        resources
    };
    let base = initial_inspector(resources)?;
    build_instruction(&services.templates.prompts, services.registry, &[], None)?;

    let learner = config.learner();
    let (outcome, attempts) = run_attempt_loop(
        |input| run_attempt(config, services, query, &base, input),
        &learner,
        services.bank,
        services.backend,
        &services.templates.prompts,
        query,
        ground_truth,
        services.clock,
    );
    Ok(QueryResult {
        mode: config.mode,
        answer: outcome.final_answer.clone(),
        attempts,
        outcome,
    })
}

/// Replaces image descriptions with a caption where the caption tool answers.
fn caption_user_images(
    services: &Services<'_>,
    resources: &[ResourceInput],
) -> Result<Vec<ResourceInput>, ConfigError> {
    let mut out = resources.to_vec();
    let Some(endpoint) = services.router.endpoint("caption") else {
        return Ok(out);
    };
    let call = ActionCall::new("caption", Some(&services.templates.prompts.caption_image), vec![0]);
    for input in out.iter_mut().filter(|r| r.draft.kind == MediaKind::Image) {
        let mut single = Inspector::new();
        single.register_resource(input.draft.clone())?;
        let id = services.router.next_id("caption");
        let resource = single.get(0)?.clone();
        if let Ok(resp) = invoke_external(endpoint.as_ref(), &id, &call, &[resource], services.router.timeout()) {
            let caption = resp.observation.trim();
            if !caption.is_empty() {
                input.draft.description = caption.to_string();
            }
        }
    }
    Ok(out)
}

fn initial_inspector(resources: &[ResourceInput]) -> Result<Inspector, ConfigError> {
    let mut ins = Inspector::new();
    for r in resources {
        if r.draft.parent.is_some() {
            return Err(ConfigError::Invalid("user resources cannot have a parent".into()));
        }
        let (i, _) = ins.register_resource(r.draft.clone())?;
        if let Some(lines) = &r.subtitles {
            ins.attach_subtitles(i, lines.clone())?;
        }
        if let Some(lines) = &r.narration {
            ins.attach_narration(i, lines.clone())?;
        }
        if let Some(boxes) = &r.ocr {
            ins.attach_ocr(i, boxes.clone())?;
        }
    }
    Ok(ins)
}

struct Attempt<'s, 'a> {
    config: &'s SessionConfig,
    services: &'s Services<'a>,
    query: &'s str,
    inspector: Inspector,
    trace: ReasoningTrace,
}

fn run_attempt(
    config: &SessionConfig,
    services: &Services<'_>,
    query: &str,
    base: &Inspector,
    input: AttemptInput<'_>,
) -> ReasoningTrace {
    let mut inspector = base.clone();
    if let Some(root) = &config.workspace {
        inspector.set_workspace(root.join(format!("attempt-{}", input.attempt)));
    }
    let mut trace = ReasoningTrace::new(input.attempt, config.mode);
    trace.initial_count = inspector.len();
    trace.initial_summaries = inspector.summaries();
    trace.resources = inspector.catalog().to_vec();
    let mut a = Attempt {
        config,
        services,
        query,
        inspector,
        trace,
    };
    if config.auto_asr {
        a.auto_asr();
    }
    let instruction = build_instruction(
        &services.templates.prompts,
        services.registry,
        &input.examples,
        input.critique,
    )
    .expect("registry checked before the first attempt");
    let terminal = match config.mode {
        AblationMode::ReasonOnly => a.plan_then_execute(&instruction),
        _ => a.interleaved(&instruction),
    };
    a.trace.resources = a.inspector.catalog().to_vec();
    a.trace.terminal = Some(terminal);
    a.trace
}

impl Attempt<'_, '_> {
    fn react(&self) -> bool {
        self.config.mode == AblationMode::React
    }

    fn step_context(&self) -> StepContext {
        let knowledge = if self.react() {
            self.trace
                .steps
                .last()
                .map(|s| s.observation.clone())
                .unwrap_or_default()
        } else {
            self.trace.render_history()
        };
        let mut ctx = StepContext::new(knowledge);
        ctx.register_artifacts = !self.react();
        ctx
    }

    /// Executes a parsed call and appends the completed step.
    fn run_call(&mut self, thought: String, call: ActionCall) {
        let ctx = self.step_context();
        let clients = Clients {
            backend: self.services.backend,
            router: self.services.router,
            templates: self.services.templates,
        };
        let obs = execute(&call, self.services.registry, &mut self.inspector, &clients, &ctx);
        let summaries = obs
            .produced_indices
            .iter()
            .filter_map(|&i| self.inspector.get(i).ok().map(summarize))
            .collect();
        self.trace.steps.push(TraceStep {
            thought,
            action: call.render(),
            call: Some(call),
            observation: obs.text,
            produced: obs.produced_indices,
            summaries,
        });
        self.trace.resources = self.inspector.catalog().to_vec();
    }

    fn push_unparsed(&mut self, thought: String, action: String, observation: String) {
        self.trace.steps.push(TraceStep {
            thought,
            action,
            call: None,
            observation,
            produced: Vec::new(),
            summaries: Vec::new(),
        });
    }

    fn auto_asr(&mut self) {
        if !self.services.registry.contains("asr") {
            return;
        }
        let targets: Vec<usize> = self
            .inspector
            .catalog()
            .iter()
            .filter(|r| {
                r.source == Source::User
                    && r.kind == MediaKind::Video
                    && r.has_audio == Some(true)
                    && self.inspector.subtitles(r.index).is_none()
            })
            .map(|r| r.index)
            .collect();
        for index in targets {
            let thought = fill(
                &self.services.templates.observations.auto_asr_thought,
                &[("index", &index.to_string())],
            );
            self.run_call(thought, ActionCall::new("asr", None, vec![index]));
        }
    }

    /// Planner output that is not a usable step. Returns true when the
    /// attempt should stop.
    fn malformed(&mut self, malformed: &mut usize, thought: String, raw: String, observation: String) -> bool {
        self.push_unparsed(thought, raw, observation);
        *malformed += 1;
        *malformed >= MAX_CONSECUTIVE_MALFORMED
    }

    fn interleaved(&mut self, instruction: &str) -> Terminal {
        let obs_t = &self.services.templates.observations;
        let mut malformed = 0;
        for _ in 0..self.config.max_steps {
            let bundle = PromptBundle::from_trace(instruction, self.query, &self.trace);
            let prompt = assemble_prompt(&self.services.templates.prompts, &bundle);
            let reply = match self.services.backend.complete(&CompletionRequest {
                role: Role::Planner,
                prompt: &prompt,
                stop: STOP,
            }) {
                Ok(r) => r,
                Err(e) => {
                    return Terminal::Exhausted {
                        reason: format!("planner backend failed: {e}"),
                    }
                }
            };
            match parse_planner_output(&reply) {
                Ok(PlannerStep::Final { answer }) => return Terminal::Final { answer },
                Ok(PlannerStep::Step { thought, action_raw }) => match parse_action(&action_raw) {
                    Ok(mut call) => {
                        malformed = 0;
                        if self.react() {
                            rebind_to_first(&mut call);
                        }
                        self.run_call(thought, call);
                    }
                    Err(e) => {
                        let text = fill(&obs_t.parse_error, &[("raw", &action_raw), ("detail", &e.to_string())]);
                        if self.malformed(&mut malformed, thought, action_raw, text) {
                            return too_many_malformed();
                        }
                    }
                },
                Err(e) => {
                    let text = fill(&obs_t.format_error, &[("detail", &e.0)]);
                    if self.malformed(&mut malformed, String::new(), one_line(&reply), text) {
                        return too_many_malformed();
                    }
                }
            }
        }
        Terminal::Exhausted {
            reason: format!("step budget of {} exhausted", self.config.max_steps),
        }
    }

    fn plan_then_execute(&mut self, instruction: &str) -> Terminal {
        let prompts = &self.services.templates.prompts;
        let history = self.trace.render_history();
        let prompt = fill(
            &prompts.plan,
            &[
                ("instruction", instruction),
                ("query", self.query),
                ("history", history.trim_end()),
            ],
        );
        let reply = match self.services.backend.complete(&CompletionRequest {
            role: Role::Plan,
            prompt: &prompt,
            stop: &[],
        }) {
            Ok(r) => r,
            Err(e) => {
                return Terminal::Exhausted {
                    reason: format!("planner backend failed: {e}"),
                }
            }
        };
        let actions = plan_lines(&reply);
        if actions.is_empty() {
            return Terminal::Exhausted {
                reason: "the plan contained no actions".into(),
            };
        }
        let obs_t = &self.services.templates.observations;
        for (n, raw) in actions.into_iter().take(self.config.max_steps).enumerate() {
            let thought = format!("plan step {}", n + 1);
            match parse_action(&raw) {
                Ok(call) => self.run_call(thought, call),
                Err(e) => {
                    let text = fill(&obs_t.parse_error, &[("raw", &raw), ("detail", &e.to_string())]);
                    self.push_unparsed(thought, raw, text);
                }
            }
        }
        if !self.services.registry.contains("knowledge_reason") {
            return Terminal::Exhausted {
                reason: "no tool available to combine the plan results".into(),
            };
        }
        self.run_call(
            "combine the results of the plan".into(),
            ActionCall::new("knowledge_reason", Some(self.query), Vec::new()),
        );
        let obs = &self.trace.steps.last().expect("just pushed").observation;
        if obs.starts_with("Error:") {
            Terminal::Exhausted { reason: obs.clone() }
        } else {
            Terminal::Final { answer: obs.clone() }
        }
    }
}

fn too_many_malformed() -> Terminal {
    Terminal::Exhausted {
        reason: format!("{MAX_CONSECUTIVE_MALFORMED} consecutive malformed planner outputs"),
    }
}

/// Without a resource catalog every visual argument means the user resource.
fn rebind_to_first(call: &mut ActionCall) {
    if !call.resources.is_empty() {
        call.resources = vec![0];
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Action texts of a numbered plan, in order.
pub fn plan_lines(reply: &str) -> Vec<String> {
    let re = Regex::new(r"^\s*\d+[.)]\s*(.+)$").expect("static regex");
    reply
        .lines()
        .filter_map(|l| re.captures(l).map(|c| c[1].trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect()
}
