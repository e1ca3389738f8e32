//! Attempt evaluation, the retry loop and the in-context memory bank.

mod bank;
mod normalize;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::planner::{BackendError, CompletionRequest, LlmBackend, Role};
use crate::templates::{fill, Prompts};
use crate::trace::{ReasoningTrace, Terminal};

pub use bank::{overlap, tokens, BankError, MemoryBank, MemoryEntry};
pub use normalize::{normalize_answer, NUMBER_WORDS};

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerMode {
    Off,
    SelfCheck,
    GtCheck,
}

impl FromStr for LearnerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(LearnerMode::Off),
            "self_check" => Ok(LearnerMode::SelfCheck),
            "gt_check" => Ok(LearnerMode::GtCheck),
            other => Err(format!("unknown learner mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    pub max_attempts: usize,
    /// Ground-truth comparison without the semantic judge: only normalized
    /// exact matches pass.
    pub strict_gt: bool,
    /// Examples retrieved from the bank for each attempt.
    pub examples: usize,
}

impl LearnerConfig {
    pub fn new(mode: LearnerMode, max_attempts: usize) -> Self {
        Self {
            mode,
            max_attempts: max_attempts.max(1),
            strict_gt: false,
            examples: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub critique: String,
}

impl Verdict {
    pub fn pass(reason: &str) -> Self {
        Self {
            pass: true,
            critique: reason.to_string(),
        }
    }

    pub fn fail(reason: &str) -> Self {
        let reason = if reason.trim().is_empty() {
            "rejected without reason"
        } else {
            reason
        };
        Self {
            pass: false,
            critique: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    NoAdjustment,
    PlanRevision,
    FunctionUpdateFlag,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::NoAdjustment => "no_adjustment",
            OutcomeKind::PlanRevision => "plan_revision",
            OutcomeKind::FunctionUpdateFlag => "function_update_flag",
        })
    }
}

impl FromStr for OutcomeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_adjustment" => Ok(OutcomeKind::NoAdjustment),
            "plan_revision" => Ok(OutcomeKind::PlanRevision),
            "function_update_flag" => Ok(OutcomeKind::FunctionUpdateFlag),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerOutcome {
    pub kind: OutcomeKind,
    pub attempts_used: usize,
    pub final_answer: Option<String>,
    pub saved_entry: Option<MemoryEntry>,
}

/// Outcome classification from the verdict history.
pub fn classify(passed_at: Option<usize>, attempts_used: usize) -> OutcomeKind {
    match passed_at {
        Some(1) => OutcomeKind::NoAdjustment,
        Some(_) => OutcomeKind::PlanRevision,
        None => {
            debug_assert!(attempts_used >= 1);
            OutcomeKind::FunctionUpdateFlag
        }
    }
}

/// Reads `PASS: reason` / `FAIL: reason` from the first non-empty line.
pub fn parse_verdict(reply: &str) -> Option<Verdict> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let (head, rest) = line.split_once(':').unwrap_or((line, ""));
    match head.trim().to_ascii_uppercase().as_str() {
        "PASS" => Some(Verdict::pass(rest.trim())),
        "FAIL" => Some(Verdict::fail(rest.trim())),
        _ => None,
    }
}

/// Deterministic screen run before asking the evaluator. Returns a failing
/// verdict when the trace is incomplete or cites unknown resources.
pub fn prescreen(trace: &ReasoningTrace) -> Option<Verdict> {
    let answer = match &trace.terminal {
        Some(Terminal::Final { answer }) => answer,
        Some(Terminal::Exhausted { reason }) => {
            return Some(Verdict::fail(&format!("incomplete: no final answer ({reason})")))
        }
        None => return Some(Verdict::fail("incomplete: the trace has no terminal record")),
    };
    if let Err(e) = trace.check_structure() {
        return Some(Verdict::fail(&format!("inconsistent: {e}")));
    }
    if let Some(i) = trace.unknown_references(answer).first() {
        return Some(Verdict::fail(&format!(
            "inconsistent: the final answer cites visual[{i}], which was never registered"
        )));
    }
    None
}

pub fn self_assess(
    backend: &dyn LlmBackend,
    prompts: &Prompts,
    query: &str,
    trace: &ReasoningTrace,
) -> Result<Verdict, BackendError> {
    if let Some(v) = prescreen(trace) {
        return Ok(v);
    }
    let rendered = trace.render_full();
    let prompt = fill(&prompts.evaluator, &[("query", query), ("trace", rendered.trim_end())]);
    let reply = backend.complete(&CompletionRequest {
        role: Role::Evaluator,
        prompt: &prompt,
        stop: &[],
    })?;
    Ok(parse_verdict(&reply).unwrap_or_else(|| Verdict::fail("evaluator format error")))
}

pub fn gt_compare(
    backend: &dyn LlmBackend,
    prompts: &Prompts,
    query: &str,
    prediction: &str,
    ground_truth: &str,
    strict: bool,
) -> Result<Verdict, BackendError> {
    let (p, g) = (normalize_answer(prediction), normalize_answer(ground_truth));
    if p.is_empty() {
        return Ok(Verdict::fail("no prediction to compare"));
    }
    if p == g {
        return Ok(Verdict::pass("matches the ground truth"));
    }
    if strict {
        return Ok(Verdict::fail(&format!(
            "the answer \"{prediction}\" does not match the expected answer"
        )));
    }
    let prompt = fill(
        &prompts.judge,
        &[
            ("query", query),
            ("prediction", prediction),
            ("ground_truth", ground_truth),
        ],
    );
    let reply = backend.complete(&CompletionRequest {
        role: Role::Judge,
        prompt: &prompt,
        stop: &[],
    })?;
    Ok(parse_verdict(&reply).unwrap_or_else(|| Verdict::fail("evaluator format error")))
}

/// One finished attempt and how it was judged.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub trace: ReasoningTrace,
    pub verdict: Option<Verdict>,
}

/// What the next attempt gets: its number, the critique of the previous
/// attempt, and examples from the bank.
pub struct AttemptInput<'a> {
    pub attempt: usize,
    pub critique: Option<&'a str>,
    pub examples: Vec<MemoryEntry>,
}

/// Runs fresh attempts until one passes or `max_attempts` is reached. With
/// the learner off exactly one attempt runs and nothing is evaluated.
#[allow(clippy::too_many_arguments)]
pub fn run_attempt_loop(
    mut attempt: impl FnMut(AttemptInput<'_>) -> ReasoningTrace,
    config: &LearnerConfig,
    bank: &MemoryBank,
    evaluator: &dyn LlmBackend,
    prompts: &Prompts,
    query: &str,
    ground_truth: Option<&str>,
    now: impl Fn() -> DateTime<Utc>,
) -> (LearnerOutcome, Vec<AttemptRecord>) {
    let mut records = Vec::new();
    if config.mode == LearnerMode::Off {
        let trace = attempt(AttemptInput {
            attempt: 1,
            critique: None,
            examples: Vec::new(),
        });
        let outcome = LearnerOutcome {
            kind: OutcomeKind::NoAdjustment,
            attempts_used: 1,
            final_answer: trace.final_answer().map(str::to_string),
            saved_entry: None,
        };
        records.push(AttemptRecord { trace, verdict: None });
        return (outcome, records);
    }

    let max = config.max_attempts.max(1);
    let mut critique: Option<String> = None;
    for n in 1..=max {
        let examples = bank.retrieve(query, config.examples);
        let trace = attempt(AttemptInput {
            attempt: n,
            critique: critique.as_deref(),
            examples,
        });
        let verdict = match (config.mode, ground_truth) {
            (LearnerMode::GtCheck, Some(gt)) => match trace.final_answer() {
                Some(answer) => gt_compare(evaluator, prompts, query, answer, gt, config.strict_gt),
                None => Ok(prescreen(&trace).unwrap_or_else(|| Verdict::fail("no final answer"))),
            },
            (LearnerMode::GtCheck, None) => Ok(Verdict::fail("no ground truth available")),
            _ => self_assess(evaluator, prompts, query, &trace),
        }
        .unwrap_or_else(|e| Verdict::fail(&format!("evaluation failed: {e}")));
        let passed = verdict.pass;
        critique = Some(verdict.critique.clone());
        records.push(AttemptRecord {
            trace: trace.clone(),
            verdict: Some(verdict),
        });
        if passed {
            let answer = trace.final_answer().map(str::to_string);
            let kind = classify(Some(n), n);
            let saved_entry = match (&kind, &answer) {
                (OutcomeKind::PlanRevision, Some(a)) => {
                    let entry = MemoryEntry {
                        query: query.to_string(),
                        trace: trace.without_unparsed_steps(),
                        answer: a.clone(),
                        created_at: now(),
                    };
                    bank.store(entry.clone()).ok().map(|_| entry)
                }
                _ => None,
            };
            return (
                LearnerOutcome {
                    kind,
                    attempts_used: n,
                    final_answer: answer,
                    saved_entry,
                },
                records,
            );
        }
    }
    let last = records.last().and_then(|r| r.trace.final_answer()).map(str::to_string);
    (
        LearnerOutcome {
            kind: OutcomeKind::FunctionUpdateFlag,
            attempts_used: max,
            final_answer: last,
            saved_entry: None,
        },
        records,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{ScriptEntry, ScriptedBackend};
    use crate::templates::Templates;
    use crate::trace::AblationMode;

    fn answered(n: usize, answer: &str) -> ReasoningTrace {
        let mut t = ReasoningTrace::new(n, AblationMode::PeilSelf);
        t.terminal = Some(Terminal::Final { answer: answer.into() });
        t
    }

    fn fixed_now() -> DateTime<Utc> {
        DateTime::from_timestamp(0, 0).unwrap()
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(
            parse_verdict("PASS: reasoning consistent"),
            Some(Verdict::pass("reasoning consistent"))
        );
        assert!(!parse_verdict("\n fail: missing step").unwrap().pass);
        assert_eq!(parse_verdict("looks good to me"), None);
    }

    #[test]
    fn exhausted_trace_fails_without_backend() {
        let backend = ScriptedBackend::new(vec![]);
        let mut t = ReasoningTrace::new(1, AblationMode::PeilSelf);
        t.terminal = Some(Terminal::Exhausted {
            reason: "step budget".into(),
        });
        let v = self_assess(&backend, &Templates::default().prompts, "q", &t).unwrap();
        assert!(!v.pass);
        assert!(backend.calls().is_empty());
    }

    #[test]
    fn unknown_reference_fails_without_backend() {
        let backend = ScriptedBackend::new(vec![]);
        let t = answered(1, "it is in visual[3]");
        let v = self_assess(&backend, &Templates::default().prompts, "q", &t).unwrap();
        assert!(!v.pass && v.critique.contains("visual[3]"));
        assert!(backend.calls().is_empty());
    }

    #[test]
    fn unparseable_evaluator_is_fail() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::new("evaluator", "hmm, maybe")]);
        let v = self_assess(&backend, &Templates::default().prompts, "q", &answered(1, "x")).unwrap();
        assert_eq!(v, Verdict::fail("evaluator format error"));
    }

    #[test]
    fn gt_compare_paths() {
        let p = Templates::default().prompts;
        let backend = ScriptedBackend::new(vec![ScriptEntry::new("judge", "PASS: same country")]);
        assert!(gt_compare(&backend, &p, "q", "taxi", "taxi", false).unwrap().pass);
        assert!(gt_compare(&backend, &p, "q", "two", "2", false).unwrap().pass);
        assert!(backend.calls().is_empty());
        assert!(
            !gt_compare(&backend, &p, "q", "United States flag", "united states", true)
                .unwrap()
                .pass
        );
        assert!(backend.calls().is_empty());
        assert!(
            gt_compare(&backend, &p, "q", "United States flag", "united states", false)
                .unwrap()
                .pass
        );
        assert_eq!(backend.calls_for(&Role::Judge), 1);
    }

    #[test]
    fn always_fail_hits_cap() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::new("evaluator", "FAIL: wrong").repeating()]);
        let bank = MemoryBank::in_memory();
        let config = LearnerConfig::new(LearnerMode::SelfCheck, 3);
        let mut runs = 0;
        let (outcome, records) = run_attempt_loop(
            |input| {
                runs += 1;
                answered(input.attempt, "x")
            },
            &config,
            &bank,
            &backend,
            &Templates::default().prompts,
            "q",
            None,
            fixed_now,
        );
        assert_eq!(outcome.kind, OutcomeKind::FunctionUpdateFlag);
        assert_eq!(outcome.attempts_used, 3);
        assert_eq!(runs, 3);
        assert_eq!(records.len(), 3);
        assert!(bank.is_empty());
    }

    #[test]
    fn critique_reaches_second_attempt() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new("evaluator", "FAIL: the caption was vague"),
            ScriptEntry::new("evaluator", "PASS: fine"),
        ]);
        let bank = MemoryBank::in_memory();
        let mut seen = Vec::new();
        let (outcome, _) = run_attempt_loop(
            |input| {
                seen.push(input.critique.map(str::to_string));
                answered(input.attempt, "LA")
            },
            &LearnerConfig::new(LearnerMode::SelfCheck, 3),
            &bank,
            &backend,
            &Templates::default().prompts,
            "q",
            None,
            fixed_now,
        );
        assert_eq!(seen, vec![None, Some("the caption was vague".to_string())]);
        assert_eq!(outcome.kind, OutcomeKind::PlanRevision);
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn off_runs_once_without_evaluator() {
        let backend = ScriptedBackend::new(vec![]);
        let bank = MemoryBank::in_memory();
        let (outcome, records) = run_attempt_loop(
            |input| answered(input.attempt, "x"),
            &LearnerConfig::new(LearnerMode::Off, 3),
            &bank,
            &backend,
            &Templates::default().prompts,
            "q",
            None,
            fixed_now,
        );
        assert_eq!(outcome.attempts_used, 1);
        assert_eq!(records.len(), 1);
        assert!(backend.calls().is_empty());
    }

    #[test]
    fn classification_table() {
        assert_eq!(classify(Some(1), 1), OutcomeKind::NoAdjustment);
        assert_eq!(classify(Some(2), 2), OutcomeKind::PlanRevision);
        assert_eq!(classify(None, 3), OutcomeKind::FunctionUpdateFlag);
    }
}
