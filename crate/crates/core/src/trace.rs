//! The reasoning trace of one attempt: initial resource summaries, then
//! Thought / Action / Observation / Summary* steps, then one terminal record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grammar::{parse_action, ActionCall};
use crate::inspector::{summarize, Summary, VisualResource};

/// Which parts of the loop are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// One up-front plan, executed without feedback.
    ReasonOnly,
    /// Interleaved loop without resource bookkeeping.
    React,
    /// Interleaved loop with the inspector, no learner.
    Pie,
    PeilSelf,
    PeilGt,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::ReasonOnly,
        AblationMode::React,
        AblationMode::Pie,
        AblationMode::PeilSelf,
        AblationMode::PeilGt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::ReasonOnly => "reason_only",
            AblationMode::React => "react",
            AblationMode::Pie => "pie",
            AblationMode::PeilSelf => "peil_self",
            AblationMode::PeilGt => "peil_gt",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected reason_only, react, pie, peil_self or peil_gt)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub thought: String,
    /// Action text as the planner wrote it (or as executed, after rebinding).
    pub action: String,
    /// `None` when the action did not parse or the output had no action.
    pub call: Option<ActionCall>,
    pub observation: String,
    pub produced: Vec<usize>,
    pub summaries: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Final { answer: String },
    Exhausted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub attempt: usize,
    pub mode: AblationMode,
    /// Every registered resource in index order.
    pub resources: Vec<VisualResource>,
    /// How many of `resources` were registered before the first step.
    pub initial_count: usize,
    pub initial_summaries: Vec<Summary>,
    pub steps: Vec<TraceStep>,
    pub terminal: Option<Terminal>,
}

impl ReasoningTrace {
    pub fn new(attempt: usize, mode: AblationMode) -> Self {
        Self {
            attempt,
            mode,
            resources: Vec::new(),
            initial_count: 0,
            initial_summaries: Vec::new(),
            steps: Vec::new(),
            terminal: None,
        }
    }

    pub fn final_answer(&self) -> Option<&str> {
        match &self.terminal {
            Some(Terminal::Final { answer }) => Some(answer),
            _ => None,
        }
    }

    /// Thought/Action/Observation/Summary lines, preceded by the initial
    /// summaries. This is the history the planner sees.
    pub fn render_history(&self) -> String {
        let mut out = String::new();
        for s in &self.initial_summaries {
            out.push_str("Summary: ");
            out.push_str(s.text());
            out.push('\n');
        }
        out.push_str(&render_steps(&self.steps));
        out
    }

    /// Same as [`render_history`](Self::render_history) plus the terminal line.
    pub fn render_full(&self) -> String {
        let mut out = self.render_history();
        match &self.terminal {
            Some(Terminal::Final { answer }) => out.push_str(&format!("Final Answer: {answer}\n")),
            Some(Terminal::Exhausted { reason }) => out.push_str(&format!("Stopped without an answer: {reason}\n")),
            None => {}
        }
        out
    }

    /// Checks the structural invariants: every referenced index existed
    /// before its step ran, produced indices are fresh and dense, and recorded
    /// calls agree with their action text.
    pub fn check_structure(&self) -> Result<(), String> {
        if self.initial_count > self.resources.len() || self.initial_summaries.len() > self.initial_count {
            return Err("initial resource bookkeeping is inconsistent".into());
        }
        for (i, r) in self.resources.iter().enumerate() {
            if r.index != i {
                return Err(format!("resource at position {i} carries index {}", r.index));
            }
        }
        let mut known = self.initial_count;
        for (n, step) in self.steps.iter().enumerate() {
            if let Some(call) = &step.call {
                if let Some(&bad) = call.resources.iter().find(|&&i| i >= known) {
                    return Err(format!("step {n} references visual[{bad}] before it existed"));
                }
            }
            for &p in &step.produced {
                if p != known {
                    return Err(format!("step {n} produced visual[{p}], expected visual[{known}]"));
                }
                known += 1;
            }
            if step.summaries.len() > step.produced.len() {
                return Err(format!("step {n} has more summaries than produced resources"));
            }
        }
        if known != self.resources.len() {
            return Err(format!(
                "{} resources recorded but {known} accounted for",
                self.resources.len()
            ));
        }
        Ok(())
    }

    /// Every action parses back to its recorded call and every reference
    /// existed at the time. Used on traces stored as examples.
    pub fn revalidates(&self) -> bool {
        self.check_structure().is_ok()
            && self.steps.iter().all(|s| match (&s.call, parse_action(&s.action)) {
                (Some(call), Ok(parsed)) => *call == parsed,
                _ => false,
            })
    }

    /// Resource indices mentioned anywhere in `text` that are not registered.
    pub fn unknown_references(&self, text: &str) -> Vec<usize> {
        mentioned_indices(text)
            .into_iter()
            .filter(|&i| i >= self.resources.len())
            .collect()
    }

    /// Copy without steps whose action never parsed.
    pub fn without_unparsed_steps(&self) -> Self {
        let mut t = self.clone();
        t.steps.retain(|s| s.call.is_some());
        t
    }

    /// Summary of a registered resource as it appeared when registered.
    pub fn summary_of(&self, index: usize) -> Option<Summary> {
        self.resources.get(index).map(summarize)
    }
}

pub fn render_steps(steps: &[TraceStep]) -> String {
    let mut out = String::new();
    for step in steps {
        out.push_str(&format!("Thought: {}\n", step.thought));
        out.push_str(&format!("Action: {}\n", step.action));
        out.push_str(&format!("Observation: {}\n", step.observation));
        for s in &step.summaries {
            out.push_str(&format!("Summary: {}\n", s.text()));
        }
    }
    out
}

/// All `visual[i]` references in a text, in order of appearance.
pub fn mentioned_indices(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("visual[") {
        let after = &rest[pos + 7..];
        let digits: String = after.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && after[digits.len()..].starts_with(']') {
            if let Ok(i) = digits.parse() {
                out.push(i);
            }
        }
        rest = after;
    }
    out
}
