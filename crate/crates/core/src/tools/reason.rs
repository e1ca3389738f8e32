//! Tools that are a single prompt to the language backend: the three reason
//! tools and the two transcript-based ground tools.

use std::sync::LazyLock;

use regex::Regex;

use super::transcript::{render_numbered, TranscriptLine};
use super::{Interval, ToolError};
use crate::planner::{CompletionRequest, LlmBackend, Role};
use crate::templates::{fill, Prompts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReasonKind {
    Knowledge,
    Narration,
    Subtitle,
}

impl ReasonKind {
    pub fn tool_name(self) -> &'static str {
        match self {
            ReasonKind::Knowledge => "knowledge_reason",
            ReasonKind::Narration => "narration_reason",
            ReasonKind::Subtitle => "subtitle_reason",
        }
    }

    fn template(self, prompts: &Prompts) -> &str {
        match self {
            ReasonKind::Knowledge => &prompts.knowledge_reason,
            ReasonKind::Narration => &prompts.narration_reason,
            ReasonKind::Subtitle => &prompts.subtitle_reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptKind {
    Narration,
    Subtitle,
}

impl TranscriptKind {
    pub fn tool_name(self) -> &'static str {
        match self {
            TranscriptKind::Narration => "narration_ground",
            TranscriptKind::Subtitle => "subtitle_ground",
        }
    }
}

/// Outcome of a transcript-based grounding call.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundOutcome {
    pub interval: Option<Interval>,
    pub rationale: String,
}

impl GroundOutcome {
    pub fn found(&self) -> bool {
        self.interval.is_some()
    }

    fn not_found(rationale: impl Into<String>) -> Self {
        Self {
            interval: None,
            rationale: rationale.into(),
        }
    }
}

static SPAN_REPLY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(\d+(?:\.\d+)?)\s*s?\s*-\s*(\d+(?:\.\d+)?)\s*s?\s*\.?\s*$").expect("valid regex")
});

/// Reads a `START - END` reply, clamped to `[0, duration_s]`. Anything else,
/// including the literal "no relevant segment", is a not-found outcome.
pub fn parse_ground_reply(reply: &str, duration_s: f64) -> GroundOutcome {
    let trimmed = reply.trim();
    if trimmed.to_lowercase().contains("no relevant segment") {
        return GroundOutcome::not_found("no relevant segment");
    }
    let Some(caps) = SPAN_REPLY.captures(trimmed) else {
        return GroundOutcome::not_found(format!("unreadable reply `{trimmed}`"));
    };
    let start: f64 = caps[1].parse().unwrap_or(f64::NAN);
    let end: f64 = caps[2].parse().unwrap_or(f64::NAN);
    let start = start.max(0.0);
    let end = end.min(duration_s);
    if !(start < end) {
        return GroundOutcome::not_found(format!("segment `{trimmed}` lies outside the video"));
    }
    GroundOutcome {
        interval: Some(Interval {
            start_s: start,
            end_s: end,
        }),
        rationale: format!("backend located `{trimmed}`"),
    }
}

pub fn ground_from_transcript(
    kind: TranscriptKind,
    backend: &dyn LlmBackend,
    prompts: &Prompts,
    query: &str,
    lines: &[TranscriptLine],
    duration_s: f64,
) -> Result<GroundOutcome, ToolError> {
    if lines.is_empty() {
        return Err(ToolError::Precondition(format!(
            "{} needs a non-empty transcript",
            kind.tool_name()
        )));
    }
    let template = match kind {
        TranscriptKind::Narration => &prompts.narration_ground,
        TranscriptKind::Subtitle => &prompts.subtitle_ground,
    };
    let context = render_numbered(lines);
    let prompt = fill(template, &[("context", &context), ("query", query)]);
    let reply = backend.complete(&CompletionRequest {
        role: Role::Tool(kind.tool_name().to_string()),
        prompt: &prompt,
        stop: &[],
    })?;
    Ok(parse_ground_reply(&reply, duration_s))
}

/// One completion with the kind-specific template; the reply is the answer.
pub fn reason_over_text(
    kind: ReasonKind,
    backend: &dyn LlmBackend,
    prompts: &Prompts,
    query: &str,
    context: Option<&str>,
) -> Result<String, ToolError> {
    let context = match (kind, context) {
        (ReasonKind::Knowledge, c) => c.unwrap_or(""),
        (_, Some(c)) if !c.trim().is_empty() => c,
        _ => {
            return Err(ToolError::Precondition(format!(
                "{} needs a transcript as context",
                kind.tool_name()
            )))
        }
    };
    let prompt = fill(kind.template(prompts), &[("context", context), ("query", query)]);
    let reply = backend.complete(&CompletionRequest {
        role: Role::Tool(kind.tool_name().to_string()),
        prompt: &prompt,
        stop: &[],
    })?;
    Ok(reply.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{ScriptEntry, ScriptedBackend};
    use crate::templates::Templates;

    fn lines() -> Vec<TranscriptLine> {
        vec![
            TranscriptLine::new(0.0, 12.0, "intro"),
            TranscriptLine::new(12.0, 34.0, "adding black pepper"),
        ]
    }

    #[test]
    fn ground_reply_found() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::new("tool:narration_ground", "12.0 - 34.0")]);
        let t = Templates::default();
        let out = ground_from_transcript(
            TranscriptKind::Narration,
            &backend,
            &t.prompts,
            "pepper",
            &lines(),
            100.0,
        )
        .unwrap();
        assert_eq!(
            out.interval,
            Some(Interval {
                start_s: 12.0,
                end_s: 34.0
            })
        );
        let prompt = &backend.calls()[0].prompt;
        assert!(prompt.contains("[2] 12 - 34: adding black pepper"));
    }

    #[test]
    fn ground_reply_negative_and_clamped() {
        assert!(!parse_ground_reply("no relevant segment", 100.0).found());
        assert!(!parse_ground_reply("somewhere in the middle", 100.0).found());
        assert_eq!(
            parse_ground_reply("90 - 120", 100.0).interval,
            Some(Interval {
                start_s: 90.0,
                end_s: 100.0
            })
        );
        assert!(!parse_ground_reply("120 - 130", 100.0).found());
        assert_eq!(
            parse_ground_reply(" 3.5s - 7s ", 10.0).interval,
            Some(Interval {
                start_s: 3.5,
                end_s: 7.0
            })
        );
    }

    #[test]
    fn ground_needs_lines() {
        let backend = ScriptedBackend::new(vec![]);
        let t = Templates::default();
        assert!(matches!(
            ground_from_transcript(TranscriptKind::Subtitle, &backend, &t.prompts, "q", &[], 10.0),
            Err(ToolError::Precondition(_))
        ));
    }

    #[test]
    fn reason_kinds() {
        let t = Templates::default();
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new("tool:knowledge_reason", " Los Angeles \n"),
            ScriptEntry::new("tool:subtitle_reason", "two spoons"),
        ]);
        assert_eq!(
            reason_over_text(
                ReasonKind::Knowledge,
                &backend,
                &t.prompts,
                "which city?",
                Some("trace")
            )
            .unwrap(),
            "Los Angeles"
        );
        assert!(matches!(
            reason_over_text(ReasonKind::Narration, &backend, &t.prompts, "q", None),
            Err(ToolError::Precondition(_))
        ));
        assert_eq!(
            reason_over_text(
                ReasonKind::Subtitle,
                &backend,
                &t.prompts,
                "how much?",
                Some("[1] 0 - 3: two spoons")
            )
            .unwrap(),
            "two spoons"
        );
    }
}
