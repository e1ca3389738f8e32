//! Prompt assembly and the Thought/Action output contract.

mod backend;
mod prompt;

use thiserror::Error;

pub use backend::{
    apply_stop, BackendError, CompletionRequest, HttpBackend, HttpBackendConfig, LlmBackend, Role, ScriptEntry,
    ScriptedBackend, ScriptedCall,
};
pub use prompt::{assemble_prompt, build_instruction, render_example, PromptBundle};

/// Stop sequence that keeps the backend from inventing observations.
pub const STOP: &[&str] = &["Observation:"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerStep {
    Step { thought: String, action_raw: String },
    Final { answer: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct FormatError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed planner output: {0}")]
    Format(#[from] FormatError),
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = line.trim_start();
    let head = line.get(..label.len())?;
    head.eq_ignore_ascii_case(label).then(|| line[label.len()..].trim())
}

/// Reads `Thought: ...` + `Action: ...` or `Final Answer: ...`. Whichever of
/// an Action line or a Final Answer line comes first decides the variant.
pub fn parse_planner_output(text: &str) -> Result<PlannerStep, FormatError> {
    let lines: Vec<&str> = text.trim().lines().collect();
    let mut thought: Option<String> = None;
    for line in &lines {
        if let Some(answer) = strip_label(line, "Final Answer:") {
            if answer.is_empty() {
                return Err(FormatError("the Final Answer line is empty".into()));
            }
            return Ok(PlannerStep::Final {
                answer: answer.to_string(),
            });
        }
        if let Some(action) = strip_label(line, "Action:") {
            let Some(thought) = thought else {
                return Err(FormatError("expected a Thought line before the Action line".into()));
            };
            if action.is_empty() {
                return Err(FormatError("the Action line is empty".into()));
            }
            return Ok(PlannerStep::Step {
                thought,
                action_raw: action.to_string(),
            });
        }
        if let Some(t) = strip_label(line, "Thought:") {
            thought = Some(t.to_string());
        } else if let Some(t) = thought.as_mut() {
            if !line.trim().is_empty() {
                t.push(' ');
                t.push_str(line.trim());
            }
        }
    }
    Err(FormatError(
        "expected `Thought: ...` followed by `Action: ...`, or `Final Answer: ...`".into(),
    ))
}

/// One planner completion, parsed.
pub fn next_step(backend: &dyn LlmBackend, prompt: &str) -> Result<PlannerStep, PlannerError> {
    let reply = backend.complete(&CompletionRequest {
        role: Role::Planner,
        prompt,
        stop: STOP,
    })?;
    Ok(parse_planner_output(&reply)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thought_and_action() {
        let out =
            parse_planner_output("Thought: I need the caption.\nAction: caption(\"describe\", visual[0])").unwrap();
        assert_eq!(
            out,
            PlannerStep::Step {
                thought: "I need the caption.".into(),
                action_raw: "caption(\"describe\", visual[0])".into()
            }
        );
    }

    #[test]
    fn final_answer() {
        assert_eq!(
            parse_planner_output("  Final Answer: United States flag \n").unwrap(),
            PlannerStep::Final {
                answer: "United States flag".into()
            }
        );
        assert!(matches!(
            parse_planner_output("Thought: done\nFinal Answer: 3"),
            Ok(PlannerStep::Final { .. })
        ));
    }

    #[test]
    fn chatter_is_a_format_error() {
        assert!(parse_planner_output("Sure! Let me think...").is_err());
        assert!(parse_planner_output("Action: caption(\"x\", visual[0])").is_err());
        assert!(parse_planner_output("Thought: x\nAction:").is_err());
        assert!(parse_planner_output("").is_err());
    }

    #[test]
    fn multi_line_thought() {
        let out = parse_planner_output("Thought: first\nsecond\nAction: asr(None, visual[0])\nextra").unwrap();
        assert_eq!(
            out,
            PlannerStep::Step {
                thought: "first second".into(),
                action_raw: "asr(None, visual[0])".into()
            }
        );
    }

    #[test]
    fn next_step_uses_stop_sequence() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::new(
            "planner",
            "Thought: t\nAction: asr(None, visual[0])\nObservation: invented",
        )]);
        let step = next_step(&backend, "prompt").unwrap();
        assert!(matches!(step, PlannerStep::Step { ref action_raw, .. } if action_raw == "asr(None, visual[0])"));
        assert!(matches!(
            next_step(&backend, "prompt"),
            Err(PlannerError::Backend(BackendError::Exhausted { .. }))
        ));
    }
}
