use crate::grammar::{render_toolset_illustration, GrammarError, ToolRegistry};
use crate::learner::MemoryEntry;
use crate::templates::{fill, Prompts};
use crate::trace::{render_steps, ReasoningTrace};

/// Everything a planner prompt is made of.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    /// Toolset illustration, in-context examples and any critique.
    pub instruction: String,
    pub query: String,
    /// Steps so far, with summaries of produced resources in place.
    pub trace_rendering: String,
    /// Summaries of the resources present before the first step.
    pub visual_summaries: Vec<String>,
}

impl PromptBundle {
    pub fn from_trace(instruction: &str, query: &str, trace: &ReasoningTrace) -> Self {
        Self {
            instruction: instruction.to_string(),
            query: query.to_string(),
            trace_rendering: render_steps(&trace.steps),
            visual_summaries: trace.initial_summaries.iter().map(|s| s.text().to_string()).collect(),
        }
    }

    pub fn history(&self) -> String {
        let mut out = String::new();
        for s in &self.visual_summaries {
            out.push_str("Summary: ");
            out.push_str(s);
            out.push('\n');
        }
        out.push_str(&self.trace_rendering);
        out
    }
}

/// A stored example as it appears inside the instruction.
pub fn render_example(prompts: &Prompts, entry: &MemoryEntry) -> String {
    let trace = entry.trace.render_history();
    fill(
        &prompts.example,
        &[
            ("query", &entry.query),
            ("trace", trace.trim_end()),
            ("answer", &entry.answer),
        ],
    )
}

/// Instruction prompt: toolset illustration, then examples in retrieval
/// order, then the critique of a rejected attempt if there is one.
pub fn build_instruction(
    prompts: &Prompts,
    registry: &ToolRegistry,
    examples: &[MemoryEntry],
    critique: Option<&str>,
) -> Result<String, GrammarError> {
    let tools = render_toolset_illustration(registry)?;
    let mut out = fill(&prompts.instruction, &[("tools", &tools)]);
    if !examples.is_empty() {
        out.push_str("\n\n");
        out.push_str(&prompts.examples_header);
        for e in examples {
            out.push('\n');
            out.push_str(&render_example(prompts, e));
        }
    }
    if let Some(c) = critique {
        out.push_str("\n\n");
        out.push_str(&fill(&prompts.critique, &[("critique", c)]));
    }
    Ok(out)
}

pub fn assemble_prompt(prompts: &Prompts, bundle: &PromptBundle) -> String {
    fill(
        &prompts.planner,
        &[
            ("instruction", &bundle.instruction),
            ("query", &bundle.query),
            ("history", &bundle.history()),
        ],
    )
}
