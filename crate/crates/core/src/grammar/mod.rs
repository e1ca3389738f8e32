//! Tool registry and the code-style action language.
//!
//! Every action the planner emits has the shape `tool(<query>, <resources>)`,
//! where the query is a quoted string or `None` and the resources are `[]`,
//! `visual[i]` or a bracketed list of `visual[i]` references.

mod parse;
mod registry;
mod validate;

use thiserror::Error;

pub use parse::{parse_action, render_action, ActionCall, ParseError};
pub(crate) use registry::is_tool_name;
pub use registry::{standard_specs, ArgKind, Execution, QueryKind, ToolRegistry, ToolSpec};
pub use validate::{validate_call, ValidationReport, Violation, ViolationCode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid tool spec: {0}")]
    InvalidSpec(String),
    #[error("tool registry is empty")]
    EmptyRegistry,
}

/// One line per tool: its invoke command followed by its illustration, in
/// registration order.
pub fn render_toolset_illustration(registry: &ToolRegistry) -> Result<String, GrammarError> {
    if registry.is_empty() {
        return Err(GrammarError::EmptyRegistry);
    }
    let lines: Vec<String> = registry
        .iter()
        .map(|spec| format!("{}: {}", spec.invoke_command(), spec.description))
        .collect();
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn illustration_single_tool() {
        let mut reg = ToolRegistry::new();
        reg.register(standard_specs()[0].clone()).unwrap();
        let text = render_toolset_illustration(&reg).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("caption(query, visual[i])"));
        assert!(text.contains("extract the visual information in an image"));
    }

    #[test]
    fn illustration_empty_registry() {
        assert_eq!(
            render_toolset_illustration(&ToolRegistry::new()),
            Err(GrammarError::EmptyRegistry)
        );
    }

    #[test]
    fn illustration_full_registry_in_order() {
        let text = render_toolset_illustration(&ToolRegistry::standard()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        let expected_prefixes = [
            "caption(query, visual[i])",
            "video_narration(query, visual[i])",
            "object_detect(query, visual[i])",
            "text_detect(None, visual[i])",
            "asr(None, visual[i])",
            "region_ground(query, visual[i])",
            "narration_ground(query, visual[i])",
            "text_ground(query, visual[i])",
            "subtitle_ground(query, visual[i])",
            "knowledge_reason(query, [])",
            "narration_reason(query, visual[i])",
            "subtitle_reason(query, visual[i])",
            "temporal_reason(query, visual[i])",
        ];
        for (line, prefix) in lines.iter().zip(expected_prefixes) {
            assert!(line.starts_with(prefix), "{line} vs {prefix}");
        }
    }
}
