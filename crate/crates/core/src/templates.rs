//! Prompt and observation wording, loaded from a TOML data file.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

const DEFAULT: &str = include_str!("../templates/default.toml");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid templates: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prompts {
    pub instruction: String,
    pub examples_header: String,
    pub example: String,
    pub critique: String,
    pub planner: String,
    pub plan: String,
    pub evaluator: String,
    pub judge: String,
    pub knowledge_reason: String,
    pub narration_reason: String,
    pub subtitle_reason: String,
    pub narration_ground: String,
    pub subtitle_ground: String,
    /// Query for the optional caption pass over user images.
    pub caption_image: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observations {
    pub parse_error: String,
    pub format_error: String,
    pub validation: String,
    pub missing_sidecar: String,
    pub transport: String,
    pub tool_failed: String,
    pub detected: String,
    pub detected_none: String,
    pub ground_found: String,
    pub ground_not_found: String,
    pub temporal: String,
    pub temporal_clamped: String,
    pub text_found: String,
    pub text_not_found: String,
    pub transcript: String,
    pub narration: String,
    pub ocr: String,
    pub new_resource: String,
    pub auto_asr_thought: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub version: String,
    pub prompts: Prompts,
    pub observations: Observations,
}

impl Default for Templates {
    fn default() -> Self {
        Self::from_toml(DEFAULT).expect("bundled templates parse")
    }
}

impl Templates {
    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Substitutes `{name}` placeholders in one pass. Unknown placeholders are left
/// as they are, and substituted text is never rescanned.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_load() {
        let t = Templates::default();
        assert_eq!(t.version, "1");
        assert!(t.prompts.instruction.contains("{tools}"));
    }

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("a {x} b {y}", &[("x", "{y}"), ("y", "2")]), "a {y} b 2");
        assert_eq!(fill("keep {unknown} and {", &[]), "keep {unknown} and {");
    }
}
