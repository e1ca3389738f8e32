use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GrammarError;

/// What the first argument of a call must be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// A quoted text query.
    RequiredText,
    /// The literal `None`.
    NoneLiteral,
}

/// A legal second argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Image,
    Video,
    EmptyList,
}

/// Where a tool runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Builtin,
    External,
    LlmPrompt,
}

impl fmt::Display for Execution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Execution::Builtin => "builtin",
            Execution::External => "external",
            Execution::LlmPrompt => "llm_prompt",
        })
    }
}

/// Contract of one tool: its invoke command and what it accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub query_kind: QueryKind,
    pub resource_kinds: BTreeSet<ArgKind>,
    pub produces_artifact: bool,
    pub execution: Execution,
    /// Whether `[visual[i], visual[j], ...]` with more than one entry is legal.
    #[serde(default)]
    pub multi_resource: bool,
}

impl ToolSpec {
    pub fn new(
        name: &str,
        description: &str,
        query_kind: QueryKind,
        kinds: &[ArgKind],
        produces_artifact: bool,
        execution: Execution,
    ) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            query_kind,
            resource_kinds: kinds.iter().copied().collect(),
            produces_artifact,
            execution,
            multi_resource: false,
        }
    }

    pub fn check(&self) -> Result<(), GrammarError> {
        if !is_tool_name(&self.name) {
            return Err(GrammarError::InvalidSpec(format!(
                "tool name `{}` must match [a-z][a-z0-9_]*",
                self.name
            )));
        }
        if self.resource_kinds.is_empty() {
            return Err(GrammarError::InvalidSpec(format!(
                "tool `{}` accepts no resource kinds",
                self.name
            )));
        }
        Ok(())
    }

    pub fn accepts_empty(&self) -> bool {
        self.resource_kinds.contains(&ArgKind::EmptyList)
    }

    pub fn accepts_visual(&self) -> bool {
        self.resource_kinds
            .iter()
            .any(|k| matches!(k, ArgKind::Image | ArgKind::Video))
    }

    /// Invoke command as shown to the planner, e.g. `caption(query, visual[i])`.
    pub fn invoke_command(&self) -> String {
        let query = match self.query_kind {
            QueryKind::RequiredText => "query",
            QueryKind::NoneLiteral => "None",
        };
        let resources = if self.accepts_visual() { "visual[i]" } else { "[]" };
        format!("{}({}, {})", self.name, query, resources)
    }

    /// Human-readable list of the visual kinds, e.g. "images" or "images or videos".
    pub fn accepted_kinds_phrase(&self) -> String {
        let mut parts = Vec::new();
        if self.resource_kinds.contains(&ArgKind::Image) {
            parts.push("images");
        }
        if self.resource_kinds.contains(&ArgKind::Video) {
            parts.push("videos");
        }
        if parts.is_empty() {
            "no visual input".to_string()
        } else {
            parts.join(" or ")
        }
    }
}

pub(crate) fn is_tool_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Tools available to a session, kept in registration order.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
    by_name: HashMap<String, usize>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), GrammarError> {
        spec.check()?;
        if self.by_name.contains_key(&spec.name) {
            return Err(GrammarError::DuplicateTool(spec.name));
        }
        self.by_name.insert(spec.name.clone(), self.specs.len());
        self.specs.push(spec);
        Ok(())
    }

    /// Registers every spec or none of them.
    pub fn merge<I: IntoIterator<Item = ToolSpec>>(&mut self, specs: I) -> Result<(), GrammarError> {
        let mut staged = self.clone();
        for spec in specs {
            staged.register(spec)?;
        }
        *self = staged;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.by_name.get(name).map(|&i| &self.specs[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs.iter()
    }

    /// The full thirteen-module toolset, in catalogue order (a)..(m).
    pub fn standard() -> Self {
        let mut reg = Self::new();
        for spec in standard_specs() {
            reg.register(spec).expect("standard specs are unique");
        }
        reg
    }

    /// Only the tools this crate runs itself (builtin and prompt-backed).
    pub fn local_only() -> Self {
        let mut reg = Self::new();
        for spec in standard_specs()
            .into_iter()
            .filter(|s| s.execution != Execution::External)
        {
            reg.register(spec).expect("standard specs are unique");
        }
        reg
    }
}

pub fn standard_specs() -> Vec<ToolSpec> {
    use ArgKind::*;
    use Execution::*;
    use QueryKind::*;
    vec![
        ToolSpec::new(
            "caption",
            "extract the visual information in an image.",
            RequiredText,
            &[Image],
            false,
            External,
        ),
        ToolSpec::new(
            "video_narration",
            "output narration based on video's visual information.",
            RequiredText,
            &[Video],
            false,
            External,
        ),
        ToolSpec::new(
            "object_detect",
            "detect required objects in an image.",
            RequiredText,
            &[Image],
            false,
            External,
        ),
        ToolSpec::new(
            "text_detect",
            "extract the OCR in an image.",
            NoneLiteral,
            &[Image],
            false,
            External,
        ),
        ToolSpec::new(
            "asr",
            "transcribe audio to text.",
            NoneLiteral,
            &[Video],
            false,
            External,
        ),
        ToolSpec::new(
            "region_ground",
            "locate the queried region in an image.",
            RequiredText,
            &[Image],
            true,
            External,
        ),
        ToolSpec::new(
            "narration_ground",
            "find the clip based on the narration of a video.",
            RequiredText,
            &[Video],
            true,
            LlmPrompt,
        ),
        ToolSpec::new(
            "text_ground",
            "find the location of a specific text in an image.",
            RequiredText,
            &[Image],
            true,
            Builtin,
        ),
        ToolSpec::new(
            "subtitle_ground",
            "find the clip based on the subtitle of a video.",
            RequiredText,
            &[Video],
            true,
            LlmPrompt,
        ),
        ToolSpec::new(
            "knowledge_reason",
            "infer the answer based on the commonsense.",
            RequiredText,
            &[EmptyList],
            false,
            LlmPrompt,
        ),
        ToolSpec::new(
            "narration_reason",
            "infer the answer based on narration of a video.",
            RequiredText,
            &[Video],
            false,
            LlmPrompt,
        ),
        ToolSpec::new(
            "subtitle_reason",
            "infer the answer based on subtitle of a video.",
            RequiredText,
            &[Video],
            false,
            LlmPrompt,
        ),
        ToolSpec::new(
            "temporal_reason",
            "find the clip based on temporal relationship words.",
            RequiredText,
            &[Video],
            true,
            Builtin,
        ),
    ]
}
