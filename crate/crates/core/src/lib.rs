//! Core of the plan-execute-inspect-learn agent: the action grammar, planner,
//! executor, inspector, learner, built-in tools, the external tool protocol
//! and the session loop.

pub mod executor;
pub mod grammar;
pub mod inspector;
pub mod learner;
pub mod planner;
pub mod protocol;
pub mod session;
pub mod templates;
pub mod tools;
pub mod trace;

pub use grammar::{parse_action, render_action, validate_call, ActionCall, ToolRegistry, ToolSpec};
pub use inspector::{Inspector, MediaKind, ResourceDraft, Summary, VisualResource};
pub use learner::{LearnerConfig, LearnerMode, LearnerOutcome, MemoryBank, MemoryEntry, OutcomeKind, Verdict};
pub use planner::{LlmBackend, ScriptEntry, ScriptedBackend};
pub use session::{run_query, AblationMode, QueryResult, Scenario, SessionConfig};
pub use templates::Templates;
pub use trace::{ReasoningTrace, Terminal, TraceStep};
