//! Tools implemented in-process: rule-based temporal localization, OCR text
//! grounding, detection counting, and the prompt-backed reason/ground tools.

mod count;
mod reason;
mod temporal;
mod text_ground;
mod transcript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::BackendError;

pub use count::{count_objects, fmt_box, Detection};
pub use reason::{
    ground_from_transcript, parse_ground_reply, reason_over_text, GroundOutcome, ReasonKind, TranscriptKind,
};
pub use temporal::{
    boundary, parse_temporal_query, segment, temporal_reason, TemporalAnswer, TemporalQuery, TemporalWord,
    ABSOLUTE_SEGMENTS, RELATIVE_SEGMENTS,
};
pub use text_ground::{default_threshold, edit_distance, parse_text_query, text_ground, OcrBox, TextQuery};
pub use transcript::{check_lines, format_sidecar, parse_sidecar, render_numbered, slice_lines, TranscriptLine};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("bad query: {0}")]
    QueryFormat(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bad sidecar data: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A time span in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn is_valid_within(&self, duration_s: f64) -> bool {
        0.0 <= self.start_s && self.start_s < self.end_s && self.end_s <= duration_s
    }
}

/// Seconds without trailing zeros: `120`, `12.5`, `3.333`.
pub fn fmt_secs(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{value:.0}")
    } else {
        let s = format!("{value:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seconds_formatting() {
        assert_eq!(fmt_secs(120.0), "120");
        assert_eq!(fmt_secs(12.5), "12.5");
        assert_eq!(fmt_secs(10.0 / 3.0), "3.333");
        assert_eq!(fmt_secs(0.0), "0");
    }
}
