//! Time-stamped text lines (subtitles, ASR output, narration) and their
//! sidecar file format: one `START\tEND\ttext` line per entry, seconds in
//! decimal, UTF-8.

use serde::{Deserialize, Serialize};

use super::{fmt_secs, Interval, ToolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

impl TranscriptLine {
    pub fn new(start_s: f64, end_s: f64, text: &str) -> Self {
        Self {
            start_s,
            end_s,
            text: text.to_string(),
        }
    }
}

pub fn check_lines(lines: &[TranscriptLine]) -> Result<(), ToolError> {
    for (i, line) in lines.iter().enumerate() {
        if !(line.start_s >= 0.0) || line.start_s > line.end_s {
            return Err(ToolError::Sidecar(format!(
                "line {}: start {} must be >= 0 and <= end {}",
                i + 1,
                line.start_s,
                line.end_s
            )));
        }
        if i > 0 && lines[i - 1].start_s > line.start_s {
            return Err(ToolError::Sidecar(format!(
                "line {}: lines are not sorted by start time",
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn parse_sidecar(text: &str) -> Result<Vec<TranscriptLine>, ToolError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let mut parts = raw.splitn(3, '\t');
        let (Some(a), Some(b), Some(t)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ToolError::Sidecar(format!(
                "line {}: expected START<TAB>END<TAB>text",
                n + 1
            )));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| ToolError::Sidecar(format!("line {}: bad time stamp `{s}`", n + 1)))
        };
        out.push(TranscriptLine {
            start_s: parse(a)?,
            end_s: parse(b)?,
            text: t.to_string(),
        });
    }
    check_lines(&out)?;
    Ok(out)
}

pub fn format_sidecar(lines: &[TranscriptLine]) -> String {
    lines
        .iter()
        .map(|l| format!("{}\t{}\t{}\n", fmt_secs(l.start_s), fmt_secs(l.end_s), l.text))
        .collect()
}

/// Lines overlapping `span`, re-timed relative to the span start. Used to give
/// a clip the part of its parent's transcript it covers.
pub fn slice_lines(lines: &[TranscriptLine], span: Interval) -> Vec<TranscriptLine> {
    lines
        .iter()
        .filter(|l| l.end_s > span.start_s && l.start_s < span.end_s)
        .map(|l| TranscriptLine {
            start_s: (l.start_s.max(span.start_s) - span.start_s),
            end_s: (l.end_s.min(span.end_s) - span.start_s),
            text: l.text.clone(),
        })
        .collect()
}

/// Numbered lines as fed to prompt-backed tools, e.g. `[1] 0-3: hello`.
pub fn render_numbered(lines: &[TranscriptLine]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            format!(
                "[{}] {} - {}: {}",
                i + 1,
                fmt_secs(l.start_s),
                fmt_secs(l.end_s),
                l.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
