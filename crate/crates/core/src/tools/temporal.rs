//! Rule-based temporal localization.
//!
//! Absolute words (beginning, middle, end) pick one of five equal segments of
//! the video. Relative words (before, after) split the video into eight equal
//! segments, find the segment holding the midpoint of the given span, and
//! return its neighbour.

use std::fmt;
use std::str::FromStr;

use super::{Interval, ToolError};

pub const ABSOLUTE_SEGMENTS: usize = 5;
pub const RELATIVE_SEGMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalWord {
    Beginning,
    Middle,
    End,
    Before,
    After,
}

impl TemporalWord {
    pub fn is_relative(self) -> bool {
        matches!(self, TemporalWord::Before | TemporalWord::After)
    }
}

impl fmt::Display for TemporalWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalWord::Beginning => "beginning",
            TemporalWord::Middle => "middle",
            TemporalWord::End => "end",
            TemporalWord::Before => "before",
            TemporalWord::After => "after",
        })
    }
}

impl FromStr for TemporalWord {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "beginning" | "begin" | "start" => Ok(TemporalWord::Beginning),
            "middle" => Ok(TemporalWord::Middle),
            "end" => Ok(TemporalWord::End),
            "before" => Ok(TemporalWord::Before),
            "after" => Ok(TemporalWord::After),
            other => Err(ToolError::QueryFormat(format!(
                "unknown temporal word `{other}` (use beginning, middle, end, before or after)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalQuery {
    pub word: TemporalWord,
    pub span: Option<(f64, f64)>,
}

/// Parses `word` or `word: a - b`.
pub fn parse_temporal_query(text: &str) -> Result<TemporalQuery, ToolError> {
    let (word_part, span_part) = match text.split_once(':') {
        Some((w, s)) => (w, Some(s)),
        None => (text, None),
    };
    let word: TemporalWord = word_part.parse()?;
    let span = span_part.map(parse_span).transpose()?;
    match (word.is_relative(), span) {
        (true, None) => Err(ToolError::QueryFormat(format!(
            "`{word}` needs time stamps, e.g. `{word}: 3 - 6`"
        ))),
        (false, Some(_)) => Err(ToolError::QueryFormat(format!(
            "`{word}` is an absolute word and takes no time stamps"
        ))),
        _ => Ok(TemporalQuery { word, span }),
    }
}

fn parse_span(text: &str) -> Result<(f64, f64), ToolError> {
    let bad = || ToolError::QueryFormat(format!("time stamps `{}` are not `start - end`", text.trim()));
    let (a, b) = text.trim().split_once('-').ok_or_else(bad)?;
    let start: f64 = a.trim().parse().map_err(|_| bad())?;
    let end: f64 = b.trim().parse().map_err(|_| bad())?;
    if !start.is_finite() || !end.is_finite() || start < 0.0 || end < start {
        return Err(bad());
    }
    Ok((start, end))
}

/// Endpoint `k` of an `n`-way partition of `[0, duration]`.
pub fn boundary(duration: f64, k: usize, n: usize) -> f64 {
    if k == n {
        duration
    } else {
        duration * k as f64 / n as f64
    }
}

pub fn segment(duration: f64, k: usize, n: usize) -> Interval {
    Interval {
        start_s: boundary(duration, k, n),
        end_s: boundary(duration, k + 1, n),
    }
}

/// Index of the segment containing `t`; a point on a shared boundary belongs
/// to the earlier segment.
fn segment_containing(duration: f64, t: f64, n: usize) -> usize {
    let guess = ((t / duration) * n as f64).ceil() as isize - 1;
    let mut k = guess.clamp(0, n as isize - 1) as usize;
    // correct the float estimate against the exact boundaries
    while k > 0 && t <= boundary(duration, k, n) {
        k -= 1;
    }
    while k + 1 < n && t > boundary(duration, k + 1, n) {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalAnswer {
    pub interval: Interval,
    /// Set when before/after had no neighbour and the edge segment was returned.
    pub clamped: bool,
}

pub fn temporal_reason(query: &TemporalQuery, duration_s: f64) -> Result<TemporalAnswer, ToolError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(ToolError::Precondition(format!(
            "video duration must be positive, got {duration_s}"
        )));
    }
    let n = ABSOLUTE_SEGMENTS;
    let answer = |k| TemporalAnswer {
        interval: segment(duration_s, k, n),
        clamped: false,
    };
    match query.word {
        TemporalWord::Beginning => Ok(answer(0)),
        TemporalWord::Middle => Ok(answer(2)),
        TemporalWord::End => Ok(answer(4)),
        TemporalWord::Before | TemporalWord::After => {
            let (start, end) = query
                .span
                .ok_or_else(|| ToolError::QueryFormat(format!("`{}` needs time stamps", query.word)))?;
            let mid = (start + end) / 2.0;
            if mid > duration_s {
                return Err(ToolError::QueryFormat(format!(
                    "time stamps {start} - {end} lie outside the {duration_s}s video"
                )));
            }
            let n = RELATIVE_SEGMENTS;
            let k = segment_containing(duration_s, mid, n);
            let (target, clamped) = match query.word {
                TemporalWord::Before if k == 0 => (0, true),
                TemporalWord::Before => (k - 1, false),
                _ if k + 1 == n => (k, true),
                _ => (k + 1, false),
            };
            Ok(TemporalAnswer {
                interval: segment(duration_s, target, n),
                clamped,
            })
        }
    }
}
