//! Bookkeeping for every visual input and intermediate result of a session.
//!
//! Records are append-only and indexed densely in registration order. The
//! one-line [`Summary`] of each record is what the planner sees. Transcripts
//! and OCR results live in a side table so records never change after
//! registration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::{fmt_secs, slice_lines, Interval, OcrBox, TranscriptLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
}

impl MediaKind {
    pub fn article(self) -> &'static str {
        match self {
            MediaKind::Image => "an",
            MediaKind::Video => "a",
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    User,
    System,
}

/// Which resource and tool produced a system artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub index: usize,
    pub tool: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualResource {
    pub index: usize,
    pub kind: MediaKind,
    pub source: Source,
    pub location: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_audio: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_subtitles: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_span: Option<Interval>,
}

/// Metadata for a resource about to be registered.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDraft {
    pub kind: MediaKind,
    pub location: String,
    pub description: String,
    pub duration_s: Option<f64>,
    pub has_audio: Option<bool>,
    pub has_subtitles: Option<bool>,
    pub parent: Option<Provenance>,
    pub clip_span: Option<Interval>,
}

impl ResourceDraft {
    pub fn image(location: &str, description: &str) -> Self {
        Self {
            kind: MediaKind::Image,
            location: location.to_string(),
            description: description.to_string(),
            duration_s: None,
            has_audio: None,
            has_subtitles: None,
            parent: None,
            clip_span: None,
        }
    }

    pub fn video(location: &str, description: &str, duration_s: f64, has_audio: bool, has_subtitles: bool) -> Self {
        Self {
            kind: MediaKind::Video,
            duration_s: Some(duration_s),
            has_audio: Some(has_audio),
            has_subtitles: Some(has_subtitles),
            ..Self::image(location, description)
        }
    }

    pub fn derived_from(mut self, index: usize, tool: &str) -> Self {
        self.parent = Some(Provenance {
            index,
            tool: tool.to_string(),
        });
        self
    }

    pub fn with_span(mut self, span: Interval) -> Self {
        self.clip_span = Some(span);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Summary(pub String);

impl Summary {
    pub fn text(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InspectorError {
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
    #[error("visual[{0}] does not exist")]
    NotFound(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Sidecars {
    subtitles: Option<Vec<TranscriptLine>>,
    narration: Option<Vec<TranscriptLine>>,
    ocr: Option<Vec<OcrBox>>,
}

/// Resource store of one session.
#[derive(Debug, Clone, Default)]
pub struct Inspector {
    resources: Vec<VisualResource>,
    sidecars: Vec<Sidecars>,
    workspace: Option<PathBuf>,
}

impl Inspector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Artifacts produced by external tools are written under
    /// `<dir>/artifacts/<index>.<ext>`.
    pub fn with_workspace(dir: impl Into<PathBuf>) -> Self {
        Self {
            workspace: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn set_workspace(&mut self, dir: impl Into<PathBuf>) {
        self.workspace = Some(dir.into());
    }

    pub fn workspace(&self) -> Option<&Path> {
        self.workspace.as_deref()
    }

    pub fn artifact_path(&self, index: usize, ext: &str) -> Option<PathBuf> {
        self.workspace
            .as_ref()
            .map(|w| w.join("artifacts").join(format!("{index}.{ext}")))
    }

    pub fn next_index(&self) -> usize {
        self.resources.len()
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn register_resource(&mut self, draft: ResourceDraft) -> Result<(usize, Summary), InspectorError> {
        self.check_draft(&draft)?;
        let index = self.resources.len();
        let resource = VisualResource {
            index,
            kind: draft.kind,
            source: if draft.parent.is_some() {
                Source::System
            } else {
                Source::User
            },
            location: draft.location,
            description: draft.description,
            duration_s: draft.duration_s,
            has_audio: draft.has_audio,
            has_subtitles: draft.has_subtitles,
            parent: draft.parent,
            clip_span: draft.clip_span,
        };
        let summary = summarize(&resource);
        self.resources.push(resource);
        self.sidecars.push(Sidecars::default());
        Ok((index, summary))
    }

    fn check_draft(&self, d: &ResourceDraft) -> Result<(), InspectorError> {
        let bad = |m: String| Err(InspectorError::InvalidMetadata(m));
        if d.location.trim().is_empty() {
            return bad("location is empty".into());
        }
        match d.kind {
            MediaKind::Image => {
                if d.duration_s.is_some() || d.has_audio.is_some() || d.has_subtitles.is_some() {
                    return bad("images carry no duration, audio or subtitle fields".into());
                }
                if d.clip_span.is_some() {
                    return bad("images cannot have a clip span".into());
                }
            }
            MediaKind::Video => {
                let (Some(duration), Some(_), Some(_)) = (d.duration_s, d.has_audio, d.has_subtitles) else {
                    return bad("videos need duration, audio and subtitle fields".into());
                };
                if !(duration > 0.0) || !duration.is_finite() {
                    return bad(format!("video duration must be positive, got {duration}"));
                }
            }
        }
        if let Some(parent) = &d.parent {
            if parent.index >= self.resources.len() {
                return bad(format!("parent visual[{}] does not exist", parent.index));
            }
        }
        if let Some(span) = d.clip_span {
            let Some(parent) = &d.parent else {
                return bad("a clip span needs a parent video".into());
            };
            let parent_duration = self.resources[parent.index].duration_s.unwrap_or(0.0);
            if !span.is_valid_within(parent_duration) {
                return bad(format!(
                    "clip span {}-{} is not a non-empty part of [0, {}]",
                    fmt_secs(span.start_s),
                    fmt_secs(span.end_s),
                    fmt_secs(parent_duration)
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> Result<&VisualResource, InspectorError> {
        self.resources.get(index).ok_or(InspectorError::NotFound(index))
    }

    pub fn catalog(&self) -> &[VisualResource] {
        &self.resources
    }

    pub fn kinds(&self) -> Vec<MediaKind> {
        self.resources.iter().map(|r| r.kind).collect()
    }

    pub fn summaries(&self) -> Vec<Summary> {
        self.resources.iter().map(summarize).collect()
    }

    pub fn attach_subtitles(&mut self, index: usize, lines: Vec<TranscriptLine>) -> Result<(), InspectorError> {
        self.sidecar_mut(index)?.subtitles = Some(lines);
        Ok(())
    }

    pub fn attach_narration(&mut self, index: usize, lines: Vec<TranscriptLine>) -> Result<(), InspectorError> {
        self.sidecar_mut(index)?.narration = Some(lines);
        Ok(())
    }

    pub fn attach_ocr(&mut self, index: usize, boxes: Vec<OcrBox>) -> Result<(), InspectorError> {
        self.sidecar_mut(index)?.ocr = Some(boxes);
        Ok(())
    }

    fn sidecar_mut(&mut self, index: usize) -> Result<&mut Sidecars, InspectorError> {
        self.sidecars.get_mut(index).ok_or(InspectorError::NotFound(index))
    }

    /// Subtitles of a video; a clip without its own falls back to the slice of
    /// its parent's subtitles it covers.
    pub fn subtitles(&self, index: usize) -> Option<Vec<TranscriptLine>> {
        self.transcript(index, |s| s.subtitles.as_ref())
    }

    pub fn narration(&self, index: usize) -> Option<Vec<TranscriptLine>> {
        self.transcript(index, |s| s.narration.as_ref())
    }

    pub fn ocr(&self, index: usize) -> Option<&[OcrBox]> {
        self.sidecars.get(index)?.ocr.as_deref()
    }

    fn transcript(
        &self,
        index: usize,
        pick: impl Fn(&Sidecars) -> Option<&Vec<TranscriptLine>> + Copy,
    ) -> Option<Vec<TranscriptLine>> {
        if let Some(lines) = self.sidecars.get(index).and_then(pick) {
            return Some(lines.clone());
        }
        let res = self.resources.get(index)?;
        let (parent, span) = (res.parent.as_ref()?, res.clip_span?);
        let inherited = self.transcript(parent.index, pick)?;
        Some(slice_lines(&inherited, span))
    }
}

fn yes_no(flag: Option<bool>) -> &'static str {
    if flag.unwrap_or(false) {
        "yes"
    } else {
        "no"
    }
}

/// One-line description of a resource, always naming it as `visual[i]`.
pub fn summarize(r: &VisualResource) -> Summary {
    let origin = match (&r.parent, r.clip_span) {
        (None, _) => "user-provided".to_string(),
        (Some(p), Some(span)) => format!(
            "generated by {}; segment of visual[{}] from {}s to {}s",
            p.tool,
            p.index,
            fmt_secs(span.start_s),
            fmt_secs(span.end_s)
        ),
        (Some(p), None) => format!("generated by {} from visual[{}]", p.tool, p.index),
    };
    let mut line = format!("visual[{}]: {} ({}) — {}", r.index, r.kind, origin, r.description);
    if r.kind == MediaKind::Video {
        line.push_str(&format!(
            "; duration {}s; audio: {}; subtitles: {}",
            fmt_secs(r.duration_s.unwrap_or(0.0)),
            yes_no(r.has_audio),
            yes_no(r.has_subtitles)
        ));
    }
    Summary(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_image_gets_index_zero() {
        let mut ins = Inspector::new();
        let (idx, summary) = ins
            .register_resource(ResourceDraft::image("street.png", "a busy street"))
            .unwrap();
        assert_eq!(idx, 0);
        assert!(summary.text().contains("visual[0]"));
        assert!(summary.text().contains("image"));
        assert_eq!(ins.get(0).unwrap().source, Source::User);
    }

    #[test]
    fn image_summary_wording() {
        let mut ins = Inspector::new();
        ins.register_resource(ResourceDraft::image("a.png", "a cat")).unwrap();
        let (_, s) = ins
            .register_resource(ResourceDraft::image("menu.png", "a menu page"))
            .unwrap();
        assert_eq!(s.text(), "visual[1]: image (user-provided) — a menu page");
    }

    #[test]
    fn video_summary_carries_flags() {
        let mut ins = Inspector::new();
        let (_, s) = ins
            .register_resource(ResourceDraft::video("v.mp4", "cooking show", 120.0, true, true))
            .unwrap();
        for needle in ["120s", "audio", "subtitles"] {
            assert!(s.text().contains(needle), "{needle} missing from {s}");
        }
    }

    #[test]
    fn clip_summary_names_parent() {
        let mut ins = Inspector::new();
        ins.register_resource(ResourceDraft::video("v.mp4", "cooking show", 120.0, true, false))
            .unwrap();
        let clip = ResourceDraft::video("v.mp4#t=12,34", "clip about pepper", 22.0, true, false)
            .derived_from(0, "narration_ground")
            .with_span(Interval {
                start_s: 12.0,
                end_s: 34.0,
            });
        let (idx, s) = ins.register_resource(clip).unwrap();
        assert_eq!(idx, 1);
        assert!(s.text().contains("segment of visual[0]"));
        assert_eq!(ins.get(1).unwrap().source, Source::System);
    }

    #[test]
    fn inverted_span_is_invalid() {
        let mut ins = Inspector::new();
        ins.register_resource(ResourceDraft::video("v.mp4", "v", 100.0, false, false))
            .unwrap();
        let clip = ResourceDraft::video("c", "c", 10.0, false, false)
            .derived_from(0, "temporal_reason")
            .with_span(Interval {
                start_s: 50.0,
                end_s: 40.0,
            });
        assert!(matches!(
            ins.register_resource(clip),
            Err(InspectorError::InvalidMetadata(_))
        ));
        assert_eq!(ins.len(), 1);
    }

    #[test]
    fn metadata_rules() {
        let mut ins = Inspector::new();
        let mut img = ResourceDraft::image("a.png", "a");
        img.duration_s = Some(3.0);
        assert!(ins.register_resource(img).is_err());
        let mut vid = ResourceDraft::video("v", "v", 3.0, true, true);
        vid.has_audio = None;
        assert!(ins.register_resource(vid).is_err());
        assert!(ins.register_resource(ResourceDraft::image("", "x")).is_err());
        assert!(ins
            .register_resource(ResourceDraft::image("a", "x").derived_from(3, "region_ground"))
            .is_err());
    }

    #[test]
    fn get_out_of_range() {
        let mut ins = Inspector::new();
        ins.register_resource(ResourceDraft::image("a", "a")).unwrap();
        ins.register_resource(ResourceDraft::image("b", "b")).unwrap();
        assert_eq!(ins.get(5), Err(InspectorError::NotFound(5)));
    }

    #[test]
    fn catalog_order() {
        let mut ins = Inspector::new();
        assert!(ins.catalog().is_empty());
        ins.register_resource(ResourceDraft::image("a", "a")).unwrap();
        ins.register_resource(ResourceDraft::video("v", "v", 5.0, false, false))
            .unwrap();
        assert_eq!(ins.kinds(), vec![MediaKind::Image, MediaKind::Video]);
    }

    #[test]
    fn clips_inherit_sliced_subtitles() {
        let mut ins = Inspector::new();
        ins.register_resource(ResourceDraft::video("v", "v", 30.0, true, true))
            .unwrap();
        ins.attach_subtitles(
            0,
            vec![
                TranscriptLine::new(0.0, 10.0, "a"),
                TranscriptLine::new(10.0, 20.0, "b"),
            ],
        )
        .unwrap();
        let clip = ResourceDraft::video("c", "c", 10.0, true, true)
            .derived_from(0, "temporal_reason")
            .with_span(Interval {
                start_s: 10.0,
                end_s: 20.0,
            });
        ins.register_resource(clip).unwrap();
        assert_eq!(ins.subtitles(1), Some(vec![TranscriptLine::new(0.0, 10.0, "b")]));
        assert_eq!(ins.narration(1), None);
    }
}
