use serde::{Deserialize, Serialize};

use crate::templates::{fill, Observations};

/// One box from an open-set detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Detection {
    pub fn new(label: &str, bbox: [u32; 4]) -> Self {
        Self {
            label: label.to_string(),
            bbox,
            score: None,
        }
    }
}

pub fn fmt_box(b: &[u32; 4]) -> String {
    format!("[{}, {}, {}, {}]", b[0], b[1], b[2], b[3])
}

/// Counts detections carrying `label` (case-insensitive) and renders the
/// observation line.
pub fn count_objects(detections: &[Detection], label: &str, templates: &Observations) -> (usize, String) {
    let wanted = label.trim().to_lowercase();
    let hits: Vec<&Detection> = detections
        .iter()
        .filter(|d| d.label.trim().to_lowercase() == wanted)
        .collect();
    let text = if hits.is_empty() {
        fill(&templates.detected_none, &[("label", label.trim())])
    } else {
        let boxes = hits.iter().map(|d| fmt_box(&d.bbox)).collect::<Vec<_>>().join(", ");
        fill(
            &templates.detected,
            &[
                ("count", &hits.len().to_string()),
                ("label", label.trim()),
                ("boxes", &boxes),
            ],
        )
    };
    (hits.len(), text)
}
