use serde::{Deserialize, Serialize};

/// One OCR detection: recognized text and its pixel box `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrBox {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
    /// Semantic label of the region the text sits on, when a segmenter supplied one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_label: Option<String>,
}

impl OcrBox {
    pub fn new(text: &str, bbox: [u32; 4]) -> Self {
        Self {
            text: text.to_string(),
            bbox,
            region_label: None,
        }
    }

    pub fn labeled(text: &str, bbox: [u32; 4], label: &str) -> Self {
        Self {
            region_label: Some(label.to_string()),
            ..Self::new(text, bbox)
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.bbox[0] < self.bbox[2] && self.bbox[1] < self.bbox[3]
    }
}

/// Levenshtein distance with unit costs, after case folding both strings.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Default match threshold: one edit per five characters, at least one.
pub fn default_threshold(query_text: &str) -> usize {
    (query_text.chars().count() / 5).max(1)
}

/// A parsed `text[:object_name]` query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextQuery {
    pub text: String,
    pub object_name: Option<String>,
}

pub fn parse_text_query(query: &str) -> TextQuery {
    match query.split_once(':') {
        Some((text, object)) if !object.trim().is_empty() => TextQuery {
            text: text.trim().to_string(),
            object_name: Some(object.trim().to_string()),
        },
        Some((text, _)) => TextQuery {
            text: text.trim().to_string(),
            object_name: None,
        },
        None => TextQuery {
            text: query.trim().to_string(),
            object_name: None,
        },
    }
}

/// Two-stage text grounding over OCR results.
///
/// Stage one keeps boxes within `threshold` edits of the query text. Stage two
/// runs only when more than one box survived and an object name was given:
/// it keeps the boxes whose region label matches the object name. When none of
/// the surviving boxes carry a label, stage two is skipped.
pub fn text_ground(query: &str, boxes: &[OcrBox], threshold: Option<usize>) -> Vec<OcrBox> {
    let parsed = parse_text_query(query);
    let limit = threshold.unwrap_or_else(|| default_threshold(&parsed.text));
    let matched: Vec<OcrBox> = boxes
        .iter()
        .filter(|b| edit_distance(&b.text, &parsed.text) <= limit)
        .cloned()
        .collect();

    let Some(object) = parsed.object_name else {
        return matched;
    };
    if matched.len() <= 1 || matched.iter().all(|b| b.region_label.is_none()) {
        return matched;
    }
    let object = object.to_lowercase();
    matched
        .into_iter()
        .filter(|b| {
            b.region_label
                .as_deref()
                .is_some_and(|l| l.trim().to_lowercase() == object)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        assert_eq!(edit_distance("menu", "Menu"), 0);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("abc", ""), 3);
        assert_eq!(edit_distance("flaw", "lawn"), 2);
    }

    #[test]
    fn query_parsing() {
        assert_eq!(
            parse_text_query("menu: button"),
            TextQuery {
                text: "menu".into(),
                object_name: Some("button".into())
            }
        );
        assert_eq!(parse_text_query("menu").object_name, None);
        assert_eq!(parse_text_query("menu:").object_name, None);
    }

    #[test]
    fn case_folded_match() {
        let boxes = [
            OcrBox::new("Menu", [0, 0, 10, 10]),
            OcrBox::new("Main", [20, 0, 30, 10]),
        ];
        let found = text_ground("menu", &boxes, None);
        assert_eq!(found, vec![boxes[0].clone()]);
    }

    #[test]
    fn threshold_admits_near_misses() {
        let boxes = [
            OcrBox::new("Settings", [0, 0, 10, 10]),
            OcrBox::new("Setings", [0, 20, 10, 30]),
        ];
        assert_eq!(text_ground("settings", &boxes, Some(1)).len(), 2);
        assert_eq!(text_ground("settings", &boxes, Some(0)).len(), 1);
    }

    #[test]
    fn object_name_refines_multiple_matches() {
        let boxes = [
            OcrBox::labeled("menu", [0, 0, 10, 10], "sign"),
            OcrBox::labeled("Menu", [50, 50, 90, 70], "button"),
        ];
        assert_eq!(text_ground("menu: button", &boxes, None), vec![boxes[1].clone()]);
    }

    #[test]
    fn missing_labels_skip_stage_two() {
        let boxes = [
            OcrBox::new("menu", [0, 0, 10, 10]),
            OcrBox::new("menu", [50, 50, 90, 70]),
        ];
        assert_eq!(text_ground("menu: button", &boxes, None).len(), 2);
    }

    #[test]
    fn single_match_is_not_refined() {
        let boxes = [OcrBox::labeled("menu", [0, 0, 10, 10], "sign")];
        assert_eq!(text_ground("menu: button", &boxes, None).len(), 1);
    }

    #[test]
    fn empty_input_is_not_found() {
        assert!(text_ground("menu", &[], None).is_empty());
    }
}
