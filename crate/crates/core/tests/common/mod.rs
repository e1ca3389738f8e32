#![allow(dead_code)]

pub mod strategies;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

pub fn schemas_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas"))
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

pub fn epoch() -> DateTime<Utc> {
    DateTime::UNIX_EPOCH
}

/// Compares `actual` with a frozen file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(path: &Path, actual: &[u8]) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create it)", path.display()));
    if expected != actual {
        panic!(
            "{} differs from the golden file\n--- expected\n{}\n--- actual\n{}",
            path.display(),
            String::from_utf8_lossy(&expected),
            String::from_utf8_lossy(actual)
        );
    }
}

pub fn load_schema(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(schemas_dir().join(format!("{name}.schema.json"))).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn schema_errors(validator: &jsonschema::Validator, value: &serde_json::Value) -> Vec<String> {
    validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect()
}

/// Full-matrix Levenshtein distance over case-folded characters.
pub fn oracle_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.to_lowercase().chars().collect();
    let b: Vec<char> = b.to_lowercase().chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Brute-force text grounding: filter by distance, then by region label.
pub fn oracle_text_ground(
    text: &str,
    object: Option<&str>,
    boxes: &[peil_core::tools::OcrBox],
    threshold: Option<usize>,
) -> Vec<peil_core::tools::OcrBox> {
    let limit = threshold.unwrap_or_else(|| std::cmp::max(1, text.chars().count() * 2 / 10));
    let mut hits = Vec::new();
    for b in boxes {
        if oracle_edit_distance(&b.text, text) <= limit {
            hits.push(b.clone());
        }
    }
    let Some(object) = object else { return hits };
    let any_label = hits.iter().any(|b| b.region_label.is_some());
    if hits.len() < 2 || !any_label {
        return hits;
    }
    hits.into_iter()
        .filter(|b| matches!(&b.region_label, Some(l) if l.trim().to_lowercase() == object.trim().to_lowercase()))
        .collect()
}

/// Partition oracle for temporal words. Absolute words use fifths; relative
/// words use eighths and look at the segment holding the span midpoint (a
/// midpoint on a boundary counts toward the earlier segment).
pub fn oracle_temporal(word: &str, span: Option<(f64, f64)>, duration: f64) -> (f64, f64) {
    let edge = |k: usize, n: usize| {
        if k == n {
            duration
        } else {
            duration * k as f64 / n as f64
        }
    };
    match word {
        "beginning" => (edge(0, 5), edge(1, 5)),
        "middle" => (edge(2, 5), edge(3, 5)),
        "end" => (edge(4, 5), edge(5, 5)),
        "before" | "after" => {
            let (a, b) = span.expect("relative words carry a span");
            let mid = (a + b) / 2.0;
            let mut holder = 0;
            for k in 0..8 {
                if mid <= edge(k + 1, 8) {
                    holder = k;
                    break;
                }
            }
            let target = if word == "before" {
                holder.saturating_sub(1)
            } else {
                (holder + 1).min(7)
            };
            (edge(target, 8), edge(target + 1, 8))
        }
        other => panic!("not a temporal word: {other}"),
    }
}
