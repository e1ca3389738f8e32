use proptest::prelude::*;

use peil_core::grammar::ActionCall;
use peil_core::tools::{temporal_reason, OcrBox, TemporalQuery, TemporalWord};

pub fn tool_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,15}".prop_filter("`None` is reserved", |s| s != "none")
}

pub fn action_call() -> impl Strategy<Value = ActionCall> {
    (
        tool_name(),
        proptest::option::of(any::<String>()),
        proptest::collection::vec(0usize..10_000, 0..4),
    )
        .prop_map(|(tool, query, resources)| ActionCall::new(tool, query.as_deref(), resources))
}

pub fn ocr_box() -> impl Strategy<Value = OcrBox> {
    (
        "[a-cA-C]{1,7}",
        (0u32..500, 0u32..500, 1u32..100, 1u32..100),
        proptest::option::of(prop_oneof![Just("sign"), Just("menu"), Just("Sign "), Just("board")]),
    )
        .prop_map(|(text, (x, y, w, h), label)| OcrBox {
            text,
            bbox: [x, y, x + w, y + h],
            region_label: label.map(str::to_string),
        })
}

pub fn temporal_case() -> impl Strategy<Value = (String, Option<(f64, f64)>, f64)> {
    (
        100u32..=36_000,
        0usize..5,
        any::<(u16, u16)>(),
        any::<bool>(),
        0usize..=8,
    )
        .prop_map(|(tenths, w, (p, q), on_edge, edge_k)| {
            let duration = f64::from(tenths) / 10.0;
            let word = ["beginning", "middle", "end", "before", "after"][w];
            if w < 3 {
                return (word.to_string(), None, duration);
            }
            let span = if on_edge {
                let mid = duration * edge_k as f64 / 8.0;
                (mid, mid)
            } else {
                let a = duration * f64::from(p.min(q)) / 65_535.0;
                let b = duration * f64::from(p.max(q)) / 65_535.0;
                ((a * 10.0).round() / 10.0, (b * 10.0).round() / 10.0)
            };
            (word.to_string(), Some(span), duration)
        })
}

pub fn run_temporal(word: &str, span: Option<(f64, f64)>, duration: f64) -> (f64, f64) {
    let query = TemporalQuery {
        word: word.parse::<TemporalWord>().unwrap(),
        span,
    };
    let iv = temporal_reason(&query, duration).unwrap().interval;
    (iv.start_s, iv.end_s)
}
