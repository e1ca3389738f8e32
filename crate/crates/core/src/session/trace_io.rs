//! JSONL trace files: one record per line, replayable into equal traces.

use std::io::{BufRead, Write};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::ActionCall;
use crate::inspector::{summarize, Summary, VisualResource};
use crate::learner::{OutcomeKind, Verdict};
use crate::trace::{AblationMode, ReasoningTrace, Terminal, TraceStep};

use super::QueryResult;

pub const NORMALIZED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceRecord {
    Resource {
        attempt: usize,
        resource: VisualResource,
    },
    Thought {
        attempt: usize,
        text: String,
    },
    Action {
        attempt: usize,
        raw: String,
        call: Option<ActionCall>,
    },
    Observation {
        attempt: usize,
        text: String,
        produced: Vec<usize>,
    },
    Summary {
        attempt: usize,
        index: usize,
        text: String,
    },
    Final {
        attempt: usize,
        mode: AblationMode,
        answer: String,
    },
    Exhausted {
        attempt: usize,
        mode: AblationMode,
        reason: String,
    },
    Verdict {
        attempt: usize,
        pass: bool,
        critique: String,
    },
    Outcome {
        outcome: OutcomeKind,
        attempts_used: usize,
        final_answer: Option<String>,
        saved: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        created_at: Option<String>,
    },
}

/// Records of one attempt. The trace must have a terminal record.
pub fn trace_records(trace: &ReasoningTrace) -> Vec<TraceRecord> {
    let attempt = trace.attempt;
    let mut out: Vec<TraceRecord> = trace.resources[..trace.initial_count.min(trace.resources.len())]
        .iter()
        .map(|r| TraceRecord::Resource {
            attempt,
            resource: r.clone(),
        })
        .collect();
    for step in &trace.steps {
        out.push(TraceRecord::Thought {
            attempt,
            text: step.thought.clone(),
        });
        out.push(TraceRecord::Action {
            attempt,
            raw: step.action.clone(),
            call: step.call.clone(),
        });
        out.push(TraceRecord::Observation {
            attempt,
            text: step.observation.clone(),
            produced: step.produced.clone(),
        });
        for (k, &index) in step.produced.iter().enumerate() {
            if let Some(s) = step.summaries.get(k) {
                out.push(TraceRecord::Summary {
                    attempt,
                    index,
                    text: s.text().to_string(),
                });
            }
            if let Some(r) = trace.resources.get(index) {
                out.push(TraceRecord::Resource {
                    attempt,
                    resource: r.clone(),
                });
            }
        }
    }
    match &trace.terminal {
        Some(Terminal::Final { answer }) => out.push(TraceRecord::Final {
            attempt,
            mode: trace.mode,
            answer: answer.clone(),
        }),
        Some(Terminal::Exhausted { reason }) => out.push(TraceRecord::Exhausted {
            attempt,
            mode: trace.mode,
            reason: reason.clone(),
        }),
        None => {}
    }
    out
}

fn write_records(records: &[TraceRecord], sink: &mut dyn Write) -> std::io::Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(std::io::Error::other)?;
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

pub fn emit_trace(trace: &ReasoningTrace, sink: &mut dyn Write) -> std::io::Result<()> {
    write_records(&trace_records(trace), sink)
}

/// Every attempt with its verdict, then the outcome record.
pub fn emit_result(result: &QueryResult, sink: &mut dyn Write) -> std::io::Result<()> {
    for a in &result.attempts {
        let mut records = trace_records(&a.trace);
        if let Some(v) = &a.verdict {
            records.push(TraceRecord::Verdict {
                attempt: a.trace.attempt,
                pass: v.pass,
                critique: v.critique.clone(),
            });
        }
        write_records(&records, sink)?;
    }
    let o = &result.outcome;
    write_records(
        &[TraceRecord::Outcome {
            outcome: o.kind,
            attempts_used: o.attempts_used,
            final_answer: o.final_answer.clone(),
            saved: o.saved_entry.is_some(),
            created_at: o.saved_entry.as_ref().map(|e| e.created_at.to_rfc3339()),
        }],
        sink,
    )
}

/// Replaces every `created_at` value with a fixed instant.
pub fn normalize_timestamps(jsonl: &str) -> String {
    let re = Regex::new(r#""created_at":"[^"]*""#).expect("static regex");
    re.replace_all(jsonl, format!(r#""created_at":"{NORMALIZED_TIMESTAMP}""#).as_str())
        .into_owned()
}

#[derive(Debug, Error)]
pub enum TraceLoadError {
    #[error("trace i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Everything a trace file holds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceLog {
    pub traces: Vec<ReasoningTrace>,
    pub verdicts: Vec<(usize, Verdict)>,
    pub outcome: Option<TraceRecord>,
}

#[derive(PartialEq)]
enum Expect {
    Thought,
    Action,
    Observation,
}

struct Builder {
    trace: ReasoningTrace,
    step: Option<TraceStep>,
    expect: Expect,
    in_steps: bool,
}

impl Builder {
    fn new(attempt: usize) -> Self {
        Self {
            trace: ReasoningTrace::new(attempt, AblationMode::Pie),
            step: None,
            expect: Expect::Thought,
            in_steps: false,
        }
    }

    fn flush_step(&mut self) {
        if let Some(s) = self.step.take() {
            self.trace.steps.push(s);
        }
    }
}

fn finish(cur: &mut Option<Builder>, log: &mut TraceLog, mode: AblationMode, terminal: Terminal) -> Result<(), String> {
    let mut b = cur.take().expect("builder present");
    if b.expect != Expect::Thought {
        return Err("terminal record inside a step".into());
    }
    b.flush_step();
    b.trace.mode = mode;
    b.trace.terminal = Some(terminal);
    log.traces.push(b.trace);
    Ok(())
}

/// Reads a trace file written by [`emit_trace`] or [`emit_result`].
pub fn load_trace(reader: impl BufRead) -> Result<TraceLog, TraceLoadError> {
    let mut log = TraceLog::default();
    let mut cur: Option<Builder> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TraceLoadError::Malformed { line: lineno, message };
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let attempt = match &record {
            TraceRecord::Resource { attempt, .. }
            | TraceRecord::Thought { attempt, .. }
            | TraceRecord::Action { attempt, .. }
            | TraceRecord::Observation { attempt, .. }
            | TraceRecord::Summary { attempt, .. }
            | TraceRecord::Final { attempt, .. }
            | TraceRecord::Exhausted { attempt, .. }
            | TraceRecord::Verdict { attempt, .. } => Some(*attempt),
            TraceRecord::Outcome { .. } => None,
        };
        match record {
            TraceRecord::Verdict {
                attempt,
                pass,
                critique,
            } => {
                if !log.traces.iter().any(|t| t.attempt == attempt) {
                    return Err(bad(format!("verdict for unfinished attempt {attempt}")));
                }
                log.verdicts.push((attempt, Verdict { pass, critique }));
                continue;
            }
            r @ TraceRecord::Outcome { .. } => {
                if cur.is_some() {
                    return Err(bad("outcome inside an unfinished attempt".into()));
                }
                log.outcome = Some(r);
                continue;
            }
            _ => {}
        }
        let attempt = attempt.expect("attempt records");
        let b = cur.get_or_insert_with(|| Builder::new(attempt));
        if b.trace.attempt != attempt {
            return Err(bad(format!(
                "record of attempt {attempt} inside attempt {}",
                b.trace.attempt
            )));
        }
        match record {
            TraceRecord::Resource { resource, .. } => {
                if resource.index != b.trace.resources.len() {
                    return Err(bad(format!("resource visual[{}] out of order", resource.index)));
                }
                if !b.in_steps {
                    b.trace.initial_count += 1;
                    b.trace.initial_summaries.push(summarize(&resource));
                }
                b.trace.resources.push(resource);
            }
            TraceRecord::Thought { text, .. } => {
                if b.expect != Expect::Thought {
                    return Err(bad("unexpected thought record".into()));
                }
                b.flush_step();
                b.in_steps = true;
                b.step = Some(TraceStep {
                    thought: text,
                    action: String::new(),
                    call: None,
                    observation: String::new(),
                    produced: Vec::new(),
                    summaries: Vec::new(),
                });
                b.expect = Expect::Action;
            }
            TraceRecord::Action { raw, call, .. } => {
                if b.expect != Expect::Action {
                    return Err(bad("unexpected action record".into()));
                }
                let s = b.step.as_mut().expect("thought seen");
                s.action = raw;
                s.call = call;
                b.expect = Expect::Observation;
            }
            TraceRecord::Observation { text, produced, .. } => {
                if b.expect != Expect::Observation {
                    return Err(bad("unexpected observation record".into()));
                }
                let s = b.step.as_mut().expect("thought seen");
                s.observation = text;
                s.produced = produced;
                b.expect = Expect::Thought;
            }
            TraceRecord::Summary { index, text, .. } => match b.step.as_mut() {
                Some(s) if b.expect == Expect::Thought && s.produced.contains(&index) => {
                    s.summaries.push(Summary(text))
                }
                _ => return Err(bad(format!("summary of visual[{index}] outside its step"))),
            },
            TraceRecord::Final { mode, answer, .. } => {
                let terminal = Terminal::Final { answer };
                finish(&mut cur, &mut log, mode, terminal).map_err(bad)?;
            }
            TraceRecord::Exhausted { mode, reason, .. } => {
                let terminal = Terminal::Exhausted { reason };
                finish(&mut cur, &mut log, mode, terminal).map_err(bad)?;
            }
            TraceRecord::Verdict { .. } | TraceRecord::Outcome { .. } => unreachable!(),
        }
    }
    if let Some(b) = cur {
        return Err(TraceLoadError::Malformed {
            line: 0,
            message: format!("attempt {} has no terminal record", b.trace.attempt),
        });
    }
    Ok(log)
}
