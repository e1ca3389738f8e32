//! Runs a directory of scenarios in one mode and scores them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::grammar::ToolRegistry;
use crate::learner::{normalize_answer, MemoryBank, OutcomeKind};
use crate::planner::LlmBackend;
use crate::protocol::ToolRouter;
use crate::templates::Templates;
use crate::trace::AblationMode;

use super::{
    emit_result, load_scenario, run_query, ConfigError, QueryResult, Scenario, ScenarioFormatError, Services,
    SessionConfig,
};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: ScenarioFormatError,
    },
    #[error("scenario {name}: {source}")]
    Config {
        name: String,
        #[source]
        source: ConfigError,
    },
    #[error("suite i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything a scenario run needs besides the scenario.
pub struct SuiteOptions<'a> {
    pub config: SessionConfig,
    pub templates: Templates,
    /// One bank for every scenario; each scenario gets a fresh in-memory
    /// bank otherwise.
    pub shared_bank: Option<&'a MemoryBank>,
    /// Trace files go to `<dir>/<mode>/<scenario>.jsonl`.
    pub trace_dir: Option<PathBuf>,
    /// Real tool endpoints; the scenario's fixtures are used otherwise.
    pub tools: Option<(&'a ToolRegistry, &'a ToolRouter)>,
    /// Replaces each scenario's scripted backend.
    pub backend: Option<&'a dyn LlmBackend>,
    pub clock: fn() -> DateTime<Utc>,
}

impl SuiteOptions<'_> {
    pub fn new(mode: AblationMode) -> Self {
        Self {
            config: SessionConfig::new(mode),
            templates: Templates::default(),
            shared_bank: None,
            trace_dir: None,
            tools: None,
            backend: None,
            clock: Utc::now,
        }
    }
}

/// Runs one scenario with its scripted backend.
pub fn run_scenario(
    scenario: &Scenario,
    options: &SuiteOptions<'_>,
    bank: &MemoryBank,
) -> Result<QueryResult, ConfigError> {
    let scripted = scenario.backend();
    let backend: &dyn LlmBackend = options.backend.unwrap_or(&scripted);
    let fixture_registry;
    let fixture_router;
    let (registry, router) = match options.tools {
        Some(t) => t,
        None => {
            fixture_registry = ToolRegistry::standard();
            fixture_router = scenario.fixture_router();
            (&fixture_registry, &fixture_router)
        }
    };
    let services = Services {
        registry,
        backend,
        router,
        templates: &options.templates,
        bank,
        clock: options.clock,
    };
    run_query(
        &options.config,
        &services,
        &scenario.query,
        &scenario.inputs(),
        scenario.ground_truth.as_deref(),
    )
}

/// Scenario files (`*.toml`) of a directory in file-name order.
pub fn load_suite(dir: &Path) -> Result<Vec<(PathBuf, Scenario)>, SuiteError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            load_scenario(&p)
                .map(|s| (p.clone(), s))
                .map_err(|source| SuiteError::Scenario { path: p, source })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub answer: Option<String>,
    pub ground_truth: Option<String>,
    /// Normalized exact match with the ground truth; `None` without one.
    pub solved: Option<bool>,
    pub outcome: OutcomeKind,
    pub attempts_used: usize,
    /// Whether the run met the scenario's `[expected]` block for this mode.
    pub expectation_met: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub mode: AblationMode,
    pub scenarios: Vec<ScenarioReport>,
    pub attempts_histogram: BTreeMap<usize, usize>,
    pub outcome_counts: BTreeMap<OutcomeKind, usize>,
    pub bank_growth: usize,
}

impl SuiteReport {
    pub fn solved(&self) -> usize {
        self.scenarios.iter().filter(|s| s.solved == Some(true)).count()
    }

    pub fn scored(&self) -> usize {
        self.scenarios.iter().filter(|s| s.solved.is_some()).count()
    }

    /// Share of scored scenarios that were solved; `None` when nothing was
    /// scored.
    pub fn accuracy(&self) -> Option<f64> {
        match self.scored() {
            0 => None,
            n => Some(self.solved() as f64 / n as f64),
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode: {}", self.mode)?;
        for s in &self.scenarios {
            let mark = match s.solved {
                Some(true) => "solved",
                Some(false) => "wrong",
                None => "unscored",
            };
            writeln!(
                f,
                "  {:<32} {:<8} {:<20} attempts={} answer={}",
                s.name,
                mark,
                s.outcome,
                s.attempts_used,
                s.answer.as_deref().unwrap_or("-")
            )?;
        }
        match self.accuracy() {
            Some(a) => writeln!(f, "accuracy: {}/{} = {:.1}%", self.solved(), self.scored(), a * 100.0)?,
            None => writeln!(f, "accuracy: n/a")?,
        }
        let hist: Vec<String> = self
            .attempts_histogram
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect();
        writeln!(f, "attempts histogram: {}", hist.join(" "))?;
        let outcomes: Vec<String> = self.outcome_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(f, "outcomes: {}", outcomes.join(" "))?;
        write!(f, "bank growth: {}", self.bank_growth)
    }
}

fn expectation_met(scenario: &Scenario, mode: AblationMode, result: &QueryResult) -> Option<bool> {
    let e = scenario.expected.as_ref()?;
    if e.mode.is_some_and(|m| m != mode) {
        return None;
    }
    let used = result.outcome.attempts_used;
    Some(
        e.outcome.is_none_or(|o| o == result.outcome.kind)
            && e.answer
                .as_deref()
                .is_none_or(|a| result.answer.as_deref().map(normalize_answer) == Some(normalize_answer(a)))
            && e.min_attempts.is_none_or(|m| used >= m)
            && e.max_attempts.is_none_or(|m| used <= m),
    )
}

/// Runs every scenario of `dir` in the configured mode.
pub fn run_suite(dir: &Path, options: &SuiteOptions<'_>) -> Result<SuiteReport, SuiteError> {
    let mode = options.config.mode;
    let mut report = SuiteReport {
        mode,
        scenarios: Vec::new(),
        attempts_histogram: BTreeMap::new(),
        outcome_counts: BTreeMap::new(),
        bank_growth: 0,
    };
    for (_, scenario) in load_suite(dir)? {
        let own_bank;
        let bank = match options.shared_bank {
            Some(b) => b,
            None => {
                own_bank = MemoryBank::in_memory();
                &own_bank
            }
        };
        let result = run_scenario(&scenario, options, bank).map_err(|source| SuiteError::Config {
            name: scenario.name.clone(),
            source,
        })?;
        if let Some(dir) = &options.trace_dir {
            let path = dir.join(mode.as_str()).join(format!("{}.jsonl", scenario.name));
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            let mut w = BufWriter::new(File::create(&path)?);
            emit_result(&result, &mut w)?;
        }
        let solved = scenario.ground_truth.as_deref().map(|gt| {
            result
                .answer
                .as_deref()
                .is_some_and(|a| normalize_answer(a) == normalize_answer(gt))
        });
        *report
            .attempts_histogram
            .entry(result.outcome.attempts_used)
            .or_default() += 1;
        *report.outcome_counts.entry(result.outcome.kind).or_default() += 1;
        report.bank_growth += usize::from(result.outcome.saved_entry.is_some());
        report.scenarios.push(ScenarioReport {
            name: scenario.name.clone(),
            answer: result.answer.clone(),
            ground_truth: scenario.ground_truth.clone(),
            solved,
            outcome: result.outcome.kind,
            attempts_used: result.outcome.attempts_used,
            expectation_met: expectation_met(&scenario, mode, &result),
        });
    }
    Ok(report)
}
