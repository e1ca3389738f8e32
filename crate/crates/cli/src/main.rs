//! `peil`: run queries, scenario suites, tool-server conformance checks and
//! memory bank inspection from the command line.

mod serve;
mod tools_config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use peil_core::inspector::ResourceDraft;
use peil_core::learner::normalize_answer;
use peil_core::planner::{HttpBackend, HttpBackendConfig, LlmBackend};
use peil_core::protocol::{conformance_check, FixtureToolServer, ToolEndpoint, ToolRouter};
use peil_core::session::{
    emit_result, load_scenario, run_query, run_suite, ResourceInput, Scenario, Services, SuiteOptions,
};
use peil_core::{AblationMode, MemoryBank, SessionConfig, Templates, ToolRegistry};
use thiserror::Error;

use tools_config::{open_endpoint, EndpointConfig, ToolsConfig};

#[derive(Parser)]
#[command(
    name = "peil",
    version,
    about = "Plan-execute-inspect-learn agent for visual question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one query, from a scenario file or from flags.
    Run(RunArgs),
    /// Run every scenario in a directory and report accuracy.
    Suite(SuiteArgs),
    /// Check that a tool server speaks the protocol.
    Conformance(ConformanceArgs),
    /// List or query a memory bank file.
    Bank(BankArgs),
    /// Serve canned tool replies over stdio or HTTP.
    ServeFixtures(ServeArgs),
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, default_value = "peil_self")]
    mode: AblationMode,
    #[arg(long, default_value_t = 3)]
    max_attempts: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    /// `scripted:<scenario.toml>` or `http:<url>`.
    #[arg(long)]
    backend: Option<BackendSpec>,
    /// Model name sent to an HTTP backend.
    #[arg(long)]
    model: Option<String>,
    /// TOML file listing tool server endpoints.
    #[arg(long)]
    tools: Option<PathBuf>,
    /// Judge by normalized exact match only.
    #[arg(long)]
    strict_gt: bool,
    /// Memory bank file (JSON lines); in-memory when absent.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Prompt and observation templates replacing the bundled ones.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Directory for produced crops and clips.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Do not transcribe videos with audio before planning.
    #[arg(long)]
    no_auto_asr: bool,
    /// Caption user images at registration and use that as their description.
    #[arg(long)]
    caption_images: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file supplying the query, resources and scripts.
    scenario: Option<PathBuf>,
    #[arg(long)]
    query: Option<String>,
    /// Image file (repeatable).
    #[arg(long)]
    image: Vec<String>,
    /// `PATH:SECONDS` or `PATH:SECONDS:audio` (repeatable).
    #[arg(long)]
    video: Vec<String>,
    /// Ground-truth answer.
    #[arg(long)]
    gt: Option<String>,
    /// Write the JSONL trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct SuiteArgs {
    dir: PathBuf,
    /// Trace directory; files go to `<dir>/<mode>/<scenario>.jsonl`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct ConformanceArgs {
    /// Base URL of an HTTP tool server.
    #[arg(long, conflicts_with = "command")]
    url: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    timeout_s: f64,
    /// Command of a stdio tool server, after `--`.
    #[arg(last = true)]
    command: Vec<String>,
}

#[derive(Args)]
struct BankArgs {
    path: PathBuf,
    /// Show the entries retrieved for this query instead of all entries.
    #[arg(long)]
    query: Option<String>,
    #[arg(short, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Scenario whose `[[tools]]` entries are served; generic replies otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, conflicts_with = "http")]
    stdio: bool,
    /// Address to bind, e.g. 127.0.0.1:8700.
    #[arg(long)]
    http: Option<String>,
}

#[derive(Debug, Clone)]
enum BackendSpec {
    Scripted(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("scripted:") {
            return Ok(BackendSpec::Scripted(PathBuf::from(path)));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(BackendSpec::Http(s.to_string()));
        }
        if let Some(url) = s.strip_prefix("http:") {
            return Ok(BackendSpec::Http(url.to_string()));
        }
        Err(format!("backend `{s}` is neither scripted:<path> nor http:<url>"))
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn config<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Config(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Suite(a) => suite(a),
        Command::Conformance(a) => conformance(a),
        Command::Bank(a) => bank(a),
        Command::ServeFixtures(a) => serve_fixtures(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_scenario_file(path: &Path) -> Result<Scenario, CliError> {
    load_scenario(path).map_err(config(&path.display().to_string()))
}

fn session_config(args: &SessionArgs) -> SessionConfig {
    let mut c = SessionConfig::new(args.mode);
    c.max_attempts = args.max_attempts.max(1);
    c.strict_gt = args.strict_gt;
    if let Some(n) = args.max_steps {
        c.max_steps = n;
    }
    c.auto_asr = !args.no_auto_asr;
    c.caption_images = args.caption_images;
    c.workspace = args.workspace.clone();
    c
}

fn templates(args: &SessionArgs) -> Result<Templates, CliError> {
    match &args.templates {
        Some(p) => Templates::load(p).map_err(config(&p.display().to_string())),
        None => Ok(Templates::default()),
    }
}

fn open_bank(args: &SessionArgs) -> Result<MemoryBank, CliError> {
    match &args.bank {
        Some(p) => MemoryBank::open(p).map_err(config(&p.display().to_string())),
        None => Ok(MemoryBank::in_memory()),
    }
}

fn http_backend(url: &str, model: Option<&str>) -> HttpBackend {
    let mut c = HttpBackendConfig::new(url);
    if let Some(m) = model {
        c.model = m.to_string();
    }
    HttpBackend::new(c)
}

fn parse_video(spec: &str) -> Result<ResourceInput, CliError> {
    let bad = || CliError::Config(format!("--video `{spec}`: expected PATH:SECONDS or PATH:SECONDS:audio"));
    let (rest, audio) = match spec.strip_suffix(":audio") {
        Some(r) => (r, true),
        None => (spec, false),
    };
    let (path, secs) = rest.rsplit_once(':').ok_or_else(bad)?;
    let duration: f64 = secs.parse().map_err(|_| bad())?;
    let name = Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ResourceInput::new(ResourceDraft::video(
        path,
        &format!("video {name}"),
        duration,
        audio,
        false,
    )))
}

fn run(args: RunArgs) -> Result<ExitCode, CliError> {
    let scenario = args.scenario.as_deref().map(load_scenario_file).transpose()?;
    let query = args
        .query
        .clone()
        .or_else(|| scenario.as_ref().map(|s| s.query.clone()))
        .ok_or_else(|| CliError::Config("no query: give a scenario file or --query".into()))?;
    let mut resources = scenario.as_ref().map(Scenario::inputs).unwrap_or_default();
    for img in &args.image {
        let name = Path::new(img)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        resources.push(ResourceInput::new(ResourceDraft::image(img, &format!("image {name}"))));
    }
    for v in &args.video {
        resources.push(parse_video(v)?);
    }
    let gt = args
        .gt
        .clone()
        .or_else(|| scenario.as_ref().and_then(|s| s.ground_truth.clone()));

    let scripted_file = match &args.session.backend {
        Some(BackendSpec::Scripted(p)) => Some(load_scenario_file(p)?),
        _ => None,
    };
    let backend: Box<dyn LlmBackend> = match (&args.session.backend, &scripted_file, &scenario) {
        (Some(BackendSpec::Http(url)), _, _) => Box::new(http_backend(url, args.session.model.as_deref())),
        (_, Some(s), _) | (None, None, Some(s)) => Box::new(s.backend()),
        _ => return Err(CliError::Config("no backend: give --backend or a scenario file".into())),
    };
    let (registry, router) = match (&args.session.tools, scripted_file.as_ref().or(scenario.as_ref())) {
        (Some(path), _) => ToolsConfig::load(path)
            .and_then(|c| c.connect())
            .map_err(config(&path.display().to_string()))?,
        (None, Some(s)) => (ToolRegistry::standard(), s.fixture_router()),
        (None, None) => (ToolRegistry::local_only(), ToolRouter::default()),
    };
    let templates = templates(&args.session)?;
    let bank = open_bank(&args.session)?;
    let services = Services {
        registry: &registry,
        backend: backend.as_ref(),
        router: &router,
        templates: &templates,
        bank: &bank,
        clock: Utc::now,
    };
    let config = session_config(&args.session);
    let result = run_query(&config, &services, &query, &resources, gt.as_deref()).map_err(config_err)?;

    if let Some(path) = &args.trace {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        emit_result(&result, &mut w)?;
    }
    for record in &result.attempts {
        println!("== attempt {} ({})", record.trace.attempt, result.mode);
        print!("{}", record.trace.render_full());
        if let Some(v) = &record.verdict {
            if v.pass {
                println!("Verdict: pass: {}", v.critique);
            } else {
                println!("Verdict: fail: {}", v.critique);
            }
        }
    }
    println!("answer: {}", result.answer.as_deref().unwrap_or("-"));
    println!(
        "outcome: {} after {} attempt(s)",
        result.outcome.kind, result.outcome.attempts_used
    );
    if result.outcome.saved_entry.is_some() {
        println!("memory bank: stored 1 example ({} total)", bank.len());
    }
    let Some(gt) = gt else {
        return Ok(ExitCode::SUCCESS);
    };
    let correct = result
        .answer
        .as_deref()
        .is_some_and(|a| normalize_answer(a) == normalize_answer(&gt));
    println!("ground truth: {gt} ({})", if correct { "correct" } else { "wrong" });
    Ok(if correct { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn config_err(e: peil_core::session::ConfigError) -> CliError {
    CliError::Config(e.to_string())
}

fn suite(args: SuiteArgs) -> Result<ExitCode, CliError> {
    let http;
    let backend: Option<&dyn LlmBackend> = match &args.session.backend {
        Some(BackendSpec::Http(url)) => {
            http = http_backend(url, args.session.model.as_deref());
            Some(&http)
        }
        Some(BackendSpec::Scripted(_)) => {
            return Err(CliError::Config(
                "suite scenarios carry their own scripts; use --backend http:<url> or none".into(),
            ))
        }
        None => None,
    };
    let tools = args
        .session
        .tools
        .as_ref()
        .map(|p| {
            ToolsConfig::load(p)
                .and_then(|c| c.connect())
                .map_err(config(&p.display().to_string()))
        })
        .transpose()?;
    let shared = args
        .session
        .bank
        .as_ref()
        .map(|_| open_bank(&args.session))
        .transpose()?;
    let mut options = SuiteOptions::new(args.session.mode);
    options.config = session_config(&args.session);
    options.templates = templates(&args.session)?;
    options.shared_bank = shared.as_ref();
    options.trace_dir = args.trace.clone();
    options.tools = tools.as_ref().map(|(r, t)| (r, t));
    options.backend = backend;
    let report = run_suite(&args.dir, &options).map_err(config(&args.dir.display().to_string()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    let unmet: Vec<&str> = report
        .scenarios
        .iter()
        .filter(|s| s.expectation_met == Some(false))
        .map(|s| s.name.as_str())
        .collect();
    if unmet.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("expectations not met: {}", unmet.join(", "));
        Ok(ExitCode::from(1))
    }
}

fn conformance(args: ConformanceArgs) -> Result<ExitCode, CliError> {
    let endpoint: Arc<dyn ToolEndpoint> = open_endpoint(
        0,
        &EndpointConfig {
            url: args.url.clone(),
            command: (!args.command.is_empty()).then(|| args.command.clone()),
            secret_env: None,
        },
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let report = conformance_check(endpoint.as_ref(), Duration::from_secs_f64(args.timeout_s));
    println!("{report}");
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn bank(args: BankArgs) -> Result<ExitCode, CliError> {
    if !args.path.exists() {
        return Err(CliError::Config(format!(
            "{}: no such memory bank",
            args.path.display()
        )));
    }
    let bank = MemoryBank::open(&args.path).map_err(config(&args.path.display().to_string()))?;
    let entries = match &args.query {
        Some(q) => bank.retrieve(q, args.k),
        None => bank.entries(),
    };
    if args.json {
        for e in &entries {
            println!("{}", e.to_json());
        }
        return Ok(ExitCode::SUCCESS);
    }
    println!(
        "{} entr{} in {}",
        bank.len(),
        if bank.len() == 1 { "y" } else { "ies" },
        args.path.display()
    );
    for (i, e) in entries.iter().enumerate() {
        println!(
            "{}. {} -> {} ({} steps, {})",
            i + 1,
            e.query,
            e.answer,
            e.trace.steps.len(),
            e.created_at.to_rfc3339()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn serve_fixtures(args: ServeArgs) -> Result<ExitCode, CliError> {
    let server = match &args.scenario {
        Some(p) => load_scenario_file(p)?.tool_server(),
        None => FixtureToolServer::fake_adapter(),
    };
    match (&args.http, args.stdio) {
        (Some(addr), false) => serve::serve_http(&server, addr)?,
        (None, true) => serve::serve_stdio(&server)?,
        _ => return Err(CliError::Config("give exactly one of --stdio or --http <addr>".into())),
    }
    Ok(ExitCode::SUCCESS)
}
