use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

const PEIL: &str = env!("CARGO_BIN_EXE_peil");

fn scenarios() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

fn peil(args: &[&str]) -> Output {
    Command::new(PEIL).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn shop_sign() -> String {
    scenarios().join("shop_sign.toml").display().to_string()
}

#[test]
fn run_correct_answer_exits_zero() {
    let out = peil(&["run", &shop_sign(), "--mode", "peil_self"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("answer: Blue Heron Books"));
    assert!(text.contains("outcome: plan_revision after 2 attempt(s)"));
}

#[test]
fn run_wrong_answer_exits_one() {
    let out = peil(&["run", &shop_sign(), "--mode", "reason_only"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("(wrong)"));
}

#[test]
fn missing_scenario_exits_two() {
    let out = peil(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read scenario"));
}

#[test]
fn malformed_scenario_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "name = \"bad\"\nquery = \"q\"\n\n[[resources]]\nkind = \"image\"\nlocation = \"a.png\"\ndescription = \"x\"\n\n[[llm]]\nrole = \"planner\"\nreply = \"Thought: t\\nAction: caption(\\\"q\\\", visual[3])\"\n",
    )
    .unwrap();
    let out = peil(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 11"), "{err}");
    assert!(err.contains("visual[3]"), "{err}");
}

#[test]
fn gt_mode_without_ground_truth_exits_two() {
    let out = peil(&[
        "run",
        "--query",
        "what is this?",
        "--image",
        "x.png",
        "--backend",
        &format!("scripted:{}", shop_sign()),
        "--mode",
        "peil_gt",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn unknown_backend_scheme_is_rejected() {
    let out = peil(&["run", &shop_sign(), "--backend", "ftp://x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn suite_reports_accuracy_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = peil(&[
        "suite",
        scenarios().join("suite").to_str().unwrap(),
        "--mode",
        "peil_gt",
        "--trace",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("accuracy: 20/20 = 100.0%"));
    let written = std::fs::read_dir(dir.path().join("peil_gt")).unwrap().count();
    assert_eq!(written, 20);
}

#[test]
fn suite_json_report() {
    let out = peil(&[
        "suite",
        scenarios().join("suite").to_str().unwrap(),
        "--mode",
        "react",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mode"], "react");
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 20);
}

#[test]
fn bank_lists_stored_examples() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.jsonl");
    let out = peil(&["run", &shop_sign(), "--bank", bank.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = peil(&["bank", bank.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("1 entry in"), "{text}");
    assert!(text.contains("-> Blue Heron Books (2 steps"));
    let out = peil(&["bank", bank.to_str().unwrap(), "--query", "weather today", "--json"]);
    assert_eq!(stdout(&out), "");
}

#[test]
fn conformance_over_stdio() {
    let out = peil(&["conformance", "--", PEIL, "serve-fixtures", "--stdio"]);
    assert_eq!(out.status.code(), Some(0), "{}\n{}", stdout(&out), stderr(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

#[test]
fn conformance_over_http() {
    let mut server = Command::new(PEIL)
        .args(["serve-fixtures", "--http", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();
    let out = peil(&["conformance", "--url", &url]);
    server.kill().ok();
    server.wait().ok();
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn run_with_tools_from_a_child_process() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tools.toml");
    std::fs::write(
        &config,
        format!(
            "timeout_s = 10\n\n[[endpoints]]\ncommand = [{:?}, \"serve-fixtures\", \"--stdio\", \"--scenario\", {:?}]\n",
            PEIL,
            shop_sign()
        ),
    )
    .unwrap();
    let out = peil(&["run", &shop_sign(), "--tools", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}\n{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("answer: Blue Heron Books"));
}

#[test]
fn bad_tools_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tools.toml");
    std::fs::write(&config, "[[endpoints]]\nurl = \"http://x\"\ncommand = [\"y\"]\n").unwrap();
    let out = peil(&["run", &shop_sign(), "--tools", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("exactly one of"));
}
