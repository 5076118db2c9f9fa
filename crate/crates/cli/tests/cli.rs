use std::path::Path;
use std::process::{Command, Output};

use deemon_cli::*;
use deemon_engine::VulnerabilityReport;
use deemon_target::{bundled, TargetServer};

fn deemon(workspace: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deemon"))
        .arg("--workspace")
        .arg(workspace)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn demo_exits_one_and_report_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = deemon(
        dir.path(),
        &["demo", "--scenario", "bankapp", "--seed", "7"],
    );
    assert_eq!(out.status.code(), Some(EXIT_VULNERABLE), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[VULNERABLE] POST /change_pwd.php"));
    assert!(stdout.contains("[ok] POST /change_email.php"));

    let out = deemon(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(EXIT_VULNERABLE));
    // build again on the same workspace: nothing changes
    let graph = std::fs::read(dir.path().join(GRAPH_FILE)).unwrap();
    let summary = std::fs::read(dir.path().join(BUILD_SUMMARY_FILE)).unwrap();
    assert_eq!(
        deemon(dir.path(), &["build"]).status.code(),
        Some(EXIT_CLEAN)
    );
    assert_eq!(std::fs::read(dir.path().join(GRAPH_FILE)).unwrap(), graph);
    assert_eq!(
        std::fs::read(dir.path().join(BUILD_SUMMARY_FILE)).unwrap(),
        summary
    );
}

#[test]
fn missing_artifacts_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = deemon(dir.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&out).contains("deemon-trace-manifest.json"));

    let out = deemon(dir.path(), &["mine"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&out).contains("graph.json"));

    let out = deemon(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&out).contains("deemon-report.json"));

    let out = deemon(dir.path(), &["test", "--target", "http://127.0.0.1:9"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&out).contains("tests.json"));
}

#[test]
fn mine_before_build_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let server = TargetServer::start(bundled("bankapp").unwrap(), 0, 7).unwrap();
    let target = server.base_url();
    assert_eq!(
        deemon(dir.path(), &["record", "--target", &target])
            .status
            .code(),
        Some(EXIT_CLEAN)
    );
    assert_eq!(
        deemon(dir.path(), &["ingest"]).status.code(),
        Some(EXIT_CLEAN)
    );
    let out = deemon(dir.path(), &["mine"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&out).contains("deemon build"));
}

#[test]
fn bad_invocations() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        deemon(dir.path(), &["demo", "--sessions", "1"])
            .status
            .code(),
        Some(EXIT_USAGE)
    );
    assert_eq!(
        deemon(dir.path(), &["frobnicate"]).status.code(),
        Some(EXIT_USAGE)
    );
    assert_eq!(
        deemon(dir.path(), &["demo", "--scenario", "no-such"])
            .status
            .code(),
        Some(EXIT_USAGE)
    );
    assert_eq!(
        deemon(dir.path(), &["test"]).status.code(),
        Some(EXIT_USAGE)
    );
    // an unreachable target is a runtime failure once the inputs exist
    assert_eq!(
        deemon(dir.path(), &["demo"]).status.code(),
        Some(EXIT_VULNERABLE)
    );
    let out = deemon(dir.path(), &["test", "--target", "http://127.0.0.1:9"]);
    assert_eq!(out.status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn heuristics_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("heuristics.json");
    // treating nothing as a timestamp makes the cache buster a token
    std::fs::write(
        &config,
        r#"{"timestamps": {"digits": [], "min_year": 2001, "max_year": 2100}}"#,
    )
    .unwrap();
    let ws = dir.path().join("ws");
    let out = deemon(&ws, &["demo", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_VULNERABLE));
    let tests: Vec<deemon_core::miner::TestCase> =
        serde_json::from_str(&std::fs::read_to_string(ws.join(TESTS_FILE)).unwrap()).unwrap();
    assert!(tests
        .iter()
        .any(|t| t.omitted_param.as_deref() == Some("url-params/_")));
}

fn without_target(mut report: VulnerabilityReport) -> VulnerabilityReport {
    report = report.normalized();
    report.target.base_url.clear();
    report.target.sensor_url.clear();
    report
}

/// `demo` writes the same artifacts as the stages run one by one.
#[test]
fn demo_equals_manual_stages() {
    let scenario = bundled("bankapp").unwrap();
    let a = tempfile::tempdir().unwrap();
    let demo_cfg = RunConfig::new(a.path());
    let outcome = demo(&demo_cfg, &scenario).unwrap();

    let b = tempfile::tempdir().unwrap();
    let server = TargetServer::start(scenario.clone(), 0, 7).unwrap();
    let mut cfg = RunConfig::new(b.path());
    cfg.target = Some(server.base_url());
    record(&cfg, &scenario).unwrap();
    ingest(&cfg).unwrap();
    build(&cfg).unwrap();
    mine(&cfg).unwrap();
    let report = test(&cfg).unwrap();

    for file in [
        "traces/deemon-trace-manifest.json",
        "traces/session-1.http.jsonl",
        "traces/session-2.sql.jsonl",
        GRAPH_FILE,
        BUILD_SUMMARY_FILE,
        CANDIDATES_FILE,
        TESTS_FILE,
    ] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
    assert_eq!(without_target(outcome.report), without_target(report));
}
