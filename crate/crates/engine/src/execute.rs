use std::collections::BTreeSet;
use std::time::Instant;

use deemon_core::miner::{LoginTraceRef, TestCase, TestMode};
use deemon_core::parse::sql::{parse_sql_lenient, render};
use deemon_core::parse::{AbstractionConfig, SqlQueryRaw};

use crate::report::{
    Evidence, ObservedQuery, OperationVerdict, TargetInfo, TestResult, Verdict, VulnerabilityReport,
};
use crate::target::{CookieJar, TargetHandle};
use crate::{EngineError, Result};

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub abstraction: AbstractionConfig,
}

/// Returns the target to the snapshot taken at harness start.
pub fn restore_snapshot(target: &TargetHandle) -> Result<()> {
    if !target.capabilities.restore {
        return Err(EngineError::Precondition(
            "target cannot restore snapshots".into(),
        ));
    }
    target.restore()
}

/// Replays the login requests in order and returns the cookies they set.
pub fn replay_login(target: &TargetHandle, login: &LoginTraceRef) -> Result<CookieJar> {
    if login.requests.is_empty() {
        return Err(EngineError::Precondition(format!(
            "no login requests recorded for {} session {}",
            login.user, login.session
        )));
    }
    let mut jar = CookieJar::default();
    for (i, req) in login.requests.iter().enumerate() {
        let id = uuid::Uuid::new_v4().to_string();
        let status = target
            .send(req, &mut jar, &id)
            .map_err(|e| EngineError::Login(e.to_string()))?;
        if !(200..400).contains(&status) {
            return Err(EngineError::Login(format!(
                "login request {i} ({} {}) returned {status}",
                req.method,
                req.path()
            )));
        }
    }
    if jar.is_empty() {
        return Err(EngineError::Login("login set no cookie".into()));
    }
    Ok(jar)
}

fn observe(query: &str, cfg: &AbstractionConfig) -> ObservedQuery {
    let abstracted = parse_sql_lenient(&SqlQueryRaw::new(query)).and_then(|t| t.abstract_tree(cfg));
    match abstracted {
        Ok(tree) => ObservedQuery {
            fingerprint: tree.fingerprint(),
            query: render(&tree),
        },
        Err(e) => ObservedQuery {
            fingerprint: String::new(),
            query: format!("unparsable: {e}"),
        },
    }
}

fn result_for(test: &TestCase, verdict: Verdict, detail: Option<String>) -> TestResult {
    TestResult {
        test_id: test.id.clone(),
        operation: test.operation.clone(),
        cluster_id: test.cluster_id.clone(),
        mode: test.mode,
        verdict,
        observed: Vec::new(),
        matched: None,
        http_status: None,
        timing_ms: 0,
        state_changed: None,
        cookie_fresh: false,
        detail,
    }
}

/// Sends the test request in the session held by `jar` and judges it on the
/// queries it executed: successful iff one of them is in the oracle.
/// Failures of the target or the sensor give an error verdict.
pub fn execute_test(
    target: &TargetHandle,
    test: &TestCase,
    jar: &CookieJar,
    options: &SuiteOptions,
) -> TestResult {
    let start = Instant::now();
    let recorded: BTreeSet<&str> = test
        .recorded_cookie_values
        .iter()
        .map(String::as_str)
        .collect();
    let mut result = result_for(test, Verdict::Error, None);
    result.cookie_fresh = !jar.is_empty() && jar.values().all(|v| !recorded.contains(v));

    let before = target.state_hash().ok().flatten();
    let request_id = uuid::Uuid::new_v4().to_string();
    let mut session = jar.clone();
    match target.send(&test.request, &mut session, &request_id) {
        Ok(status) => result.http_status = Some(status),
        Err(e) => {
            result.detail = Some(e.to_string());
            result.timing_ms = start.elapsed().as_millis() as u64;
            return result;
        }
    }
    let queries = match target.queries(&request_id) {
        Ok(q) => q,
        Err(e) => {
            result.detail = Some(e.to_string());
            result.timing_ms = start.elapsed().as_millis() as u64;
            return result;
        }
    };
    let after = target.state_hash().ok().flatten();
    result.state_changed = before.zip(after).map(|(b, a)| b != a);

    let oracle: BTreeSet<&str> = test.oracle.iter().map(|o| o.fingerprint.as_str()).collect();
    result.observed = queries
        .iter()
        .map(|q| observe(q, &options.abstraction))
        .collect();
    result.matched = result
        .observed
        .iter()
        .find(|o| oracle.contains(o.fingerprint.as_str()))
        .cloned();
    result.verdict = if result.matched.is_some() {
        Verdict::Successful
    } else {
        Verdict::Failed
    };
    result.timing_ms = start.elapsed().as_millis() as u64;
    result
}

fn constructibility(test: &TestCase) -> String {
    match test.mode {
        TestMode::Forge => {
            "built from constant and user-generated values only; session- and user-unique values replaced".into()
        }
        TestMode::OmitToken => format!(
            "accepted without {}",
            test.omitted_param.as_deref().unwrap_or("the token parameter")
        ),
    }
}

/// Runs every test in order, each after a restore and a fresh login, and
/// aggregates the verdicts per operation. Failures of single tests become
/// error verdicts; the suite always completes.
pub fn run_suite(
    target: &TargetHandle,
    tests: &[TestCase],
    options: &SuiteOptions,
) -> VulnerabilityReport {
    let snapshot = if tests.is_empty() {
        Ok(())
    } else {
        target.snapshot()
    };
    let mut results = Vec::new();
    for test in tests {
        let result = match &snapshot {
            Err(e) => result_for(test, Verdict::Error, Some(format!("snapshot: {e}"))),
            Ok(()) => {
                match restore_snapshot(target).and_then(|()| replay_login(target, &test.login)) {
                    Ok(jar) => execute_test(target, test, &jar, options),
                    Err(e) => result_for(test, Verdict::Error, Some(e.to_string())),
                }
            }
        };
        results.push(result);
    }
    if !tests.is_empty() && snapshot.is_ok() {
        // leave the target as it was found
        let _ = restore_snapshot(target);
    }

    let mut operations: Vec<OperationVerdict> = Vec::new();
    for (test, result) in tests.iter().zip(&results) {
        let idx = match operations
            .iter()
            .position(|o| o.cluster_id == test.cluster_id)
        {
            Some(i) => i,
            None => {
                operations.push(OperationVerdict {
                    operation: test.operation.clone(),
                    cluster_id: test.cluster_id.clone(),
                    tests: Vec::new(),
                    exploitable: false,
                    evidence: None,
                });
                operations.len() - 1
            }
        };
        let op = &mut operations[idx];
        op.tests.push(test.id.clone());
        if let (Verdict::Successful, Some(matched), None) =
            (result.verdict, &result.matched, &op.evidence)
        {
            op.exploitable = true;
            op.evidence = Some(Evidence {
                test_id: test.id.clone(),
                oracle_match: matched.query.clone(),
                constructibility: constructibility(test),
                fresh_session: result.cookie_fresh,
                request: test.request.to_wire_text(),
            });
        }
    }
    VulnerabilityReport {
        target: TargetInfo {
            base_url: target.base_url.clone(),
            sensor_url: target.sensor_url.clone(),
        },
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        tests: results,
        operations,
    }
}
