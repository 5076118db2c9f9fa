use std::fmt::Write as _;

use deemon_core::miner::TestMode;
use serde::{Deserialize, Serialize};

pub const REPORT_FILE: &str = "deemon-report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Successful,
    Failed,
    Error,
}

/// An executed query, abstracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedQuery {
    pub fingerprint: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub operation: String,
    pub cluster_id: String,
    pub mode: TestMode,
    pub verdict: Verdict,
    pub observed: Vec<ObservedQuery>,
    /// First observed query in the oracle; present iff the test succeeded.
    pub matched: Option<ObservedQuery>,
    pub http_status: Option<u16>,
    pub timing_ms: u64,
    /// Whether the target's state hash moved while the test ran.
    pub state_changed: Option<bool>,
    /// No cookie sent with the test was seen in the recorded traces.
    pub cookie_fresh: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Why an operation is exploitable, one entry per required property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub test_id: String,
    /// The successful test reproduced this security-relevant query.
    pub oracle_match: String,
    /// How the attacker can build the request without secrets.
    pub constructibility: String,
    /// The test rode a freshly issued session.
    pub fresh_session: bool,
    /// The request as sent, cookies left as placeholders.
    pub request: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationVerdict {
    pub operation: String,
    pub cluster_id: String,
    pub tests: Vec<String>,
    pub exploitable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub base_url: String,
    pub sensor_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub target: TargetInfo,
    pub generated_at: String,
    pub tests: Vec<TestResult>,
    pub operations: Vec<OperationVerdict>,
}

impl VulnerabilityReport {
    pub fn exploitable_count(&self) -> usize {
        self.operations.iter().filter(|o| o.exploitable).count()
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.tests.iter().filter(|t| t.verdict == verdict).count()
    }

    pub fn exploitable_operations(&self) -> Vec<&str> {
        self.operations
            .iter()
            .filter(|o| o.exploitable)
            .map(|o| o.operation.as_str())
            .collect()
    }

    /// Copy with the time-dependent fields cleared.
    pub fn normalized(&self) -> VulnerabilityReport {
        let mut out = self.clone();
        out.generated_at.clear();
        for t in &mut out.tests {
            t.timing_ms = 0;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<VulnerabilityReport> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "target: {} (sensor {})",
            self.target.base_url, self.target.sensor_url
        );
        let _ = writeln!(
            out,
            "tests: {} ({} successful, {} failed, {} error)",
            self.tests.len(),
            self.count(Verdict::Successful),
            self.count(Verdict::Failed),
            self.count(Verdict::Error),
        );
        let _ = writeln!(
            out,
            "exploitable operations: {} of {}",
            self.exploitable_count(),
            self.operations.len()
        );
        for op in &self.operations {
            let status = if op.exploitable { "VULNERABLE" } else { "ok" };
            let _ = writeln!(out, "\n[{status}] {} ({})", op.operation, op.cluster_id);
            for id in &op.tests {
                if let Some(t) = self.tests.iter().find(|t| &t.test_id == id) {
                    let _ = write!(out, "  {:?} {id}", t.verdict);
                    if let Some(s) = t.http_status {
                        let _ = write!(out, " http {s}");
                    }
                    if let Some(d) = &t.detail {
                        let _ = write!(out, " ({d})");
                    }
                    out.push('\n');
                }
            }
            if let Some(e) = &op.evidence {
                let _ = writeln!(out, "  oracle match: {}", e.oracle_match);
                let _ = writeln!(out, "  request: {}", e.constructibility);
                let _ = writeln!(out, "  fresh session: {}", e.fresh_session);
                for line in e.request.lines() {
                    let _ = writeln!(out, "    | {line}");
                }
            }
        }
        out
    }
}
