use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::{Phase, TraceError, TraceSet};
use crate::parse::parse_http_request;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    MalformedRecord,
    NonMonotoneIndex,
    DuplicateRequestId,
    DanglingCausality,
    PhaseOrder,
    SessionMismatch,
    UnparseableRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// `actions`, `http` or `sql`.
    pub trace: &'static str,
    /// 1-based record position within its trace.
    pub line: usize,
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.findings.iter().filter(|f| f.kind == kind).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(
                f,
                "  {} record {}: {:?}: {}",
                finding.trace, finding.line, finding.kind, finding.message
            )?;
        }
        Ok(())
    }
}

/// Reads and checks three trace files. An empty report means importable.
pub fn validate_traces(
    actions: &Path,
    http: &Path,
    sql: &Path,
) -> Result<ValidationReport, TraceError> {
    let (set, mut findings) = TraceSet::load(actions, http, sql)?;
    findings.extend(validate_trace_set(&set).findings);
    Ok(ValidationReport { findings })
}

fn monotone<'a>(
    trace: &'static str,
    indices: impl Iterator<Item = u64> + 'a,
    findings: &mut Vec<Finding>,
) {
    let mut last: Option<u64> = None;
    for (i, index) in indices.enumerate() {
        if last.is_some_and(|l| index <= l) {
            findings.push(Finding {
                trace,
                line: i + 1,
                kind: FindingKind::NonMonotoneIndex,
                message: format!(
                    "index {index} does not increase on {}",
                    last.unwrap_or_default()
                ),
            });
        }
        last = Some(index);
    }
}

pub fn validate_trace_set(set: &TraceSet) -> ValidationReport {
    let mut findings = Vec::new();
    monotone(
        "actions",
        set.actions.iter().map(|r| r.index),
        &mut findings,
    );
    monotone("http", set.http.iter().map(|r| r.index), &mut findings);
    monotone("sql", set.sql.iter().map(|r| r.index), &mut findings);

    let mut seen_workflow = false;
    for (i, a) in set.actions.iter().enumerate() {
        match a.phase {
            Phase::Workflow => seen_workflow = true,
            Phase::Login if seen_workflow => findings.push(Finding {
                trace: "actions",
                line: i + 1,
                kind: FindingKind::PhaseOrder,
                message: format!("login action {} follows a workflow action", a.index),
            }),
            Phase::Login => {}
        }
    }

    let user = set.user();
    let mut mismatch = |trace: &'static str, line: usize, what: String| {
        findings.push(Finding {
            trace,
            line,
            kind: FindingKind::SessionMismatch,
            message: what,
        })
    };
    for (i, a) in set.actions.iter().enumerate() {
        if Some(a.user.as_str()) != user {
            mismatch(
                "actions",
                i + 1,
                format!(
                    "user {:?} differs from {:?}",
                    a.user,
                    user.unwrap_or_default()
                ),
            );
        }
    }
    let session = set
        .http
        .first()
        .map(|r| r.session)
        .or_else(|| set.sql.first().map(|r| r.session));
    for (i, r) in set.http.iter().enumerate() {
        if Some(r.session) != session || Some(r.user.as_str()) != user {
            mismatch(
                "http",
                i + 1,
                format!("record belongs to {}/{}", r.user, r.session),
            );
        }
    }
    for (i, r) in set.sql.iter().enumerate() {
        if Some(r.session) != session || Some(r.user.as_str()) != user {
            mismatch(
                "sql",
                i + 1,
                format!("record belongs to {}/{}", r.user, r.session),
            );
        }
    }

    let action_indices: HashSet<u64> = set.actions.iter().map(|a| a.index).collect();
    let mut request_ids = HashSet::new();
    for (i, r) in set.http.iter().enumerate() {
        if let Some(a) = r.caused_by_action.filter(|a| !action_indices.contains(a)) {
            findings.push(Finding {
                trace: "http",
                line: i + 1,
                kind: FindingKind::DanglingCausality,
                message: format!("caused_by_action {a} references no action"),
            });
        }
        if !request_ids.insert(r.request_id.as_str()) {
            findings.push(Finding {
                trace: "http",
                line: i + 1,
                kind: FindingKind::DuplicateRequestId,
                message: format!("request_id {:?} already used", r.request_id),
            });
        }
        if let Err(e) = parse_http_request(&r.request) {
            findings.push(Finding {
                trace: "http",
                line: i + 1,
                kind: FindingKind::UnparseableRequest,
                message: e.to_string(),
            });
        }
    }
    let http_indices: HashSet<u64> = set.http.iter().map(|r| r.index).collect();
    for (i, q) in set.sql.iter().enumerate() {
        if !http_indices.contains(&q.caused_by_request) {
            findings.push(Finding {
                trace: "sql",
                line: i + 1,
                kind: FindingKind::DanglingCausality,
                message: format!(
                    "caused_by_request {} references no request",
                    q.caused_by_request
                ),
            });
        }
        if q.query.text.trim().is_empty() {
            findings.push(Finding {
                trace: "sql",
                line: i + 1,
                kind: FindingKind::MalformedRecord,
                message: "empty query text".into(),
            });
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{HttpRequestRaw, SqlQueryRaw};
    use crate::trace::{HttpRecord, SqlRecord, UserActionRecord};

    fn http(index: u64, id: &str) -> HttpRecord {
        HttpRecord {
            index,
            request: HttpRequestRaw::new("GET", "/"),
            caused_by_action: None,
            session: 1,
            user: "alice".into(),
            request_id: id.into(),
        }
    }

    fn sql(index: u64, cause: u64) -> SqlRecord {
        SqlRecord {
            index,
            query: SqlQueryRaw::new("SELECT * FROM t"),
            caused_by_request: cause,
            session: 1,
            user: "alice".into(),
        }
    }

    fn well_formed() -> TraceSet {
        TraceSet {
            actions: vec![UserActionRecord {
                index: 0,
                action_type: "click".into(),
                element: Some("#go".into()),
                input: None,
                user: "alice".into(),
                phase: Phase::Workflow,
            }],
            http: (0..5).map(|i| http(i, &format!("r{i}"))).collect(),
            sql: vec![sql(0, 1)],
        }
    }

    #[test]
    fn well_formed_fixture_is_clean() {
        assert!(validate_trace_set(&well_formed()).is_empty());
    }

    #[test]
    fn dangling_query_cause() {
        let mut set = well_formed();
        set.sql = vec![sql(0, 99)];
        let report = validate_trace_set(&set);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.count(FindingKind::DanglingCausality), 1);
    }

    #[test]
    fn duplicate_request_id() {
        let mut set = well_formed();
        set.http[3].request_id = "r1".into();
        let report = validate_trace_set(&set);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.count(FindingKind::DuplicateRequestId), 1);
    }

    #[test]
    fn ordering_violations() {
        let mut set = well_formed();
        set.http[2].index = 0;
        set.actions.push(UserActionRecord {
            index: 1,
            action_type: "type".into(),
            element: None,
            input: None,
            user: "alice".into(),
            phase: Phase::Login,
        });
        let report = validate_trace_set(&set);
        assert_eq!(report.count(FindingKind::NonMonotoneIndex), 1);
        assert_eq!(report.count(FindingKind::PhaseOrder), 1);
    }
}
