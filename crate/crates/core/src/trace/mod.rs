//! Trace files and their import into the graph.
//!
//! A recorded session consists of three JSONL files (user actions, HTTP
//! requests, SQL queries). Records reference each other by index:
//! `caused_by_action` links a request to the action that fired it and
//! `caused_by_request` links a query to the request that executed it.

mod ingest;
mod validate;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::parse::{HttpRequestRaw, ParseError, SqlQueryRaw};

pub use ingest::{import_manifest, import_session, ImportSummary};
pub use validate::{validate_trace_set, validate_traces, Finding, FindingKind, ValidationReport};

pub const MANIFEST_FILE: &str = "deemon-trace-manifest.json";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("traces failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("session {session} of user {user:?} is already imported")]
    Conflict { user: String, session: u64 },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Login,
    #[default]
    Workflow,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Login => crate::labels::PHASE_LOGIN,
            Phase::Workflow => crate::labels::PHASE_WORKFLOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserActionRecord {
    pub index: u64,
    #[serde(default)]
    pub action_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub user: String,
    #[serde(default)]
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRecord {
    pub index: u64,
    pub request: HttpRequestRaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caused_by_action: Option<u64>,
    pub session: u64,
    pub user: String,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlRecord {
    pub index: u64,
    pub query: SqlQueryRaw,
    pub caused_by_request: u64,
    pub session: u64,
    pub user: String,
}

/// The three traces of one recorded session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceSet {
    pub actions: Vec<UserActionRecord>,
    pub http: Vec<HttpRecord>,
    pub sql: Vec<SqlRecord>,
}

impl TraceSet {
    /// Reads the three files. Lines that fail to deserialize are reported as
    /// findings rather than errors.
    pub fn load(
        actions: &Path,
        http: &Path,
        sql: &Path,
    ) -> Result<(TraceSet, Vec<Finding>), TraceError> {
        let mut findings = Vec::new();
        let set = TraceSet {
            actions: read_jsonl(actions, "actions", &mut findings)?,
            http: read_jsonl(http, "http", &mut findings)?,
            sql: read_jsonl(sql, "sql", &mut findings)?,
        };
        Ok((set, findings))
    }

    pub fn user(&self) -> Option<&str> {
        self.actions
            .first()
            .map(|r| r.user.as_str())
            .or_else(|| self.http.first().map(|r| r.user.as_str()))
            .or_else(|| self.sql.first().map(|r| r.user.as_str()))
    }

    /// Writes the traces as JSONL files.
    pub fn write(&self, actions: &Path, http: &Path, sql: &Path) -> Result<(), TraceError> {
        write_jsonl(actions, &self.actions)?;
        write_jsonl(http, &self.http)?;
        write_jsonl(sql, &self.sql)
    }
}

fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    trace: &'static str,
    findings: &mut Vec<Finding>,
) -> Result<Vec<T>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(record) => out.push(record),
            Err(e) => findings.push(Finding {
                trace,
                line: n + 1,
                kind: FindingKind::MalformedRecord,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), TraceError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })
}

/// One session entry of a trace manifest; file paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSession {
    pub session: u64,
    pub user: String,
    #[serde(default)]
    pub role: String,
    pub actions: PathBuf,
    pub http: PathBuf,
    pub sql: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceManifest {
    #[serde(default)]
    pub scenario: String,
    pub sessions: Vec<ManifestSession>,
}

impl TraceManifest {
    pub fn load(path: &Path) -> Result<TraceManifest, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| TraceError::Manifest {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|source| TraceError::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Absolute file triple of a session entry.
    pub fn files(
        &self,
        manifest_path: &Path,
        entry: &ManifestSession,
    ) -> (PathBuf, PathBuf, PathBuf) {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        (
            base.join(&entry.actions),
            base.join(&entry.http),
            base.join(&entry.sql),
        )
    }
}
