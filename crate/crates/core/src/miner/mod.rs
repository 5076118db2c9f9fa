//! Detection queries over a built model and CSRF test generation.
//!
//! [`mine`] finds every abstract request that triggers an FSM transition,
//! keeps those whose caused writes happen once per session, looks for
//! anti-CSRF token candidates among their session- or user-unique
//! parameters and attaches an oracle of unique abstract queries.
//! [`generate_tests`] turns the result into replayable [`TestCase`]s.

mod generate;
mod queries;

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NodeId};
use crate::parse::{AbstractionConfig, ParseError};

pub use generate::{generate_tests, LoginTraceRef, TestCase, TestMode, FORGED_BOUNDARY};
pub use queries::{
    extract_oracle, filter_relevant, find_state_changing, find_token_params, mine, oracle_pattern,
    sc_pattern, token_pattern,
};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("request {0} triggers no relevant state change")]
    NotRelevant(NodeId),
}

pub type Result<T> = std::result::Result<T, MinerError>;

/// Which all-digit values are treated as epoch timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampHeuristic {
    /// Accepted digit counts. Values with 13 or more digits are read as
    /// milliseconds, shorter ones as seconds.
    pub digits: Vec<usize>,
    pub min_year: i32,
    pub max_year: i32,
}

impl Default for TimestampHeuristic {
    fn default() -> Self {
        TimestampHeuristic {
            digits: vec![10, 13],
            min_year: 2001,
            max_year: 2100,
        }
    }
}

impl TimestampHeuristic {
    pub fn is_timestamp(&self, value: &str) -> bool {
        if !value.bytes().all(|b| b.is_ascii_digit()) || !self.digits.contains(&value.len()) {
            return false;
        }
        let Ok(n) = value.parse::<i64>() else {
            return false;
        };
        let seconds = if value.len() >= 13 { n / 1000 } else { n };
        DateTime::from_timestamp(seconds, 0)
            .is_some_and(|t| (self.min_year..=self.max_year).contains(&t.year()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    #[serde(default)]
    pub timestamps: TimestampHeuristic,
    #[serde(default)]
    pub abstraction: AbstractionConfig,
}

/// One abstract query a test must reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub fingerprint: String,
    /// Rendered abstract query.
    pub query: String,
    /// Occurrences per `user/session`.
    pub occurrences: BTreeMap<String, usize>,
}

/// A state-changing abstract request, represented by its lowest-id
/// concrete request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOperation {
    pub request_root: NodeId,
    pub abstract_request: NodeId,
    pub cluster_id: String,
    pub method: String,
    pub path: String,
    pub phase: String,
    pub relevant: bool,
    pub token_params: Vec<String>,
    pub oracle: Vec<OracleEntry>,
}

impl CandidateOperation {
    pub fn label(&self) -> String {
        format!("{} {}", self.method, self.path)
    }
}

/// Request counts at each filtering step, over abstract requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub reqs: usize,
    pub sc_reqs: usize,
    pub rel_sc_reqs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub summary: MiningSummary,
    pub candidates: Vec<CandidateOperation>,
}
