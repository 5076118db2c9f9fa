//! Runs generated CSRF tests against a target that speaks the sensor
//! protocol, and reports which operations an attacker can trigger.
//!
//! Every test starts from the snapshot taken when the suite starts and
//! from a freshly replayed login. A test succeeds when the target executes
//! a query from the test's oracle while serving the test request.

pub mod execute;
pub mod report;
pub mod target;

use thiserror::Error;

pub use execute::{execute_test, replay_login, restore_snapshot, run_suite, SuiteOptions};
pub use report::{
    Evidence, ObservedQuery, OperationVerdict, TestResult, Verdict, VulnerabilityReport,
    REPORT_FILE,
};
pub use target::{Capabilities, CookieJar, TargetHandle, REQUEST_ID_HEADER};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("target did not answer the sensor probe: {0}")]
    Probe(String),
    #[error("control request failed: {0}")]
    Control(String),
    #[error("sensor unavailable: {0}")]
    Sensor(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("login failed: {0}")]
    Login(String),
    #[error("{0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;
