//! Trace-driven model inference and CSRF test mining.
//!
//! Recorded user-action, HTTP and SQL traces are imported into a labeled
//! property graph ([`graph`]), enriched with abstract parse trees, a finite
//! state machine and a typed data-flow model ([`model`]), and mined for
//! state-changing requests, anti-CSRF token candidates and test oracles
//! ([`miner`]).

pub mod graph;
pub mod labels;
pub mod miner;
pub mod model;
pub mod parse;
pub mod trace;

pub use graph::{Graph, GraphError, NodeId};
