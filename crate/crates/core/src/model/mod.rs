//! Model construction on top of imported traces.
//!
//! Stages run in order and are idempotent:
//! [`build_abstractions`], [`cluster_transitions`], [`build_fsm`],
//! [`build_variables`], [`build_propagation`], [`infer_types`].
//! [`build_model`] runs all of them.

mod abstraction;
mod cluster;
mod dataflow;
mod fsm;
pub mod hopcroft;
mod types;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeId};
use crate::labels::*;
use crate::parse::{AbstractionConfig, ParseError};

pub use abstraction::build_abstractions;
pub use cluster::{cluster_id, cluster_transitions, q_aux, Cluster};
pub use dataflow::{build_propagation, build_variables, TIER_HTTP, TIER_SQL, TIER_UA};
pub use fsm::{build_fsm, initial_state, q_states, state_index, FsmSummary};
pub use types::{has_sem_type, infer_types, semantic_type, Observation, SemType, SynType};

/// Event prop naming the FSM state (by alias key) that an event's data
/// belongs to.
pub const P_STATE_KEY: &str = "state_key";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub abstraction: AbstractionConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub abstract_roots: usize,
    pub clusters: usize,
    pub states_before: usize,
    pub states_after: usize,
    pub variables: usize,
    pub propag_edges: usize,
}

/// Runs every builder stage and summarizes the resulting graph.
pub fn build_model(graph: &mut Graph, config: &ModelConfig) -> Result<BuildSummary> {
    build_abstractions(graph, &config.abstraction)?;
    let clusters = cluster_transitions(graph)?;
    let fsm = build_fsm(graph)?;
    build_variables(graph, &config.abstraction)?;
    build_propagation(graph)?;
    infer_types(graph)?;
    Ok(BuildSummary {
        abstract_roots: abstract_roots(graph).count(),
        clusters: clusters.len(),
        states_before: fsm.states_before,
        states_after: fsm.states_after,
        variables: graph.label_count(VARIABLE),
        propag_edges: graph.edge_count_with_label(PROPAG),
    })
}

pub(crate) fn roots_of_type<'a>(
    graph: &'a Graph,
    tag: &'a str,
) -> impl Iterator<Item = NodeId> + 'a {
    graph
        .nodes_with_label(ROOT)
        .filter(move |r| graph.str_prop(*r, P_TYPE) == Some(tag))
}

pub(crate) fn abstract_roots(graph: &Graph) -> impl Iterator<Item = NodeId> + '_ {
    graph.nodes_with_label(ROOT).filter(|r| {
        matches!(
            graph.str_prop(*r, P_TYPE),
            Some(T_ABS_HTTP) | Some(T_ABS_SQL)
        )
    })
}

/// The event a concrete root parses.
pub fn event_of(graph: &Graph, root: NodeId) -> Option<NodeId> {
    graph.successors(root, PARSES).next()
}

/// The concrete root parsing an event.
pub fn root_of(graph: &Graph, event: NodeId) -> Option<NodeId> {
    graph.predecessors(event, PARSES).next()
}

/// The abstract root of a concrete root.
pub fn abstraction_of(graph: &Graph, root: NodeId) -> Option<NodeId> {
    graph.predecessors(root, ABSTRACTS).next()
}

/// `(user, session)` of a node carrying provenance props.
pub fn provenance(graph: &Graph, id: NodeId) -> Option<(String, i64)> {
    Some((
        graph.str_prop(id, P_USER)?.to_owned(),
        graph.int_prop(id, P_SESSION)?,
    ))
}

pub(crate) fn state_key(user: &str, session: i64, ordinal: usize) -> String {
    format!("{user}/{session}/{ordinal}")
}
