use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::Result;
use crate::graph::{Graph, NodeId, Pattern, Value};
use crate::labels::*;

/// Requests that trigger the same transition: equal abstract request and
/// equal set of caused state-changing abstract queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub id: String,
    pub abs_http: NodeId,
    pub abs_sql: Vec<NodeId>,
    pub members: Vec<NodeId>,
}

/// Abstract request, concrete request, abstract query, concrete query,
/// restricted to queries that write state.
pub fn q_aux() -> Pattern {
    Pattern::new()
        .node_where("abs_h", ROOT, [(P_TYPE, T_ABS_HTTP)])
        .node_where("h", ROOT, [(P_TYPE, T_HTTP)])
        .node("e", EVENT)
        .node("c", EVENT)
        .node_where("sql", ROOT, [(P_TYPE, T_SQL)])
        .node_where(
            "abs_sql",
            ROOT,
            [
                (P_TYPE, Value::from(T_ABS_SQL)),
                (P_MUTATES, Value::from(true)),
            ],
        )
        .edge("abs_h", ABSTRACTS, "h")
        .edge("h", PARSES, "e")
        .edge("e", CAUSES, "c")
        .edge("sql", PARSES, "c")
        .edge("abs_sql", ABSTRACTS, "sql")
}

pub fn cluster_id(abs_http_fp: &str, abs_sql_fps: &BTreeSet<&str>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(abs_http_fp.as_bytes());
    for fp in abs_sql_fps {
        hasher.update(b"\n");
        hasher.update(fp.as_bytes());
    }
    let digest = hasher.finalize();
    format!("c-{}", &hex::encode(digest.as_slice())[..16])
}

/// Groups the rows of [`q_aux`] into clusters and tags every member request
/// root with its cluster id. Clusters are ordered by id.
pub fn cluster_transitions(graph: &mut Graph) -> Result<Vec<Cluster>> {
    let rows = graph.match_pattern(&q_aux())?;
    let mut per_request: BTreeMap<NodeId, (NodeId, BTreeSet<NodeId>)> = BTreeMap::new();
    for row in &rows {
        per_request
            .entry(row["h"])
            .or_insert_with(|| (row["abs_h"], BTreeSet::new()))
            .1
            .insert(row["abs_sql"]);
    }
    let fp = |id: NodeId| graph.str_prop(id, P_FINGERPRINT).unwrap_or_default();
    let mut clusters: BTreeMap<String, Cluster> = BTreeMap::new();
    for (request, (abs_h, abs_sql)) in &per_request {
        let fps: BTreeSet<&str> = abs_sql.iter().map(|id| fp(*id)).collect();
        let id = cluster_id(fp(*abs_h), &fps);
        clusters
            .entry(id.clone())
            .or_insert_with(|| Cluster {
                id,
                abs_http: *abs_h,
                abs_sql: abs_sql.iter().copied().collect(),
                members: Vec::new(),
            })
            .members
            .push(*request);
    }
    for cluster in clusters.values() {
        for member in &cluster.members {
            graph.set_prop(*member, P_CLUSTER, cluster.id.as_str())?;
        }
    }
    Ok(clusters.into_values().collect())
}
