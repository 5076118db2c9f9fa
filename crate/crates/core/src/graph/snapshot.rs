//! JSON snapshot form of a [`Graph`].
//!
//! ```json
//! { "nodes": [{"id": "n1", "labels": ["State"], "props": {"ordinal": 0}}],
//!   "edges": [{"id": "e1", "src": "n1", "dst": "n2", "label": "trans", "props": {}}] }
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeId, Graph, GraphError, Node, NodeId, Props, Result, MULTI_EDGE_LABELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub props: Props,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub label: String,
    #[serde(default)]
    pub props: Props,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl Graph {
    pub fn to_snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            nodes: self
                .nodes()
                .map(|n| NodeRecord {
                    id: n.id,
                    labels: n.labels.clone(),
                    props: n.props.clone(),
                })
                .collect(),
            edges: self
                .edges()
                .map(|e| EdgeRecord {
                    id: e.id,
                    src: e.src,
                    dst: e.dst,
                    label: e.label.clone(),
                    props: e.props.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a graph, enforcing the same invariants as the mutating API.
    pub fn from_snapshot(snapshot: GraphSnapshot) -> Result<Graph> {
        let mut graph = Graph::new();
        for record in snapshot.nodes {
            if record.labels.is_empty() {
                return Err(GraphError::Snapshot(format!(
                    "node {} has no labels",
                    record.id
                )));
            }
            if graph.node(record.id).is_some() {
                return Err(GraphError::Snapshot(format!(
                    "duplicate node id {}",
                    record.id
                )));
            }
            graph.next_node = graph.next_node.max(record.id.0);
            graph.insert_node(Node {
                id: record.id,
                labels: record.labels,
                props: record.props,
            });
        }
        for record in snapshot.edges {
            if graph.edge(record.id).is_some() {
                return Err(GraphError::Snapshot(format!(
                    "duplicate edge id {}",
                    record.id
                )));
            }
            for end in [record.src, record.dst] {
                if graph.node(end).is_none() {
                    return Err(GraphError::Snapshot(format!(
                        "edge {} references missing node {end}",
                        record.id
                    )));
                }
            }
            if !MULTI_EDGE_LABELS.contains(&record.label.as_str())
                && graph.has_edge(record.src, record.dst, &record.label)
            {
                return Err(GraphError::Snapshot(format!(
                    "duplicate {} edge {} -> {}",
                    record.label, record.src, record.dst
                )));
            }
            graph.next_edge = graph.next_edge.max(record.id.0);
            graph.insert_edge(Edge {
                id: record.id,
                src: record.src,
                dst: record.dst,
                label: record.label,
                props: record.props,
            });
        }
        Ok(graph)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Graph> {
        let snapshot: GraphSnapshot =
            serde_json::from_str(text).map_err(|e| GraphError::Snapshot(e.to_string()))?;
        Graph::from_snapshot(snapshot)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())
            .map_err(|e| GraphError::Snapshot(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Graph> {
        let text = fs::read_to_string(path)
            .map_err(|e| GraphError::Snapshot(format!("{}: {e}", path.display())))?;
        Graph::from_json(&text)
    }
}
