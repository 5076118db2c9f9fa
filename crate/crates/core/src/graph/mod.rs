//! In-memory labeled property graph.
//!
//! Every model layer (traces, parse trees, FSM, data-flow variables) lives in a
//! single [`Graph`]. Nodes carry a non-empty label set and scalar properties;
//! edges are directed, carry exactly one label and scalar properties.
//!
//! Edges are unique per `(src, dst, label)` except for the labels listed in
//! [`MULTI_EDGE_LABELS`].

mod pattern;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use pattern::{Binding, Comparator, DegreeConstraint, Direction, EdgeSlot, NodeSlot, Pattern};
pub use snapshot::{EdgeRecord, GraphSnapshot, NodeRecord};

/// Edge labels that may repeat between the same pair of nodes.
pub const MULTI_EDGE_LABELS: &[&str] = &["abstracts", "child"];

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Scalar property value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

pub type Props = BTreeMap<String, Value>;

/// Builds a property map from `(key, value)` pairs.
pub fn props<K, V, I>(pairs: I) -> Props
where
    K: Into<String>,
    V: Into<Value>,
    I: IntoIterator<Item = (K, V)>,
{
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = GraphError;

            fn from_str(s: &str) -> Result<Self> {
                s.strip_prefix($prefix)
                    .and_then(|digits| digits.parse::<u64>().ok())
                    .map($name)
                    .ok_or_else(|| {
                        GraphError::Snapshot(format!(
                            "malformed id {s:?}, expected {}<integer>",
                            $prefix
                        ))
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

id_type!(NodeId, "n");
id_type!(EdgeId, "e");

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub labels: BTreeSet<String>,
    pub props: Props,
}

impl Node {
    pub fn has_label(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn prop(&self, key: &str) -> Option<&Value> {
        self.props.get(key)
    }

    pub fn str_prop(&self, key: &str) -> Option<&str> {
        self.props.get(key).and_then(Value::as_str)
    }

    pub fn int_prop(&self, key: &str) -> Option<i64> {
        self.props.get(key).and_then(Value::as_int)
    }

    pub fn bool_prop(&self, key: &str) -> Option<bool> {
        self.props.get(key).and_then(Value::as_bool)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub label: String,
    pub props: Props,
}

type EdgeKey = (NodeId, NodeId, String);

/// Single-writer, multi-reader property graph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    by_label: HashMap<String, BTreeSet<NodeId>>,
    out_adj: HashMap<NodeId, BTreeSet<EdgeId>>,
    in_adj: HashMap<NodeId, BTreeSet<EdgeId>>,
    multiplicity: HashMap<EdgeKey, usize>,
    next_node: u64,
    next_edge: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node<L, S>(&mut self, labels: L, props: Props) -> Result<NodeId>
    where
        L: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(GraphError::Validation("node label set is empty".into()));
        }
        if labels.iter().any(String::is_empty) {
            return Err(GraphError::Validation("node label is empty".into()));
        }
        self.next_node += 1;
        let id = NodeId(self.next_node);
        self.insert_node(Node { id, labels, props });
        Ok(id)
    }

    fn insert_node(&mut self, node: Node) {
        for label in &node.labels {
            self.by_label
                .entry(label.clone())
                .or_default()
                .insert(node.id);
        }
        self.nodes.insert(node.id, node);
    }

    pub fn add_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        label: &str,
        props: Props,
    ) -> Result<EdgeId> {
        if label.is_empty() {
            return Err(GraphError::Validation("edge label is empty".into()));
        }
        for end in [src, dst] {
            if !self.nodes.contains_key(&end) {
                return Err(GraphError::Validation(format!(
                    "edge {label} references missing node {end}"
                )));
            }
        }
        if !MULTI_EDGE_LABELS.contains(&label) && self.has_edge(src, dst, label) {
            return Err(GraphError::Validation(format!(
                "duplicate {label} edge {src} -> {dst}"
            )));
        }
        self.next_edge += 1;
        let id = EdgeId(self.next_edge);
        self.insert_edge(Edge {
            id,
            src,
            dst,
            label: label.to_owned(),
            props,
        });
        Ok(id)
    }

    /// Adds the edge unless an edge with the same `(src, dst, label)` exists.
    /// Returns `true` when a new edge was created.
    pub fn ensure_edge(&mut self, src: NodeId, dst: NodeId, label: &str) -> Result<bool> {
        if self.has_edge(src, dst, label) {
            return Ok(false);
        }
        self.add_edge(src, dst, label, Props::new())?;
        Ok(true)
    }

    fn insert_edge(&mut self, edge: Edge) {
        self.out_adj.entry(edge.src).or_default().insert(edge.id);
        self.in_adj.entry(edge.dst).or_default().insert(edge.id);
        *self
            .multiplicity
            .entry((edge.src, edge.dst, edge.label.clone()))
            .or_default() += 1;
        self.edges.insert(edge.id, edge);
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Result<Edge> {
        let edge = self.edges.remove(&id).ok_or(GraphError::UnknownEdge(id))?;
        if let Some(set) = self.out_adj.get_mut(&edge.src) {
            set.remove(&id);
        }
        if let Some(set) = self.in_adj.get_mut(&edge.dst) {
            set.remove(&id);
        }
        let key = (edge.src, edge.dst, edge.label.clone());
        if let Some(count) = self.multiplicity.get_mut(&key) {
            *count -= 1;
            if *count == 0 {
                self.multiplicity.remove(&key);
            }
        }
        Ok(edge)
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Node> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id));
        }
        let incident: BTreeSet<EdgeId> = self
            .out_adj
            .get(&id)
            .into_iter()
            .chain(self.in_adj.get(&id))
            .flatten()
            .copied()
            .collect();
        for edge in incident {
            self.remove_edge(edge)?;
        }
        self.out_adj.remove(&id);
        self.in_adj.remove(&id);
        let node = self.nodes.remove(&id).ok_or(GraphError::UnknownNode(id))?;
        for label in &node.labels {
            if let Some(set) = self.by_label.get_mut(label) {
                set.remove(&id);
            }
        }
        Ok(node)
    }

    pub fn set_prop(&mut self, id: NodeId, key: &str, value: impl Into<Value>) -> Result<()> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        node.props.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn try_node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node ids carrying `label`, in ascending id order.
    pub fn nodes_with_label<'a>(&'a self, label: &str) -> impl Iterator<Item = NodeId> + 'a {
        self.by_label.get(label).into_iter().flatten().copied()
    }

    pub fn label_count(&self, label: &str) -> usize {
        self.by_label.get(label).map_or(0, BTreeSet::len)
    }

    pub fn edge_count_with_label(&self, label: &str) -> usize {
        self.edges.values().filter(|e| e.label == label).count()
    }

    pub fn out_edges<'a>(&'a self, id: NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.out_adj
            .get(&id)
            .into_iter()
            .flatten()
            .map(move |e| &self.edges[e])
    }

    pub fn in_edges<'a>(&'a self, id: NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.in_adj
            .get(&id)
            .into_iter()
            .flatten()
            .map(move |e| &self.edges[e])
    }

    /// Targets of outgoing `label` edges, in edge-creation order.
    pub fn successors<'a>(
        &'a self,
        id: NodeId,
        label: &'a str,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.out_edges(id)
            .filter(move |e| e.label == label)
            .map(|e| e.dst)
    }

    /// Sources of incoming `label` edges, in edge-creation order.
    pub fn predecessors<'a>(
        &'a self,
        id: NodeId,
        label: &'a str,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.in_edges(id)
            .filter(move |e| e.label == label)
            .map(|e| e.src)
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, label: &str) -> bool {
        self.multiplicity
            .contains_key(&(src, dst, label.to_owned()))
    }

    pub fn out_degree(&self, id: NodeId, label: &str) -> Result<usize> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id));
        }
        Ok(self.out_edges(id).filter(|e| e.label == label).count())
    }

    pub fn in_degree(&self, id: NodeId, label: &str) -> Result<usize> {
        if !self.nodes.contains_key(&id) {
            return Err(GraphError::UnknownNode(id));
        }
        Ok(self.in_edges(id).filter(|e| e.label == label).count())
    }

    pub fn str_prop(&self, id: NodeId, key: &str) -> Option<&str> {
        self.nodes.get(&id).and_then(|n| n.str_prop(key))
    }

    pub fn int_prop(&self, id: NodeId, key: &str) -> Option<i64> {
        self.nodes.get(&id).and_then(|n| n.int_prop(key))
    }

    pub fn bool_prop(&self, id: NodeId, key: &str) -> Option<bool> {
        self.nodes.get(&id).and_then(|n| n.bool_prop(key))
    }
}
