//! Declarative pattern queries over the property graph.
//!
//! A [`Pattern`] names node slots (variable, label, property equalities), edge
//! slots between them and optional degree constraints. [`Graph::match_pattern`] returns
//! every assignment of slots to nodes that satisfies all constraints. Distinct
//! slots may bind the same node; an edge slot is satisfied when at least one
//! edge with its label joins the bound endpoints.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{Graph, GraphError, NodeId, Result, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSlot {
    pub var: String,
    pub label: String,
    pub props: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSlot {
    pub src: String,
    pub label: String,
    pub dst: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: usize, rhs: usize) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeConstraint {
    pub var: String,
    pub label: String,
    pub direction: Direction,
    pub cmp: Comparator,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pattern {
    pub nodes: Vec<NodeSlot>,
    pub edges: Vec<EdgeSlot>,
    pub degrees: Vec<DegreeConstraint>,
}

impl Pattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, var: &str, label: &str) -> Self {
        self.nodes.push(NodeSlot {
            var: var.to_owned(),
            label: label.to_owned(),
            props: Vec::new(),
        });
        self
    }

    pub fn node_where<I, K, V>(mut self, var: &str, label: &str, props: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<Value>,
    {
        self.nodes.push(NodeSlot {
            var: var.to_owned(),
            label: label.to_owned(),
            props: props
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        });
        self
    }

    /// Adds the edge slot `src -label-> dst`.
    pub fn edge(mut self, src: &str, label: &str, dst: &str) -> Self {
        self.edges.push(EdgeSlot {
            src: src.to_owned(),
            label: label.to_owned(),
            dst: dst.to_owned(),
        });
        self
    }

    pub fn degree(
        mut self,
        var: &str,
        label: &str,
        direction: Direction,
        cmp: Comparator,
        count: usize,
    ) -> Self {
        self.degrees.push(DegreeConstraint {
            var: var.to_owned(),
            label: label.to_owned(),
            direction,
            cmp,
            count,
        });
        self
    }

    pub fn slot_index(&self, var: &str) -> Option<usize> {
        self.nodes.iter().position(|s| s.var == var)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(GraphError::Validation(msg));
        if self.nodes.is_empty() {
            return invalid("pattern has no node slots".into());
        }
        let mut seen = HashSet::new();
        for slot in &self.nodes {
            if slot.var.is_empty() || slot.label.is_empty() {
                return invalid("node slot with empty variable or label".into());
            }
            if !seen.insert(slot.var.as_str()) {
                return invalid(format!("duplicate pattern variable {}", slot.var));
            }
        }
        for e in &self.edges {
            if e.label.is_empty() {
                return invalid("edge slot with empty label".into());
            }
            for var in [&e.src, &e.dst] {
                if !seen.contains(var.as_str()) {
                    return invalid(format!("edge slot references undeclared variable {var}"));
                }
            }
        }
        for d in &self.degrees {
            if !seen.contains(d.var.as_str()) {
                return invalid(format!(
                    "degree constraint references undeclared variable {}",
                    d.var
                ));
            }
        }
        // connectivity over edge slots, ignoring direction
        let mut reached = BTreeSet::from([0usize]);
        let mut frontier = vec![0usize];
        while let Some(i) = frontier.pop() {
            let var = &self.nodes[i].var;
            for e in &self.edges {
                let other = if &e.src == var {
                    &e.dst
                } else if &e.dst == var {
                    &e.src
                } else {
                    continue;
                };
                let j = self.slot_index(other).expect("validated above");
                if reached.insert(j) {
                    frontier.push(j);
                }
            }
        }
        if reached.len() != self.nodes.len() {
            return invalid("pattern is not connected".into());
        }
        Ok(())
    }
}

/// One solution of a pattern: variable name to node id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Binding(BTreeMap<String, NodeId>);

impl Binding {
    pub fn get(&self, var: &str) -> Option<NodeId> {
        self.0.get(var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Builds a binding from node ids listed in the pattern's slot order.
    pub fn from_row(pattern: &Pattern, row: &[NodeId]) -> Self {
        Binding(
            pattern
                .nodes
                .iter()
                .zip(row)
                .map(|(slot, id)| (slot.var.clone(), *id))
                .collect(),
        )
    }
}

impl std::ops::Index<&str> for Binding {
    type Output = NodeId;

    fn index(&self, var: &str) -> &NodeId {
        self.0
            .get(var)
            .unwrap_or_else(|| panic!("variable {var} not bound"))
    }
}

/// How a slot's candidates are produced during the search.
enum Step {
    /// Scan the label index.
    Scan,
    /// Follow an edge slot from an already-bound slot.
    Expand {
        from: usize,
        label: String,
        outgoing: bool,
    },
}

impl Graph {
    /// Evaluates `pattern`. Bindings are sorted by their node ids taken in
    /// slot declaration order.
    pub fn match_pattern(&self, pattern: &Pattern) -> Result<Vec<Binding>> {
        pattern.validate()?;
        let n = pattern.nodes.len();
        let slot_of = |var: &str| pattern.slot_index(var).expect("validated");
        let selectivity = |i: usize| self.label_count(&pattern.nodes[i].label);

        // plan: most selective slot first, then grow along edge slots
        let start = (0..n)
            .min_by_key(|&i| (selectivity(i), i))
            .expect("non-empty");
        let mut order = vec![start];
        let mut steps = vec![Step::Scan];
        let mut planned = vec![false; n];
        planned[start] = true;
        while order.len() < n {
            let mut best: Option<(usize, usize, Step)> = None;
            for e in &pattern.edges {
                let (s, d) = (slot_of(&e.src), slot_of(&e.dst));
                let candidate = if planned[s] && !planned[d] {
                    Some((
                        d,
                        Step::Expand {
                            from: s,
                            label: e.label.clone(),
                            outgoing: true,
                        },
                    ))
                } else if planned[d] && !planned[s] {
                    Some((
                        s,
                        Step::Expand {
                            from: d,
                            label: e.label.clone(),
                            outgoing: false,
                        },
                    ))
                } else {
                    None
                };
                if let Some((slot, step)) = candidate {
                    let key = selectivity(slot);
                    if best
                        .as_ref()
                        .is_none_or(|(b, bk, _)| (key, slot) < (*bk, *b))
                    {
                        best = Some((slot, key, step));
                    }
                }
            }
            let (slot, _, step) = best.expect("pattern is connected");
            planned[slot] = true;
            order.push(slot);
            steps.push(step);
        }

        let mut rows = Vec::new();
        let mut assignment: Vec<Option<NodeId>> = vec![None; n];
        self.search(pattern, &order, &steps, 0, &mut assignment, &mut rows);
        rows.sort();
        rows.dedup();
        Ok(rows
            .into_iter()
            .map(|row| Binding::from_row(pattern, &row))
            .collect())
    }

    fn search(
        &self,
        pattern: &Pattern,
        order: &[usize],
        steps: &[Step],
        depth: usize,
        assignment: &mut Vec<Option<NodeId>>,
        rows: &mut Vec<Vec<NodeId>>,
    ) {
        if depth == order.len() {
            rows.push(assignment.iter().map(|a| a.expect("complete")).collect());
            return;
        }
        let slot = order[depth];
        let candidates: BTreeSet<NodeId> = match &steps[depth] {
            Step::Scan => self.nodes_with_label(&pattern.nodes[slot].label).collect(),
            Step::Expand {
                from,
                label,
                outgoing,
            } => {
                let anchor = assignment[*from].expect("anchor bound");
                if *outgoing {
                    self.successors(anchor, label).collect()
                } else {
                    self.predecessors(anchor, label).collect()
                }
            }
        };
        for candidate in candidates {
            if !self.slot_accepts(pattern, slot, candidate) {
                continue;
            }
            assignment[slot] = Some(candidate);
            if self.edges_consistent(pattern, slot, assignment) {
                self.search(pattern, order, steps, depth + 1, assignment, rows);
            }
            assignment[slot] = None;
        }
    }

    fn slot_accepts(&self, pattern: &Pattern, slot: usize, id: NodeId) -> bool {
        let slot_def = &pattern.nodes[slot];
        let Some(node) = self.node(id) else {
            return false;
        };
        if !node.has_label(&slot_def.label) {
            return false;
        }
        if !slot_def.props.iter().all(|(k, v)| node.props.get(k) == Some(v)) {
            return false;
        }
        pattern
            .degrees
            .iter()
            .filter(|d| d.var == slot_def.var)
            .all(|d| {
                let degree = match d.direction {
                    Direction::Out => self.out_edges(id).filter(|e| e.label == d.label).count(),
                    Direction::In => self.in_edges(id).filter(|e| e.label == d.label).count(),
                };
                d.cmp.holds(degree, d.count)
            })
    }

    /// Checks every edge slot touching `slot` whose other end is bound.
    fn edges_consistent(
        &self,
        pattern: &Pattern,
        slot: usize,
        assignment: &[Option<NodeId>],
    ) -> bool {
        let var = &pattern.nodes[slot].var;
        pattern
            .edges
            .iter()
            .filter(|e| &e.src == var || &e.dst == var)
            .all(|e| {
                let s = assignment[pattern.slot_index(&e.src).expect("validated")];
                let d = assignment[pattern.slot_index(&e.dst).expect("validated")];
                match (s, d) {
                    (Some(s), Some(d)) => self.has_edge(s, d, &e.label),
                    _ => true,
                }
            })
    }
}
