//! Data-flow variables and their propagation edges.

use std::collections::{BTreeMap, BTreeSet};

use super::{event_of, root_of, state_index, ModelError, Result, P_STATE_KEY};
use crate::graph::{props, Graph, NodeId, Props, Value};
use crate::labels::*;
use crate::parse::{load_tree, AbstractionConfig};

pub const TIER_UA: &str = "ua";
pub const TIER_HTTP: &str = "http";
pub const TIER_SQL: &str = "sql";

/// Creates one `Variable` per non-empty abstractable terminal of every
/// concrete tree, linked from the state its event belongs to. Returns the
/// number of variables created by this call.
pub fn build_variables(graph: &mut Graph, config: &AbstractionConfig) -> Result<usize> {
    let states = state_index(graph);
    let done: BTreeSet<i64> = graph
        .nodes_with_label(VARIABLE)
        .filter_map(|v| graph.int_prop(v, P_TREE))
        .collect();
    let roots: Vec<(NodeId, &'static str)> = graph
        .nodes_with_label(ROOT)
        .filter_map(|r| match graph.str_prop(r, P_TYPE) {
            Some(T_UA) => Some((r, TIER_UA)),
            Some(T_HTTP) => Some((r, TIER_HTTP)),
            Some(T_SQL) => Some((r, TIER_SQL)),
            _ => None,
        })
        .filter(|(r, _)| !done.contains(&(r.0 as i64)))
        .collect();

    let mut created = 0;
    for (root, tier) in roots {
        let Some(event) = event_of(graph, root) else {
            continue;
        };
        let key = graph.str_prop(event, P_STATE_KEY).ok_or_else(|| {
            ModelError::Precondition(format!(
                "event {event} has no FSM state; build the FSM first"
            ))
        })?;
        let state = *states
            .get(key)
            .ok_or_else(|| ModelError::Precondition(format!("no state for key {key}")))?;
        let (tree, ids) = load_tree(graph, root)?;
        let group = tree.abstract_tree(config)?.fingerprint();
        let user = graph.str_prop(event, P_USER).unwrap_or_default().to_owned();
        let session = graph.int_prop(event, P_SESSION).unwrap_or_default();
        let sites: Vec<(usize, String, String, &'static str)> = tree
            .value_sites(config)
            .into_iter()
            .filter(|s| !s.node.symbol.is_empty() && !s.name.is_empty())
            .map(|s| {
                (
                    s.preorder,
                    s.name,
                    s.node.symbol.clone(),
                    s.node.role.as_str(),
                )
            })
            .collect();
        for (preorder, name, value, role) in sites {
            let var = graph.add_node(
                [VARIABLE],
                props([
                    (P_NAME, Value::from(name)),
                    (P_VALUE, Value::from(value)),
                    (P_TIER, Value::from(tier)),
                    (P_USER, Value::from(user.as_str())),
                    (P_SESSION, Value::Int(session)),
                    (P_TREE, Value::Int(root.0 as i64)),
                    (P_GROUP, Value::from(group.as_str())),
                    (P_ROLE, Value::from(role)),
                ]),
            )?;
            let term = ids[preorder];
            if tier == TIER_SQL {
                graph.add_edge(var, term, SINK, Props::new())?;
            } else {
                graph.add_edge(term, var, SOURCE, Props::new())?;
            }
            graph.add_edge(state, var, HAS, Props::new())?;
            created += 1;
        }
    }
    Ok(created)
}

fn variables_by_tree(graph: &Graph) -> BTreeMap<NodeId, Vec<(NodeId, String)>> {
    let mut out: BTreeMap<NodeId, Vec<(NodeId, String)>> = BTreeMap::new();
    for v in graph.nodes_with_label(VARIABLE) {
        if let (Some(tree), Some(value)) = (graph.int_prop(v, P_TREE), graph.str_prop(v, P_VALUE)) {
            out.entry(NodeId(tree as u64))
                .or_default()
                .push((v, value.to_owned()));
        }
    }
    out
}

fn event_type(graph: &Graph, e: NodeId) -> Option<&str> {
    graph.str_prop(e, P_TYPE)
}

/// Links equal-valued variables along causality: request to caused query,
/// and user action to the request it (or its successor action) causes.
/// Returns the number of propagation edges created by this call.
pub fn build_propagation(graph: &mut Graph) -> Result<usize> {
    let vars = variables_by_tree(graph);
    let vars_of_event = |graph: &Graph, e: NodeId| {
        root_of(graph, e)
            .and_then(|r| vars.get(&r))
            .cloned()
            .unwrap_or_default()
    };
    let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut link = |from: &[(NodeId, String)], to: &[(NodeId, String)]| {
        for (a, va) in from {
            for (b, vb) in to {
                if va == vb {
                    pairs.insert((*a, *b));
                }
            }
        }
    };

    let causes: Vec<(NodeId, NodeId)> = graph
        .edges()
        .filter(|e| e.label == CAUSES)
        .map(|e| (e.src, e.dst))
        .collect();
    for &(src, dst) in &causes {
        if event_type(graph, src) == Some(T_HTTP) && event_type(graph, dst) == Some(T_SQL) {
            link(&vars_of_event(graph, src), &vars_of_event(graph, dst));
        }
    }
    for ua in graph
        .nodes_with_label(EVENT)
        .filter(|e| event_type(graph, *e) == Some(T_UA))
    {
        let from = vars_of_event(graph, ua);
        if from.is_empty() {
            continue;
        }
        let mut targets: BTreeSet<NodeId> = graph.successors(ua, CAUSES).collect();
        for next in graph.successors(ua, NEXT) {
            targets.extend(graph.successors(next, CAUSES));
        }
        for h in targets
            .into_iter()
            .filter(|h| event_type(graph, *h) == Some(T_HTTP))
        {
            link(&from, &vars_of_event(graph, h));
        }
    }

    let mut created = 0;
    for (a, b) in pairs {
        if graph.ensure_edge(a, b, PROPAG)? {
            created += 1;
        }
    }
    Ok(created)
}
