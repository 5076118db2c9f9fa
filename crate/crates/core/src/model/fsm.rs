//! Finite-state machine over transition clusters.
//!
//! Each session contributes a chain `q0 -> q1 -> ... -> qn` with one
//! transition per clustered request. Chains are then minimized together:
//! states reached by the same cluster-id prefix from the shared initial state
//! are identified, and the resulting tree is reduced with Hopcroft's
//! algorithm (all states accepting). Merged states keep the smallest node id
//! and record every original `user/session/ordinal` key in `aliases`.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{hopcroft, provenance, root_of, state_key, Result, P_STATE_KEY};
use crate::graph::{props, Graph, NodeId, Pattern, Props, Value, MULTI_EDGE_LABELS};
use crate::labels::*;

const ALIAS_SEPARATOR: char = '|';

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FsmSummary {
    pub states_before: usize,
    pub states_after: usize,
    pub transitions: usize,
}

struct SessionEvents {
    user: String,
    session: i64,
    /// HTTP events in trace order with their cluster, if any.
    http: Vec<(NodeId, Option<String>)>,
    /// UA events in trace order.
    actions: Vec<NodeId>,
    sql: Vec<NodeId>,
}

fn collect_sessions(graph: &Graph) -> Vec<SessionEvents> {
    let mut by_session: BTreeMap<(String, i64), Vec<(i64, NodeId)>> = BTreeMap::new();
    for e in graph.nodes_with_label(EVENT) {
        if let Some(key) = provenance(graph, e) {
            let index = graph.int_prop(e, P_INDEX).unwrap_or_default();
            by_session.entry(key).or_default().push((index, e));
        }
    }
    by_session
        .into_iter()
        .map(|((user, session), mut events)| {
            events.sort();
            let of_type = |t: &str| -> Vec<NodeId> {
                events
                    .iter()
                    .map(|(_, e)| *e)
                    .filter(|e| graph.str_prop(*e, P_TYPE) == Some(t))
                    .collect()
            };
            let http = of_type(T_HTTP)
                .into_iter()
                .map(|e| {
                    let cluster = root_of(graph, e)
                        .and_then(|r| graph.str_prop(r, P_CLUSTER))
                        .map(str::to_owned);
                    (e, cluster)
                })
                .collect();
            SessionEvents {
                user,
                session,
                http,
                actions: of_type(T_UA),
                sql: of_type(T_SQL),
            }
        })
        .collect()
}

/// Alias key to state id, for every (possibly merged) state.
pub fn state_index(graph: &Graph) -> HashMap<String, NodeId> {
    let mut out = HashMap::new();
    for s in graph.nodes_with_label(STATE) {
        for alias in graph
            .str_prop(s, P_ALIASES)
            .unwrap_or_default()
            .split(ALIAS_SEPARATOR)
            .filter(|a| !a.is_empty())
        {
            out.insert(alias.to_owned(), s);
        }
    }
    out
}

/// The state holding the ordinal-0 state of the first session.
pub fn initial_state(graph: &Graph) -> Option<NodeId> {
    graph
        .nodes_with_label(STATE)
        .find(|s| graph.int_prop(*s, P_ORDINAL) == Some(0))
}

/// Builds and minimizes the FSM unless states already exist, then
/// summarizes it.
pub fn build_fsm(graph: &mut Graph) -> Result<FsmSummary> {
    let sessions = collect_sessions(graph);
    let states_before: usize = sessions
        .iter()
        .map(|s| 1 + s.http.iter().filter(|(_, c)| c.is_some()).count())
        .sum();
    if graph.label_count(STATE) == 0 {
        let chains = build_chains(graph, &sessions)?;
        minimize(graph, &chains)?;
    }
    Ok(FsmSummary {
        states_before,
        states_after: graph.label_count(STATE),
        transitions: graph.label_count(STATE_TRANS),
    })
}

/// Chain states plus the cluster-id sequence of each session.
type Chain = (Vec<NodeId>, Vec<String>);

fn build_chains(graph: &mut Graph, sessions: &[SessionEvents]) -> Result<Vec<Chain>> {
    let mut chains = Vec::new();
    for s in sessions {
        let new_state = |graph: &mut Graph, ordinal: usize| {
            graph.add_node(
                [STATE],
                props([
                    (P_ORDINAL, Value::Int(ordinal as i64)),
                    (P_SESSION, Value::Int(s.session)),
                    (P_USER, Value::from(s.user.as_str())),
                    (
                        P_ALIASES,
                        Value::from(state_key(&s.user, s.session, ordinal)),
                    ),
                ]),
            )
        };
        let mut states = vec![new_state(graph, 0)?];
        let mut letters = Vec::new();
        let mut http_state: HashMap<NodeId, usize> = HashMap::new();
        for (event, cluster) in &s.http {
            if let Some(c) = cluster {
                let from = *states.last().expect("chain starts with q0");
                let to = new_state(graph, states.len())?;
                let t = graph.add_node([STATE_TRANS], props([(P_CLUSTER, c.as_str())]))?;
                graph.add_edge(from, t, TRANS, Props::new())?;
                graph.add_edge(t, to, TO, Props::new())?;
                let root = root_of(graph, *event).expect("imported events have roots");
                graph.add_edge(t, root, ACCEPTS, Props::new())?;
                states.push(to);
                letters.push(c.clone());
            }
            http_state.insert(*event, states.len() - 1);
            graph.set_prop(
                *event,
                P_STATE_KEY,
                state_key(&s.user, s.session, states.len() - 1),
            )?;
        }
        let last = states.len() - 1;
        for q in &s.sql {
            let ordinal = graph
                .predecessors(*q, CAUSES)
                .next()
                .and_then(|h| http_state.get(&h).copied())
                .unwrap_or(last);
            graph.set_prop(*q, P_STATE_KEY, state_key(&s.user, s.session, ordinal))?;
        }
        // an action belongs to the state of the first request it or a later
        // action causes
        let mut upcoming = last;
        for a in s.actions.iter().rev() {
            if let Some(ordinal) = graph
                .successors(*a, CAUSES)
                .filter_map(|h| http_state.get(&h).copied())
                .min()
            {
                upcoming = ordinal;
            }
            graph.set_prop(*a, P_STATE_KEY, state_key(&s.user, s.session, upcoming))?;
        }
        chains.push((states, letters));
    }
    Ok(chains)
}

fn minimize(graph: &mut Graph, chains: &[Chain]) -> Result<()> {
    // identify equal prefixes: the tree of all chains from one initial state
    let mut alphabet: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, letters) in chains {
        for l in letters {
            let next = alphabet.len();
            alphabet.entry(l).or_insert(next);
        }
    }
    let mut tree: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new()];
    let mut node_of: Vec<(NodeId, usize)> = Vec::new();
    for (states, letters) in chains {
        let mut at = 0;
        node_of.push((states[0], at));
        for (state, letter) in states[1..].iter().zip(letters) {
            let c = alphabet[letter.as_str()];
            at = match tree[at].get(&c) {
                Some(&child) => child,
                None => {
                    tree.push(BTreeMap::new());
                    let child = tree.len() - 1;
                    tree[at].insert(c, child);
                    child
                }
            };
            node_of.push((*state, at));
        }
    }
    let classes = hopcroft::minimize(&tree, &vec![true; tree.len()]);

    let mut groups: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for (state, node) in node_of {
        groups.entry(classes[node]).or_default().insert(state);
    }
    for members in groups.values() {
        let mut it = members.iter();
        let rep = *it.next().expect("groups are non-empty");
        for other in it {
            merge_into(graph, rep, *other)?;
        }
    }
    dedupe_transitions(graph)
}

/// Moves every edge of `other` onto `rep`, unions aliases and deletes `other`.
fn merge_into(graph: &mut Graph, rep: NodeId, other: NodeId) -> Result<()> {
    let redirect = |n: NodeId| if n == other { rep } else { n };
    let edges: Vec<_> = graph
        .out_edges(other)
        .chain(graph.in_edges(other))
        .map(|e| {
            (
                redirect(e.src),
                redirect(e.dst),
                e.label.clone(),
                e.props.clone(),
            )
        })
        .collect();
    for (src, dst, label, p) in edges {
        if MULTI_EDGE_LABELS.contains(&label.as_str()) || !graph.has_edge(src, dst, &label) {
            graph.add_edge(src, dst, &label, p)?;
        }
    }
    let mut aliases: BTreeSet<String> = BTreeSet::new();
    for s in [rep, other] {
        aliases.extend(
            graph
                .str_prop(s, P_ALIASES)
                .unwrap_or_default()
                .split(ALIAS_SEPARATOR)
                .filter(|a| !a.is_empty())
                .map(str::to_owned),
        );
    }
    let joined = aliases
        .into_iter()
        .collect::<Vec<_>>()
        .join(&ALIAS_SEPARATOR.to_string());
    graph.set_prop(rep, P_ALIASES, joined)?;
    graph.remove_node(other)?;
    Ok(())
}

/// Transitions `q1 -trans-> tr -to-> q2`.
pub fn q_states() -> Pattern {
    Pattern::new()
        .node("q1", STATE)
        .node("tr", STATE_TRANS)
        .node("q2", STATE)
        .edge("q1", TRANS, "tr")
        .edge("tr", TO, "q2")
}

/// Collapses transitions with equal source, cluster and target into the one
/// with the smallest id, which then accepts all their requests.
fn dedupe_transitions(graph: &mut Graph) -> Result<()> {
    let mut keep: BTreeMap<(NodeId, String, NodeId), NodeId> = BTreeMap::new();
    let mut dropped: Vec<(NodeId, NodeId)> = Vec::new();
    for row in graph.match_pattern(&q_states())? {
        let cluster = graph
            .str_prop(row["tr"], P_CLUSTER)
            .unwrap_or_default()
            .to_owned();
        match keep.entry((row["q1"], cluster, row["q2"])) {
            Entry::Vacant(v) => {
                v.insert(row["tr"]);
            }
            Entry::Occupied(o) => dropped.push((*o.get(), row["tr"])),
        }
    }
    for (kept, t) in dropped {
        let accepted: Vec<NodeId> = graph.successors(t, ACCEPTS).collect();
        for root in accepted {
            graph.ensure_edge(kept, root, ACCEPTS)?;
        }
        graph.remove_node(t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Events with pre-assigned clusters, bypassing abstraction.
    fn session(g: &mut Graph, user: &str, session: i64, clusters: &[Option<&str>]) {
        let mut prev = None;
        for (i, c) in clusters.iter().enumerate() {
            let mut root_props = props([(P_TYPE, T_HTTP)]);
            if let Some(c) = c {
                root_props.insert(P_CLUSTER.into(), (*c).into());
            }
            let root = g.add_node([ROOT], root_props).unwrap();
            let e = g
                .add_node(
                    [EVENT],
                    props([
                        (P_TYPE, Value::from(T_HTTP)),
                        (P_USER, Value::from(user)),
                        (P_SESSION, Value::Int(session)),
                        (P_INDEX, Value::Int(i as i64)),
                    ]),
                )
                .unwrap();
            g.add_edge(root, e, PARSES, Props::new()).unwrap();
            if let Some(p) = prev {
                g.add_edge(p, e, NEXT, Props::new()).unwrap();
            }
            prev = Some(e);
        }
    }

    #[test]
    fn single_chain() {
        let mut g = Graph::new();
        session(&mut g, "alice", 1, &[Some("x"), None, Some("y")]);
        let s = build_fsm(&mut g).unwrap();
        assert_eq!((s.states_before, s.states_after, s.transitions), (3, 3, 2));
        for t in g.nodes_with_label(STATE_TRANS) {
            assert_eq!(g.in_degree(t, TRANS).unwrap(), 1);
            assert_eq!(g.out_degree(t, TO).unwrap(), 1);
            assert_eq!(g.out_degree(t, ACCEPTS).unwrap(), 1);
        }
    }

    #[test]
    fn identical_sessions_collapse() {
        let mut g = Graph::new();
        session(&mut g, "alice", 1, &[Some("x"), Some("y")]);
        session(&mut g, "alice", 2, &[Some("x"), Some("y")]);
        let s = build_fsm(&mut g).unwrap();
        assert_eq!((s.states_before, s.states_after, s.transitions), (6, 3, 2));
        for t in g.nodes_with_label(STATE_TRANS) {
            assert_eq!(g.out_degree(t, ACCEPTS).unwrap(), 2);
        }
        let index = state_index(&g);
        assert_eq!(index["alice/1/2"], index["alice/2/2"]);
        // idempotent
        assert_eq!(build_fsm(&mut g).unwrap(), s);
    }

    #[test]
    fn branching_clusters_share_endpoints() {
        let mut g = Graph::new();
        session(&mut g, "alice", 1, &[Some("x1"), Some("x2")]);
        session(&mut g, "alice", 2, &[Some("x1"), Some("x3")]);
        let s = build_fsm(&mut g).unwrap();
        assert_eq!((s.states_after, s.transitions), (3, 3));
        let rows = g.match_pattern(&q_states()).unwrap();
        assert_eq!(rows.len(), 3);
        let x2 = rows
            .iter()
            .find(|r| g.str_prop(r["tr"], P_CLUSTER) == Some("x2"))
            .unwrap();
        let x3 = rows
            .iter()
            .find(|r| g.str_prop(r["tr"], P_CLUSTER) == Some("x3"))
            .unwrap();
        assert_eq!((x2["q1"], x2["q2"]), (x3["q1"], x3["q2"]));
    }

    #[test]
    fn unclustered_requests_do_not_create_states() {
        let mut g = Graph::new();
        session(&mut g, "bob", 1, &[None, None]);
        let s = build_fsm(&mut g).unwrap();
        assert_eq!((s.states_before, s.states_after, s.transitions), (1, 1, 0));
        let keys: Vec<_> = g
            .nodes_with_label(EVENT)
            .map(|e| g.str_prop(e, P_STATE_KEY).unwrap().to_owned())
            .collect();
        assert_eq!(keys, ["bob/1/0", "bob/1/0"]);
    }
}
