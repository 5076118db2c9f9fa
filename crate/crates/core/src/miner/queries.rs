use std::collections::{BTreeMap, BTreeSet};

use super::{
    CandidateOperation, MinerConfig, MinerError, MiningReport, MiningSummary, OracleEntry, Result,
};
use crate::graph::{Graph, NodeId, Pattern};
use crate::labels::*;
use crate::model::{abstraction_of, event_of, has_sem_type, provenance};
use crate::parse::http::to_http_raw;
use crate::parse::{load_tree, Role};

/// A transition `q1 -> tr -> q2` accepting the concrete request `pt`.
pub fn sc_pattern() -> Pattern {
    Pattern::new()
        .node("q1", STATE)
        .node("tr", STATE_TRANS)
        .node("q2", STATE)
        .node_where("pt", ROOT, [(P_TYPE, T_HTTP)])
        .edge("q1", TRANS, "tr")
        .edge("tr", TO, "q2")
        .edge("tr", ACCEPTS, "pt")
}

/// Variables `v` of the post-state `q2` of a transition accepting `pt`.
pub fn token_pattern() -> Pattern {
    Pattern::new()
        .node_where("pt", ROOT, [(P_TYPE, T_HTTP)])
        .node("tr", STATE_TRANS)
        .node("q2", STATE)
        .node("v", VARIABLE)
        .edge("tr", ACCEPTS, "pt")
        .edge("tr", TO, "q2")
        .edge("q2", HAS, "v")
}

/// From a concrete request `pt` to the abstract queries `abs` of the
/// queries it causes.
pub fn oracle_pattern() -> Pattern {
    Pattern::new()
        .node_where("pt", ROOT, [(P_TYPE, T_HTTP)])
        .node("e", EVENT)
        .node("c", EVENT)
        .node_where("sql", ROOT, [(P_TYPE, T_SQL)])
        .node_where("abs", ROOT, [(P_TYPE, T_ABS_SQL)])
        .edge("pt", PARSES, "e")
        .edge("e", CAUSES, "c")
        .edge("sql", PARSES, "c")
        .edge("abs", ABSTRACTS, "sql")
}

fn require_fsm(graph: &Graph) -> Result<()> {
    if graph.label_count(STATE) == 0 {
        return Err(MinerError::Precondition(
            "the graph has no FSM; run the model builder first".into(),
        ));
    }
    Ok(())
}

fn require_types(graph: &Graph) -> Result<()> {
    let typed = graph
        .nodes_with_label(VARIABLE)
        .any(|v| graph.str_prop(v, P_SYN_TYPE).is_some());
    if !typed && graph.label_count(VARIABLE) > 0 {
        return Err(MinerError::Precondition(
            "variables are untyped; run type inference first".into(),
        ));
    }
    Ok(())
}

/// Concrete HTTP request roots accepted by any transition, ascending.
pub fn find_state_changing(graph: &Graph) -> Result<Vec<NodeId>> {
    require_fsm(graph)?;
    let roots: BTreeSet<NodeId> = graph
        .match_pattern(&sc_pattern())?
        .iter()
        .map(|row| row["pt"])
        .collect();
    Ok(roots.into_iter().collect())
}

/// Occurrences of an abstract query per `user/session`.
fn occurrences(graph: &Graph, abs: NodeId) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for concrete in graph.successors(abs, ABSTRACTS) {
        if let Some((user, session)) = provenance(graph, concrete) {
            *out.entry(format!("{user}/{session}")).or_insert(0) += 1;
        }
    }
    out
}

fn is_unique_per_session(graph: &Graph, abs: NodeId) -> bool {
    let counts = occurrences(graph, abs);
    !counts.is_empty() && counts.values().all(|&n| n == 1)
}

/// Pairs each candidate with the state-changing abstract queries it causes
/// that occur exactly once in every session they occur in. Candidates left
/// without such a query are dropped.
pub fn filter_relevant(graph: &Graph, candidates: &[NodeId]) -> Result<Vec<(NodeId, Vec<NodeId>)>> {
    let wanted: BTreeSet<NodeId> = candidates.iter().copied().collect();
    let mut reached: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for row in graph.match_pattern(&oracle_pattern())? {
        if wanted.contains(&row["pt"]) && graph.bool_prop(row["abs"], P_MUTATES) == Some(true) {
            reached.entry(row["pt"]).or_default().insert(row["abs"]);
        }
    }
    let mut out = Vec::new();
    for root in wanted {
        let relevant: Vec<NodeId> = reached
            .get(&root)
            .into_iter()
            .flatten()
            .copied()
            .filter(|abs| is_unique_per_session(graph, *abs))
            .collect();
        if !relevant.is_empty() {
            out.push((root, relevant));
        }
    }
    Ok(out)
}

fn token_rows(graph: &Graph) -> Result<BTreeMap<NodeId, BTreeSet<NodeId>>> {
    let mut out: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for row in graph.match_pattern(&token_pattern())? {
        let (pt, v) = (row["pt"], row["v"]);
        if graph.int_prop(v, P_TREE) == Some(pt.0 as i64) {
            out.entry(pt).or_default().insert(v);
        }
    }
    Ok(out)
}

fn is_token_candidate(graph: &Graph, v: NodeId, config: &MinerConfig) -> bool {
    let unique = has_sem_type(graph, v, "SU") || has_sem_type(graph, v, "UU");
    let role = graph.str_prop(v, P_ROLE).unwrap_or_default();
    let value = graph.str_prop(v, P_VALUE).unwrap_or_default();
    unique
        && role != Role::CookieValue.as_str()
        && role != Role::Boundary.as_str()
        && !config.timestamps.is_timestamp(value)
}

fn token_names(graph: &Graph, vars: &BTreeSet<NodeId>, config: &MinerConfig) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for v in vars {
        if is_token_candidate(graph, *v, config) {
            let name = graph.str_prop(*v, P_NAME).unwrap_or_default();
            if !names.iter().any(|n| n == name) {
                names.push(name.to_owned());
            }
        }
    }
    names
}

/// Names of the request's own session- or user-unique variables at its
/// post-state, excluding cookies, multipart boundaries and timestamps.
pub fn find_token_params(graph: &Graph, root: NodeId, config: &MinerConfig) -> Result<Vec<String>> {
    require_fsm(graph)?;
    require_types(graph)?;
    let rows = token_rows(graph)?;
    Ok(rows
        .get(&root)
        .map(|vars| token_names(graph, vars, config))
        .unwrap_or_default())
}

fn oracle_entries(graph: &Graph, abs: &BTreeSet<NodeId>) -> Result<Vec<OracleEntry>> {
    let mut out = Vec::new();
    for a in abs {
        let (tree, _) = load_tree(graph, *a)?;
        out.push(OracleEntry {
            fingerprint: graph
                .str_prop(*a, P_FINGERPRINT)
                .unwrap_or_default()
                .to_owned(),
            query: tree.to_string(),
            occurrences: occurrences(graph, *a),
        });
    }
    out.sort_by(|x, y| x.fingerprint.cmp(&y.fingerprint));
    Ok(out)
}

/// The relevant abstract queries of a request.
pub fn extract_oracle(graph: &Graph, root: NodeId) -> Result<Vec<OracleEntry>> {
    require_fsm(graph)?;
    let relevant = filter_relevant(graph, &[root])?;
    let Some((_, abs)) = relevant.into_iter().next() else {
        return Err(MinerError::NotRelevant(root));
    };
    oracle_entries(graph, &abs.into_iter().collect())
}

/// Runs every detection query and groups the results per abstract request.
pub fn mine(graph: &Graph, config: &MinerConfig) -> Result<MiningReport> {
    require_fsm(graph)?;
    require_types(graph)?;
    let reqs = graph
        .nodes_with_label(ROOT)
        .filter(|r| graph.str_prop(*r, P_TYPE) == Some(T_ABS_HTTP))
        .count();
    let state_changing = find_state_changing(graph)?;
    let relevant: BTreeMap<NodeId, Vec<NodeId>> = filter_relevant(graph, &state_changing)?
        .into_iter()
        .collect();
    let tokens = token_rows(graph)?;

    let mut operations: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for root in &state_changing {
        let abs = abstraction_of(graph, *root).ok_or_else(|| {
            MinerError::Precondition(format!("request {root} has no abstract tree"))
        })?;
        operations.entry(abs).or_default().push(*root);
    }

    let mut candidates = Vec::new();
    for (abs, members) in &operations {
        let exemplar = members[0];
        let oracle_set: BTreeSet<NodeId> = members
            .iter()
            .filter_map(|m| relevant.get(m))
            .flatten()
            .copied()
            .collect();
        let (tree, _) = load_tree(graph, exemplar)?;
        let raw = to_http_raw(&tree)?;
        let phase = event_of(graph, exemplar)
            .and_then(|e| graph.str_prop(e, P_PHASE))
            .unwrap_or(PHASE_WORKFLOW);
        candidates.push(CandidateOperation {
            request_root: exemplar,
            abstract_request: *abs,
            cluster_id: graph
                .str_prop(exemplar, P_CLUSTER)
                .unwrap_or_default()
                .to_owned(),
            method: raw.method.clone(),
            path: raw.path().to_owned(),
            phase: phase.to_owned(),
            relevant: !oracle_set.is_empty(),
            token_params: tokens
                .get(&exemplar)
                .map(|vars| token_names(graph, vars, config))
                .unwrap_or_default(),
            oracle: oracle_entries(graph, &oracle_set)?,
        });
    }
    let summary = MiningSummary {
        reqs,
        sc_reqs: candidates.len(),
        rel_sc_reqs: candidates.iter().filter(|c| c.relevant).count(),
    };
    Ok(MiningReport {
        summary,
        candidates,
    })
}

/// `(user, session)` a request was recorded in.
pub(crate) fn session_of(graph: &Graph, root: NodeId) -> Option<(String, i64)> {
    event_of(graph, root).and_then(|e| provenance(graph, e))
}
