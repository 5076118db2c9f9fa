use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::queries::session_of;
use super::{CandidateOperation, MinerConfig, MinerError, OracleEntry, Result};
use crate::graph::{Graph, NodeId};
use crate::labels::*;
use crate::model::{has_sem_type, root_of};
use crate::parse::http::{omit_param, to_http_raw};
use crate::parse::{load_tree, HttpRequestRaw, NodeKind, ParseTree, Role, TreeNode, PLACEHOLDER};

/// Multipart boundary used in forged requests.
pub const FORGED_BOUNDARY: &str = "deemonforgedboundary";
/// Millisecond epoch truncated to the length of a replaced timestamp.
const FORGED_EPOCH: &str = "1700000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    OmitToken,
    Forge,
}

/// Login requests of the recorded user, replayed before every test to get
/// a fresh session. Cookie values are placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginTraceRef {
    pub user: String,
    pub session: i64,
    pub requests: Vec<HttpRequestRaw>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub mode: TestMode,
    pub operation: String,
    pub cluster_id: String,
    /// The request to send. Cookie values are placeholders to be filled
    /// from the fresh session.
    pub request: HttpRequestRaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omitted_param: Option<String>,
    pub login: LoginTraceRef,
    pub oracle: Vec<OracleEntry>,
    /// Every cookie value seen in the recorded traces.
    pub recorded_cookie_values: Vec<String>,
}

fn map_terms(node: &mut TreeNode, f: &mut impl FnMut(&mut TreeNode)) {
    if node.kind == NodeKind::Term {
        f(node);
    }
    for child in &mut node.children {
        map_terms(child, f);
    }
}

fn blank_cookies(tree: &mut ParseTree) {
    map_terms(&mut tree.root, &mut |t| {
        if t.role == Role::CookieValue {
            t.symbol = PLACEHOLDER.to_owned();
        }
    });
}

fn login_trace(graph: &Graph, root: NodeId) -> Result<LoginTraceRef> {
    let (user, session) = session_of(graph, root).ok_or_else(|| {
        MinerError::Precondition(format!("request {root} has no recorded session"))
    })?;
    let mut events: Vec<(i64, NodeId)> = graph
        .nodes_with_label(EVENT)
        .filter(|e| {
            graph.str_prop(*e, P_TYPE) == Some(T_HTTP)
                && graph.str_prop(*e, P_PHASE) == Some(PHASE_LOGIN)
                && graph.str_prop(*e, P_USER) == Some(user.as_str())
                && graph.int_prop(*e, P_SESSION) == Some(session)
        })
        .map(|e| (graph.int_prop(e, P_INDEX).unwrap_or_default(), e))
        .collect();
    events.sort();
    let mut requests = Vec::new();
    for (_, e) in events {
        let r = root_of(graph, e)
            .ok_or_else(|| MinerError::Precondition(format!("event {e} has no tree")))?;
        let (mut tree, _) = load_tree(graph, r)?;
        blank_cookies(&mut tree);
        requests.push(to_http_raw(&tree)?);
    }
    Ok(LoginTraceRef {
        user,
        session,
        requests,
    })
}

fn recorded_cookie_values(graph: &Graph) -> Vec<String> {
    let values: BTreeSet<&str> = graph
        .nodes_with_label(VARIABLE)
        .filter(|v| graph.str_prop(*v, P_ROLE) == Some(Role::CookieValue.as_str()))
        .filter_map(|v| graph.str_prop(v, P_VALUE))
        .collect();
    values.into_iter().map(str::to_owned).collect()
}

/// Replaces session- and user-unique values an attacker cannot know but
/// can choose freely: multipart boundaries and timestamps.
fn forge(graph: &Graph, root: NodeId, tree: &mut ParseTree, config: &MinerConfig) {
    let unique: BTreeSet<&str> = graph
        .nodes_with_label(VARIABLE)
        .filter(|v| graph.int_prop(*v, P_TREE) == Some(root.0 as i64))
        .filter(|v| has_sem_type(graph, *v, "SU") || has_sem_type(graph, *v, "UU"))
        .filter_map(|v| graph.str_prop(v, P_NAME))
        .collect();
    let replacements: BTreeMap<usize, String> = tree
        .value_sites(&config.abstraction)
        .into_iter()
        .filter(|s| unique.contains(s.name.as_str()))
        .filter_map(|s| {
            let value = &s.node.symbol;
            if s.node.role == Role::Boundary {
                Some((s.preorder, FORGED_BOUNDARY.to_owned()))
            } else if config.timestamps.is_timestamp(value) {
                Some((
                    s.preorder,
                    FORGED_EPOCH[..value.len().min(FORGED_EPOCH.len())].to_owned(),
                ))
            } else {
                None
            }
        })
        .collect();
    let mut index = 0usize;
    set_preorder(&mut tree.root, &replacements, &mut index);
}

fn set_preorder(node: &mut TreeNode, replacements: &BTreeMap<usize, String>, index: &mut usize) {
    if let Some(r) = replacements.get(index) {
        node.symbol = r.clone();
    }
    *index += 1;
    for child in &mut node.children {
        set_preorder(child, replacements, index);
    }
}

/// One omit-token test per token candidate of a protected operation and
/// one forge test per unprotected one. Only relevant workflow operations
/// are tested.
pub fn generate_tests(
    graph: &Graph,
    candidates: &[CandidateOperation],
    config: &MinerConfig,
) -> Result<Vec<TestCase>> {
    let cookies = recorded_cookie_values(graph);
    let mut out = Vec::new();
    for c in candidates
        .iter()
        .filter(|c| c.relevant && c.phase != PHASE_LOGIN)
    {
        let login = login_trace(graph, c.request_root)?;
        let (base, _) = load_tree(graph, c.request_root)?;
        let case =
            |id: String, mode, tree: &ParseTree, omitted: Option<String>| -> Result<TestCase> {
                let mut tree = tree.clone();
                blank_cookies(&mut tree);
                Ok(TestCase {
                    id,
                    mode,
                    operation: c.label(),
                    cluster_id: c.cluster_id.clone(),
                    request: to_http_raw(&tree)?,
                    omitted_param: omitted,
                    login: login.clone(),
                    oracle: c.oracle.clone(),
                    recorded_cookie_values: cookies.clone(),
                })
            };
        if c.token_params.is_empty() {
            let mut tree = base.clone();
            forge(graph, c.request_root, &mut tree, config);
            out.push(case(
                format!("tc-{}-forge", c.cluster_id),
                TestMode::Forge,
                &tree,
                None,
            )?);
        } else {
            for param in &c.token_params {
                let mut tree = base.clone();
                if omit_param(&mut tree, param) == 0 {
                    return Err(MinerError::Precondition(format!(
                        "parameter {param} not found in request {}",
                        c.request_root
                    )));
                }
                out.push(case(
                    format!("tc-{}-omit-{param}", c.cluster_id),
                    TestMode::OmitToken,
                    &tree,
                    Some(param.clone()),
                )?);
            }
        }
    }
    Ok(out)
}
