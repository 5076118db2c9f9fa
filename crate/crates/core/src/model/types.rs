//! Syntactic and semantic variable types.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{provenance, ModelError, Result};
use crate::graph::{Graph, NodeId};
use crate::labels::*;

use super::dataflow::TIER_UA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemType {
    /// Same value everywhere.
    #[serde(rename = "CO")]
    Constant,
    /// Constant per user, different between users.
    #[serde(rename = "UU")]
    UserUnique,
    /// Constant per session, different between sessions.
    #[serde(rename = "SU")]
    SessionUnique,
}

impl SemType {
    pub fn as_str(self) -> &'static str {
        match self {
            SemType::Constant => "CO",
            SemType::UserUnique => "UU",
            SemType::SessionUnique => "SU",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynType {
    Boolean,
    Integer,
    Decimal,
    String,
}

impl SynType {
    pub fn as_str(self) -> &'static str {
        match self {
            SynType::Boolean => "boolean",
            SynType::Integer => "integer",
            SynType::Decimal => "decimal",
            SynType::String => "string",
        }
    }

    fn is_boolean(v: &str) -> bool {
        v == "true" || v == "false"
    }

    fn is_integer(v: &str) -> bool {
        v.parse::<i64>().is_ok()
    }

    fn is_decimal(v: &str) -> bool {
        v.parse::<f64>().is_ok_and(f64::is_finite)
            && v.bytes()
                .all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b))
    }

    /// Most specific type matching every value.
    pub fn infer<'a>(values: impl IntoIterator<Item = &'a str> + Clone) -> SynType {
        let all = |f: fn(&str) -> bool| values.clone().into_iter().all(f);
        if all(SynType::is_boolean) {
            SynType::Boolean
        } else if all(SynType::is_integer) {
            SynType::Integer
        } else if all(SynType::is_decimal) {
            SynType::Decimal
        } else {
            SynType::String
        }
    }
}

/// One observation of a variable: `(user, session, value)`.
pub type Observation<'a> = (&'a str, i64, &'a str);

/// First matching rule of CO, UU, SU.
pub fn semantic_type(observations: &[Observation<'_>]) -> Option<SemType> {
    let distinct: BTreeSet<&str> = observations.iter().map(|o| o.2).collect();
    if distinct.len() == 1 {
        return Some(SemType::Constant);
    }
    let constant_per =
        |key: &dyn Fn(&Observation<'_>) -> (String, i64)| -> Option<BTreeMap<(String, i64), &str>> {
            let mut values: BTreeMap<(String, i64), &str> = BTreeMap::new();
            for o in observations {
                match values.insert(key(o), o.2) {
                    Some(prev) if prev != o.2 => return None,
                    _ => {}
                }
            }
            Some(values)
        };
    let pairwise_distinct = |values: &BTreeMap<(String, i64), &str>| {
        values.values().collect::<BTreeSet<_>>().len() == values.len()
    };
    if let Some(per_user) = constant_per(&|o| (o.0.to_owned(), 0)) {
        if per_user.len() >= 2 && pairwise_distinct(&per_user) {
            return Some(SemType::UserUnique);
        }
    }
    if let Some(per_session) = constant_per(&|o| (o.0.to_owned(), o.1)) {
        if per_session.len() >= 2 && pairwise_distinct(&per_session) {
            return Some(SemType::SessionUnique);
        }
    }
    None
}

/// Types every variable group (equal name and abstract tree). Requires at
/// least two imported sessions. Returns the number of typed variables.
pub fn infer_types(graph: &mut Graph) -> Result<usize> {
    let sessions: BTreeSet<(String, i64)> = graph
        .nodes_with_label(EVENT)
        .filter_map(|e| provenance(graph, e))
        .collect();
    if sessions.len() < 2 {
        return Err(ModelError::Precondition(format!(
            "type inference needs at least 2 sessions, found {}",
            sessions.len()
        )));
    }

    // user-generated: reachable by propagation from a user-action variable
    let mut user_generated: BTreeSet<NodeId> = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = graph
        .nodes_with_label(VARIABLE)
        .filter(|v| graph.str_prop(*v, P_TIER) == Some(TIER_UA))
        .collect();
    while let Some(v) = queue.pop_front() {
        if user_generated.insert(v) {
            queue.extend(graph.successors(v, PROPAG));
        }
    }

    let mut groups: BTreeMap<(String, String), Vec<NodeId>> = BTreeMap::new();
    for v in graph.nodes_with_label(VARIABLE) {
        let name = graph.str_prop(v, P_NAME).unwrap_or_default().to_owned();
        let group = graph.str_prop(v, P_GROUP).unwrap_or_default().to_owned();
        groups.entry((name, group)).or_default().push(v);
    }

    let mut typed = 0;
    for members in groups.values() {
        let observations: Vec<Observation<'_>> = members
            .iter()
            .map(|v| {
                (
                    graph.str_prop(*v, P_USER).unwrap_or_default(),
                    graph.int_prop(*v, P_SESSION).unwrap_or_default(),
                    graph.str_prop(*v, P_VALUE).unwrap_or_default(),
                )
            })
            .collect();
        let sem = semantic_type(&observations);
        let syn = SynType::infer(observations.iter().map(|o| o.2));
        let ug = members.iter().any(|v| user_generated.contains(v));
        let mut tags: Vec<&str> = sem.map(SemType::as_str).into_iter().collect();
        if ug {
            tags.push("UG");
        }
        let tags = tags.join(",");
        for v in members {
            graph.set_prop(*v, P_SEM_TYPE, tags.as_str())?;
            graph.set_prop(*v, P_UG, ug)?;
            graph.set_prop(*v, P_SYN_TYPE, syn.as_str())?;
            typed += 1;
        }
    }
    Ok(typed)
}

/// Whether a stored `sem_type` tag list contains `tag`.
pub fn has_sem_type(graph: &Graph, var: NodeId, tag: &str) -> bool {
    graph
        .str_prop(var, P_SEM_TYPE)
        .is_some_and(|t| t.split(',').any(|x| x == tag))
}
