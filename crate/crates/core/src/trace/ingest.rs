use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use super::{
    validate_trace_set, Finding, FindingKind, Phase, TraceError, TraceManifest, TraceSet,
    ValidationReport,
};
use crate::graph::{props, Graph, NodeId, Pattern, Props, Value};
use crate::labels::*;
use crate::parse::sql::{mutates, parse_sql_lenient};
use crate::parse::{parse_http_request, parse_user_action, store_tree};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportSummary {
    pub user: String,
    pub session: u64,
    pub events: usize,
    pub nodes: usize,
    pub edges: usize,
}

fn provenance(user: &str, session: u64) -> Props {
    props([
        (P_USER, Value::from(user)),
        (P_SESSION, Value::Int(session as i64)),
    ])
}

/// Imports one session's traces: an `Event` per record chained by `next`
/// within each trace, a parse tree per record linked to its event by
/// `parses`, and `causes` edges from actions to requests and from requests to
/// queries.
pub fn import_session(
    graph: &mut Graph,
    set: &TraceSet,
    session: u64,
) -> Result<ImportSummary, TraceError> {
    let mut report = validate_trace_set(set);
    let wrong_session = set
        .http
        .iter()
        .map(|r| ("http", r.session))
        .chain(set.sql.iter().map(|r| ("sql", r.session)))
        .enumerate()
        .find(|(_, (_, s))| *s != session);
    if let Some((line, (trace, s))) = wrong_session {
        report.findings.push(Finding {
            trace,
            line: line + 1,
            kind: FindingKind::SessionMismatch,
            message: format!("record of session {s} imported as session {session}"),
        });
    }
    if !report.is_empty() {
        return Err(TraceError::Invalid(report));
    }
    let Some(user) = set.user().map(str::to_owned) else {
        return Ok(ImportSummary {
            session,
            ..ImportSummary::default()
        });
    };

    let existing = Pattern::new().node_where("e", EVENT, provenance(&user, session));
    if !graph.match_pattern(&existing)?.is_empty() {
        return Err(TraceError::Conflict { user, session });
    }

    let (nodes_before, edges_before) = (graph.node_count(), graph.edge_count());
    let event = |graph: &mut Graph, kind: &str, index: u64, phase: Phase, extra: Props| {
        let mut p = provenance(&user, session);
        p.insert(P_TYPE.into(), kind.into());
        p.insert(P_INDEX.into(), Value::Int(index as i64));
        p.insert(P_PHASE.into(), phase.as_str().into());
        p.extend(extra);
        graph.add_node([EVENT], p)
    };
    let chain = |graph: &mut Graph, events: &[NodeId]| -> Result<(), TraceError> {
        for pair in events.windows(2) {
            graph.add_edge(pair[0], pair[1], NEXT, Props::new())?;
        }
        Ok(())
    };

    let mut actions: HashMap<u64, (NodeId, Phase)> = HashMap::new();
    let mut ua_events = Vec::new();
    for a in &set.actions {
        let tree = parse_user_action(&a.action_type, a.element.as_deref(), a.input.as_deref())?;
        let root = store_tree(graph, &tree, provenance(&user, session))?;
        let e = event(graph, T_UA, a.index, a.phase, Props::new())?;
        graph.add_edge(root, e, PARSES, Props::new())?;
        actions.insert(a.index, (e, a.phase));
        ua_events.push(e);
    }
    chain(graph, &ua_events)?;

    let mut requests: HashMap<u64, (NodeId, Phase)> = HashMap::new();
    let mut http_events = Vec::new();
    for r in &set.http {
        let tree = parse_http_request(&r.request)?;
        let root = store_tree(graph, &tree, provenance(&user, session))?;
        let cause = r.caused_by_action.and_then(|a| actions.get(&a)).copied();
        let phase = cause.map_or(Phase::Workflow, |(_, p)| p);
        let e = event(
            graph,
            T_HTTP,
            r.index,
            phase,
            props([(P_REQUEST_ID, r.request_id.as_str())]),
        )?;
        graph.add_edge(root, e, PARSES, Props::new())?;
        if let Some((ua, _)) = cause {
            graph.add_edge(ua, e, CAUSES, Props::new())?;
        }
        requests.insert(r.index, (e, phase));
        http_events.push(e);
    }
    chain(graph, &http_events)?;

    let mut sql_events = Vec::new();
    for q in &set.sql {
        let tree = parse_sql_lenient(&q.query)?;
        let mut root_props = provenance(&user, session);
        root_props.insert(P_MUTATES.into(), mutates(&tree).into());
        let root = store_tree(graph, &tree, root_props)?;
        let (request, phase) = requests[&q.caused_by_request];
        let e = event(graph, T_SQL, q.index, phase, Props::new())?;
        graph.add_edge(root, e, PARSES, Props::new())?;
        graph.add_edge(request, e, CAUSES, Props::new())?;
        sql_events.push(e);
    }
    chain(graph, &sql_events)?;

    Ok(ImportSummary {
        user,
        session,
        events: ua_events.len() + http_events.len() + sql_events.len(),
        nodes: graph.node_count() - nodes_before,
        edges: graph.edge_count() - edges_before,
    })
}

/// Validates and imports every session listed in a trace manifest.
pub fn import_manifest(
    graph: &mut Graph,
    manifest_path: &Path,
) -> Result<Vec<ImportSummary>, TraceError> {
    let manifest = TraceManifest::load(manifest_path)?;
    let mut out = Vec::new();
    for entry in &manifest.sessions {
        let (a, h, s) = manifest.files(manifest_path, entry);
        let (set, findings) = TraceSet::load(&a, &h, &s)?;
        if !findings.is_empty() {
            return Err(TraceError::Invalid(ValidationReport { findings }));
        }
        out.push(import_session(graph, &set, entry.session)?);
    }
    Ok(out)
}
