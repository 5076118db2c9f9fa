mod common;

use std::collections::BTreeSet;

use common::*;
use deemon_core::graph::{Graph, NodeId};
use deemon_core::labels::*;
use deemon_core::model::{
    build_abstractions, build_model, build_propagation, build_variables, cluster_transitions,
    has_sem_type, infer_types, ModelConfig, ModelError, SemType, TIER_UA,
};
use deemon_core::parse::AbstractionConfig;
use deemon_core::trace::Phase;

fn variables_named(g: &Graph, name: &str) -> Vec<NodeId> {
    g.nodes_with_label(VARIABLE)
        .filter(|v| g.str_prop(*v, P_NAME) == Some(name))
        .collect()
}

#[test]
fn password_change_types() {
    let g = built(&[
        change_pwd_session("alice", 1, "X4a"),
        change_pwd_session("alice", 2, "Z9q"),
    ]);
    let cookies = variables_named(&g, "hdr.-list/cookie/SESSION");
    assert_eq!(cookies.len(), 2);
    for v in &cookies {
        assert!(has_sem_type(&g, *v, SemType::SessionUnique.as_str()));
        assert!(!has_sem_type(&g, *v, "UG"));
    }
    let passwords = variables_named(&g, "body/password");
    assert_eq!(passwords.len(), 2);
    for v in &passwords {
        assert!(has_sem_type(&g, *v, "UG"));
        assert_eq!(g.str_prop(*v, P_SYN_TYPE), Some("string"));
    }
}

#[test]
fn password_change_variables_share_post_state() {
    let g = built(&[
        change_pwd_session("alice", 1, "X4a"),
        change_pwd_session("alice", 2, "Z9q"),
    ]);
    let session_one: Vec<NodeId> = g
        .nodes_with_label(VARIABLE)
        .filter(|v| g.int_prop(*v, P_SESSION) == Some(1) && g.str_prop(*v, P_TIER) != Some(TIER_UA))
        .collect();
    let names: BTreeSet<&str> = session_one
        .iter()
        .filter_map(|v| g.str_prop(*v, P_NAME))
        .collect();
    assert_eq!(
        names,
        BTreeSet::from([
            "hdr.-list/cookie/SESSION",
            "body/password",
            "set-cl.-list/password",
            "cond/sid"
        ])
    );
    let states: BTreeSet<NodeId> = session_one
        .iter()
        .map(|v| {
            assert_eq!(g.in_degree(*v, HAS).unwrap(), 1);
            g.predecessors(*v, HAS).next().unwrap()
        })
        .collect();
    assert_eq!(states.len(), 1);
    let q2 = *states.iter().next().unwrap();
    assert_eq!(g.int_prop(q2, P_ORDINAL), Some(1));
}

/// Type a password, submit it, one request, one query.
#[test]
fn propagation_chain_from_typed_password() {
    let mut b = SessionBuilder::new("alice", 1);
    b.action("type", Some("password"), Some("pwnd"), Phase::Workflow);
    let submit = b.action("click", Some("submit"), None, Phase::Workflow);
    b.request(
        deemon_core::parse::HttpRequestRaw::new("POST", "/change_pwd.php")
            .form_body("password=pwnd"),
        Some(submit),
        &["UPDATE users SET password='pwnd' WHERE id=1"],
    );
    let mut g = import_all(&[b.build()]);
    let cfg = AbstractionConfig::default();
    build_abstractions(&mut g, &cfg).unwrap();
    cluster_transitions(&mut g).unwrap();
    deemon_core::model::build_fsm(&mut g).unwrap();
    build_variables(&mut g, &cfg).unwrap();
    assert_eq!(build_propagation(&mut g).unwrap(), 2);
    let chain: Vec<(&str, &str)> = g
        .edges()
        .filter(|e| e.label == PROPAG)
        .map(|e| {
            (
                g.str_prop(e.src, P_TIER).unwrap(),
                g.str_prop(e.dst, P_TIER).unwrap(),
            )
        })
        .collect();
    assert_eq!(chain, [("ua", "http"), ("http", "sql")]);
    for e in g.edges().filter(|e| e.label == PROPAG) {
        assert_eq!(g.str_prop(e.src, P_VALUE), g.str_prop(e.dst, P_VALUE));
    }
    // a single session cannot be typed
    assert!(matches!(
        infer_types(&mut g),
        Err(ModelError::Precondition(_))
    ));
}

#[test]
fn one_user_never_yields_user_unique() {
    // an admin key constant across the only user's sessions
    let session = |n: u64, sid: &str| {
        let mut b = SessionBuilder::new("admin", n);
        let click = b.action("click", Some("save"), None, Phase::Workflow);
        b.request(
            deemon_core::parse::HttpRequestRaw::new("POST", "/admin/save")
                .header("Cookie", &format!("SESSION={sid}"))
                .form_body("my_post_key=k3y&title=t"),
            Some(click),
            &["UPDATE settings SET title='t' WHERE id=1"],
        );
        b.build()
    };
    let g = built(&[session(1, "s1"), session(2, "s2")]);
    for v in g.nodes_with_label(VARIABLE) {
        assert!(!has_sem_type(&g, v, "UU"));
    }
    for v in variables_named(&g, "body/my_post_key") {
        assert!(has_sem_type(&g, v, "CO"));
    }
}

#[test]
fn model_invariants_hold_on_bank_fixture() {
    let mut g = bank_model(&BankOptions { extra_token: false });
    // abstract-root uniqueness
    let mut fps = BTreeSet::new();
    for r in g.nodes_with_label(ROOT) {
        if matches!(g.str_prop(r, P_TYPE), Some(T_ABS_HTTP) | Some(T_ABS_SQL)) {
            assert!(fps.insert(g.str_prop(r, P_FINGERPRINT).unwrap().to_owned()));
        }
    }
    // transition shape
    for t in g.nodes_with_label(STATE_TRANS) {
        assert_eq!(g.in_degree(t, TRANS).unwrap(), 1);
        assert_eq!(g.out_degree(t, TO).unwrap(), 1);
        assert!(g.out_degree(t, ACCEPTS).unwrap() >= 1);
    }
    // one has edge per variable, a source or a predecessor for each
    for v in g.nodes_with_label(VARIABLE) {
        assert_eq!(g.in_degree(v, HAS).unwrap(), 1);
        let sourced = g.in_degree(v, SOURCE).unwrap() + g.out_degree(v, SINK).unwrap();
        assert!(sourced >= 1);
        assert!(g.str_prop(v, P_SYN_TYPE).is_some());
    }
    // identical workflows collapse to one chain
    assert_eq!(g.label_count(STATE), 5);
    // idempotence
    let before = g.to_json();
    let summary = build_model(&mut g, &ModelConfig::default()).unwrap();
    assert_eq!(g.to_json(), before);
    assert_eq!((summary.states_before, summary.states_after), (10, 5));
}

#[test]
fn disjoint_query_sets_split_clusters() {
    let session = |n: u64, query: &str| {
        let mut b = SessionBuilder::new("alice", n);
        let click = b.action("click", None, None, Phase::Workflow);
        b.request(
            deemon_core::parse::HttpRequestRaw::new("POST", "/save").form_body("v=1"),
            Some(click),
            &[query],
        );
        b.build()
    };
    let mut g = import_all(&[
        session(1, "UPDATE a SET v=1 WHERE id=1"),
        session(2, "UPDATE a SET v=2 WHERE id=1"),
        session(3, "DELETE FROM b WHERE id=1"),
    ]);
    build_abstractions(&mut g, &AbstractionConfig::default()).unwrap();
    let clusters = cluster_transitions(&mut g).unwrap();
    let mut sizes: Vec<usize> = clusters.iter().map(|c| c.members.len()).collect();
    sizes.sort();
    assert_eq!(sizes, [1, 2]);
}
