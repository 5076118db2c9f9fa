mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use deemon_core::graph::{Graph, NodeId};
use deemon_core::labels::*;
use deemon_core::miner::{
    extract_oracle, filter_relevant, find_state_changing, find_token_params, generate_tests, mine,
    MinerConfig, MinerError, TestMode,
};
use deemon_core::model::{has_sem_type, root_of};
use deemon_core::parse::http::request_params;
use deemon_core::parse::{parse_http_request, HttpRequestRaw, PLACEHOLDER};
use deemon_core::trace::Phase;

const NO_EXTRA: BankOptions = BankOptions { extra_token: false };

fn request_path(g: &Graph, root: NodeId) -> String {
    let (tree, _) = deemon_core::parse::load_tree(g, root).unwrap();
    deemon_core::parse::http::to_http_raw(&tree)
        .unwrap()
        .path()
        .to_owned()
}

fn roots_for(g: &Graph, path: &str) -> Vec<NodeId> {
    g.nodes_with_label(ROOT)
        .filter(|r| g.str_prop(*r, P_TYPE) == Some(T_HTTP) && request_path(g, *r) == path)
        .collect()
}

#[test]
fn state_changing_equals_accepts_edge_scan() {
    let g = bank_model(&NO_EXTRA);
    let found = find_state_changing(&g).unwrap();
    let scanned: BTreeSet<NodeId> = g
        .edges()
        .filter(|e| e.label == ACCEPTS && g.node(e.src).unwrap().has_label(STATE_TRANS))
        .map(|e| e.dst)
        .collect();
    assert_eq!(found, scanned.into_iter().collect::<Vec<_>>());
    assert!(found.contains(&roots_for(&g, "/change_pwd.php")[0]));
}

#[test]
fn requests_without_queries_change_no_state() {
    let mut b = SessionBuilder::new("alice", 1);
    let click = b.action("click", None, None, Phase::Workflow);
    b.request(HttpRequestRaw::new("GET", "/home"), Some(click), &[]);
    let mut b2 = SessionBuilder::new("alice", 2);
    let click = b2.action("click", None, None, Phase::Workflow);
    b2.request(HttpRequestRaw::new("GET", "/home"), Some(click), &[]);
    let g = built(&[b.build(), b2.build()]);
    assert!(find_state_changing(&g).unwrap().is_empty());
}

#[test]
fn relevance_drops_repeated_log_writes() {
    let g = bank_model(&NO_EXTRA);
    let sc = find_state_changing(&g).unwrap();
    let relevant = filter_relevant(&g, &sc).unwrap();
    let kept: BTreeSet<NodeId> = relevant.iter().map(|(r, _)| *r).collect();
    assert!(kept.is_subset(&sc.iter().copied().collect()));
    let paths: BTreeSet<String> = kept.iter().map(|r| request_path(&g, *r)).collect();
    assert_eq!(
        paths,
        BTreeSet::from([
            "/login".into(),
            "/change_pwd.php".into(),
            "/change_email.php".into()
        ])
    );
    // the search only writes the log
    for r in roots_for(&g, "/search") {
        assert!(sc.contains(&r));
        assert!(!kept.contains(&r));
    }
}

#[test]
fn token_candidates() {
    let g = bank_model(&NO_EXTRA);
    let cfg = MinerConfig::default();
    let email = roots_for(&g, "/change_email.php")[0];
    assert_eq!(
        find_token_params(&g, email, &cfg).unwrap(),
        ["body/csrf_token"]
    );
    // the session cookie and the timestamp are session-unique but excluded
    let pwd = roots_for(&g, "/change_pwd.php")[0];
    let unique: Vec<String> = g
        .nodes_with_label(VARIABLE)
        .filter(|v| g.int_prop(*v, P_TREE) == Some(pwd.0 as i64) && has_sem_type(&g, *v, "SU"))
        .map(|v| g.str_prop(v, P_NAME).unwrap().to_owned())
        .collect();
    assert_eq!(unique, ["hdr.-list/cookie/SESSION", "url-params/_"]);
    assert!(find_token_params(&g, pwd, &cfg).unwrap().is_empty());
}

#[test]
fn oracle_of_password_change() {
    let g = bank_model(&NO_EXTRA);
    let pwd = roots_for(&g, "/change_pwd.php")[0];
    let oracle = extract_oracle(&g, pwd).unwrap();
    assert_eq!(oracle.len(), 1);
    assert_eq!(
        oracle[0].query,
        format!("UPDATE users SET password = {PLACEHOLDER} WHERE sid = {PLACEHOLDER}")
    );
    let search = roots_for(&g, "/search")[0];
    assert!(matches!(
        extract_oracle(&g, search),
        Err(MinerError::NotRelevant(_))
    ));
}

#[test]
fn oracle_members_occur_once_per_session() {
    let g = bank_model(&NO_EXTRA);
    let report = mine(&g, &MinerConfig::default()).unwrap();
    // recount concrete queries per (abstract fingerprint, session) by scanning events
    let mut counts: BTreeMap<(String, i64), usize> = BTreeMap::new();
    for e in g
        .nodes_with_label(EVENT)
        .filter(|e| g.str_prop(*e, P_TYPE) == Some(T_SQL))
    {
        let root = root_of(&g, e).unwrap();
        let abs = g.predecessors(root, ABSTRACTS).next().unwrap();
        let fp = g.str_prop(abs, P_FINGERPRINT).unwrap().to_owned();
        *counts
            .entry((fp, g.int_prop(e, P_SESSION).unwrap()))
            .or_default() += 1;
    }
    for c in report.candidates.iter().filter(|c| c.relevant) {
        assert!(!c.oracle.is_empty());
        for o in &c.oracle {
            for session in [1, 2] {
                assert_eq!(counts[&(o.fingerprint.clone(), session)], 1);
            }
        }
    }
}

#[test]
fn summary_counters_are_ordered() {
    let g = bank_model(&NO_EXTRA);
    let report = mine(&g, &MinerConfig::default()).unwrap();
    let s = report.summary;
    assert_eq!((s.reqs, s.sc_reqs, s.rel_sc_reqs), (4, 4, 3));
}

#[test]
fn tests_per_operation() {
    let g = bank_model(&NO_EXTRA);
    let cfg = MinerConfig::default();
    let report = mine(&g, &cfg).unwrap();
    let tests = generate_tests(&g, &report.candidates, &cfg).unwrap();
    let modes: Vec<(TestMode, &str)> = tests.iter().map(|t| (t.mode, t.request.path())).collect();
    assert_eq!(
        modes,
        [
            (TestMode::Forge, "/change_pwd.php"),
            (TestMode::OmitToken, "/change_email.php")
        ]
    );
    let omit = &tests[1];
    assert_eq!(omit.omitted_param.as_deref(), Some("body/csrf_token"));
    let params = request_params(&parse_http_request(&omit.request).unwrap());
    assert!(params.iter().all(|(n, _)| n != "csrf_token"));
    assert!(params.iter().any(|(n, _)| n == "email"));

    // forged requests carry no recorded session- or user-unique value
    let forged = &tests[0];
    let recorded: BTreeSet<String> = g
        .nodes_with_label(VARIABLE)
        .filter(|v| has_sem_type(&g, *v, "SU") || has_sem_type(&g, *v, "UU"))
        .map(|v| g.str_prop(v, P_VALUE).unwrap().to_owned())
        .collect();
    let tree = parse_http_request(&forged.request).unwrap();
    for t in tree.terms() {
        assert!(!recorded.contains(t), "forged request leaks {t}");
    }
    assert_eq!(
        forged.request.header_value("Cookie"),
        Some(format!("SESSION={PLACEHOLDER}").as_str())
    );
    assert_eq!(forged.login.requests.len(), 1);
    assert_eq!(forged.login.requests[0].path(), "/login");
    assert_eq!(forged.recorded_cookie_values, ["X4a", "Z9q"]);
}

#[test]
fn each_token_candidate_gets_a_test() {
    let g = bank_model(&BankOptions { extra_token: true });
    let cfg = MinerConfig::default();
    let report = mine(&g, &cfg).unwrap();
    let tests = generate_tests(&g, &report.candidates, &cfg).unwrap();
    let omitted: Vec<&str> = tests
        .iter()
        .filter_map(|t| t.omitted_param.as_deref())
        .collect();
    assert_eq!(omitted, ["body/csrf_token", "body/nonce"]);
}

#[test]
fn generation_is_deterministic() {
    let cfg = MinerConfig::default();
    let run = || {
        let g = bank_model(&NO_EXTRA);
        let report = mine(&g, &cfg).unwrap();
        let tests = generate_tests(&g, &report.candidates, &cfg).unwrap();
        (
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&tests).unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn mining_requires_a_model() {
    let g = import_all(&[bank_session("alice", 1, "X4a", "T1a", &NO_EXTRA)]);
    assert!(matches!(
        mine(&g, &MinerConfig::default()),
        Err(MinerError::Precondition(_))
    ));
}
