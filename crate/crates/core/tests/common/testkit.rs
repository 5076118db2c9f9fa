//! Random generators and brute-force oracles shared by property tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use deemon_core::graph::{Comparator, Direction, Graph, NodeId, Pattern, Props};
use deemon_core::labels::*;
use deemon_core::model::{initial_state, provenance, root_of};
use deemon_core::parse::{HttpRequestRaw, SqlQueryRaw};
use deemon_core::trace::{HttpRecord, Phase, SqlRecord, TraceSet, UserActionRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};

pub struct SessionBuilder {
    user: String,
    session: u64,
    set: TraceSet,
    sql_index: u64,
}

impl SessionBuilder {
    pub fn new(user: &str, session: u64) -> Self {
        SessionBuilder {
            user: user.to_owned(),
            session,
            set: TraceSet::default(),
            sql_index: 0,
        }
    }

    pub fn action(
        &mut self,
        action_type: &str,
        element: Option<&str>,
        input: Option<&str>,
        phase: Phase,
    ) -> u64 {
        let index = self.set.actions.len() as u64;
        self.set.actions.push(UserActionRecord {
            index,
            action_type: action_type.to_owned(),
            element: element.map(str::to_owned),
            input: input.map(str::to_owned),
            user: self.user.clone(),
            phase,
        });
        index
    }

    pub fn request(
        &mut self,
        request: HttpRequestRaw,
        caused_by: Option<u64>,
        queries: &[&str],
    ) -> u64 {
        let index = self.set.http.len() as u64;
        self.set.http.push(HttpRecord {
            index,
            request,
            caused_by_action: caused_by,
            session: self.session,
            user: self.user.clone(),
            request_id: format!("{}-{}-{index}", self.user, self.session),
        });
        for q in queries {
            self.set.sql.push(SqlRecord {
                index: self.sql_index,
                query: SqlQueryRaw::new(*q),
                caused_by_request: index,
                session: self.session,
                user: self.user.clone(),
            });
            self.sql_index += 1;
        }
        index
    }

    pub fn build(self) -> (TraceSet, u64) {
        (self.set, self.session)
    }
}

// ---------------------------------------------------------------------------
// graphs

const LABELS: &[&str] = &[STATE, STATE_TRANS, ROOT, EVENT, VARIABLE];
const ROOT_TYPES: &[&str] = &[T_HTTP, T_SQL, T_ABS_HTTP, T_ABS_SQL];
const EDGE_LABELS: &[&str] = &[TRANS, TO, ACCEPTS, PARSES, CAUSES, ABSTRACTS, HAS, NEXT];

/// A graph of up to `max_nodes` nodes over the labels, root types and edge
/// labels the pipeline queries.
pub fn random_graph(rng: &mut impl RngCore, max_nodes: usize) -> Graph {
    let mut g = Graph::new();
    let n = rng.random_range(1..=max_nodes);
    let mut ids = Vec::new();
    for _ in 0..n {
        let label = *LABELS.choose(rng).unwrap();
        let mut p = Props::new();
        if label == ROOT {
            p.insert(P_TYPE.into(), (*ROOT_TYPES.choose(rng).unwrap()).into());
            p.insert(P_MUTATES.into(), rng.random_bool(0.5).into());
        }
        ids.push(g.add_node([label], p).unwrap());
    }
    let edges = rng.random_range(0..=3 * n);
    for _ in 0..edges {
        let src = *ids.choose(rng).unwrap();
        let dst = *ids.choose(rng).unwrap();
        let label = *EDGE_LABELS.choose(rng).unwrap();
        if label == ABSTRACTS || !g.has_edge(src, dst, label) {
            g.add_edge(src, dst, label, Props::new()).unwrap();
        }
    }
    g
}

/// Embeds `count` instances of the pattern's slots and edges, reusing a
/// fitting node half of the time. Degree constraints are left to chance.
pub fn plant_matches(g: &mut Graph, p: &Pattern, rng: &mut impl RngCore, count: usize) {
    for _ in 0..count {
        let mut bound: BTreeMap<&str, NodeId> = BTreeMap::new();
        for slot in &p.nodes {
            let fitting: Vec<NodeId> = g
                .nodes()
                .filter(|n| n.has_label(&slot.label))
                .filter(|n| slot.props.iter().all(|(k, v)| n.prop(k) == Some(v)))
                .map(|n| n.id)
                .collect();
            let id = match fitting.choose(rng) {
                Some(&id) if rng.random_bool(0.5) => id,
                _ => {
                    let props: Props = slot.props.iter().cloned().collect();
                    g.add_node([slot.label.as_str()], props).unwrap()
                }
            };
            bound.insert(&slot.var, id);
        }
        for e in &p.edges {
            let (src, dst) = (bound[e.src.as_str()], bound[e.dst.as_str()]);
            if e.label == ABSTRACTS || !g.has_edge(src, dst, &e.label) {
                g.add_edge(src, dst, &e.label, Props::new()).unwrap();
            }
        }
    }
}

/// Degree-constrained shape: abstract queries with more than one concrete
/// query.
pub fn repeated_query_pattern() -> Pattern {
    Pattern::new()
        .node_where("abs", ROOT, [(P_TYPE, T_ABS_SQL)])
        .node("sql", ROOT)
        .edge("abs", ABSTRACTS, "sql")
        .degree("abs", ABSTRACTS, Direction::Out, Comparator::Gt, 1)
}

pub type Row = BTreeMap<String, NodeId>;

/// Every assignment of slots to nodes satisfying the pattern, found by
/// enumerating the product of per-slot candidates.
pub fn brute_force_match(g: &Graph, p: &Pattern) -> Vec<Row> {
    let domains: Vec<Vec<NodeId>> = p
        .nodes
        .iter()
        .map(|slot| {
            g.nodes()
                .filter(|n| n.has_label(&slot.label))
                .filter(|n| slot.props.iter().all(|(k, v)| n.prop(k) == Some(v)))
                .map(|n| n.id)
                .collect()
        })
        .collect();
    let edges: BTreeSet<(NodeId, NodeId, &str)> = g
        .edges()
        .map(|x| (x.src, x.dst, x.label.as_str()))
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; domains.len()];
    if domains.iter().any(Vec::is_empty) {
        return out;
    }
    loop {
        let row: Row = p
            .nodes
            .iter()
            .zip(&choice)
            .zip(&domains)
            .map(|((slot, &i), d)| (slot.var.clone(), d[i]))
            .collect();
        let edges_ok = p.edges.iter().all(|e| {
            let (s, d) = (row[&e.src], row[&e.dst]);
            edges.contains(&(s, d, e.label.as_str()))
        });
        let degrees_ok = p.degrees.iter().all(|c| {
            let n = row[&c.var];
            let count = g
                .edges()
                .filter(|x| x.label == c.label)
                .filter(|x| match c.direction {
                    Direction::Out => x.src == n,
                    Direction::In => x.dst == n,
                })
                .count();
            c.cmp.holds(count, c.count)
        });
        if edges_ok && degrees_ok {
            out.push(row);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == choice.len() {
                out.sort();
                return out;
            }
            choice[k] += 1;
            if choice[k] < domains[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

pub fn engine_match(g: &Graph, p: &Pattern) -> Vec<Row> {
    let mut rows: Vec<Row> = g
        .match_pattern(p)
        .unwrap()
        .iter()
        .map(|b| b.iter().map(|(k, v)| (k.to_owned(), v)).collect())
        .collect();
    rows.sort();
    rows
}

// ---------------------------------------------------------------------------
// requests and queries

fn word<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|_| *ALPHABET.choose(rng).unwrap() as char)
        .collect()
}

/// Structure of a request; values are filled in separately so that the
/// same shape can be instantiated with different values.
#[derive(Debug, Clone)]
pub struct RequestShape {
    method: &'static str,
    path: String,
    query: Vec<String>,
    cookies: Vec<String>,
    headers: Vec<(String, bool)>,
    body: BodyShape,
}

#[derive(Debug, Clone)]
enum BodyShape {
    None,
    Form(Vec<String>),
    /// Names with whether the value is numeric.
    Json(Vec<(String, bool)>),
    Multipart(Vec<String>),
}

pub fn random_shape(rng: &mut impl RngCore) -> RequestShape {
    let names = |rng: &mut dyn RngCore, max: usize| -> Vec<String> {
        let n = rng.random_range(0..=max);
        let mut out: Vec<String> = Vec::new();
        while out.len() < n {
            let w = format!("p{}", word(rng, 3));
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    };
    let method = *["GET", "POST", "PUT"].choose(rng).unwrap();
    let body = if method == "GET" {
        BodyShape::None
    } else {
        match rng.random_range(0..4) {
            0 => BodyShape::None,
            1 => BodyShape::Form(names(rng, 4)),
            2 => BodyShape::Json(
                names(rng, 3)
                    .into_iter()
                    .map(|n| (n, rng.random_bool(0.5)))
                    .collect(),
            ),
            _ => BodyShape::Multipart(names(rng, 3)),
        }
    };
    RequestShape {
        method,
        path: format!("/{}/{}.php", word(rng, 4), word(rng, 5)),
        query: names(rng, 3),
        cookies: names(rng, 2)
            .into_iter()
            .map(|n| n.to_uppercase())
            .collect(),
        headers: vec![
            ("User-Agent".into(), false),
            (format!("X-{}", word(rng, 4)), true),
        ]
        .into_iter()
        .filter(|_| rng.random_bool(0.7))
        .collect(),
        body,
    }
}

/// Instantiates a shape with fresh random values.
pub fn instantiate(shape: &RequestShape, rng: &mut impl RngCore) -> HttpRequestRaw {
    let mut url = shape.path.clone();
    if !shape.query.is_empty() {
        let mut ser = form_urlencoded::Serializer::new(String::new());
        for n in &shape.query {
            ser.append_pair(n, &word(rng, 6));
        }
        url.push('?');
        url.push_str(&ser.finish());
    }
    let mut raw = HttpRequestRaw::new(shape.method, &url);
    for (name, volatile) in &shape.headers {
        let value = if *volatile {
            word(rng, 8)
        } else {
            "deemon-test/1.0".into()
        };
        raw = raw.header(name, &value);
    }
    if !shape.cookies.is_empty() {
        let cookie: Vec<String> = shape
            .cookies
            .iter()
            .map(|n| format!("{n}={}", word(rng, 10)))
            .collect();
        raw = raw.header("Cookie", &cookie.join("; "));
    }
    match &shape.body {
        BodyShape::None => raw,
        BodyShape::Form(names) => {
            let mut ser = form_urlencoded::Serializer::new(String::new());
            for n in names {
                ser.append_pair(n, &word(rng, 5));
            }
            raw.form_body(&ser.finish())
        }
        BodyShape::Json(names) => {
            let mut obj = serde_json::Map::new();
            for (n, numeric) in names {
                let v = if *numeric {
                    serde_json::Value::from(rng.random_range(0..1000))
                } else {
                    serde_json::Value::String(word(rng, 4))
                };
                obj.insert(n.clone(), v);
            }
            raw.body("application/json", serde_json::to_vec(&obj).unwrap())
        }
        BodyShape::Multipart(names) => {
            let boundary = format!("----b{}", word(rng, 12));
            let mut body = String::new();
            for n in names {
                body.push_str(&format!(
                    "--{boundary}\r\nContent-Disposition: form-data; name=\"{n}\"\r\n\r\n{}\r\n",
                    word(rng, 5)
                ));
            }
            body.push_str(&format!("--{boundary}--\r\n"));
            raw.body(
                &format!("multipart/form-data; boundary={boundary}"),
                body.into_bytes(),
            )
        }
    }
}

fn literal(rng: &mut impl RngCore) -> String {
    match rng.random_range(0..3) {
        0 => format!("'{}'", word(rng, 5)),
        1 => rng.random_range(0..100_000).to_string(),
        _ => "'it''s'".into(),
    }
}

/// A query in the supported grammar and the number of literals in it.
pub fn random_sql(rng: &mut impl RngCore) -> (String, usize) {
    let table = format!("t{}", word(rng, 3));
    let cols: Vec<String> = (0..rng.random_range(1..4))
        .map(|i| format!("c{i}"))
        .collect();
    let lits: Vec<String> = (0..cols.len() + 3).map(|_| literal(rng)).collect();
    match rng.random_range(0..4) {
        0 => {
            let cond: Vec<String> = cols
                .iter()
                .zip(&lits)
                .map(|(c, l)| format!("{c} = {l}"))
                .collect();
            (
                format!("SELECT * FROM {table} WHERE {}", cond.join(" AND ")),
                cols.len(),
            )
        }
        1 => (
            format!(
                "INSERT INTO {table} ({}) VALUES ({})",
                cols.join(", "),
                lits[..cols.len()].join(", ")
            ),
            cols.len(),
        ),
        2 => {
            let sets: Vec<String> = cols
                .iter()
                .zip(&lits)
                .map(|(c, l)| format!("{c}={l}"))
                .collect();
            (
                format!(
                    "UPDATE {table} SET {} WHERE id = {}",
                    sets.join(", "),
                    lits[cols.len()]
                ),
                cols.len() + 1,
            )
        }
        _ => (
            format!(
                "DELETE FROM {table} WHERE {} = {} OR id IN ({}, {})",
                cols[0], lits[0], lits[1], lits[2]
            ),
            3,
        ),
    }
}

// ---------------------------------------------------------------------------
// traces and FSM languages

/// Between 2 and 3 sessions of one user, each a random walk over a small set
/// of endpoints, some of which write state.
pub fn random_sessions(rng: &mut impl RngCore) -> Vec<(TraceSet, u64)> {
    let endpoints = rng.random_range(2..=4);
    let sessions = rng.random_range(2..=3);
    (1..=sessions)
        .map(|s| {
            let mut b = SessionBuilder::new("u", s);
            let steps = rng.random_range(1..=5);
            for _ in 0..steps {
                let e = rng.random_range(0..endpoints);
                let click = b.action("click", Some(&format!("e{e}")), None, Phase::Workflow);
                let sid = format!("s{s}");
                let queries: Vec<String> = match e % 3 {
                    0 => vec![format!("UPDATE t{e} SET v='{sid}' WHERE id=1")],
                    1 => vec![format!("SELECT v FROM t{e} WHERE id=1")],
                    _ => vec![
                        format!("INSERT INTO t{e} (v) VALUES ('{sid}')"),
                        format!("DELETE FROM t{e} WHERE v='{sid}'"),
                    ],
                };
                let refs: Vec<&str> = queries.iter().map(String::as_str).collect();
                b.request(
                    HttpRequestRaw::new("POST", &format!("/e{e}")).form_body(&format!("sid={sid}")),
                    Some(click),
                    &refs,
                );
            }
            b.build()
        })
        .collect()
}

/// Cluster-id words of length at most `max_len` accepted by the unminimized
/// per-session chains: all prefixes of each session's cluster sequence.
pub fn chain_language(g: &Graph, max_len: usize) -> BTreeSet<Vec<String>> {
    let mut sequences: BTreeMap<(String, i64), Vec<(i64, String)>> = BTreeMap::new();
    for e in g
        .nodes_with_label(EVENT)
        .filter(|e| g.str_prop(*e, P_TYPE) == Some(T_HTTP))
    {
        let Some(cluster) = root_of(g, e).and_then(|r| g.str_prop(r, P_CLUSTER)) else {
            continue;
        };
        let key = provenance(g, e).unwrap();
        sequences
            .entry(key)
            .or_default()
            .push((g.int_prop(e, P_INDEX).unwrap(), cluster.to_owned()));
    }
    let mut out = BTreeSet::from([Vec::new()]);
    for mut seq in sequences.into_values() {
        seq.sort();
        let word: Vec<String> = seq.into_iter().map(|(_, c)| c).collect();
        for len in 1..=word.len().min(max_len) {
            out.insert(word[..len].to_vec());
        }
    }
    out
}

/// Cluster-id words of length at most `max_len` readable from the initial
/// state of the FSM in the graph.
pub fn fsm_language(g: &Graph, max_len: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    let Some(start) = initial_state(g) else {
        return out;
    };
    let mut frontier = vec![(start, Vec::<String>::new())];
    while let Some((state, word)) = frontier.pop() {
        out.insert(word.clone());
        if word.len() == max_len {
            continue;
        }
        for t in g.successors(state, TRANS) {
            let c = g.str_prop(t, P_CLUSTER).unwrap().to_owned();
            for next in g.successors(t, TO) {
                let mut w = word.clone();
                w.push(c.clone());
                frontier.push((next, w));
            }
        }
    }
    out
}

pub fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
