#![allow(dead_code)]

pub mod testkit;

pub use testkit::SessionBuilder;

use deemon_core::graph::Graph;
use deemon_core::model::{build_model, ModelConfig};
use deemon_core::parse::HttpRequestRaw;
use deemon_core::trace::{import_session, Phase, TraceSet};

pub fn log_query(sid: &str, path: &str) -> String {
    format!("INSERT INTO activity_log (sid, path) VALUES ('{sid}', '{path}')")
}

/// The password-change workflow: type a password, submit it.
pub fn change_pwd_session(user: &str, session: u64, sid: &str) -> (TraceSet, u64) {
    let mut b = SessionBuilder::new(user, session);
    b.action("type", Some("password"), Some("pwnd"), Phase::Workflow);
    let submit = b.action("click", Some("submit"), None, Phase::Workflow);
    let update = format!("UPDATE users SET password='pwnd' WHERE sid='{sid}'");
    b.request(
        HttpRequestRaw::new("POST", "/change_pwd.php")
            .header("Cookie", &format!("SESSION={sid}"))
            .form_body("password=pwnd"),
        Some(submit),
        &[&update],
    );
    b.build()
}

pub struct BankOptions {
    /// Extra session-unique parameters on the email form besides the token.
    pub extra_token: bool,
}

/// Login, password change (with a cache-busting timestamp), token-protected
/// email change and a search. Every request also writes an activity log
/// entry.
pub fn bank_session(
    user: &str,
    session: u64,
    sid: &str,
    token: &str,
    options: &BankOptions,
) -> (TraceSet, u64) {
    let mut b = SessionBuilder::new(user, session);
    let login = b.action("click", Some("login"), None, Phase::Login);
    b.request(
        HttpRequestRaw::new("POST", "/login")
            .form_body(&format!("username={user}&password=secret")),
        Some(login),
        &[
            &format!("SELECT id FROM users WHERE username='{user}' AND password='secret'"),
            &format!("UPDATE users SET sid='{sid}' WHERE username='{user}'"),
            &log_query(sid, "/login"),
        ],
    );
    b.action("type", Some("password"), Some("pwnd"), Phase::Workflow);
    let submit = b.action("click", Some("change_pwd"), None, Phase::Workflow);
    let ts = 1489568400000u64 + session * 1000;
    b.request(
        HttpRequestRaw::new("POST", &format!("/change_pwd.php?_={ts}"))
            .header("Cookie", &format!("SESSION={sid}"))
            .form_body("password=pwnd"),
        Some(submit),
        &[
            &format!("UPDATE users SET password='pwnd' WHERE sid='{sid}'"),
            &log_query(sid, "/change_pwd.php"),
        ],
    );
    b.action("type", Some("email"), Some("a@b.c"), Phase::Workflow);
    let submit = b.action("click", Some("change_email"), None, Phase::Workflow);
    let mut body = format!("email=a%40b.c&csrf_token={token}");
    if options.extra_token {
        body.push_str(&format!("&nonce=n{token}"));
    }
    b.request(
        HttpRequestRaw::new("POST", "/change_email.php")
            .header("Cookie", &format!("SESSION={sid}"))
            .form_body(&body),
        Some(submit),
        &[
            &format!("UPDATE users SET email='a@b.c' WHERE sid='{sid}'"),
            &log_query(sid, "/change_email.php"),
        ],
    );
    let search = b.action("click", Some("search"), None, Phase::Workflow);
    b.request(
        HttpRequestRaw::new("GET", "/search?q=x").header("Cookie", &format!("SESSION={sid}")),
        Some(search),
        &[
            "SELECT title FROM items WHERE title = 'x'",
            &log_query(sid, "/search"),
        ],
    );
    b.build()
}

pub fn import_all(sessions: &[(TraceSet, u64)]) -> Graph {
    let mut g = Graph::new();
    for (set, session) in sessions {
        import_session(&mut g, set, *session).unwrap();
    }
    g
}

pub fn built(sessions: &[(TraceSet, u64)]) -> Graph {
    let mut g = import_all(sessions);
    build_model(&mut g, &ModelConfig::default()).unwrap();
    g
}

pub fn bank_model(options: &BankOptions) -> Graph {
    built(&[
        bank_session("alice", 1, "X4a", "T1a", options),
        bank_session("alice", 2, "Z9q", "T2b", options),
    ])
}
