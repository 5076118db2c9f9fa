//! Parse trees for HTTP requests, SQL queries and user actions.
//!
//! Every tree has one `Root` node tagged with the tree type, inner `NTerm`
//! nodes and `Term` leaves. Each node also carries a [`Role`] naming its
//! syntactic position (parameter value, SQL literal, ...). Roles drive
//! abstraction, variable naming and request reconstruction.

pub mod http;
pub mod sql;
mod stored;
pub mod ua;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{parse_http_request, HttpRequestRaw};
pub use sql::{parse_sql, SqlQueryRaw};
pub use stored::{load_tree, store_tree};
pub use ua::parse_user_action;

/// Symbol carried by abstracted terminals.
pub const PLACEHOLDER: &str = "∅";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed {component}: {message}")]
    Http { component: String, message: String },
    #[error("SQL parse error at byte {position}: {message}")]
    Sql { position: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl ParseError {
    pub(crate) fn http(component: &str, message: impl Into<String>) -> Self {
        ParseError::Http {
            component: component.to_owned(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TreeTag {
    #[serde(rename = "HTTPReq")]
    HttpReq,
    #[serde(rename = "SQL")]
    Sql,
    #[serde(rename = "UA")]
    Ua,
    #[serde(rename = "AbsHTTPReq")]
    AbsHttpReq,
    #[serde(rename = "AbsSQL")]
    AbsSql,
}

impl TreeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TreeTag::HttpReq => "HTTPReq",
            TreeTag::Sql => "SQL",
            TreeTag::Ua => "UA",
            TreeTag::AbsHttpReq => "AbsHTTPReq",
            TreeTag::AbsSql => "AbsSQL",
        }
    }

    pub fn is_abstract(self) -> bool {
        matches!(self, TreeTag::AbsHttpReq | TreeTag::AbsSql)
    }
}

impl fmt::Display for TreeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreeTag {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        Ok(match s {
            "HTTPReq" => TreeTag::HttpReq,
            "SQL" => TreeTag::Sql,
            "UA" => TreeTag::Ua,
            "AbsHTTPReq" => TreeTag::AbsHttpReq,
            "AbsSQL" => TreeTag::AbsSql,
            other => {
                return Err(ParseError::Validation(format!(
                    "unknown tree tag {other:?}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Root,
    NTerm,
    Term,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Root => crate::labels::ROOT,
            NodeKind::NTerm => crate::labels::NTERM,
            NodeKind::Term => crate::labels::TERM,
        }
    }
}

macro_rules! roles {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Syntactic position of a tree node.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum Role {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl Role {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Role::$variant => $name,)*
                }
            }
        }

        impl FromStr for Role {
            type Err = ParseError;

            fn from_str(s: &str) -> Result<Self, ParseError> {
                match s {
                    $($name => Ok(Role::$variant),)*
                    other => Err(ParseError::Validation(format!("unknown role {other:?}"))),
                }
            }
        }
    };
}

roles! {
    Root => "root",
    Group => "group",
    // HTTP
    Method => "method",
    Path => "path",
    HeaderPair => "header",
    CookiePair => "cookie",
    ParamPair => "param",
    Name => "name",
    HeaderValue => "header_value",
    CookieValue => "cookie_value",
    ParamValue => "param_value",
    ContentType => "content_type",
    Boundary => "boundary",
    JsonObject => "json_object",
    JsonArray => "json_array",
    JsonKey => "json_key",
    JsonIndex => "json_index",
    JsonString => "json_string",
    JsonNumber => "json_number",
    JsonBool => "json_bool",
    JsonNull => "json_null",
    Opaque => "opaque",
    OpaqueBase64 => "opaque_b64",
    // SQL
    Keyword => "keyword",
    Table => "table",
    Column => "column",
    Operator => "operator",
    Assign => "assign",
    Comparison => "comparison",
    InList => "in_list",
    And => "and",
    Or => "or",
    StrLiteral => "str_literal",
    NumLiteral => "num_literal",
    NullLiteral => "null_literal",
    SqlText => "sql_text",
    // user actions
    ActionType => "action_type",
    Element => "element",
    Input => "input",
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub role: Role,
    pub symbol: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn term(role: Role, symbol: impl Into<String>) -> Self {
        TreeNode {
            kind: NodeKind::Term,
            role,
            symbol: symbol.into(),
            children: Vec::new(),
        }
    }

    pub fn nterm(role: Role, symbol: impl Into<String>, children: Vec<TreeNode>) -> Self {
        TreeNode {
            kind: NodeKind::NTerm,
            role,
            symbol: symbol.into(),
            children,
        }
    }

    pub fn group(symbol: &str, children: Vec<TreeNode>) -> Self {
        TreeNode::nterm(Role::Group, symbol, children)
    }

    fn count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::count).sum::<usize>()
    }

    /// The name term of a pair node.
    pub fn pair_name(&self) -> Option<&str> {
        self.children
            .first()
            .filter(|c| c.kind == NodeKind::Term)
            .map(|c| c.symbol.as_str())
    }

    fn write_fingerprint(&self, out: &mut String) {
        let kind = match self.kind {
            NodeKind::Root => 'R',
            NodeKind::NTerm => 'N',
            NodeKind::Term => 'T',
        };
        out.push(kind);
        out.push_str(self.role.as_str());
        out.push(':');
        // JSON string quoting escapes every delimiter used below
        out.push_str(&serde_json::to_string(&self.symbol).expect("string serializes"));
        if !self.children.is_empty() {
            out.push('(');
            for (i, child) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                child.write_fingerprint(out);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseTree {
    pub tag: TreeTag,
    pub root: TreeNode,
}

/// Which HTTP header values count as volatile and are abstracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionConfig {
    /// Header names, compared case-insensitively.
    pub volatile_headers: Vec<String>,
    /// Header name prefixes, compared case-insensitively.
    pub volatile_header_prefixes: Vec<String>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            volatile_headers: vec!["content-length".into(), "cookie".into()],
            volatile_header_prefixes: vec!["x-".into()],
        }
    }
}

impl AbstractionConfig {
    pub fn is_volatile_header(&self, name: &str) -> bool {
        let lower = name.to_ascii_lowercase();
        self.volatile_headers
            .iter()
            .any(|h| h.eq_ignore_ascii_case(&lower))
            || self
                .volatile_header_prefixes
                .iter()
                .any(|p| lower.starts_with(&p.to_ascii_lowercase()))
    }
}

/// An abstractable terminal located by pre-order index.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSite<'a> {
    pub preorder: usize,
    pub name: String,
    pub node: &'a TreeNode,
}

impl ParseTree {
    pub fn new(tag: TreeTag, children: Vec<TreeNode>) -> Self {
        ParseTree {
            tag,
            root: TreeNode {
                kind: NodeKind::Root,
                role: Role::Root,
                symbol: tag.as_str().to_owned(),
                children,
            },
        }
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    /// Terminal symbols in pre-order.
    pub fn terms(&self) -> Vec<&str> {
        fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a str>) {
            if n.kind == NodeKind::Term {
                out.push(&n.symbol);
            }
            for c in &n.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Canonical pre-order serialization; equal strings iff equal trees.
    pub fn fingerprint(&self) -> String {
        let mut out = String::new();
        self.root.write_fingerprint(&mut out);
        out
    }

    /// Replaces every abstractable terminal with [`PLACEHOLDER`].
    pub fn abstract_tree(&self, config: &AbstractionConfig) -> Result<ParseTree, ParseError> {
        let tag = match self.tag {
            TreeTag::HttpReq | TreeTag::AbsHttpReq => TreeTag::AbsHttpReq,
            TreeTag::Sql | TreeTag::AbsSql => TreeTag::AbsSql,
            // user actions have no abstract tag of their own
            TreeTag::Ua => TreeTag::Ua,
        };
        let mut out = self.clone();
        out.tag = tag;
        out.root.symbol = tag.as_str().to_owned();
        let sites: Vec<usize> = self
            .value_sites(config)
            .iter()
            .map(|s| s.preorder)
            .collect();
        let mut index = 0usize;
        blank(&mut out.root, &sites, &mut index);
        Ok(out)
    }

    /// Every abstractable terminal with its variable name (slash-joined path
    /// from the root, pair nodes contributing their parameter name).
    pub fn value_sites(&self, config: &AbstractionConfig) -> Vec<ValueSite<'_>> {
        let mut out = Vec::new();
        let mut index = 0usize;
        let mut path = Vec::new();
        collect_sites(&self.root, None, config, &mut path, &mut index, &mut out);
        for site in &mut out {
            if site.name.is_empty() {
                site.name = self.root_level_name(site.node);
            }
        }
        out
    }

    fn root_level_name(&self, node: &TreeNode) -> String {
        match node.role {
            Role::Input => {
                let element = self
                    .root
                    .children
                    .iter()
                    .find(|c| c.role == Role::Element)
                    .map(|c| c.symbol.as_str());
                match element {
                    Some(e) => format!("input/{e}"),
                    None => "input".to_owned(),
                }
            }
            other => other.as_str().to_owned(),
        }
    }

    pub fn is_abstract(&self) -> bool {
        self.tag.is_abstract()
    }
}

fn blank(node: &mut TreeNode, sites: &[usize], index: &mut usize) {
    if sites.binary_search(index).is_ok() {
        node.symbol = PLACEHOLDER.to_owned();
    }
    *index += 1;
    for child in &mut node.children {
        blank(child, sites, index);
    }
}

/// Path contribution of an inner node, if any.
fn path_component(node: &TreeNode) -> Option<String> {
    match node.role {
        Role::Group | Role::JsonKey | Role::JsonIndex => Some(node.symbol.clone()),
        Role::ParamPair | Role::HeaderPair | Role::Assign | Role::Comparison => {
            node.pair_name().map(str::to_owned)
        }
        Role::CookiePair => node.pair_name().map(|n| format!("cookie/{n}")),
        _ => None,
    }
}

fn is_abstractable(node: &TreeNode, parent: Option<&TreeNode>, config: &AbstractionConfig) -> bool {
    if node.kind != NodeKind::Term {
        return false;
    }
    match node.role {
        Role::ParamValue
        | Role::CookieValue
        | Role::JsonString
        | Role::JsonNumber
        | Role::JsonBool
        | Role::JsonNull
        | Role::Boundary
        | Role::Opaque
        | Role::OpaqueBase64
        | Role::StrLiteral
        | Role::NumLiteral
        | Role::NullLiteral
        | Role::Input => true,
        Role::HeaderValue => parent
            .and_then(TreeNode::pair_name)
            .is_some_and(|name| config.is_volatile_header(name)),
        _ => false,
    }
}

fn collect_sites<'a>(
    node: &'a TreeNode,
    parent: Option<&'a TreeNode>,
    config: &AbstractionConfig,
    path: &mut Vec<String>,
    index: &mut usize,
    out: &mut Vec<ValueSite<'a>>,
) {
    let here = *index;
    *index += 1;
    if is_abstractable(node, parent, config) {
        let mut name = path.join("/");
        if node.role == Role::Boundary {
            if !name.is_empty() {
                name.push('/');
            }
            name.push_str("boundary");
        }
        out.push(ValueSite {
            preorder: here,
            name,
            node,
        });
        return;
    }
    let component = if node.kind == NodeKind::Root {
        None
    } else {
        path_component(node)
    };
    let pushed = component.map(|c| path.push(c)).is_some();
    for child in &node.children {
        collect_sites(child, Some(node), config, path, index, out);
    }
    if pushed {
        path.pop();
    }
}

impl fmt::Display for ParseTree {
    /// Compact human-readable rendering: SQL trees print as SQL text, other
    /// trees as their terminal sequence.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag {
            TreeTag::Sql | TreeTag::AbsSql => f.write_str(&sql::render(self)),
            _ => {
                let mut out = String::new();
                for (i, t) in self.terms().iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{t}");
                }
                f.write_str(&out)
            }
        }
    }
}
