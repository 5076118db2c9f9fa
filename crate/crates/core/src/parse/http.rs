//! HTTP request parse trees.
//!
//! Tree layout (groups are `NTerm`s with [`Role::Group`]):
//!
//! ```text
//! Root(HTTPReq)
//!   Term method
//!   res         -> Term path
//!   hdr.-list   -> header(name, value) | cookie(name, value) ...
//!   url-params  -> param(name, value) ...            (only with a query string)
//!   body        -> Term content type, then one of
//!                  param(name, value) ...            (form-urlencoded)
//!                  Term boundary, param(...) ...     (multipart/form-data)
//!                  JSON value expansion              (application/json)
//!                  Term opaque                       (anything else)
//! ```

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{NodeKind, ParseError, ParseTree, Role, TreeNode, TreeTag};

pub const GROUP_RESOURCE: &str = "res";
pub const GROUP_HEADERS: &str = "hdr.-list";
pub const GROUP_URL_PARAMS: &str = "url-params";
pub const GROUP_BODY: &str = "body";

const FORM: &str = "application/x-www-form-urlencoded";
const MULTIPART: &str = "multipart/form-data";

/// A raw HTTP request as recorded in traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequestRaw {
    pub method: String,
    /// Path plus optional query string.
    pub url: String,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    #[serde(rename = "body_b64", default, with = "b64")]
    pub body: Vec<u8>,
    #[serde(default)]
    pub content_type: String,
}

mod b64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

impl HttpRequestRaw {
    pub fn new(method: &str, url: &str) -> Self {
        HttpRequestRaw {
            method: method.to_owned(),
            url: url.to_owned(),
            headers: Vec::new(),
            body: Vec::new(),
            content_type: String::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_owned(), value.to_owned()));
        self
    }

    pub fn body(mut self, content_type: &str, body: Vec<u8>) -> Self {
        self.content_type = content_type.to_owned();
        self.body = body;
        self
    }

    pub fn form_body(self, body: &str) -> Self {
        self.body(FORM, body.as_bytes().to_vec())
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn path(&self) -> &str {
        self.url.split('?').next().unwrap_or_default()
    }

    /// Content type from the dedicated field, falling back to the header.
    pub fn effective_content_type(&self) -> &str {
        if self.content_type.is_empty() {
            self.header_value("content-type").unwrap_or_default()
        } else {
            &self.content_type
        }
    }

    /// Request line and headers in wire form, body appended when it is text.
    pub fn to_wire_text(&self) -> String {
        let mut out = format!("{} {} HTTP/1.1\r\n", self.method, self.url);
        for (n, v) in &self.headers {
            out.push_str(&format!("{n}: {v}\r\n"));
        }
        if !self.content_type.is_empty() && self.header_value("content-type").is_none() {
            out.push_str(&format!("Content-Type: {}\r\n", self.content_type));
        }
        out.push_str("\r\n");
        out.push_str(&String::from_utf8_lossy(&self.body));
        out
    }
}

fn pair(role: Role, value_role: Role, name: &str, value: &str) -> TreeNode {
    let symbol = match role {
        Role::HeaderPair => "header",
        Role::CookiePair => "cookie",
        _ => "param",
    };
    TreeNode::nterm(
        role,
        symbol,
        vec![
            TreeNode::term(Role::Name, name),
            TreeNode::term(value_role, value),
        ],
    )
}

fn mime_essence(content_type: &str) -> String {
    content_type
        .split(';')
        .next()
        .unwrap_or_default()
        .trim()
        .to_ascii_lowercase()
}

fn content_type_param(content_type: &str, key: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|part| {
        let (k, v) = part.split_once('=')?;
        k.trim()
            .eq_ignore_ascii_case(key)
            .then(|| v.trim().trim_matches('"').to_owned())
    })
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b))
}

/// Parses a raw request into its parse tree.
pub fn parse_http_request(raw: &HttpRequestRaw) -> Result<ParseTree, ParseError> {
    if !is_token(&raw.method) {
        return Err(ParseError::http(
            "request line",
            format!("invalid method {:?}", raw.method),
        ));
    }
    if !raw.url.starts_with('/') || raw.url.contains(char::is_whitespace) || raw.url.contains('#') {
        return Err(ParseError::http(
            "request line",
            format!("invalid request target {:?}", raw.url),
        ));
    }
    let (path, query) = match raw.url.split_once('?') {
        Some((p, q)) => (p, Some(q)),
        None => (raw.url.as_str(), None),
    };

    let mut seen = std::collections::HashSet::new();
    let mut headers = Vec::new();
    for (name, value) in &raw.headers {
        if !is_token(name) {
            return Err(ParseError::http(
                "headers",
                format!("invalid header name {name:?}"),
            ));
        }
        if !seen.insert(name.to_ascii_lowercase()) {
            return Err(ParseError::http(
                "headers",
                format!("duplicate header {name:?}"),
            ));
        }
        if name.eq_ignore_ascii_case("content-type") {
            continue;
        }
        if name.eq_ignore_ascii_case("cookie") {
            for cookie in value.split(';').map(str::trim).filter(|c| !c.is_empty()) {
                let (n, v) = cookie.split_once('=').unwrap_or((cookie, ""));
                headers.push(pair(
                    Role::CookiePair,
                    Role::CookieValue,
                    n.trim(),
                    v.trim(),
                ));
            }
        } else {
            headers.push(pair(Role::HeaderPair, Role::HeaderValue, name, value));
        }
    }

    let mut children = vec![
        TreeNode::term(Role::Method, raw.method.as_str()),
        TreeNode::group(GROUP_RESOURCE, vec![TreeNode::term(Role::Path, path)]),
        TreeNode::group(GROUP_HEADERS, headers),
    ];
    if let Some(query) = query {
        let params = form_urlencoded::parse(query.as_bytes())
            .map(|(n, v)| pair(Role::ParamPair, Role::ParamValue, &n, &v))
            .collect();
        children.push(TreeNode::group(GROUP_URL_PARAMS, params));
    }
    if !raw.body.is_empty() {
        children.push(parse_body(raw.effective_content_type(), &raw.body)?);
    }
    Ok(ParseTree::new(TreeTag::HttpReq, children))
}

fn parse_body(content_type: &str, body: &[u8]) -> Result<TreeNode, ParseError> {
    let essence = mime_essence(content_type);
    let mut children = Vec::new();
    if essence == FORM {
        children.push(TreeNode::term(Role::ContentType, content_type));
        std::str::from_utf8(body)
            .map_err(|_| ParseError::http("body", "form body is not UTF-8"))?;
        children.extend(
            form_urlencoded::parse(body)
                .map(|(n, v)| pair(Role::ParamPair, Role::ParamValue, &n, &v)),
        );
    } else if essence == "application/json" || essence.ends_with("+json") {
        children.push(TreeNode::term(Role::ContentType, content_type));
        let value: serde_json::Value = serde_json::from_slice(body)
            .map_err(|e| ParseError::http("body", format!("invalid JSON: {e}")))?;
        children.push(json_node(&value));
    } else if essence == MULTIPART {
        let boundary = content_type_param(content_type, "boundary")
            .filter(|b| !b.is_empty())
            .ok_or_else(|| ParseError::http("body", "multipart body without boundary"))?;
        children.push(TreeNode::term(Role::ContentType, MULTIPART));
        children.push(TreeNode::term(Role::Boundary, boundary.as_str()));
        for (n, v) in parse_multipart(body, &boundary)? {
            children.push(pair(Role::ParamPair, Role::ParamValue, &n, &v));
        }
    } else {
        if !content_type.is_empty() {
            children.push(TreeNode::term(Role::ContentType, content_type));
        }
        children.push(match std::str::from_utf8(body) {
            Ok(text) => TreeNode::term(Role::Opaque, text),
            Err(_) => TreeNode::term(
                Role::OpaqueBase64,
                base64::engine::general_purpose::STANDARD.encode(body),
            ),
        });
    }
    Ok(TreeNode::group(GROUP_BODY, children))
}

fn json_node(value: &serde_json::Value) -> TreeNode {
    use serde_json::Value as J;
    match value {
        J::Object(map) => TreeNode::nterm(
            Role::JsonObject,
            "{}",
            map.iter()
                .map(|(k, v)| TreeNode::nterm(Role::JsonKey, k.as_str(), vec![json_node(v)]))
                .collect(),
        ),
        J::Array(items) => TreeNode::nterm(
            Role::JsonArray,
            "[]",
            items
                .iter()
                .enumerate()
                .map(|(i, v)| TreeNode::nterm(Role::JsonIndex, i.to_string(), vec![json_node(v)]))
                .collect(),
        ),
        J::String(s) => TreeNode::term(Role::JsonString, s.as_str()),
        J::Number(n) => TreeNode::term(Role::JsonNumber, n.to_string()),
        J::Bool(b) => TreeNode::term(Role::JsonBool, b.to_string()),
        J::Null => TreeNode::term(Role::JsonNull, "null"),
    }
}

fn json_value(node: &TreeNode) -> Result<serde_json::Value, ParseError> {
    use serde_json::Value as J;
    let bad = |msg: &str| ParseError::Validation(format!("JSON tree: {msg}"));
    Ok(match node.role {
        Role::JsonObject => {
            let mut map = serde_json::Map::new();
            for key in &node.children {
                let inner = key
                    .children
                    .first()
                    .ok_or_else(|| bad("key without value"))?;
                map.insert(key.symbol.clone(), json_value(inner)?);
            }
            J::Object(map)
        }
        Role::JsonArray => J::Array(
            node.children
                .iter()
                .map(|idx| {
                    idx.children
                        .first()
                        .ok_or_else(|| bad("index without value"))
                })
                .map(|inner| inner.and_then(json_value))
                .collect::<Result<_, _>>()?,
        ),
        Role::JsonString => J::String(node.symbol.clone()),
        Role::JsonNumber => {
            serde_json::from_str(&node.symbol).map_err(|_| bad("number term is not numeric"))?
        }
        Role::JsonBool => J::Bool(node.symbol == "true"),
        Role::JsonNull => J::Null,
        _ => return Err(bad("unexpected node")),
    })
}

fn parse_multipart(body: &[u8], boundary: &str) -> Result<Vec<(String, String)>, ParseError> {
    let text = std::str::from_utf8(body)
        .map_err(|_| ParseError::http("body", "multipart body is not UTF-8"))?;
    let delimiter = format!("--{boundary}");
    let mut chunks = text.split(delimiter.as_str());
    chunks.next(); // preamble
    let mut fields = Vec::new();
    let mut closed = false;
    for chunk in chunks {
        if chunk.starts_with("--") {
            closed = true;
            break;
        }
        let chunk = chunk.strip_prefix("\r\n").unwrap_or(chunk);
        let (head, value) = chunk
            .split_once("\r\n\r\n")
            .ok_or_else(|| ParseError::http("body", "multipart part without header block"))?;
        let value = value.strip_suffix("\r\n").unwrap_or(value);
        let name = head
            .lines()
            .find(|l| l.to_ascii_lowercase().starts_with("content-disposition"))
            .and_then(|l| content_type_param(l, "name"))
            .ok_or_else(|| ParseError::http("body", "multipart part without field name"))?;
        fields.push((name, value.to_owned()));
    }
    if !closed {
        return Err(ParseError::http(
            "body",
            "multipart body without closing delimiter",
        ));
    }
    Ok(fields)
}

fn group<'a>(tree: &'a ParseTree, name: &str) -> Option<&'a TreeNode> {
    tree.root
        .children
        .iter()
        .find(|c| c.role == Role::Group && c.symbol == name)
}

fn pair_values(node: &TreeNode) -> Option<(&str, &str)> {
    match node.children.as_slice() {
        [n, v] if n.kind == NodeKind::Term && v.kind == NodeKind::Term => {
            Some((n.symbol.as_str(), v.symbol.as_str()))
        }
        _ => None,
    }
}

/// Rebuilds a raw request from a concrete HTTP parse tree. Parameter order
/// is preserved; a `Content-Length` header is recomputed from the body.
pub fn to_http_raw(tree: &ParseTree) -> Result<HttpRequestRaw, ParseError> {
    if tree.tag != TreeTag::HttpReq {
        return Err(ParseError::Validation(format!(
            "cannot rebuild a request from a {} tree",
            tree.tag
        )));
    }
    let method = tree
        .root
        .children
        .iter()
        .find(|c| c.role == Role::Method)
        .ok_or_else(|| ParseError::Validation("tree has no method".into()))?;
    let path = group(tree, GROUP_RESOURCE)
        .and_then(|g| g.children.first())
        .ok_or_else(|| ParseError::Validation("tree has no resource".into()))?;
    let mut url = path.symbol.clone();
    if let Some(params) = group(tree, GROUP_URL_PARAMS) {
        let mut ser = form_urlencoded::Serializer::new(String::new());
        for (n, v) in params.children.iter().filter_map(pair_values) {
            ser.append_pair(n, v);
        }
        url.push('?');
        url.push_str(&ser.finish());
    }

    let mut headers: Vec<(String, String)> = Vec::new();
    let mut cookie_slot: Option<usize> = None;
    let mut cookies = Vec::new();
    if let Some(hdrs) = group(tree, GROUP_HEADERS) {
        for child in &hdrs.children {
            let Some((n, v)) = pair_values(child) else {
                continue;
            };
            match child.role {
                Role::CookiePair => {
                    cookie_slot.get_or_insert(headers.len());
                    cookies.push(format!("{n}={v}"));
                }
                _ => headers.push((n.to_owned(), v.to_owned())),
            }
        }
    }
    if let Some(slot) = cookie_slot {
        headers.insert(slot, ("Cookie".to_owned(), cookies.join("; ")));
    }

    let (content_type, body) = match group(tree, GROUP_BODY) {
        Some(b) => rebuild_body(b)?,
        None => (String::new(), Vec::new()),
    };
    for (n, v) in &mut headers {
        if n.eq_ignore_ascii_case("content-length") {
            *v = body.len().to_string();
        }
    }
    Ok(HttpRequestRaw {
        method: method.symbol.clone(),
        url,
        headers,
        body,
        content_type,
    })
}

fn rebuild_body(body: &TreeNode) -> Result<(String, Vec<u8>), ParseError> {
    let content_type = body
        .children
        .iter()
        .find(|c| c.role == Role::ContentType)
        .map(|c| c.symbol.clone())
        .unwrap_or_default();
    let essence = mime_essence(&content_type);
    if let Some(boundary) = body.children.iter().find(|c| c.role == Role::Boundary) {
        let mut out = String::new();
        for (n, v) in body
            .children
            .iter()
            .filter(|c| c.role == Role::ParamPair)
            .filter_map(pair_values)
        {
            out.push_str(&format!(
                "--{}\r\nContent-Disposition: form-data; name=\"{n}\"\r\n\r\n{v}\r\n",
                boundary.symbol
            ));
        }
        out.push_str(&format!("--{}--\r\n", boundary.symbol));
        return Ok((
            format!("{content_type}; boundary={}", boundary.symbol),
            out.into_bytes(),
        ));
    }
    if essence == FORM {
        let mut ser = form_urlencoded::Serializer::new(String::new());
        for (n, v) in body
            .children
            .iter()
            .filter(|c| c.role == Role::ParamPair)
            .filter_map(pair_values)
        {
            ser.append_pair(n, v);
        }
        return Ok((content_type, ser.finish().into_bytes()));
    }
    if let Some(json) = body
        .children
        .iter()
        .find(|c| c.role != Role::ContentType && c.role.as_str().starts_with("json"))
    {
        let value = json_value(json)?;
        return Ok((
            content_type,
            serde_json::to_vec(&value).expect("JSON serializes"),
        ));
    }
    let bytes = match body
        .children
        .iter()
        .find(|c| matches!(c.role, Role::Opaque | Role::OpaqueBase64))
    {
        Some(t) if t.role == Role::OpaqueBase64 => base64::engine::general_purpose::STANDARD
            .decode(t.symbol.as_bytes())
            .map_err(|e| ParseError::Validation(format!("opaque body: {e}")))?,
        Some(t) => t.symbol.clone().into_bytes(),
        None => Vec::new(),
    };
    Ok((content_type, bytes))
}

/// Removes every parameter whose variable name equals `name` (as produced by
/// [`ParseTree::value_sites`]). Returns how many were removed.
pub fn omit_param(tree: &mut ParseTree, name: &str) -> usize {
    fn walk(node: &mut TreeNode, path: &mut Vec<String>, name: &str) -> usize {
        let mut removed = 0;
        let before = node.children.len();
        node.children.retain(|child| {
            let Some(component) = super::path_component(child) else {
                return true;
            };
            if child.role == Role::Group {
                return true;
            }
            let mut full = path.clone();
            full.push(component);
            full.join("/") != name
        });
        removed += before - node.children.len();
        for child in &mut node.children {
            let component = if child.kind == NodeKind::Root {
                None
            } else {
                super::path_component(child)
            };
            let pushed = component.map(|c| path.push(c)).is_some();
            removed += walk(child, path, name);
            if pushed {
                path.pop();
            }
        }
        removed
    }
    walk(&mut tree.root, &mut Vec::new(), name)
}

/// All `(name, value)` request parameters from the query string and a form,
/// multipart or top-level JSON object body, in order of appearance.
pub fn request_params(tree: &ParseTree) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for g in [GROUP_URL_PARAMS, GROUP_BODY] {
        let Some(node) = group(tree, g) else { continue };
        for child in &node.children {
            match child.role {
                Role::ParamPair => {
                    if let Some((n, v)) = pair_values(child) {
                        out.push((n.to_owned(), v.to_owned()));
                    }
                }
                Role::JsonObject => {
                    for key in &child.children {
                        if let Some(leaf) =
                            key.children.first().filter(|l| l.kind == NodeKind::Term)
                        {
                            out.push((key.symbol.clone(), leaf.symbol.clone()));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Cookie `(name, value)` pairs in order of appearance.
pub fn request_cookies(tree: &ParseTree) -> Vec<(String, String)> {
    group(tree, GROUP_HEADERS)
        .map(|h| {
            h.children
                .iter()
                .filter(|c| c.role == Role::CookiePair)
                .filter_map(pair_values)
                .map(|(n, v)| (n.to_owned(), v.to_owned()))
                .collect()
        })
        .unwrap_or_default()
}
