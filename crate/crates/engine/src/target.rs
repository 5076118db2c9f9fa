use std::collections::BTreeMap;
use std::time::Duration;

use deemon_core::parse::{HttpRequestRaw, PLACEHOLDER};
use reqwest::blocking::{Client, Response};
use reqwest::redirect::Policy;
use serde::{Deserialize, Serialize};

use crate::{EngineError, Result};

pub const REQUEST_ID_HEADER: &str = "X-Deemon-Request-Id";
const PROBE_ID: &str = "deemon-probe";
/// Headers recomputed by the client rather than replayed.
const SKIPPED_HEADERS: &[&str] = &[
    "cookie",
    "host",
    "content-length",
    "content-type",
    "connection",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub snapshot: bool,
    pub restore: bool,
    pub query_log: bool,
    /// Optional fixture endpoint used to cross-check verdicts.
    pub state_hash: bool,
}

/// Cookies set by the target, by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CookieJar(pub BTreeMap<String, String>);

impl CookieJar {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.0.values().map(String::as_str)
    }

    fn absorb(&mut self, res: &Response) {
        for value in res.headers().get_all("set-cookie") {
            let text = value.to_str().unwrap_or_default();
            if let Some((name, value)) = text.split(';').next().and_then(|p| p.split_once('=')) {
                self.0
                    .insert(name.trim().to_owned(), value.trim().to_owned());
            }
        }
    }

    /// Cookie header for a request: its concrete cookies, with placeholders
    /// dropped, then everything in the jar.
    pub fn header_for(&self, req: &HttpRequestRaw) -> Option<String> {
        let mut cookies: BTreeMap<String, String> = req
            .headers
            .iter()
            .filter(|(n, _)| n.eq_ignore_ascii_case("cookie"))
            .flat_map(|(_, v)| v.split(';'))
            .filter_map(|p| p.trim().split_once('='))
            .filter(|(_, v)| *v != PLACEHOLDER)
            .map(|(n, v)| (n.to_owned(), v.to_owned()))
            .collect();
        cookies.extend(self.0.clone());
        (!cookies.is_empty()).then(|| {
            cookies
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect::<Vec<_>>()
                .join("; ")
        })
    }
}

/// A target whose sensor answered the startup probe.
#[derive(Debug, Clone)]
pub struct TargetHandle {
    pub base_url: String,
    pub sensor_url: String,
    pub capabilities: Capabilities,
    client: Client,
}

impl TargetHandle {
    /// Checks that the sensor serves query logs. Snapshot and restore
    /// cannot be probed without side effects and are assumed.
    pub fn probe(base_url: &str, sensor_url: &str) -> Result<TargetHandle> {
        let client = Client::builder()
            .redirect(Policy::none())
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let mut handle = TargetHandle {
            base_url: base_url.trim_end_matches('/').to_owned(),
            sensor_url: sensor_url.trim_end_matches('/').to_owned(),
            capabilities: Capabilities {
                snapshot: true,
                restore: true,
                query_log: false,
                state_hash: false,
            },
            client,
        };
        handle
            .queries(PROBE_ID)
            .map_err(|e| EngineError::Probe(e.to_string()))?;
        handle.capabilities.query_log = true;
        handle.capabilities.state_hash = handle.state_hash().is_ok_and(|h| h.is_some());
        Ok(handle)
    }

    fn control(&self, action: &str) -> Result<()> {
        let url = format!("{}/{action}", self.sensor_url);
        let res = self
            .client
            .post(&url)
            .send()
            .map_err(|e| EngineError::Control(format!("{action}: {e}")))?;
        if !res.status().is_success() {
            return Err(EngineError::Control(format!(
                "{action} returned {}",
                res.status()
            )));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<()> {
        self.control("snapshot")
    }

    pub fn restore(&self) -> Result<()> {
        self.control("restore")
    }

    /// SQL executed while serving the request with this id, in order.
    pub fn queries(&self, request_id: &str) -> Result<Vec<String>> {
        self.client
            .get(format!("{}/queries", self.sensor_url))
            .query(&[("request_id", request_id)])
            .send()
            .and_then(Response::error_for_status)
            .and_then(|r| r.json::<Vec<String>>())
            .map_err(|e| EngineError::Sensor(e.to_string()))
    }

    /// The fixture state hash, when the target offers one.
    pub fn state_hash(&self) -> Result<Option<String>> {
        let res = self
            .client
            .get(format!("{}/state_hash", self.sensor_url))
            .send()
            .map_err(|e| EngineError::Sensor(e.to_string()))?;
        if !res.status().is_success() {
            return Ok(None);
        }
        let body: serde_json::Value = res.json().map_err(|e| EngineError::Sensor(e.to_string()))?;
        Ok(body["state_hash"].as_str().map(str::to_owned))
    }

    /// Sends a recorded or generated request with the jar's cookies and the
    /// given request id, folding returned cookies into the jar.
    pub fn send(&self, req: &HttpRequestRaw, jar: &mut CookieJar, request_id: &str) -> Result<u16> {
        let method = reqwest::Method::from_bytes(req.method.as_bytes())
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let mut call = self
            .client
            .request(method, format!("{}{}", self.base_url, req.url))
            .header(REQUEST_ID_HEADER, request_id);
        for (n, v) in &req.headers {
            if !SKIPPED_HEADERS.iter().any(|s| n.eq_ignore_ascii_case(s)) {
                call = call.header(n, v);
            }
        }
        if let Some(cookie) = jar.header_for(req) {
            call = call.header("Cookie", cookie);
        }
        let content_type = req.effective_content_type();
        if !content_type.is_empty() {
            call = call.header("Content-Type", content_type);
        }
        if !req.body.is_empty() {
            call = call.body(req.body.clone());
        }
        let res = call
            .send()
            .map_err(|e| EngineError::Transport(format!("{} {}: {e}", req.method, req.url)))?;
        jar.absorb(&res);
        Ok(res.status().as_u16())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cookie_header_fills_placeholders_from_jar() {
        let req = HttpRequestRaw::new("POST", "/x")
            .header("Cookie", &format!("SESSION={PLACEHOLDER}; lang=en"));
        let mut jar = CookieJar::default();
        assert_eq!(jar.header_for(&req).as_deref(), Some("lang=en"));
        jar.0.insert("SESSION".into(), "fresh".into());
        assert_eq!(
            jar.header_for(&req).as_deref(),
            Some("SESSION=fresh; lang=en")
        );
        assert_eq!(
            jar.header_for(&HttpRequestRaw::new("GET", "/")).as_deref(),
            Some("SESSION=fresh")
        );
        assert_eq!(
            CookieJar::default().header_for(&HttpRequestRaw::new("GET", "/")),
            None
        );
    }
}
