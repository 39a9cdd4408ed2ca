//! Text-generation clients.
//!
//! A request is an ordered list of role-tagged messages and the response is
//! plain text. [`ScriptedClient`] answers from a TOML script so tests and
//! fixture runs are reproducible; [`HttpClient`] speaks a small JSON shape
//! that most hosted chat endpoints accept.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::repository::corpus::sha_hex;

/// Environment variable holding the bearer token for [`HttpClient`].
pub const API_KEY_ENV: &str = "BUGREPO_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }
}

/// Canonical text of a request; scripted rules hash and search this.
pub fn render_request(messages: &[Message]) -> String {
    let mut s = String::new();
    for m in messages {
        s.push_str("<<");
        s.push_str(&m.role);
        s.push_str(">>\n");
        s.push_str(&m.content);
        s.push('\n');
    }
    s
}

pub fn request_hash(messages: &[Message]) -> String {
    sha_hex(render_request(messages).as_bytes())
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned an unexpected payload: {0}")]
    Protocol(String),
    #[error("no scripted response matches request {0}")]
    NoScriptedResponse(String),
    #[error("client configuration: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

pub trait TextClient: Send + Sync {
    fn complete(&self, messages: &[Message]) -> Result<String, ClientError>;
}

/// One scripted answer. A rule matches when the request hash equals `hash`
/// (if given), every `contains` string occurs in the rendered request, and
/// no `excludes` string does.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptRule {
    pub name: String,
    pub hash: Option<String>,
    pub contains: Vec<String>,
    pub excludes: Vec<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, rendered: &str, hash: &str) -> bool {
        self.hash.as_deref().is_none_or(|h| h == hash)
            && self.contains.iter().all(|c| rendered.contains(c.as_str()))
            && !self.excludes.iter().any(|c| rendered.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    #[serde(rename = "rule")]
    pub rules: Vec<ScriptRule>,
    /// Answer when no rule matches; absent means the request fails.
    pub fallback: Option<String>,
}

/// Deterministic client: the response is a pure function of the request.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    script: Script,
}

impl ScriptedClient {
    pub fn new(script: Script) -> Self {
        ScriptedClient { script }
    }

    pub fn from_toml(text: &str) -> Result<Self, ClientError> {
        toml::from_str(text).map(Self::new).map_err(|e| ClientError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Name of the rule that would answer, for debugging scripts.
    pub fn matching_rule(&self, messages: &[Message]) -> Option<&str> {
        let rendered = render_request(messages);
        let hash = sha_hex(rendered.as_bytes());
        self.script.rules.iter().find(|r| r.matches(&rendered, &hash)).map(|r| r.name.as_str())
    }
}

impl TextClient for ScriptedClient {
    fn complete(&self, messages: &[Message]) -> Result<String, ClientError> {
        let rendered = render_request(messages);
        let hash = sha_hex(rendered.as_bytes());
        match self.script.rules.iter().find(|r| r.matches(&rendered, &hash)) {
            Some(r) => Ok(r.response.clone()),
            None => self.script.fallback.clone().ok_or(ClientError::NoScriptedResponse(hash)),
        }
    }
}

/// JSON-over-HTTP client.
///
/// Request body: `{"model": "...", "messages": [{"role": "...", "content": "..."}]}`.
/// Accepted responses: `{"text": "..."}` or the common
/// `{"choices": [{"message": {"content": "..."}}]}` shape.
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    max_attempts: u32,
}

impl HttpClient {
    /// Reads the bearer token from [`API_KEY_ENV`] if set.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
            max_attempts: 3,
        }
    }

    fn once(&self, messages: &[Message]) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({ "model": self.model, "messages": messages });
        let mut resp = req.send_json(&body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| ClientError::Protocol(e.to_string()))?;
        extract_text(&v).ok_or_else(|| ClientError::Protocol(format!("no text in response: {v}")))
    }
}

fn extract_text(v: &Value) -> Option<String> {
    if let Some(t) = v.get("text").and_then(Value::as_str) {
        return Some(t.to_string());
    }
    v.get("choices")?.get(0)?.get("message")?.get("content")?.as_str().map(str::to_string)
}

impl TextClient for HttpClient {
    fn complete(&self, messages: &[Message]) -> Result<String, ClientError> {
        let mut last = None;
        for attempt in 0..self.max_attempts {
            match self.once(messages) {
                Ok(t) => return Ok(t),
                Err(e) if e.is_retryable() => {
                    log::warn!("client attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| ClientError::Transport("no attempts made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_rules_match_in_order() {
        let client = ScriptedClient::from_toml(
            r#"
            [[rule]]
            name = "a"
            contains = ["alpha"]
            excludes = ["beta"]
            response = "first"

            [[rule]]
            name = "b"
            contains = ["alpha"]
            response = "second"
            "#,
        )
        .unwrap();
        assert_eq!(client.complete(&[Message::user("alpha")]).unwrap(), "first");
        assert_eq!(client.complete(&[Message::user("alpha beta")]).unwrap(), "second");
        assert!(matches!(client.complete(&[Message::user("gamma")]), Err(ClientError::NoScriptedResponse(_))));
    }

    #[test]
    fn hash_rules_are_exact() {
        let msgs = [Message::system("s"), Message::user("u")];
        let script = Script {
            rules: vec![ScriptRule { name: "h".into(), hash: Some(request_hash(&msgs)), response: "ok".into(), ..Default::default() }],
            fallback: Some("fallback".into()),
        };
        let client = ScriptedClient::new(script);
        assert_eq!(client.complete(&msgs).unwrap(), "ok");
        assert_eq!(client.complete(&[Message::user("u")]).unwrap(), "fallback");
    }

    #[test]
    fn response_shapes() {
        assert_eq!(extract_text(&json!({"text": "a"})).as_deref(), Some("a"));
        assert_eq!(extract_text(&json!({"choices": [{"message": {"content": "b"}}]})).as_deref(), Some("b"));
        assert_eq!(extract_text(&json!({"other": 1})), None);
    }
}
