//! Reasoning backends: the interchangeable component that turns a skill
//! request into raw text.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Environment variable holding the remote backend credential.
pub const CREDENTIAL_ENV: &str = "CREEPDB_BACKEND_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub skill: String,
    pub instruction: String,
    pub context: Value,
    pub tools: Vec<String>,
    pub schema: String,
    pub attempt: u32,
    /// Zero-based index of this call within one skill invocation.
    pub exchange: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no scripted reply for skill '{skill}' and key '{key}'")]
    NoScript { skill: String, key: String },
    #[error("backend reported an error: {0}")]
    Reported(String),
    #[error("invalid backend spec '{0}'")]
    InvalidSpec(String),
}

pub trait ReasoningBackend: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

/// Returns the request context as JSON text.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl ReasoningBackend for EchoBackend {
    fn name(&self) -> String {
        "echo".into()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        Ok(request.context.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptLine {
    skill: String,
    key: String,
    responses: Vec<Value>,
}

/// Deterministic replies keyed by (skill, document id or query). The reply
/// for exchange `k` is the `k`-th listed response, or the last one when the
/// list is shorter. A response `{"$error": "..."}` simulates a backend failure.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: BTreeMap<(String, String), Vec<Value>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut b = ScriptedBackend::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: ScriptLine = serde_json::from_str(line)
                .map_err(|e| BackendError::InvalidSpec(format!("line {}: {e}", n + 1)))?;
            b.replies.insert((l.skill, l.key), l.responses);
        }
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn insert(&mut self, skill: &str, key: &str, responses: Vec<Value>) {
        self.replies.insert((skill.to_string(), key.to_string()), responses);
    }

    pub fn key_of(context: &Value) -> String {
        ["bundle_id", "query"]
            .iter()
            .find_map(|k| context.get(*k).and_then(|v| v.as_str()))
            .unwrap_or_default()
            .to_string()
    }
}

impl ReasoningBackend for ScriptedBackend {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let key = Self::key_of(&request.context);
        let list = self
            .replies
            .get(&(request.skill.clone(), key.clone()))
            .filter(|l| !l.is_empty())
            .ok_or_else(|| BackendError::NoScript {
                skill: request.skill.clone(),
                key,
            })?;
        let reply = &list[(request.exchange as usize).min(list.len() - 1)];
        if let Some(msg) = reply.get("$error") {
            return Err(BackendError::Reported(msg.as_str().unwrap_or("scripted failure").to_string()));
        }
        Ok(match reply {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

/// Client for an OpenAI-compatible chat completion service.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    credential: Option<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, model: &str, timeout: Duration) -> Self {
        RemoteBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            timeout,
            credential: std::env::var(CREDENTIAL_ENV).ok(),
        }
    }

    pub fn request_body(&self, request: &BackendRequest) -> Value {
        let system = format!(
            "{}\n\nAllowed tools: {}. To call a tool reply only with {{\"tool_call\": {{\"name\": ..., \"arguments\": {{...}}}}}}.\nReply with output matching this schema:\n{}",
            request.instruction,
            if request.tools.is_empty() { "none".to_string() } else { request.tools.join(", ") },
            request.schema
        );
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": request.context.to_string()},
            ],
        })
    }
}

impl ReasoningBackend for RemoteBackend {
    fn name(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut call = agent.post(&format!("{}/chat/completions", self.endpoint));
        if let Some(token) = &self.credential {
            call = call.set("Authorization", &format!("Bearer {token}"));
        }
        let resp: Value = call
            .send_json(self.request_body(request))
            .map_err(|e| BackendError::Unavailable(e.to_string()))?
            .into_json()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        resp.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Reported("response has no message content".into()))
    }
}

/// Build a backend from `echo`, `scripted:<path>` or `remote:<url>`.
pub fn backend_from_spec(spec: &str, model: &str, timeout: Duration) -> Result<Box<dyn ReasoningBackend>, BackendError> {
    if spec == "echo" {
        return Ok(Box::new(EchoBackend));
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::load(Path::new(path))?));
    }
    if let Some(url) = spec.strip_prefix("remote:") {
        return Ok(Box::new(RemoteBackend::new(url, model, timeout)));
    }
    Err(BackendError::InvalidSpec(spec.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(skill: &str, context: Value, exchange: u32) -> BackendRequest {
        BackendRequest {
            skill: skill.into(),
            instruction: String::new(),
            context,
            tools: vec![],
            schema: String::new(),
            attempt: 1,
            exchange,
        }
    }

    #[test]
    fn scripted_indexes_by_exchange() {
        let b = ScriptedBackend::from_jsonl(
            r#"{"skill":"s","key":"d1","responses":["first",{"a":1}]}
{"skill":"s","key":"d2","responses":[{"$error":"down"}]}"#,
        )
        .unwrap();
        let c = json!({"bundle_id": "d1"});
        assert_eq!(b.complete(&req("s", c.clone(), 0)).unwrap(), "first");
        assert_eq!(b.complete(&req("s", c.clone(), 1)).unwrap(), r#"{"a":1}"#);
        assert_eq!(b.complete(&req("s", c, 5)).unwrap(), r#"{"a":1}"#);
        assert_eq!(
            b.complete(&req("s", json!({"bundle_id": "d2"}), 0)),
            Err(BackendError::Reported("down".into()))
        );
        assert!(matches!(
            b.complete(&req("s", json!({"bundle_id": "d3"}), 0)),
            Err(BackendError::NoScript { .. })
        ));
    }

    #[test]
    fn echo_returns_context() {
        let out = EchoBackend.complete(&req("x", json!({"query": "creep"}), 0)).unwrap();
        assert_eq!(out, r#"{"query":"creep"}"#);
    }

    #[test]
    fn spec_parsing() {
        assert!(backend_from_spec("echo", "m", Duration::from_secs(1)).is_ok());
        assert!(backend_from_spec("remote:http://localhost:1", "m", Duration::from_secs(1)).is_ok());
        assert!(matches!(
            backend_from_spec("bogus", "m", Duration::from_secs(1)),
            Err(BackendError::InvalidSpec(_))
        ));
    }

    #[test]
    fn remote_body_carries_schema_and_tools() {
        let b = RemoteBackend::new("http://h/v1/", "m", Duration::from_secs(1));
        let mut r = req("x", json!({"k": 1}), 0);
        r.tools = vec!["read_pages".into()];
        r.schema = "{has_data: boolean}".into();
        let body = b.request_body(&r);
        let sys = body["messages"][0]["content"].as_str().unwrap();
        assert!(sys.contains("read_pages") && sys.contains("has_data"));
        assert_eq!(b.endpoint, "http://h/v1");
    }
}
