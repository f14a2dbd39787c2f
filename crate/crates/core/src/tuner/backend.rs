//! Chat-completion backends and the schema-checked decision path.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{rule_decide, ControlLogSummary, TuningDecision};

pub const ENDPOINT_VAR: &str = "UUVLAB_LLM_ENDPOINT";
pub const KEY_VAR: &str = "UUVLAB_LLM_KEY";
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(10);

const SYSTEM_PROMPT: &str = "You tune an underwater vehicle attitude controller. Each channel \
(roll, pitch, yaw, depth) runs an adaptive S-surface law with gains zeta1 (stiffness), zeta2 \
(damping) and alpha (adaptation rate). Reply with exactly one JSON object and nothing else: \
{\"channel\": \"roll|pitch|yaw|depth\", \"parameter\": \"zeta1|zeta2|alpha\", \
\"direction\": \"increase|decrease|hold\", \"scale\": 2.0|1.5|1.0|0.67|0.5, \"rationale\": \"...\"}. \
Use 2.0 or 0.5 for major changes, 1.5 or 0.67 for refinements, and 1.0 only with hold.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage { role: role.into(), content: content.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend not configured: {0}")]
    NotConfigured(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("scripted responses exhausted")]
    Exhausted,
}

/// Anything that turns a message list into the assistant's reply text.
pub trait ChatBackend {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

/// POSTs `{"messages": [...]}` with a bearer token.
pub struct HttpBackend {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &str, key: Option<String>, deadline: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(deadline).build();
        HttpBackend { endpoint: endpoint.to_string(), key, agent }
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env(deadline: Duration) -> Result<Self, BackendError> {
        let endpoint = std::env::var(ENDPOINT_VAR).map_err(|_| BackendError::NotConfigured(format!("{ENDPOINT_VAR} is not set")))?;
        Ok(Self::new(&endpoint, std::env::var(KEY_VAR).ok(), deadline))
    }
}

/// Pulls the reply text out of common response shapes: an OpenAI-style
/// `choices[0].message.content`, a top-level `content` string, or the body
/// itself.
fn reply_text(body: &str) -> String {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(body) {
        if let Some(c) = v.pointer("/choices/0/message/content").and_then(|c| c.as_str()) {
            return c.to_string();
        }
        if let Some(c) = v.get("content").and_then(|c| c.as_str()) {
            return c.to_string();
        }
    }
    body.to_string()
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(k) = &self.key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        let body = serde_json::json!({ "messages": messages });
        match req.send_string(&body.to_string()) {
            Ok(resp) => resp.into_string().map(|b| reply_text(&b)).map_err(|e| classify_io(&e)),
            Err(ureq::Error::Status(code, _)) => Err(BackendError::Status(code)),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(BackendError::Timeout)
                } else {
                    Err(BackendError::Transport(msg))
                }
            }
        }
    }
}

fn classify_io(e: &std::io::Error) -> BackendError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => BackendError::Timeout,
        _ => BackendError::Transport(e.to_string()),
    }
}

/// Scripted replies, consumed in order. The script file is a JSON array;
/// string entries are returned verbatim, object entries are returned as
/// their JSON text, and `{"$error": "timeout" | "transport"}` simulates a
/// failed call.
pub struct MockBackend {
    replies: Mutex<VecDeque<serde_json::Value>>,
}

impl MockBackend {
    pub fn new(replies: Vec<serde_json::Value>) -> Self {
        MockBackend { replies: Mutex::new(replies.into()) }
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let v: Vec<serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: expected a JSON array of replies: {e}", path.display()))?;
        Ok(Self::new(v))
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("mock lock").len()
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let next = self.replies.lock().expect("mock lock").pop_front().ok_or(BackendError::Exhausted)?;
        match next {
            serde_json::Value::String(s) => Ok(s),
            serde_json::Value::Object(ref o) if o.contains_key("$error") => match o["$error"].as_str() {
                Some("timeout") => Err(BackendError::Timeout),
                other => Err(BackendError::Transport(format!("scripted failure {other:?}"))),
            },
            v => Ok(v.to_string()),
        }
    }
}

/// Parses a reply into one validated decision.
pub fn parse_decision(reply: &str) -> Result<TuningDecision, String> {
    let start = reply.find('{').ok_or("reply contains no JSON object")?;
    let end = reply.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    let d: TuningDecision = serde_json::from_str(&reply[start..=end]).map_err(|e| format!("schema: {e}"))?;
    d.validate().map_err(|e| e.to_string())?;
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DecisionSource {
    Rule,
    Backend,
    Fallback { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Vec<ChatMessage>,
    pub response: Result<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub decisions: Vec<TuningDecision>,
    pub source: DecisionSource,
    pub exchanges: Vec<Exchange>,
}

/// Asks the backend for one decision. Invalid replies get one retry;
/// transport failures and a second invalid reply fall back to the rule
/// table with a logged warning.
pub fn llm_decide(s: &ControlLogSummary, backend: &dyn ChatBackend, target_mse: f64) -> LlmOutcome {
    let mut messages = vec![
        ChatMessage::new("system", SYSTEM_PROMPT),
        ChatMessage::new("user", format!("target mse per channel: {target_mse}\n{}", s.render())),
    ];
    let mut exchanges = Vec::new();
    let mut last_problem = String::new();
    for attempt in 0..2 {
        let reply = backend.complete(&messages);
        exchanges.push(Exchange { request: messages.clone(), response: reply.clone().map_err(|e| e.to_string()) });
        match reply {
            Err(e) => {
                last_problem = format!("{} backend failed: {e}", backend.name());
                break;
            }
            Ok(text) => match parse_decision(&text) {
                Ok(d) => return LlmOutcome { decisions: vec![d], source: DecisionSource::Backend, exchanges },
                Err(problem) => {
                    last_problem = format!("invalid reply on attempt {}: {problem}", attempt + 1);
                    messages.push(ChatMessage::new("assistant", text));
                    messages.push(ChatMessage::new(
                        "user",
                        format!("That reply was rejected ({problem}). Reply with exactly one valid JSON object."),
                    ));
                }
            },
        }
    }
    log::warn!("{last_problem}; falling back to rule decisions");
    LlmOutcome { decisions: rule_decide(s, target_mse), source: DecisionSource::Fallback { reason: last_problem }, exchanges }
}
