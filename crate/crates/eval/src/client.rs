//! Blocking client for OpenAI-compatible chat-completions servers.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use guidedec::decoder::{LogitSource, SourceError};
use guidedec::TokenId;

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_HINT_FIELD: &str = "guided_decoding_backend";
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    /// JSON schema the server should enforce, sent as a `json_schema`
    /// response format.
    pub response_schema: Option<Value>,
    /// Guided-decoding backend name sent in the configured extension field.
    pub backend_hint: Option<String>,
    pub temperature: Option<f32>,
    pub max_tokens: Option<u32>,
    pub timeout: Duration,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model: model.into(),
            messages,
            response_schema: None,
            backend_hint: None,
            temperature: None,
            max_tokens: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest(
                "messages must not be empty".into(),
            ));
        }
        if let Some(i) = self
            .messages
            .iter()
            .skip(1)
            .position(|m| m.role == Role::System)
        {
            return Err(ClientError::InvalidRequest(format!(
                "system message at position {} (only the first message may be a system message)",
                i + 1
            )));
        }
        Ok(())
    }

    fn is_guided(&self) -> bool {
        self.response_schema.is_some() || self.backend_hint.is_some()
    }

    /// The exact request body, fields in OpenAI wire order.
    pub fn to_wire(&self, hint_field: &str) -> String {
        let mut body = Map::new();
        body.insert("model".into(), Value::String(self.model.clone()));
        body.insert(
            "messages".into(),
            serde_json::to_value(&self.messages).expect("messages serialize"),
        );
        if let Some(t) = self.temperature {
            // Via the shortest decimal form, so 0.7 is sent as 0.7 and not as
            // its widened f64 value.
            let t: f64 = t.to_string().parse().expect("f32 display parses");
            body.insert("temperature".into(), serde_json::json!(t));
        }
        if let Some(n) = self.max_tokens {
            body.insert("max_tokens".into(), n.into());
        }
        if let Some(schema) = &self.response_schema {
            body.insert(
                "response_format".into(),
                serde_json::json!({
                    "type": "json_schema",
                    "json_schema": {"name": "response", "schema": schema, "strict": true}
                }),
            );
        }
        if let Some(h) = &self.backend_hint {
            body.insert(hint_field.into(), Value::String(h.clone()));
        }
        Value::Object(body).to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("could not connect after {attempts} attempt(s): {msg}")]
    Connect { attempts: u32, msg: String },
    #[error("server rejected the guided-decoding request (HTTP {status}): {body}")]
    SchemaRejected { status: u16, body: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
}

/// Client settings. The API key is not part of the configuration: it is
/// read from the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub hint_field: String,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            hint_field: DEFAULT_HINT_FIELD.into(),
            max_retries: DEFAULT_MAX_RETRIES,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

struct ApiKey(String);

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Shareable across threads; at most `max_in_flight` requests run at once.
#[derive(Debug)]
pub struct ChatClient {
    cfg: ClientConfig,
    key: Option<ApiKey>,
    http: reqwest::blocking::Client,
    gate: Gate,
}

impl ChatClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, ClientError> {
        let key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .map(ApiKey);
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            gate: Gate::new(cfg.max_in_flight),
            cfg,
            key,
            http,
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn has_api_key(&self) -> bool {
        self.key.is_some()
    }

    pub fn chat_url(&self) -> String {
        let base = self.cfg.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        req.validate()?;
        let body = req.to_wire(&self.cfg.hint_field);
        let started = Instant::now();
        let (status, text) = self.post(&self.chat_url(), body, req.timeout)?;
        let latency = started.elapsed();
        if status == 400 || status == 422 {
            return Err(if req.is_guided() {
                ClientError::SchemaRejected { status, body: text }
            } else {
                ClientError::Http { status, body: text }
            });
        }
        if !(200..300).contains(&status) {
            return Err(ClientError::Http { status, body: text });
        }
        parse_chat_response(&text, latency)
    }

    /// POSTs `body`, retrying timeouts and connection failures up to
    /// `max_retries` times. HTTP error statuses are returned, not retried.
    fn post(
        &self,
        url: &str,
        body: String,
        timeout: Duration,
    ) -> Result<(u16, String), ClientError> {
        let _slot = self.gate.enter();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut rb = self
                .http
                .post(url)
                .timeout(timeout)
                .header("content-type", "application/json")
                .body(body.clone());
            if let Some(k) = &self.key {
                rb = rb.bearer_auth(&k.0);
            }
            let result = rb.send().and_then(|r| {
                let status = r.status().as_u16();
                r.text().map(|t| (status, t))
            });
            match result {
                Ok(ok) => return Ok(ok),
                Err(e)
                    if attempts <= self.cfg.max_retries && (e.is_timeout() || e.is_connect()) =>
                {
                    tracing::warn!(attempt = attempts, error = %e, "retrying request");
                }
                Err(e) if e.is_timeout() => return Err(ClientError::Timeout { attempts }),
                Err(e) => {
                    return Err(ClientError::Connect {
                        attempts,
                        msg: e.to_string(),
                    })
                }
            }
        }
    }
}

pub fn parse_chat_response(text: &str, latency: Duration) -> Result<ChatResponse, ClientError> {
    #[derive(Deserialize)]
    struct Wire {
        choices: Vec<Choice>,
        #[serde(default)]
        usage: Usage,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: WireMessage,
    }
    #[derive(Deserialize)]
    struct WireMessage {
        #[serde(default)]
        content: Option<String>,
    }
    let w: Wire =
        serde_json::from_str(text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
    let first = w
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::BadResponse("no choices".into()))?;
    Ok(ChatResponse {
        text: first.message.content.unwrap_or_default(),
        usage: w.usage,
        latency,
    })
}

/// Scores from a remote service: `POST url` with `{"history": [ids]}`,
/// answered by `{"scores": [f32; vocab size]}`.
pub struct RemoteLogits {
    client: std::sync::Arc<ChatClient>,
    url: String,
    timeout: Duration,
}

impl RemoteLogits {
    pub fn new(client: std::sync::Arc<ChatClient>, url: impl Into<String>) -> Self {
        Self {
            client,
            url: url.into(),
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

impl LogitSource for RemoteLogits {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        #[derive(Deserialize)]
        struct Wire {
            scores: Vec<Option<f32>>,
        }
        let body = serde_json::json!({ "history": history }).to_string();
        let (status, text) = self
            .client
            .post(&self.url, body, self.timeout)
            .map_err(|e| SourceError::Failed(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(SourceError::Failed(format!("HTTP {status}: {text}")));
        }
        let w: Wire =
            serde_json::from_str(&text).map_err(|e| SourceError::Failed(e.to_string()))?;
        // JSON has no NaN; null stands in for it.
        Ok(w.scores
            .into_iter()
            .map(|s| s.unwrap_or(f32::NAN))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new(
            "m",
            vec![
                Message::new(Role::System, "s"),
                Message::new(Role::User, "u"),
            ],
        )
    }

    #[test]
    fn validation() {
        assert!(req().validate().is_ok());
        let mut r = req();
        r.messages.clear();
        assert!(r.validate().is_err());
        let mut r = req();
        r.messages.push(Message::new(Role::System, "late"));
        assert!(r.validate().is_err());
    }

    #[test]
    fn wire_fields_and_order() {
        let mut r = req();
        r.temperature = Some(0.0);
        r.max_tokens = Some(64);
        r.response_schema = Some(serde_json::json!({"type": "string"}));
        r.backend_hint = Some("xgrammar".into());
        assert_eq!(
            r.to_wire("guided_decoding_backend"),
            r#"{"model":"m","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}],"temperature":0.0,"max_tokens":64,"response_format":{"type":"json_schema","json_schema":{"name":"response","schema":{"type":"string"},"strict":true}},"guided_decoding_backend":"xgrammar"}"#
        );
        assert_eq!(
            req().to_wire("x"),
            r#"{"model":"m","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}]}"#
        );
    }

    #[test]
    fn urls() {
        let mut cfg = ClientConfig {
            api_key_env: "GUIDEDEC_TEST_UNSET_KEY".into(),
            ..Default::default()
        };
        cfg.endpoint = "http://h/v1/".into();
        assert_eq!(
            ChatClient::new(cfg.clone()).unwrap().chat_url(),
            "http://h/v1/chat/completions"
        );
        cfg.endpoint = "http://h/v1/chat/completions".into();
        assert_eq!(
            ChatClient::new(cfg).unwrap().chat_url(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn key_never_printed() {
        assert_eq!(
            format!("{:?}", ApiKey("sk-secret".into())),
            "ApiKey(<redacted>)"
        );
    }

    #[test]
    fn response_parsing() {
        let r = parse_chat_response(
            r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1,"total_tokens":4}}"#,
            Duration::from_millis(5),
        )
        .unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.usage.total_tokens, 4);
        assert!(parse_chat_response(r#"{"choices":[]}"#, Duration::ZERO).is_err());
    }
}
