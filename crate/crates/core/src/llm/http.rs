use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, LlmBackend, LlmError, Role};

pub const URL_ENV: &str = "AUTOCT_LLM_URL";
pub const KEY_ENV: &str = "AUTOCT_LLM_KEY";

/// OpenAI-compatible `/chat/completions` client.
///
/// Tool observations are sent as user turns since the loop does not use
/// the provider's function-calling API.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    attempts: u32,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
            attempts: 3,
        }
    }

    /// Reads the endpoint and key from the given environment variables.
    pub fn from_env(url_var: &str, key_var: &str) -> Result<Self, LlmError> {
        let url = std::env::var(url_var).map_err(|_| LlmError::Backend(format!("{url_var} is not set")))?;
        Ok(Self::new(url, std::env::var(key_var).ok()))
    }

    pub fn from_default_env() -> Result<Self, LlmError> {
        Self::from_env(URL_ENV, KEY_ENV)
    }

    fn body(request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system})];
        for m in &request.messages {
            let role = match m.role {
                Role::Assistant => "assistant",
                Role::User | Role::Tool => "user",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": messages,
        })
    }

    fn once(&self, body: &Value) -> Result<String, String> {
        let mut req = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let json: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        json.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("response has no choices[0].message.content: {json}"))
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = Self::body(request);
        let mut last = String::new();
        for attempt in 0..self.attempts {
            match self.once(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "chat completion failed");
                    last = e;
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                }
            }
        }
        Err(LlmError::Backend(last))
    }
}
