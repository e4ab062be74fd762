//! Provider abstraction: a neutral request and response, a replay backend
//! reading recorded exchanges, and live vendor adapters behind the `live`
//! feature.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::agent::AgentError;
use crate::llm::context::PromptContext;
use crate::transcript::{Payload, ProviderResponse, TrialTranscript};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    /// JSON Schema of the arguments object.
    pub parameters: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSchema>,
}

impl ProviderRequest {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn system(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "system")
            .map_or("", |m| m.content.as_str())
    }
}

pub trait Provider: Send {
    /// Answers one request. `context` is the structured form the request was
    /// rendered from; network backends ignore it.
    fn complete(&mut self, request: &ProviderRequest, context: &PromptContext) -> Result<ProviderResponse, AgentError>;
}

/// Serves the exchanges recorded in a transcript, in order, checking that
/// each request matches the recorded digest.
#[derive(Clone, Debug)]
pub struct ReplayProvider {
    exchanges: Vec<(String, ProviderResponse)>,
    next: usize,
}

impl ReplayProvider {
    pub fn new(exchanges: Vec<(String, ProviderResponse)>) -> Self {
        Self { exchanges, next: 0 }
    }

    pub fn from_transcript(t: &TrialTranscript) -> Self {
        let mut ex: Vec<(u32, String, ProviderResponse)> = t
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                Payload::Exchange {
                    index,
                    request_digest,
                    response,
                    ..
                } => Some((*index, request_digest.clone(), response.clone())),
                _ => None,
            })
            .collect();
        ex.sort_by_key(|(i, _, _)| *i);
        Self::new(ex.into_iter().map(|(_, d, r)| (d, r)).collect())
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.len() - self.next
    }
}

impl Provider for ReplayProvider {
    fn complete(
        &mut self,
        request: &ProviderRequest,
        _context: &PromptContext,
    ) -> Result<ProviderResponse, AgentError> {
        let index = self.next as u32;
        let (digest, response) = self.exchanges.get(self.next).ok_or(AgentError::Exhausted(index))?;
        let actual = request.digest();
        if *digest != actual {
            return Err(AgentError::Mismatch {
                index,
                message: format!("request digest {actual} differs from recorded {digest}"),
            });
        }
        self.next += 1;
        Ok(response.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vendor {
    /// Chat-completions wire format.
    OpenAi,
    Anthropic,
}

impl Vendor {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_lowercase().as_str() {
            "openai" => Some(Vendor::OpenAi),
            "anthropic" => Some(Vendor::Anthropic),
            _ => None,
        }
    }

    /// Environment variable holding the credential.
    pub fn key_var(self) -> &'static str {
        match self {
            Vendor::OpenAi => "OPENAI_API_KEY",
            Vendor::Anthropic => "ANTHROPIC_API_KEY",
        }
    }

    /// Environment variable overriding the endpoint base URL.
    pub fn base_var(self) -> &'static str {
        match self {
            Vendor::OpenAi => "OPENAI_BASE_URL",
            Vendor::Anthropic => "ANTHROPIC_BASE_URL",
        }
    }

    fn default_base(self) -> &'static str {
        match self {
            Vendor::OpenAi => "https://api.openai.com/v1",
            Vendor::Anthropic => "https://api.anthropic.com/v1",
        }
    }
}

/// Settings for a live backend. Sampling is pinned to temperature 0.
#[derive(Clone, Debug, PartialEq)]
pub struct LiveConfig {
    pub vendor: Vendor,
    pub model: String,
    pub base_url: String,
    pub max_tokens: u32,
}

impl LiveConfig {
    pub fn new(vendor: Vendor, model: &str, temperature: f64) -> Result<Self, AgentError> {
        if temperature != 0.0 {
            return Err(AgentError::Provider(format!(
                "temperature must be 0 for reproducible trials, got {temperature}"
            )));
        }
        if model.trim().is_empty() {
            return Err(AgentError::Provider("model id is empty".into()));
        }
        let base_url = std::env::var(vendor.base_var()).unwrap_or_else(|_| vendor.default_base().to_string());
        Ok(Self {
            vendor,
            model: model.to_string(),
            base_url,
            max_tokens: 1024,
        })
    }

    /// The vendor request body for a neutral request.
    pub fn body(&self, request: &ProviderRequest) -> Value {
        match self.vendor {
            Vendor::OpenAi => serde_json::json!({
                "model": self.model,
                "temperature": 0,
                "messages": request.messages.iter().map(|m| serde_json::json!({"role": m.role, "content": m.content})).collect::<Vec<_>>(),
                "tools": request.tools.iter().map(|t| serde_json::json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters}
                })).collect::<Vec<_>>(),
            }),
            Vendor::Anthropic => serde_json::json!({
                "model": self.model,
                "temperature": 0,
                "max_tokens": self.max_tokens,
                "system": request.system(),
                "messages": request.messages.iter().filter(|m| m.role != "system").map(|m| serde_json::json!({"role": m.role, "content": m.content})).collect::<Vec<_>>(),
                "tools": request.tools.iter().map(|t| serde_json::json!({
                    "name": t.name, "description": t.description, "input_schema": t.parameters
                })).collect::<Vec<_>>(),
            }),
        }
    }

    /// Normalizes a vendor response body.
    pub fn parse_response(&self, body: &Value) -> Result<ProviderResponse, AgentError> {
        use crate::transcript::ToolCall;
        let bad = |what: &str| AgentError::Provider(format!("unexpected response shape: {what}"));
        match self.vendor {
            Vendor::OpenAi => {
                let msg = body.pointer("/choices/0/message").ok_or_else(|| bad("no choices"))?;
                let text = msg.get("content").and_then(Value::as_str).map(str::to_string);
                let mut tool_calls = Vec::new();
                for c in msg.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
                    let name = c
                        .pointer("/function/name")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("tool name"))?;
                    let raw = c.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
                    let arguments = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
                    tool_calls.push(ToolCall {
                        name: name.to_string(),
                        arguments,
                    });
                }
                Ok(ProviderResponse { text, tool_calls })
            }
            Vendor::Anthropic => {
                let blocks = body
                    .get("content")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("no content"))?;
                let mut text: Option<String> = None;
                let mut tool_calls = Vec::new();
                for b in blocks {
                    match b.get("type").and_then(Value::as_str) {
                        Some("text") => {
                            let t = b.get("text").and_then(Value::as_str).unwrap_or_default();
                            text = Some(match text {
                                Some(prev) => format!("{prev}\n{t}"),
                                None => t.to_string(),
                            });
                        }
                        Some("tool_use") => tool_calls.push(ToolCall {
                            name: b
                                .get("name")
                                .and_then(Value::as_str)
                                .ok_or_else(|| bad("tool name"))?
                                .to_string(),
                            arguments: b.get("input").cloned().unwrap_or(Value::Null),
                        }),
                        _ => {}
                    }
                }
                Ok(ProviderResponse { text, tool_calls })
            }
        }
    }
}

#[cfg(feature = "live")]
pub use live::LiveProvider;

#[cfg(feature = "live")]
mod live {
    use super::*;

    /// Blocking HTTP client for one vendor.
    pub struct LiveProvider {
        config: LiveConfig,
        key: String,
        client: reqwest::blocking::Client,
    }

    impl LiveProvider {
        pub fn new(config: LiveConfig) -> Result<Self, AgentError> {
            let var = config.vendor.key_var();
            let key = std::env::var(var).map_err(|_| AgentError::Provider(format!("{var} is not set")))?;
            let client = reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .map_err(|e| AgentError::Provider(e.to_string()))?;
            Ok(Self { config, key, client })
        }
    }

    impl Provider for LiveProvider {
        fn complete(
            &mut self,
            request: &ProviderRequest,
            _context: &PromptContext,
        ) -> Result<ProviderResponse, AgentError> {
            let body = self.config.body(request);
            let builder = match self.config.vendor {
                Vendor::OpenAi => self
                    .client
                    .post(format!("{}/chat/completions", self.config.base_url))
                    .bearer_auth(&self.key),
                Vendor::Anthropic => self
                    .client
                    .post(format!("{}/messages", self.config.base_url))
                    .header("x-api-key", &self.key)
                    .header("anthropic-version", "2023-06-01"),
            };
            let resp = builder
                .json(&body)
                .send()
                .map_err(|e| AgentError::Provider(e.to_string()))?;
            let status = resp.status();
            let value: Value = resp.json().map_err(|e| AgentError::Provider(e.to_string()))?;
            if !status.is_success() {
                return Err(AgentError::Provider(format!("HTTP {status}: {value}")));
            }
            self.config.parse_response(&value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonzero_temperature_is_rejected() {
        assert!(LiveConfig::new(Vendor::OpenAi, "m", 0.7).is_err());
        assert!(LiveConfig::new(Vendor::Anthropic, "m", 0.0).is_ok());
    }

    #[test]
    fn vendor_responses_normalize() {
        let c = LiveConfig::new(Vendor::OpenAi, "m", 0.0).unwrap();
        let body = serde_json::json!({"choices": [{"message": {"content": null, "tool_calls": [
            {"function": {"name": "SEARCH", "arguments": "{\"zone\":\"stores-zone\",\"object\":\"thermostat\"}"}}
        ]}}]});
        let r = c.parse_response(&body).unwrap();
        assert_eq!(r.text, None);
        assert_eq!(r.tool_calls[0].arguments["zone"], "stores-zone");

        let c = LiveConfig::new(Vendor::Anthropic, "m", 0.0).unwrap();
        let body = serde_json::json!({"content": [
            {"type": "text", "text": ":::WAITING:::"},
            {"type": "tool_use", "name": "STOP", "input": {}}
        ]});
        let r = c.parse_response(&body).unwrap();
        assert_eq!(r.text.as_deref(), Some(":::WAITING:::"));
        assert_eq!(r.tool_calls[0].name, "STOP");
    }
}
