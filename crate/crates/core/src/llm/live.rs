use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, ChatRequest, ChatResponse, LlmError};
use crate::sandbox;

/// Endpoint settings of an OpenAI-compatible chat completion API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: String,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl LiveConfig {
    pub const KEY_VAR: &'static str = "SINKFLOW_API_KEY";
    pub const ENDPOINT_VAR: &'static str = "SINKFLOW_API_BASE";

    /// Reads the API key and endpoint from the environment.
    pub fn from_env() -> Result<LiveConfig, LlmError> {
        let api_key = std::env::var(Self::KEY_VAR)
            .map_err(|_| LlmError::Backend(format!("live backend needs {}", Self::KEY_VAR)))?;
        let endpoint = std::env::var(Self::ENDPOINT_VAR).unwrap_or_else(|_| "https://api.openai.com/v1".to_string());
        Ok(LiveConfig { endpoint, api_key, retries: 3, backoff_ms: 500, timeout_s: 120 })
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<LiveBackend, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| LlmError::Backend(e.to_string()))?;
        Ok(LiveBackend { config, http })
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, String> {
        sandbox::note_network_call();
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let start = Instant::now();
        let resp = self
            .http
            .post(url)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(format!("HTTP {status}: {}", text.chars().take(300).collect::<String>()));
        }
        let parsed: Completion = resp.json().map_err(|e| e.to_string())?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "reply has no message content".to_string())?;
        let usage = parsed.usage.unwrap_or(Usage { prompt_tokens: 0, completion_tokens: 0 });
        Ok(ChatResponse {
            text,
            backend: "live".to_string(),
            latency_ms: start.elapsed().as_millis() as u64,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        })
    }
}

impl Backend for LiveBackend {
    fn tag(&self) -> &'static str {
        "live"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err(e) => {
                    log::warn!("live backend attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(LlmError::Transport { attempts: self.config.retries + 1, message: last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn unreachable_endpoint_reports_attempts() {
        let config = LiveConfig {
            endpoint: "http://127.0.0.1:9".to_string(),
            api_key: "k".to_string(),
            retries: 2,
            backoff_ms: 1,
            timeout_s: 2,
        };
        let backend = LiveBackend::new(config).unwrap();
        let req = ChatRequest {
            template_id: "t".into(),
            bindings: BTreeMap::new(),
            prompt: "p".into(),
            model: "m".into(),
            temperature: 0.0,
        };
        match backend.complete(&req) {
            Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }
}
