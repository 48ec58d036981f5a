use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{CompletionParams, CompletionUsage, GatewayError};

/// OpenAI-compatible chat-completion endpoint settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key,
            model: model.into(),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug)]
pub(super) struct HttpClient {
    config: HttpConfig,
    agent: ureq::Agent,
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || status >= 500
}

impl HttpClient {
    pub(super) fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClient { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// One chat completion with up to `max_retries` retries on transport
    /// errors, 408, 429 and 5xx, sleeping `backoff_base * 2^attempt` between tries.
    pub(super) fn complete(
        &self,
        prompt: &str,
        params: &CompletionParams,
        counter: &AtomicU64,
    ) -> Result<(String, CompletionUsage), GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let attempts = self.config.max_retries + 1;
        let mut last_status = None;
        let mut last_detail = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.config.backoff_base * 2u32.saturating_pow(attempt - 1));
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let started = Instant::now();
            let mut req = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = match req.send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    last_status = None;
                    last_detail = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            if !(200..300).contains(&status) {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                if retryable(status) {
                    last_status = Some(status);
                    last_detail = detail;
                    continue;
                }
                return Err(GatewayError::Rejected { status, detail });
            }
            let value: Value = resp.body_mut().read_json().map_err(|e| GatewayError::BadResponse(e.to_string()))?;
            return parse_completion(&value, started.elapsed().as_secs_f64());
        }
        Err(GatewayError::RetriesExhausted { attempts, status: last_status, detail: last_detail })
    }
}

fn parse_completion(value: &Value, latency: f64) -> Result<(String, CompletionUsage), GatewayError> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))?;
    let tokens = |p: &str| value.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    let usage = CompletionUsage {
        tokens_in: tokens("/usage/prompt_tokens"),
        tokens_out: tokens("/usage/completion_tokens"),
        cost_usd: 0.0,
        latency,
    };
    Ok((text.to_string(), usage))
}
