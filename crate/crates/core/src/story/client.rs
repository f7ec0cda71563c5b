use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_API_KEY_ENV: &str = "MAPSTORY_LLM_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum TextGenError {
    #[error("request timed out")]
    Timeout,
    #[error("service answered HTTP {0}")]
    Status(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("invalid client config: {0}")]
    Config(String),
}

/// A single text-generation attempt. Retries live in [`LlmBackend`].
pub trait TextGenerator: Send + Sync {
    fn generate_once(&self, prompt: &str) -> Result<String, TextGenError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            backoff_factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.backoff_base
            .mul_f64(self.backoff_factor.powi(retry as i32))
    }
}

/// A generator plus its retry policy.
#[derive(Clone)]
pub struct LlmBackend {
    pub generator: Arc<dyn TextGenerator>,
    pub retry: RetryPolicy,
}

impl LlmBackend {
    pub fn new(generator: Arc<dyn TextGenerator>, retry: RetryPolicy) -> Self {
        LlmBackend { generator, retry }
    }

    /// Up to `1 + max_retries` attempts with exponential backoff between them.
    pub fn generate(&self, prompt: &str) -> Result<String, TextGenError> {
        let mut attempt = 0u32;
        loop {
            match self.generator.generate_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if attempt >= self.retry.max_retries => return Err(e),
                Err(e) => {
                    log::warn!("text generation attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextGenClientConfig {
    pub endpoint: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub backoff_base_s: f64,
    pub backoff_factor: f64,
    pub model_key: String,
    pub messages_key: String,
    pub temperature_key: String,
    /// JSON pointer to the narrative inside the response body.
    pub response_pointer: String,
}

impl Default for TextGenClientConfig {
    fn default() -> Self {
        TextGenClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-3.5-turbo".into(),
            api_key_env_var: DEFAULT_API_KEY_ENV.into(),
            timeout_s: 30.0,
            max_retries: 2,
            temperature: 0.0,
            max_in_flight: 4,
            backoff_base_s: 0.5,
            backoff_factor: 2.0,
            model_key: "model".into(),
            messages_key: "messages".into(),
            temperature_key: "temperature".into(),
            response_pointer: "/choices/0/message/content".into(),
        }
    }
}

impl TextGenClientConfig {
    pub fn validate(&self) -> Result<(), TextGenError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(TextGenError::Config("timeout_s must be > 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(TextGenError::Config("max_in_flight must be > 0".into()));
        }
        if self.backoff_base_s < 0.0 || self.backoff_factor < 1.0 {
            return Err(TextGenError::Config(
                "backoff must be non-negative and non-shrinking".into(),
            ));
        }
        if url::Url::parse(&self.endpoint).is_err() {
            return Err(TextGenError::Config(format!(
                "endpoint {:?} is not a URL",
                self.endpoint
            )));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base: Duration::from_secs_f64(self.backoff_base_s),
            backoff_factor: self.backoff_factor,
        }
    }

    /// Request body: `{model, messages: [{role: "user", content}], temperature}`
    /// under the configured key names.
    pub fn payload(&self, prompt: &str) -> serde_json::Value {
        let mut body = serde_json::Map::new();
        body.insert(self.model_key.clone(), self.model_name.clone().into());
        body.insert(
            self.messages_key.clone(),
            serde_json::json!([{ "role": "user", "content": prompt }]),
        );
        body.insert(self.temperature_key.clone(), self.temperature.into());
        serde_json::Value::Object(body)
    }
}

struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion style HTTP client, bounded to `max_in_flight`
/// concurrent requests.
pub struct HttpTextGenerator {
    config: TextGenClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    limiter: Limiter,
}

impl HttpTextGenerator {
    pub fn new(config: TextGenClientConfig) -> Result<Self, TextGenError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env_var)
            .ok()
            .filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = Limiter {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max: config.max_in_flight,
        };
        Ok(HttpTextGenerator {
            config,
            agent,
            api_key,
            limiter,
        })
    }

    pub fn config(&self) -> &TextGenClientConfig {
        &self.config
    }
}

impl TextGenerator for HttpTextGenerator {
    fn generate_once(&self, prompt: &str) -> Result<String, TextGenError> {
        let _slot = self.limiter.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.config.payload(prompt))
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => TextGenError::Timeout,
                other => TextGenError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TextGenError::Status(status));
        }
        let body: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TextGenError::BadResponse(e.to_string()))?;
        body.pointer(&self.config.response_pointer)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                TextGenError::BadResponse(format!("nothing at {}", self.config.response_pointer))
            })
    }
}
