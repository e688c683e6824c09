//! OpenAI-compatible chat-completions client with capped exponential backoff.

use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use pacing_core::backend::{BackendError, ChatBackend, ChatMessage};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOKEN_ENV: &str = "PACING_API_KEY";

/// Where and how to reach the remote model. The token itself is only ever
/// read from the named environment variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model_name: String,
    pub auth_token_env_var_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            auth_token_env_var_name: DEFAULT_TOKEN_ENV.into(),
            timeout_ms: 30_000,
            max_retries: 3,
        }
    }
}

impl RemoteConfig {
    /// Defaults overridden by `PACING_REMOTE_URL`, `PACING_REMOTE_MODEL`
    /// and `PACING_REMOTE_TOKEN_ENV`.
    pub fn from_env() -> Self {
        let mut cfg = RemoteConfig::default();
        if let Ok(v) = std::env::var("PACING_REMOTE_URL") {
            cfg.base_url = v;
        }
        if let Ok(v) = std::env::var("PACING_REMOTE_MODEL") {
            cfg.model_name = v;
        }
        if let Ok(v) = std::env::var("PACING_REMOTE_TOKEN_ENV") {
            cfg.auth_token_env_var_name = v;
        }
        cfg
    }

    fn token(&self) -> Option<String> {
        std::env::var(&self.auth_token_env_var_name).ok().filter(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: u32,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff { base: Duration::from_millis(250), factor: 2, cap: Duration::from_secs(2) }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let mult = self.factor.saturating_pow(retry.saturating_sub(1));
        self.base.saturating_mul(mult).min(self.cap)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct HttpChatBackend {
    config: RemoteConfig,
    backoff: Backoff,
    sleeper: Sleeper,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpChatBackend {
    pub fn new(config: RemoteConfig) -> Self {
        HttpChatBackend { config, backoff: Backoff::default(), sleeper: Arc::new(std::thread::sleep) }
    }

    pub fn with_backoff(mut self, backoff: Backoff, sleeper: Sleeper) -> Self {
        self.backoff = backoff;
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, client: &reqwest::blocking::Client, messages: &[ChatMessage]) -> Result<String, Failure> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = client.post(url).json(&CompletionRequest { model: &self.config.model_name, messages });
        if let Some(token) = self.config.token() {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let body: CompletionResponse = resp.json().map_err(|e| Failure::Retryable(e.to_string()))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal("reply has no content".into()))
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        // A blocking client owns a runtime thread; building it per call keeps
        // the backend safe to drop from async code.
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for n in 1..=attempts {
            if n > 1 {
                let d = self.backoff.delay(n - 1);
                info!("remote retry {} of {} after {:?}: {last}", n - 1, self.config.max_retries, d);
                (self.sleeper)(d);
            }
            match self.attempt(&client, messages) {
                Ok(text) => return Ok(text),
                Err(Failure::Retryable(e)) => last = e,
                Err(Failure::Fatal(e)) => {
                    warn!("remote request rejected: {e}");
                    return Err(BackendError::Unavailable { attempts: n, last: e });
                }
            }
        }
        Err(BackendError::Unavailable { attempts, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_then_caps() {
        let b = Backoff::default();
        let ms: Vec<u128> = (1..=6).map(|r| b.delay(r).as_millis()).collect();
        assert_eq!(ms, vec![250, 500, 1000, 2000, 2000, 2000]);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RemoteConfig = serde_json::from_str(r#"{"model_name":"m"}"#).unwrap();
        assert_eq!(cfg.model_name, "m");
        assert_eq!(cfg.auth_token_env_var_name, DEFAULT_TOKEN_ENV);
        assert_eq!(cfg.max_retries, 3);
    }
}
