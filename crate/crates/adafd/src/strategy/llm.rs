//! LLM provider abstraction: a scripted mock for tests and a generic HTTP
//! client configurable for any chat-completion style endpoint.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// A request is a prompt string; a response is a text blob.
pub trait Provider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Replays scripted responses in order; errors when the script runs out.
pub struct MockProvider {
    responses: Mutex<VecDeque<String>>,
    /// Prompts received, for snapshot assertions.
    pub prompts: Mutex<Vec<String>>,
}

impl MockProvider {
    pub fn new(responses: Vec<String>) -> MockProvider {
        MockProvider {
            responses: Mutex::new(responses.into()),
            prompts: Mutex::new(Vec::new()),
        }
    }
}

impl Provider for MockProvider {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| Error::Provider("mock provider script exhausted".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    /// Header carrying the credential, e.g. "Authorization".
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Environment variable the credential is read from; never stored in
    /// config files.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    /// Prefix prepended to the credential, e.g. "Bearer ".
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    pub model: String,
    /// Dot-separated path to the response text, e.g.
    /// "choices.0.message.content".
    #[serde(default = "default_response_path")]
    pub response_path: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub max_retries: u32,
}

fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_auth_env() -> String {
    "ADAFD_LLM_API_KEY".into()
}
fn default_auth_prefix() -> String {
    "Bearer ".into()
}
fn default_response_path() -> String {
    "choices.0.message.content".into()
}
fn default_timeout_secs() -> u64 {
    60
}

/// POSTs a chat-completion JSON body and extracts the response text via the
/// configured path.
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<HttpProvider> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        Ok(HttpProvider { config, client })
    }

    fn request_once(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Ok(key) = std::env::var(&self.config.auth_env) {
            req = req.header(
                self.config.auth_header.as_str(),
                format!("{}{key}", self.config.auth_prefix),
            );
        }
        let resp = req.send().map_err(|e| Error::Provider(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::Provider(format!("HTTP status {}", resp.status())));
        }
        let value: Value = resp.json().map_err(|e| Error::Provider(e.to_string()))?;
        extract_path(&value, &self.config.response_path)
    }
}

impl Provider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut last = None;
        for _ in 0..=self.config.max_retries {
            match self.request_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Provider("no attempts made".into())))
    }
}

fn extract_path(value: &Value, path: &str) -> Result<String> {
    let mut cur = value;
    for part in path.split('.') {
        cur = match part.parse::<usize>() {
            Ok(idx) => cur.get(idx),
            Err(_) => cur.get(part),
        }
        .ok_or_else(|| Error::Provider(format!("response path {path:?} missing at {part:?}")))?;
    }
    cur.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Provider(format!("response path {path:?} is not a string")))
}
