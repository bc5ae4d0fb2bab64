//! OpenAI-compatible HTTP backend.
//!
//! Generation can target either the completions or the chat endpoint; scoring
//! always uses the completions endpoint with `echo` + `logprobs`, because
//! chat endpoints do not return token logprobs for arbitrary conditional
//! sequences. The API key comes from an environment variable, never from
//! configuration files.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    postprocess_completion, DecodingParams, ScoredSequence, TextModel, TextModelError,
    CONTEXT_SEPARATOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateApi {
    Completions,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL without the `/v1/...` suffix, e.g. `https://api.openai.com`.
    pub base_url: String,
    /// Model used for scoring (and for generation unless overridden by
    /// `DecodingParams::model_name`).
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_generate_api")]
    pub generate_api: GenerateApi,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Declared capability: set false for servers whose completions endpoint
    /// cannot echo token logprobs.
    #[serde(default = "default_true")]
    pub supports_scoring: bool,
}

fn default_true() -> bool {
    true
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_generate_api() -> GenerateApi {
    GenerateApi::Completions
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Debug, Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Debug, Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: String,
    logprobs: Option<LogProbs>,
}

#[derive(Debug, Deserialize)]
struct LogProbs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: String,
}

impl RemoteBackend {
    /// Fails fast (before any network call) when the API key variable is
    /// missing or empty.
    pub fn new(cfg: RemoteConfig) -> Result<Self, TextModelError> {
        let api_key = std::env::var(&cfg.api_key_env).unwrap_or_default();
        if api_key.is_empty() {
            return Err(TextModelError::Config(format!(
                "environment variable {} is not set",
                cfg.api_key_env
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| TextModelError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            cfg,
            api_key,
            client,
        })
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<String, TextModelError> {
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let mut backoff = Duration::from_millis(self.cfg.retry.initial_backoff_ms);
        let mut last_err = String::new();
        for attempt in 0..self.cfg.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let resp = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send();
            match resp {
                Ok(r) if r.status().is_success() => {
                    return r.text().map_err(|e| TextModelError::RemoteUnavailable(e.to_string()));
                }
                Ok(r) => {
                    let status = r.status();
                    let body = r.text().unwrap_or_default();
                    last_err = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
                    log::warn!("remote call failed (attempt {}): {last_err}", attempt + 1);
                }
                Err(e) => {
                    last_err = e.to_string();
                    log::warn!("remote call failed (attempt {}): {last_err}", attempt + 1);
                }
            }
        }
        Err(TextModelError::RemoteUnavailable(last_err))
    }
}

impl TextModel for RemoteBackend {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String, TextModelError> {
        if prompt.trim().is_empty() {
            return Err(TextModelError::EmptySequence);
        }
        let raw = match self.cfg.generate_api {
            GenerateApi::Completions => {
                let body = json!({
                    "model": params.model_name,
                    "prompt": prompt,
                    "max_tokens": params.max_tokens,
                    "temperature": params.temperature,
                    "top_p": params.top_p,
                    "n": 1,
                    "stop": [params.stop],
                });
                let text = self.post_json("/v1/completions", &body)?;
                let parsed: CompletionsResponse = serde_json::from_str(&text)
                    .map_err(|e| TextModelError::RemoteUnavailable(format!("bad response: {e}")))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or(TextModelError::EmptyCompletion)?
                    .text
            }
            GenerateApi::Chat => {
                let body = json!({
                    "model": params.model_name,
                    "messages": [{"role": "user", "content": prompt}],
                    "max_tokens": params.max_tokens,
                    "temperature": params.temperature,
                    "top_p": params.top_p,
                    "n": 1,
                    "stop": [params.stop],
                });
                let text = self.post_json("/v1/chat/completions", &body)?;
                let parsed: ChatResponse = serde_json::from_str(&text)
                    .map_err(|e| TextModelError::RemoteUnavailable(format!("bad response: {e}")))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .ok_or(TextModelError::EmptyCompletion)?
                    .message
                    .content
            }
        };
        postprocess_completion(&raw, &params.stop)
    }

    fn score(&self, context: &str, continuation: &str) -> Result<ScoredSequence, TextModelError> {
        if !self.cfg.supports_scoring {
            return Err(TextModelError::ScoringUnsupported);
        }
        if continuation.split_whitespace().next().is_none() {
            return Err(TextModelError::EmptySequence);
        }
        let full = if context.is_empty() {
            continuation.to_string()
        } else {
            format!("{context}{CONTEXT_SEPARATOR}{continuation}")
        };
        // tokens starting at or after the end of the context count as
        // continuation; a token that fuses the separator with the first
        // continuation word is kept rather than dropped
        let boundary = if context.is_empty() { 0 } else { context.len() };
        let body = json!({
            "model": self.cfg.model,
            "prompt": full,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0.0,
        });
        let text = self.post_json("/v1/completions", &body)?;
        let parsed: CompletionsResponse = serde_json::from_str(&text)
            .map_err(|e| TextModelError::RemoteUnavailable(format!("bad response: {e}")))?;
        let lp = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or(TextModelError::ScoringUnsupported)?;
        if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
            return Err(TextModelError::RemoteUnavailable(
                "logprob arrays have inconsistent lengths".to_string(),
            ));
        }
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for ((tok, lp_opt), off) in lp
            .tokens
            .into_iter()
            .zip(lp.token_logprobs)
            .zip(lp.text_offset)
        {
            if off < boundary {
                continue;
            }
            let v = lp_opt.ok_or_else(|| {
                TextModelError::RemoteUnavailable("missing logprob for continuation token".into())
            })?;
            tokens.push(tok);
            // guard against tiny positive values from the server
            logprobs.push(v.min(0.0));
        }
        ScoredSequence::new(tokens, logprobs)
    }

    fn supports_scoring(&self) -> bool {
        self.cfg.supports_scoring
    }
}
