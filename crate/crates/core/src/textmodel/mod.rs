//! The single seam to language-model functionality: text generation under
//! decoding parameters and per-token conditional log-likelihood scoring.
//!
//! Two backends implement [`TextModel`]: a deterministic offline stub
//! ([`stub::StubBackend`]) and an OpenAI-compatible HTTP client
//! ([`remote::RemoteBackend`]). Backends declare whether they can score;
//! callers that need token logprobs get [`TextModelError::ScoringUnsupported`]
//! from a backend that cannot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod remote;
pub mod stub;

/// Separator inserted between context and continuation when a backend scores
/// a conditional sequence. Fixed so the stub and the remote backend agree on
/// what "context concatenated before the continuation" means.
pub const CONTEXT_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum TextModelError {
    #[error("remote backend unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("model returned no usable completion")]
    EmptyCompletion,
    #[error("backend does not support token logprob scoring")]
    ScoringUnsupported,
    #[error("input text tokenizes to the empty sequence")]
    EmptySequence,
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// Decoding parameters for one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub stop: String,
    pub model_name: String,
}

impl DecodingParams {
    /// Conservative agents: low temperature, low top-p.
    pub fn narrow(model_name: impl Into<String>) -> Self {
        DecodingParams {
            temperature: 0.1,
            top_p: 0.5,
            max_tokens: 2000,
            stop: "}".to_string(),
            model_name: model_name.into(),
        }
    }

    /// Agents willing to take surprising turns: high temperature, high top-p.
    pub fn creative(model_name: impl Into<String>) -> Self {
        DecodingParams {
            temperature: 1.4,
            top_p: 0.95,
            max_tokens: 2000,
            stop: "}".to_string(),
            model_name: model_name.into(),
        }
    }
}

/// A token sequence with one conditional log-likelihood per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
}

impl ScoredSequence {
    pub fn new(tokens: Vec<String>, token_logprobs: Vec<f64>) -> Result<Self, TextModelError> {
        if tokens.is_empty() {
            return Err(TextModelError::EmptySequence);
        }
        if tokens.len() != token_logprobs.len() {
            return Err(TextModelError::Config(format!(
                "token/logprob length mismatch: {} vs {}",
                tokens.len(),
                token_logprobs.len()
            )));
        }
        if token_logprobs.iter().any(|lp| !lp.is_finite() || *lp > 0.0) {
            return Err(TextModelError::Config(
                "token logprobs must be finite and <= 0".to_string(),
            ));
        }
        Ok(ScoredSequence {
            tokens,
            token_logprobs,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Text generation and conditional scoring behind one interface. Backends
/// must be safe for concurrent calls; callers may fan out one call per agent
/// within a simulation step.
pub trait TextModel: Send + Sync {
    /// Complete `prompt` under `params`. The completion is truncated at the
    /// first occurrence of `params.stop` and trimmed of surrounding
    /// whitespace and quotes.
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String, TextModelError>;

    /// Score `continuation`'s tokens conditioned on `context` concatenated
    /// before them. Only continuation tokens are scored.
    fn score(&self, context: &str, continuation: &str) -> Result<ScoredSequence, TextModelError>;

    /// Whether `score` is available on this backend.
    fn supports_scoring(&self) -> bool;
}

/// Cut a raw completion at the first occurrence of the stop sequence; the
/// stop itself is excluded from the output.
pub fn truncate_at_stop(completion: &str, stop: &str) -> String {
    if stop.is_empty() {
        return completion.to_string();
    }
    match completion.find(stop) {
        Some(pos) => completion[..pos].to_string(),
        None => completion.to_string(),
    }
}

/// Stop truncation plus trimming of surrounding whitespace and quote marks.
/// Errors with `EmptyCompletion` when nothing usable remains.
pub fn postprocess_completion(completion: &str, stop: &str) -> Result<String, TextModelError> {
    let cut = truncate_at_stop(completion, stop);
    let trimmed = cut.trim().trim_matches(|c| c == '\'' || c == '"').trim();
    if trimmed.is_empty() {
        return Err(TextModelError::EmptyCompletion);
    }
    Ok(trimmed.to_string())
}

/// Whitespace tokenization used by the stub backend. Perplexity math is
/// tokenizer-agnostic, so a split on whitespace is enough for offline runs.
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_string()).collect()
}

/// Case-folded token with leading/trailing punctuation stripped, used when
/// matching tokens against each other.
pub fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_truncation_cuts_before_trimming() {
        assert_eq!(truncate_at_stop("great idea'}trailing", "}"), "great idea'");
        assert_eq!(
            postprocess_completion("great idea'}trailing", "}").unwrap(),
            "great idea"
        );
    }

    #[test]
    fn postprocess_strips_quotes_and_whitespace() {
        assert_eq!(postprocess_completion("  'hello there' ", "}").unwrap(), "hello there");
        assert_eq!(postprocess_completion("\"quoted\"}rest", "}").unwrap(), "quoted");
    }

    #[test]
    fn empty_after_postprocess_is_an_error() {
        assert!(matches!(
            postprocess_completion("  '' ", "}"),
            Err(TextModelError::EmptyCompletion)
        ));
        assert!(matches!(
            postprocess_completion("}everything after stop", "}"),
            Err(TextModelError::EmptyCompletion)
        ));
    }

    #[test]
    fn scored_sequence_validates_lengths_and_signs() {
        assert!(ScoredSequence::new(vec![], vec![]).is_err());
        assert!(ScoredSequence::new(vec!["a".into()], vec![-1.0, -2.0]).is_err());
        assert!(ScoredSequence::new(vec!["a".into()], vec![0.5]).is_err());
        assert!(ScoredSequence::new(vec!["a".into()], vec![0.0]).is_ok());
    }

    #[test]
    fn normalize_strips_punctuation_and_case() {
        assert_eq!(normalize_token("Idea."), "idea");
        assert_eq!(normalize_token("'Good,"), "good");
        assert_eq!(normalize_token("#GenderEquality"), "genderequality");
    }

    #[test]
    fn presets_match_published_settings() {
        let n = DecodingParams::narrow("m");
        assert_eq!((n.temperature, n.top_p, n.max_tokens, n.stop.as_str()), (0.1, 0.5, 2000, "}"));
        let c = DecodingParams::creative("m");
        assert_eq!((c.temperature, c.top_p, c.max_tokens, c.stop.as_str()), (1.4, 0.95, 2000, "}"));
    }
}
