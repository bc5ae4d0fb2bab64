//! Deterministic offline backend.
//!
//! The stub is a pure function of its configuration seed and the call inputs,
//! which makes every pipeline stage exactly reproducible and testable without
//! a model server. Scoring uses whitespace tokenization and one of two rules:
//! an echo rule (continuation tokens found in the context score
//! `match_logprob`, the rest `miss_logprob`) or a fixed token table with a
//! default. Generation scans the prompt for polarity marker words and picks a
//! canned completion from the bank keyed by the dominant polarity.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    normalize_token, postprocess_completion, whitespace_tokens, DecodingParams, ScoredSequence,
    TextModel, TextModelError,
};
use crate::seeding::text_digest;

/// Echo scoring rule: a continuation token that also occurs in the context
/// scores `match_logprob`, any other token scores `miss_logprob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoRule {
    pub match_logprob: f64,
    pub miss_logprob: f64,
}

/// On-disk stub configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubSpec {
    pub seed: u64,
    /// Logprob for tokens absent from `token_logprobs` when no echo rule is set.
    pub default_logprob: f64,
    /// Fixed per-token logprobs, keyed by normalized token.
    #[serde(default)]
    pub token_logprobs: BTreeMap<String, f64>,
    /// When present, overrides the table lookup entirely.
    #[serde(default)]
    pub echo: Option<EchoRule>,
    pub pro_markers: Vec<String>,
    pub con_markers: Vec<String>,
    /// Canned completions keyed by dominant prompt polarity.
    pub completions: CompletionBank,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionBank {
    pub pro: Vec<String>,
    pub con: Vec<String>,
    pub neutral: Vec<String>,
}

impl StubSpec {
    /// Every token scores `logprob`; generation falls back to a single
    /// neutral sentence. Handy for exact perplexity checks.
    pub fn uniform(logprob: f64) -> Self {
        StubSpec {
            seed: 0,
            default_logprob: logprob,
            token_logprobs: BTreeMap::new(),
            echo: None,
            pro_markers: vec![],
            con_markers: vec![],
            completions: CompletionBank {
                pro: vec!["a uniform completion".to_string()],
                con: vec!["a uniform completion".to_string()],
                neutral: vec!["a uniform completion".to_string()],
            },
        }
    }

    /// Echo-rule stub with empty marker lists, for conditional-scoring tests.
    pub fn echo(match_logprob: f64, miss_logprob: f64) -> Self {
        let mut spec = StubSpec::uniform(miss_logprob);
        spec.echo = Some(EchoRule {
            match_logprob,
            miss_logprob,
        });
        spec
    }

    fn validate(&self) -> Result<(), TextModelError> {
        let mut lps: Vec<f64> = vec![self.default_logprob];
        lps.extend(self.token_logprobs.values());
        if let Some(e) = &self.echo {
            lps.push(e.match_logprob);
            lps.push(e.miss_logprob);
        }
        if lps.iter().any(|lp| !lp.is_finite() || *lp > 0.0) {
            return Err(TextModelError::Config(
                "stub logprobs must be finite and <= 0".to_string(),
            ));
        }
        for (name, bank) in [
            ("pro", &self.completions.pro),
            ("con", &self.completions.con),
            ("neutral", &self.completions.neutral),
        ] {
            if bank.is_empty() || bank.iter().any(|t| t.trim().is_empty()) {
                return Err(TextModelError::Config(format!(
                    "stub completion bank '{name}' must be non-empty"
                )));
            }
        }
        Ok(())
    }
}

pub struct StubBackend {
    spec: StubSpec,
    pro_markers: HashSet<String>,
    con_markers: HashSet<String>,
}

impl StubBackend {
    pub fn new(spec: StubSpec) -> Result<Self, TextModelError> {
        spec.validate()?;
        let pro_markers = spec.pro_markers.iter().map(|m| normalize_token(m)).collect();
        let con_markers = spec.con_markers.iter().map(|m| normalize_token(m)).collect();
        Ok(StubBackend {
            spec,
            pro_markers,
            con_markers,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TextModelError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| {
            TextModelError::Config(format!("cannot read stub file {}: {e}", path.display()))
        })?;
        let spec: StubSpec = serde_json::from_str(&raw).map_err(|e| {
            TextModelError::Config(format!("cannot parse stub file {}: {e}", path.display()))
        })?;
        StubBackend::new(spec)
    }

    pub fn spec(&self) -> &StubSpec {
        &self.spec
    }

    /// Dominant polarity of the marker words present in `prompt`.
    fn prompt_polarity(&self, prompt: &str) -> &'static str {
        let mut pro = 0usize;
        let mut con = 0usize;
        for token in prompt.split_whitespace() {
            let norm = normalize_token(token);
            if self.pro_markers.contains(&norm) {
                pro += 1;
            }
            if self.con_markers.contains(&norm) {
                con += 1;
            }
        }
        if pro > con {
            "pro"
        } else if con > pro {
            "con"
        } else {
            "neutral"
        }
    }
}

impl TextModel for StubBackend {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String, TextModelError> {
        if prompt.trim().is_empty() {
            return Err(TextModelError::EmptySequence);
        }
        let bank = match self.prompt_polarity(prompt) {
            "pro" => &self.spec.completions.pro,
            "con" => &self.spec.completions.con,
            _ => &self.spec.completions.neutral,
        };
        let idx = (text_digest(self.spec.seed, prompt) % bank.len() as u64) as usize;
        postprocess_completion(&bank[idx], &params.stop)
    }

    fn score(&self, context: &str, continuation: &str) -> Result<ScoredSequence, TextModelError> {
        let tokens = whitespace_tokens(continuation);
        if tokens.is_empty() {
            return Err(TextModelError::EmptySequence);
        }
        let context_set: HashSet<String> = context
            .split_whitespace()
            .map(normalize_token)
            .filter(|t| !t.is_empty())
            .collect();
        let logprobs: Vec<f64> = tokens
            .iter()
            .map(|tok| {
                let norm = normalize_token(tok);
                match &self.spec.echo {
                    Some(rule) => {
                        if context_set.contains(&norm) {
                            rule.match_logprob
                        } else {
                            rule.miss_logprob
                        }
                    }
                    None => *self
                        .spec
                        .token_logprobs
                        .get(&norm)
                        .unwrap_or(&self.spec.default_logprob),
                }
            })
            .collect();
        ScoredSequence::new(tokens, logprobs)
    }

    fn supports_scoring(&self) -> bool {
        true
    }
}
