//! Opinion elicitation from post text.
//!
//! Perplexity of a token sequence is the exponential of its mean negative
//! log-likelihood. Conditional perplexity scores a fixed claim sentence with
//! the post as preceding context; the opinion score is
//! `PPL_CON / (PPL_PRO + PPL_CON)`, so a con claim that the model finds
//! surprising given the post pushes the score toward 1 (pro). All math is in
//! natural log and computed in log space (mean of NLL, then one exp).

use thiserror::Error;

use crate::domain::{OpinionScore, Topic};
use crate::textmodel::{ScoredSequence, TextModel, TextModelError};

#[derive(Debug, Error)]
pub enum OpinionError {
    #[error("cannot take the perplexity of an empty sequence")]
    EmptySequence,
    #[error(transparent)]
    Model(#[from] TextModelError),
}

/// Perplexity, always > 0; >= 1 whenever every token logprob is <= 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PerplexityValue {
    pub value: f64,
}

/// Perplexity of a scored sequence: `exp(-(1/m) * sum(logprobs))` with m the
/// token count.
pub fn perplexity(scored: &ScoredSequence) -> Result<PerplexityValue, OpinionError> {
    let m = scored.len();
    if m == 0 {
        return Err(OpinionError::EmptySequence);
    }
    let mean_nll = -scored.token_logprobs.iter().sum::<f64>() / m as f64;
    Ok(PerplexityValue {
        value: mean_nll.exp(),
    })
}

/// Perplexity of `claim` scored with `post_text` as preceding context. Only
/// the claim's tokens enter the average.
pub fn conditional_perplexity(
    post_text: &str,
    claim: &str,
    scorer: &dyn TextModel,
) -> Result<PerplexityValue, OpinionError> {
    if claim.split_whitespace().next().is_none() {
        return Err(OpinionError::EmptySequence);
    }
    let scored = scorer.score(post_text, claim)?;
    perplexity(&scored)
}

/// Opinion score of a post against a topic's claims.
pub fn elicit_opinion(
    post_text: &str,
    topic: &Topic,
    scorer: &dyn TextModel,
) -> Result<OpinionScore, OpinionError> {
    let ppl_con = conditional_perplexity(post_text, &topic.con_claim, scorer)?;
    let ppl_pro = conditional_perplexity(post_text, &topic.pro_claim, scorer)?;
    let value = ppl_con.value / (ppl_pro.value + ppl_con.value);
    OpinionScore::new(value).map_err(|_| {
        // both perplexities are strictly positive, so this is unreachable for
        // finite inputs; surface it rather than panic if a backend misbehaves
        OpinionError::Model(TextModelError::Config(format!(
            "opinion score out of range: {value}"
        )))
    })
}
