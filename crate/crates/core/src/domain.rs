//! Core value types shared by every other module: agents, topics, posts,
//! opinion scores and their five-bucket polarity categories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("display name must be non-empty")]
    EmptyDisplayName,
    #[error("post text must be non-empty")]
    EmptyPostText,
    #[error("opinion score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("claims must be non-empty and distinct")]
    BadClaims,
    #[error("thresholds must be strictly ascending within (0, 1), got {0:?}")]
    BadThresholds([f64; 4]),
}

/// Identity of one simulated participant. The index is dense and stable
/// within a run; the display name is interpolated verbatim into prompts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAgentId")]
pub struct AgentId {
    pub index: u32,
    pub display_name: String,
}

#[derive(Deserialize)]
struct RawAgentId {
    index: u32,
    display_name: String,
}

impl TryFrom<RawAgentId> for AgentId {
    type Error = DomainError;
    fn try_from(raw: RawAgentId) -> Result<Self, Self::Error> {
        AgentId::new(raw.index, raw.display_name)
    }
}

impl AgentId {
    pub fn new(index: u32, display_name: impl Into<String>) -> Result<Self, DomainError> {
        let display_name = display_name.into();
        if display_name.trim().is_empty() {
            return Err(DomainError::EmptyDisplayName);
        }
        Ok(AgentId {
            index,
            display_name,
        })
    }
}

/// The discussion topic: a label plus the fixed pro/con claim sentences the
/// opinion elicitation scores against, and the threshold scheme that turns
/// scores into categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopic")]
pub struct Topic {
    pub label: String,
    pub pro_claim: String,
    pub con_claim: String,
    pub category_scheme: CategoryScheme,
}

#[derive(Deserialize)]
struct RawTopic {
    label: String,
    pro_claim: String,
    con_claim: String,
    category_scheme: CategoryScheme,
}

impl TryFrom<RawTopic> for Topic {
    type Error = DomainError;
    fn try_from(raw: RawTopic) -> Result<Self, Self::Error> {
        Topic::new(raw.label, raw.pro_claim, raw.con_claim, raw.category_scheme)
    }
}

impl Topic {
    pub fn new(
        label: impl Into<String>,
        pro_claim: impl Into<String>,
        con_claim: impl Into<String>,
        category_scheme: CategoryScheme,
    ) -> Result<Self, DomainError> {
        let pro_claim = pro_claim.into();
        let con_claim = con_claim.into();
        if pro_claim.trim().is_empty() || con_claim.trim().is_empty() || pro_claim == con_claim {
            return Err(DomainError::BadClaims);
        }
        Ok(Topic {
            label: label.into(),
            pro_claim,
            con_claim,
            category_scheme,
        })
    }

    /// The gender topic with the published threshold scheme. The con claim is
    /// the fixed sentence the elicitation scores against; the pro claim is a
    /// mirrored default and configurable.
    pub fn gender() -> Self {
        Topic::new(
            "a society without gender",
            "a society without gender is a really good idea",
            "society without gender is a really bad idea",
            CategoryScheme::gender(),
        )
        .expect("builtin topic is valid")
    }

    /// The drug-legalisation topic with the published threshold scheme.
    pub fn drug() -> Self {
        Topic::new(
            "legalising drugs",
            "the legalisation of drugs is a good idea for society",
            "legalising drugs is a really bad idea",
            CategoryScheme::drug(),
        )
        .expect("builtin topic is valid")
    }
}

/// One agent's message at one step. `opinion` is filled in once elicited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub author: AgentId,
    pub step: u32,
    pub text: String,
    pub opinion: Option<OpinionScore>,
}

impl Post {
    pub fn new(author: AgentId, step: u32, text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyPostText);
        }
        Ok(Post {
            author,
            step,
            text,
            opinion: None,
        })
    }
}

/// Polarity score in [0, 1]; 0 means con, 1 means pro.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "RawScore")]
pub struct OpinionScore {
    pub value: f64,
}

#[derive(Deserialize)]
struct RawScore {
    value: f64,
}

impl TryFrom<RawScore> for OpinionScore {
    type Error = DomainError;
    fn try_from(raw: RawScore) -> Result<Self, Self::Error> {
        OpinionScore::new(raw.value)
    }
}

impl OpinionScore {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(DomainError::ScoreOutOfRange(value));
        }
        Ok(OpinionScore { value })
    }
}

/// The five polarity buckets, totally ordered from strong con to strong pro.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum PolarityCategory {
    StrongCon,
    Con,
    Neutral,
    Pro,
    StrongPro,
}

impl PolarityCategory {
    pub const ALL: [PolarityCategory; 5] = [
        PolarityCategory::StrongCon,
        PolarityCategory::Con,
        PolarityCategory::Neutral,
        PolarityCategory::Pro,
        PolarityCategory::StrongPro,
    ];

    /// Position in the category order, 0 = StrongCon .. 4 = StrongPro.
    pub fn rank(self) -> usize {
        match self {
            PolarityCategory::StrongCon => 0,
            PolarityCategory::Con => 1,
            PolarityCategory::Neutral => 2,
            PolarityCategory::Pro => 3,
            PolarityCategory::StrongPro => 4,
        }
    }

    pub fn from_rank(rank: usize) -> Option<PolarityCategory> {
        PolarityCategory::ALL.get(rank).copied()
    }
}

impl std::fmt::Display for PolarityCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PolarityCategory::StrongCon => "StrongCon",
            PolarityCategory::Con => "Con",
            PolarityCategory::Neutral => "Neutral",
            PolarityCategory::Pro => "Pro",
            PolarityCategory::StrongPro => "StrongPro",
        };
        f.write_str(s)
    }
}

/// Four ascending thresholds in (0, 1) delimiting the five polarity buckets.
///
/// Buckets are half-open, closed at the bottom: [0,t1) [t1,t2) [t2,t3) [t3,t4)
/// [t4,1]. The published tables print overlapping bounds; this convention is
/// the one fixed here so the buckets partition [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct CategoryScheme {
    pub thresholds: [f64; 4],
}

#[derive(Deserialize)]
struct RawScheme {
    thresholds: [f64; 4],
}

impl TryFrom<RawScheme> for CategoryScheme {
    type Error = DomainError;
    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        CategoryScheme::new(raw.thresholds)
    }
}

impl CategoryScheme {
    pub fn new(thresholds: [f64; 4]) -> Result<Self, DomainError> {
        let ascending = thresholds.windows(2).all(|w| w[0] < w[1]);
        let in_range = thresholds.iter().all(|t| t.is_finite() && *t > 0.0 && *t < 1.0);
        if !ascending || !in_range {
            return Err(DomainError::BadThresholds(thresholds));
        }
        Ok(CategoryScheme { thresholds })
    }

    /// Gender topic thresholds.
    pub fn gender() -> Self {
        CategoryScheme::new([0.45, 0.51, 0.58, 0.64]).expect("builtin scheme is valid")
    }

    /// Drug topic thresholds.
    pub fn drug() -> Self {
        CategoryScheme::new([0.37, 0.42, 0.48, 0.55]).expect("builtin scheme is valid")
    }
}

/// Bucket an opinion score under the scheme's half-open intervals. Total over
/// valid inputs: every score in [0, 1] lands in exactly one category.
pub fn categorize(score: OpinionScore, scheme: &CategoryScheme) -> PolarityCategory {
    let [t1, t2, t3, t4] = scheme.thresholds;
    let v = score.value;
    if v < t1 {
        PolarityCategory::StrongCon
    } else if v < t2 {
        PolarityCategory::Con
    } else if v < t3 {
        PolarityCategory::Neutral
    } else if v < t4 {
        PolarityCategory::Pro
    } else {
        PolarityCategory::StrongPro
    }
}
