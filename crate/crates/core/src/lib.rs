//! Agent-based simulator of opinion dynamics on a follow network, with a
//! tabular Q-learning trainer that teaches a target agent to gain followers
//! by choosing the polarity of what it posts.
//!
//! The crate is organized along the pipeline:
//!
//! - [`domain`]: shared value types (agents, topics, posts, scores, categories)
//! - [`textmodel`]: the language-model seam with stub and remote backends
//! - [`prompt`]: deterministic prompt assembly from an agent's context
//! - [`opinion`]: perplexity-based opinion elicitation
//! - [`network`]: the follow graph and streak-driven link updates
//! - [`environment`]: the step loop tying the above together
//! - [`rl`]: Q-learning over the environment, plus a closed-form toy env
//! - [`experiments`]: corpus ingestion, action banks, and the scenario grid

pub mod domain;
pub mod environment;
pub mod experiments;
pub mod network;
pub mod opinion;
pub mod prompt;
pub mod rl;
pub mod seeding;
pub mod textmodel;
