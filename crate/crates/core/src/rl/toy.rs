//! Closed-form stand-in environment for convergence checks.
//!
//! Followers increase by one exactly when the chosen category equals the
//! hidden target category, never decrease, and the episode runs a fixed
//! number of steps. The optimal policy is computable by hand or by value
//! iteration, which the learning curves of the real environment are not.
//!
//! The observation keeps the same shape as the simulator's state: a constant
//! single-followee count vector plus the follower bucket, clamped at
//! `bucket_clamp`. The default clamp of 0 makes the observation constant, so
//! the check isolates action-value learning from state-chain discovery; a
//! larger clamp exposes the follower count as in the real encoding.

use super::{EpisodeEnv, PolarityCategory, RLState, RlError};

pub struct ToyEnv {
    target_category: PolarityCategory,
    bucket_clamp: u8,
    followers: u8,
}

impl ToyEnv {
    pub fn new(target_category: PolarityCategory, bucket_clamp: u8) -> Self {
        ToyEnv {
            target_category,
            bucket_clamp,
            followers: 0,
        }
    }

    pub fn target_category(&self) -> PolarityCategory {
        self.target_category
    }

    pub fn bucket_clamp(&self) -> u8 {
        self.bucket_clamp
    }

    fn observe(&self) -> RLState {
        RLState {
            category_counts: [0, 0, 1, 0, 0],
            follower_bucket: self.followers.min(self.bucket_clamp),
        }
    }

    /// Every state the encoding can produce.
    pub fn all_states(&self) -> Vec<RLState> {
        (0..=self.bucket_clamp)
            .map(|b| RLState {
                category_counts: [0, 0, 1, 0, 0],
                follower_bucket: b,
            })
            .collect()
    }
}

impl EpisodeEnv for ToyEnv {
    fn reset(&mut self) -> Result<RLState, RlError> {
        self.followers = 0;
        Ok(self.observe())
    }

    fn step(&mut self, action: PolarityCategory) -> Result<(f64, RLState), RlError> {
        let r = if action == self.target_category {
            self.followers = self.followers.saturating_add(1);
            1.0
        } else {
            0.0
        };
        Ok((r, self.observe()))
    }
}
