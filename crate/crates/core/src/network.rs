//! Directed follow graph and the streak-driven link update rules.
//!
//! For every ordered agent pair the graph tracks how many consecutive steps
//! the two agents shared a polarity category (agree streak) or differed
//! (disagree streak). Once a streak reaches the configured length the pair
//! becomes eligible: a missing edge is added with the follow probability, an
//! existing edge is removed with the unfollow probability. A successful draw
//! resets the streak; a failed draw leaves the pair eligible next tick.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::PolarityCategory;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("expected {expected} categories, got {got}")]
    CategoryCountMismatch { expected: usize, got: usize },
    #[error("edge ({0}, {1}) is invalid for {2} agents")]
    InvalidEdge(u32, u32, usize),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("streak length must be >= 1")]
    BadStreakLength,
}

/// Link update rates and the consecutive-agreement length that makes a pair
/// eligible for a draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkDynamicsConfig {
    pub follow_prob: f64,
    pub unfollow_prob: f64,
    pub streak_k: u32,
}

impl LinkDynamicsConfig {
    pub fn new(follow_prob: f64, unfollow_prob: f64, streak_k: u32) -> Result<Self, NetworkError> {
        for p in [follow_prob, unfollow_prob] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(NetworkError::BadProbability(p));
            }
        }
        if streak_k < 1 {
            return Err(NetworkError::BadStreakLength);
        }
        Ok(LinkDynamicsConfig {
            follow_prob,
            unfollow_prob,
            streak_k,
        })
    }

    /// Follow-only regime: links form, never break.
    pub fn follow_dynamics(streak_k: u32) -> Self {
        LinkDynamicsConfig::new(0.8, 0.0, streak_k).expect("preset is valid")
    }

    /// Links form with 0.8 and break with 0.5.
    pub fn follow_unfollow_dynamics(streak_k: u32) -> Self {
        LinkDynamicsConfig::new(0.8, 0.5, streak_k).expect("preset is valid")
    }
}

/// Directed follow relation with per-ordered-pair streak counters. Pairs are
/// (follower, followee); no self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct FollowGraph {
    n_agents: usize,
    edges: BTreeSet<(u32, u32)>,
    agree_streak: BTreeMap<(u32, u32), u32>,
    disagree_streak: BTreeMap<(u32, u32), u32>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n_agents: usize,
    edges: Vec<(u32, u32)>,
    #[serde(default)]
    agree_streak: Vec<(u32, u32, u32)>,
    #[serde(default)]
    disagree_streak: Vec<(u32, u32, u32)>,
}

impl From<FollowGraph> for RawGraph {
    fn from(g: FollowGraph) -> Self {
        RawGraph {
            n_agents: g.n_agents,
            edges: g.edges.iter().copied().collect(),
            agree_streak: g.agree_streak.iter().map(|(&(i, j), &s)| (i, j, s)).collect(),
            disagree_streak: g.disagree_streak.iter().map(|(&(i, j), &s)| (i, j, s)).collect(),
        }
    }
}

impl TryFrom<RawGraph> for FollowGraph {
    type Error = NetworkError;
    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        let mut g = FollowGraph::new(raw.n_agents);
        for (i, j) in raw.edges {
            g.add_edge(i, j)?;
        }
        for (i, j, s) in raw.agree_streak {
            g.check_pair(i, j)?;
            g.agree_streak.insert((i, j), s);
        }
        for (i, j, s) in raw.disagree_streak {
            g.check_pair(i, j)?;
            g.disagree_streak.insert((i, j), s);
        }
        Ok(g)
    }
}

impl FollowGraph {
    pub fn new(n_agents: usize) -> Self {
        FollowGraph {
            n_agents,
            edges: BTreeSet::new(),
            agree_streak: BTreeMap::new(),
            disagree_streak: BTreeMap::new(),
        }
    }

    fn check_pair(&self, follower: u32, followee: u32) -> Result<(), NetworkError> {
        if follower == followee
            || follower as usize >= self.n_agents
            || followee as usize >= self.n_agents
        {
            return Err(NetworkError::InvalidEdge(follower, followee, self.n_agents));
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn add_edge(&mut self, follower: u32, followee: u32) -> Result<bool, NetworkError> {
        self.check_pair(follower, followee)?;
        Ok(self.edges.insert((follower, followee)))
    }

    pub fn remove_edge(&mut self, follower: u32, followee: u32) -> bool {
        self.edges.remove(&(follower, followee))
    }

    pub fn has_edge(&self, follower: u32, followee: u32) -> bool {
        self.edges.contains(&(follower, followee))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All edges in ascending (follower, followee) order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    /// Agents that `follower` follows, ascending.
    pub fn followees(&self, follower: u32) -> Vec<u32> {
        self.edges
            .range((follower, 0)..=(follower, u32::MAX))
            .map(|&(_, j)| j)
            .collect()
    }

    /// Number of followers of `followee`.
    pub fn in_degree(&self, followee: u32) -> usize {
        self.edges.iter().filter(|&&(_, j)| j == followee).count()
    }

    pub fn agree_streak(&self, follower: u32, followee: u32) -> u32 {
        *self.agree_streak.get(&(follower, followee)).unwrap_or(&0)
    }

    pub fn disagree_streak(&self, follower: u32, followee: u32) -> u32 {
        *self.disagree_streak.get(&(follower, followee)).unwrap_or(&0)
    }
}

/// Counters from one `update_links` call, used for calibration checks.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LinkUpdateStats {
    pub follow_draws: u64,
    pub follows_added: u64,
    pub unfollow_draws: u64,
    pub unfollows_removed: u64,
}

impl std::ops::AddAssign for LinkUpdateStats {
    fn add_assign(&mut self, rhs: Self) {
        self.follow_draws += rhs.follow_draws;
        self.follows_added += rhs.follows_added;
        self.unfollow_draws += rhs.unfollow_draws;
        self.unfollows_removed += rhs.unfollows_removed;
    }
}

/// Apply one tick of link dynamics given every agent's current category.
///
/// Streaks update first: a matching pair increments its agree streak and
/// zeroes its disagree streak, a differing pair the reverse. Then each
/// eligible pair draws independently in ascending (follower, followee) order;
/// both directions of a pair are separate draws. Outgoing edges of
/// `exempt_out` keep their streak bookkeeping but never draw, which pins an
/// externally controlled agent's follow set while its incoming edges stay
/// live.
pub fn update_links<R: Rng>(
    graph: &mut FollowGraph,
    categories: &[PolarityCategory],
    cfg: &LinkDynamicsConfig,
    exempt_out: Option<u32>,
    rng: &mut R,
) -> Result<LinkUpdateStats, NetworkError> {
    let n = graph.n_agents;
    if categories.len() != n {
        return Err(NetworkError::CategoryCountMismatch {
            expected: n,
            got: categories.len(),
        });
    }
    let mut stats = LinkUpdateStats::default();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i == j {
                continue;
            }
            let pair = (i, j);
            if categories[i as usize] == categories[j as usize] {
                *graph.agree_streak.entry(pair).or_insert(0) += 1;
                graph.disagree_streak.remove(&pair);
            } else {
                *graph.disagree_streak.entry(pair).or_insert(0) += 1;
                graph.agree_streak.remove(&pair);
            }
            if exempt_out == Some(i) {
                continue;
            }
            if !graph.edges.contains(&pair) && graph.agree_streak(i, j) >= cfg.streak_k {
                stats.follow_draws += 1;
                if rng.gen::<f64>() < cfg.follow_prob {
                    graph.edges.insert(pair);
                    graph.agree_streak.remove(&pair);
                    stats.follows_added += 1;
                }
            } else if graph.edges.contains(&pair) && graph.disagree_streak(i, j) >= cfg.streak_k {
                stats.unfollow_draws += 1;
                if rng.gen::<f64>() < cfg.unfollow_prob {
                    graph.edges.remove(&pair);
                    graph.disagree_streak.remove(&pair);
                    stats.unfollows_removed += 1;
                }
            }
        }
    }
    Ok(stats)
}
