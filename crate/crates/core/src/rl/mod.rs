//! Tabular Q-learning for the target agent: state encoding over observed
//! followee categories plus the agent's own follower count, ε-greedy action
//! selection over the five polarity categories, the Q-value update, and the
//! episode loop around the simulation environment.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{PolarityCategory, Post};
use crate::environment::{EnvError, EnvironmentConfig, SimulationState, Simulator};
use crate::seeding::stream_seed;
use crate::textmodel::TextModel;

pub mod toy;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("rl config invalid: {0}")]
    Config(String),
    #[error("non-finite value in Q-update: {0}")]
    NonFinite(f64),
    #[error("action bank category '{0}' is empty")]
    EmptyBankCategory(PolarityCategory),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observability {
    /// The target initially follows a single agent.
    Part,
    /// The target initially follows every other agent.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RLConfig {
    pub learning_rate: f64,
    pub discount: f64,
    /// ε of the ε-greedy policy, held constant.
    pub exploration_rate: f64,
    /// Stored decay floor; no decay schedule uses it yet.
    pub epsilon_floor: f64,
    pub episodes: u32,
    pub steps_per_episode: u32,
    pub observability: Observability,
    /// Per-category cap on the observed followee counts in the state.
    #[serde(default = "default_count_clamp")]
    pub count_clamp: u8,
}

fn default_count_clamp() -> u8 {
    3
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            learning_rate: 0.01,
            discount: 0.99,
            exploration_rate: 0.01,
            epsilon_floor: 0.005,
            episodes: 500,
            steps_per_episode: 5,
            observability: Observability::Part,
            count_clamp: 3,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(RlError::Config(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(RlError::Config(format!("discount {} outside [0, 1]", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.exploration_rate) {
            return Err(RlError::Config(format!(
                "exploration rate {} outside [0, 1]",
                self.exploration_rate
            )));
        }
        if self.steps_per_episode < 1 {
            return Err(RlError::Config("steps_per_episode must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Observed state: per-category counts of the observed followees (clamped)
/// plus the target's own follower count (clamped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RLState {
    pub category_counts: [u8; 5],
    pub follower_bucket: u8,
}

/// Encode the target's view of a simulation state: what the initially
/// followed accounts currently post, and how many followers the target has.
/// Agents outside `observed` never influence the encoding.
pub fn encode_state(
    sim: &SimulationState,
    target: u32,
    observed: &[u32],
    count_clamp: u8,
) -> RLState {
    let mut counts = [0u8; 5];
    for &idx in observed {
        let rank = sim.categories[idx as usize].rank();
        counts[rank] = (counts[rank] + 1).min(count_clamp);
    }
    let n = sim.categories.len();
    let followers = sim.graph.in_degree(target).min(n) as u8;
    RLState {
        category_counts: counts,
        follower_bucket: followers,
    }
}

/// State-action value table; absent entries read as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<QEntry>", try_from = "Vec<QEntry>")]
pub struct QTable {
    entries: BTreeMap<(RLState, PolarityCategory), f64>,
}

/// One dumped state-action-value triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QEntry {
    pub state: RLState,
    pub action: PolarityCategory,
    pub value: f64,
}

impl From<QTable> for Vec<QEntry> {
    fn from(q: QTable) -> Self {
        q.entries
            .into_iter()
            .map(|((state, action), value)| QEntry {
                state,
                action,
                value,
            })
            .collect()
    }
}

impl TryFrom<Vec<QEntry>> for QTable {
    type Error = RlError;
    fn try_from(entries: Vec<QEntry>) -> Result<Self, Self::Error> {
        let mut q = QTable::new();
        for e in entries {
            if !e.value.is_finite() {
                return Err(RlError::NonFinite(e.value));
            }
            q.entries.insert((e.state, e.action), e.value);
        }
        Ok(q)
    }
}

impl QTable {
    pub fn new() -> Self {
        QTable::default()
    }

    pub fn get(&self, s: &RLState, a: PolarityCategory) -> f64 {
        *self.entries.get(&(*s, a)).unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest value over all actions in `s`.
    pub fn max_value(&self, s: &RLState) -> f64 {
        PolarityCategory::ALL
            .iter()
            .map(|a| self.get(s, *a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax action in `s`; ties break toward the lowest category order.
    pub fn greedy(&self, s: &RLState) -> PolarityCategory {
        let mut best = PolarityCategory::StrongCon;
        let mut best_v = self.get(s, best);
        for a in PolarityCategory::ALL.into_iter().skip(1) {
            let v = self.get(s, a);
            if v > best_v {
                best = a;
                best_v = v;
            }
        }
        best
    }
}

/// `Q(s,a) += α · (r + γ · max_a' Q(s',a') − Q(s,a))`; touches exactly one
/// entry. Non-finite rewards are rejected.
pub fn q_update(
    q: &mut QTable,
    s: &RLState,
    a: PolarityCategory,
    reward: f64,
    s_next: &RLState,
    alpha: f64,
    gamma: f64,
) -> Result<(), RlError> {
    if !reward.is_finite() {
        return Err(RlError::NonFinite(reward));
    }
    let current = q.get(s, a);
    let target = reward + gamma * q.max_value(s_next);
    let updated = current + alpha * (target - current);
    if !updated.is_finite() {
        return Err(RlError::NonFinite(updated));
    }
    q.entries.insert((*s, a), updated);
    Ok(())
}

/// ε-greedy: with probability ε a uniform random category, otherwise the
/// greedy argmax.
pub fn select_action<R: Rng>(
    q: &QTable,
    s: &RLState,
    epsilon: f64,
    rng: &mut R,
) -> PolarityCategory {
    if rng.gen::<f64>() < epsilon {
        PolarityCategory::ALL[rng.gen_range(0..PolarityCategory::ALL.len())]
    } else {
        q.greedy(s)
    }
}

/// Follower delta observed after one environment step.
pub fn reward(prev_followers: usize, new_followers: usize) -> f64 {
    new_followers as f64 - prev_followers as f64
}

/// The dataset-generated dictionary mapping each polarity category to real
/// post texts. Every category must be non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<PolarityCategory, Vec<String>>")]
#[serde(into = "BTreeMap<PolarityCategory, Vec<String>>")]
pub struct ActionBank {
    posts: BTreeMap<PolarityCategory, Vec<String>>,
}

impl From<ActionBank> for BTreeMap<PolarityCategory, Vec<String>> {
    fn from(b: ActionBank) -> Self {
        b.posts
    }
}

impl TryFrom<BTreeMap<PolarityCategory, Vec<String>>> for ActionBank {
    type Error = RlError;
    fn try_from(posts: BTreeMap<PolarityCategory, Vec<String>>) -> Result<Self, Self::Error> {
        ActionBank::new(posts)
    }
}

impl ActionBank {
    pub fn new(posts: BTreeMap<PolarityCategory, Vec<String>>) -> Result<Self, RlError> {
        for cat in PolarityCategory::ALL {
            match posts.get(&cat) {
                Some(list) if !list.is_empty() => {}
                _ => return Err(RlError::EmptyBankCategory(cat)),
            }
        }
        Ok(ActionBank { posts })
    }

    pub fn posts_for(&self, cat: PolarityCategory) -> &[String] {
        &self.posts[&cat]
    }

    pub fn counts(&self) -> [usize; 5] {
        let mut c = [0usize; 5];
        for cat in PolarityCategory::ALL {
            c[cat.rank()] = self.posts[&cat].len();
        }
        c
    }
}

/// Uniform draw of a post text for the chosen category.
pub fn act_to_post<'a, R: Rng>(
    action: PolarityCategory,
    bank: &'a ActionBank,
    rng: &mut R,
) -> &'a str {
    let list = bank.posts_for(action);
    &list[rng.gen_range(0..list.len())]
}

/// One episode-structured environment the trainer can drive: reset to a
/// start state, then step with a polarity-category action.
pub trait EpisodeEnv {
    fn reset(&mut self) -> Result<RLState, RlError>;
    fn step(&mut self, action: PolarityCategory) -> Result<(f64, RLState), RlError>;
}

pub struct TrainOutput {
    pub q_table: QTable,
    pub episode_rewards: Vec<f64>,
}

/// Q-learning over any [`EpisodeEnv`]: per step, encode → select → act →
/// observe reward and next state → update. Returns the learned table and the
/// total reward of each episode.
pub fn train_loop(
    env: &mut dyn EpisodeEnv,
    rl_cfg: &RLConfig,
    seed: u64,
) -> Result<TrainOutput, RlError> {
    rl_cfg.validate()?;
    let mut q = QTable::new();
    let mut episode_rewards = Vec::with_capacity(rl_cfg.episodes as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "select", 0, 0));
    for _ in 0..rl_cfg.episodes {
        let mut state = env.reset()?;
        let mut total = 0.0;
        for _ in 0..rl_cfg.steps_per_episode {
            let action = select_action(&q, &state, rl_cfg.exploration_rate, &mut rng);
            let (r, next) = env.step(action)?;
            q_update(
                &mut q,
                &state,
                action,
                r,
                &next,
                rl_cfg.learning_rate,
                rl_cfg.discount,
            )?;
            total += r;
            state = next;
        }
        episode_rewards.push(total);
    }
    Ok(TrainOutput {
        q_table: q,
        episode_rewards,
    })
}

/// The trained agent is the last index; it never generates text, it posts
/// from the action bank.
pub fn target_index(n_agents: usize) -> u32 {
    n_agents as u32 - 1
}

/// Initial followees of the target under an observability setting; these are
/// also the observed accounts in the state encoding.
pub fn observed_agents(n_agents: usize, observability: Observability) -> Vec<u32> {
    let target = target_index(n_agents);
    match observability {
        Observability::Part => vec![0],
        Observability::Full => (0..n_agents as u32).filter(|i| *i != target).collect(),
    }
}

/// Episode adapter around the simulator. Each episode rebuilds the
/// environment from the seed posts under a fresh derived seed: the follow
/// graph resets, the target starts with zero followers, and its initial
/// followee set matches the observability setting.
pub struct SimEpisodeEnv<'a> {
    base_cfg: EnvironmentConfig,
    generator: Arc<dyn TextModel>,
    scorer: Arc<dyn TextModel>,
    bank: &'a ActionBank,
    seed_posts: &'a [Post],
    rl_cfg: RLConfig,
    master_seed: u64,
    target: u32,
    observed: Vec<u32>,
    episode: u64,
    state: Option<SimulationState>,
    sim: Option<Simulator>,
    bank_rng: ChaCha8Rng,
}

impl<'a> SimEpisodeEnv<'a> {
    pub fn new(
        env_cfg: &EnvironmentConfig,
        rl_cfg: &RLConfig,
        bank: &'a ActionBank,
        seed_posts: &'a [Post],
        generator: Arc<dyn TextModel>,
        scorer: Arc<dyn TextModel>,
        master_seed: u64,
    ) -> Result<Self, RlError> {
        env_cfg.validate()?;
        rl_cfg.validate()?;
        let target = target_index(env_cfg.n_agents);
        let observed = observed_agents(env_cfg.n_agents, rl_cfg.observability);
        Ok(SimEpisodeEnv {
            base_cfg: env_cfg.clone(),
            generator,
            scorer,
            bank,
            seed_posts,
            rl_cfg: rl_cfg.clone(),
            master_seed,
            target,
            observed,
            episode: 0,
            state: None,
            sim: None,
            bank_rng: ChaCha8Rng::seed_from_u64(stream_seed(master_seed, "bank", 0, 0)),
        })
    }

    pub fn target(&self) -> u32 {
        self.target
    }

    pub fn observed(&self) -> &[u32] {
        &self.observed
    }
}

impl EpisodeEnv for SimEpisodeEnv<'_> {
    fn reset(&mut self) -> Result<RLState, RlError> {
        let ep = self.episode;
        self.episode += 1;

        let mut cfg = self.base_cfg.clone();
        cfg.seed = stream_seed(self.master_seed, "episode", ep, 0);
        // the target's follow set is experiment design: seed it and, in the
        // part-observable case, pin it against automatic updates
        let mut edges = cfg.initial_edges.clone();
        for &obs in &self.observed {
            edges.push((self.target, obs));
        }
        cfg.initial_edges = edges;
        if self.rl_cfg.observability == Observability::Part {
            cfg.frozen_outgoing = Some(self.target);
        }

        let sim = Simulator::new(cfg, self.generator.clone(), self.scorer.clone())?;
        let state = sim.init(self.seed_posts)?;
        let encoded = encode_state(&state, self.target, &self.observed, self.rl_cfg.count_clamp);
        self.bank_rng = ChaCha8Rng::seed_from_u64(stream_seed(self.master_seed, "bank", ep, 1));
        self.state = Some(state);
        self.sim = Some(sim);
        Ok(encoded)
    }

    fn step(&mut self, action: PolarityCategory) -> Result<(f64, RLState), RlError> {
        let sim = self.sim.as_ref().ok_or_else(|| {
            RlError::Config("step called before reset".to_string())
        })?;
        let state = self.state.take().ok_or_else(|| {
            RlError::Config("step called before reset".to_string())
        })?;
        let text = act_to_post(action, self.bank, &mut self.bank_rng).to_string();
        let mut external = BTreeMap::new();
        external.insert(self.target, text);
        let prev = state.graph.in_degree(self.target);
        let next = sim.step(&state, &external)?;
        let r = reward(prev, next.graph.in_degree(self.target));
        let encoded = encode_state(&next, self.target, &self.observed, self.rl_cfg.count_clamp);
        self.state = Some(next);
        Ok((r, encoded))
    }
}

/// Full training run against the simulator. The target agent is reserved as
/// the last index and starts every episode with zero followers.
pub fn train(
    env_cfg: &EnvironmentConfig,
    rl_cfg: &RLConfig,
    bank: &ActionBank,
    seed_posts: &[Post],
    generator: Arc<dyn TextModel>,
    scorer: Arc<dyn TextModel>,
    seed: u64,
) -> Result<TrainOutput, RlError> {
    let mut env = SimEpisodeEnv::new(env_cfg, rl_cfg, bank, seed_posts, generator, scorer, seed)?;
    train_loop(&mut env, rl_cfg, seed)
}
