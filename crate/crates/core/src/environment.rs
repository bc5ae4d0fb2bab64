//! The simulation loop: every step, each agent's post is generated from its
//! prompt context (own latest post plus followee posts), every opinion is
//! elicited, then the follow links update. Externally controlled agents can
//! have their post injected for a step, bypassing generation.
//!
//! A step reads only the previous state (synchronous update), so per-agent
//! work is order-independent: generation with the stub backend is a pure
//! function of the prompt, and the link update draws from its own stream
//! derived from (run seed, step). Generation failure falls back to reposting
//! the agent's previous text; elicitation failure carries the previous
//! opinion forward; both are logged. At initialization there is nothing to
//! carry, so failures there are fatal.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{categorize, AgentId, DomainError, OpinionScore, PolarityCategory, Post, Topic};
use crate::network::{update_links, FollowGraph, LinkDynamicsConfig, NetworkError};
use crate::opinion::{elicit_opinion, OpinionError};
use crate::prompt::{build_prompt, PromptContext};
use crate::seeding::stream_seed;
use crate::textmodel::{DecodingParams, TextModel};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("expected {expected} seed posts, got {got}")]
    SeedPostCountMismatch { expected: usize, got: usize },
    #[error("seed posts must cover every agent exactly once")]
    SeedPostCoverage,
    #[error("unknown agent index {0}")]
    UnknownAgent(u32),
    #[error("environment config invalid: {0}")]
    Config(String),
    #[error("opinion elicitation failed at initialization: {0}")]
    InitElicitation(#[source] OpinionError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n_agents: usize,
    pub t_max: u32,
    pub decoding: DecodingParams,
    pub link: LinkDynamicsConfig,
    pub topic: Topic,
    pub seed: u64,
    /// Number of the agent's own posts included in its prompt.
    #[serde(default = "default_history_cap")]
    pub history_cap: usize,
    #[serde(default)]
    pub initial_edges: Vec<(u32, u32)>,
    /// Agent whose outgoing edges are pinned (no automatic follow/unfollow).
    #[serde(default)]
    pub frozen_outgoing: Option<u32>,
    /// Display names; defaults to "Agent 0".."Agent n-1".
    #[serde(default)]
    pub agent_names: Option<Vec<String>>,
}

fn default_history_cap() -> usize {
    1
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_agents < 2 {
            return Err(EnvError::Config("need at least 2 agents".to_string()));
        }
        if self.t_max < 1 {
            return Err(EnvError::Config("t_max must be >= 1".to_string()));
        }
        if self.history_cap < 1 {
            return Err(EnvError::Config("history_cap must be >= 1".to_string()));
        }
        if let Some(names) = &self.agent_names {
            if names.len() != self.n_agents {
                return Err(EnvError::Config(format!(
                    "{} agent names for {} agents",
                    names.len(),
                    self.n_agents
                )));
            }
        }
        Ok(())
    }
}

/// Snapshot of the simulation after a step. `posts` is the latest post per
/// agent; `histories` keeps up to `history_cap` recent posts per agent for
/// prompt building. Categories always equal `categorize(opinions[i])` under
/// the run's scheme. `rng_seed` is the run's master seed; per-step streams
/// derive from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub step: u32,
    pub posts: Vec<Post>,
    pub histories: Vec<Vec<Post>>,
    pub opinions: Vec<OpinionScore>,
    pub categories: Vec<PolarityCategory>,
    pub graph: FollowGraph,
    pub rng_seed: u64,
}

impl SimulationState {
    /// Count of agents per polarity category.
    pub fn category_histogram(&self) -> [usize; 5] {
        let mut h = [0usize; 5];
        for c in &self.categories {
            h[c.rank()] += 1;
        }
        h
    }
}

pub struct Simulator {
    cfg: EnvironmentConfig,
    agents: Vec<AgentId>,
    generator: Arc<dyn TextModel>,
    scorer: Arc<dyn TextModel>,
}

impl Simulator {
    /// `generator` produces posts; `scorer` provides token logprobs for
    /// opinion elicitation. They may be the same backend.
    pub fn new(
        cfg: EnvironmentConfig,
        generator: Arc<dyn TextModel>,
        scorer: Arc<dyn TextModel>,
    ) -> Result<Self, EnvError> {
        cfg.validate()?;
        let agents: Vec<AgentId> = (0..cfg.n_agents)
            .map(|i| {
                let name = match &cfg.agent_names {
                    Some(names) => names[i].clone(),
                    None => format!("Agent {i}"),
                };
                AgentId::new(i as u32, name)
            })
            .collect::<Result<_, _>>()?;
        Ok(Simulator {
            cfg,
            agents,
            generator,
            scorer,
        })
    }

    pub fn config(&self) -> &EnvironmentConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn topic(&self) -> &Topic {
        &self.cfg.topic
    }

    /// Build the step-0 state from one seed post per agent. Elicitation
    /// failures are fatal here: there is no previous opinion to carry.
    pub fn init(&self, seed_posts: &[Post]) -> Result<SimulationState, EnvError> {
        let n = self.cfg.n_agents;
        if seed_posts.len() != n {
            return Err(EnvError::SeedPostCountMismatch {
                expected: n,
                got: seed_posts.len(),
            });
        }
        let mut ordered: Vec<Option<Post>> = vec![None; n];
        for p in seed_posts {
            let idx = p.author.index as usize;
            if idx >= n || ordered[idx].is_some() {
                return Err(EnvError::SeedPostCoverage);
            }
            let mut post = p.clone();
            post.step = 0;
            ordered[idx] = Some(post);
        }
        let mut posts: Vec<Post> = ordered.into_iter().map(|p| p.unwrap()).collect();

        let mut opinions = Vec::with_capacity(n);
        for post in &mut posts {
            let score = elicit_opinion(&post.text, &self.cfg.topic, self.scorer.as_ref())
                .map_err(EnvError::InitElicitation)?;
            post.opinion = Some(score);
            opinions.push(score);
        }
        let categories: Vec<PolarityCategory> = opinions
            .iter()
            .map(|s| categorize(*s, &self.cfg.topic.category_scheme))
            .collect();

        let mut graph = FollowGraph::new(n);
        for &(i, j) in &self.cfg.initial_edges {
            graph.add_edge(i, j)?;
        }

        let histories = posts.iter().map(|p| vec![p.clone()]).collect();
        Ok(SimulationState {
            step: 0,
            posts,
            histories,
            opinions,
            categories,
            graph,
            rng_seed: self.cfg.seed,
        })
    }

    /// Advance one step. `external_posts` maps agent index to injected text,
    /// used by the trainer to act for the target agent; injected text is
    /// stored verbatim and elicited like any other post.
    pub fn step(
        &self,
        state: &SimulationState,
        external_posts: &BTreeMap<u32, String>,
    ) -> Result<SimulationState, EnvError> {
        let n = self.cfg.n_agents;
        for idx in external_posts.keys() {
            if *idx as usize >= n {
                return Err(EnvError::UnknownAgent(*idx));
            }
        }
        let next_step = state.step + 1;

        // post generation: reads only step-t state
        let mut posts = Vec::with_capacity(n);
        for i in 0..n {
            let agent = &self.agents[i];
            let text = match external_posts.get(&(i as u32)) {
                Some(injected) => injected.clone(),
                None => {
                    let followee_posts: Vec<(AgentId, Post)> = state
                        .graph
                        .followees(i as u32)
                        .into_iter()
                        .map(|j| (self.agents[j as usize].clone(), state.posts[j as usize].clone()))
                        .collect();
                    let ctx = PromptContext::new(
                        agent.clone(),
                        self.cfg.topic.label.clone(),
                        state.histories[i].clone(),
                        followee_posts,
                        self.cfg.history_cap,
                    );
                    let prompt = build_prompt(&ctx);
                    match self.generator.generate(&prompt, &self.cfg.decoding) {
                        Ok(text) => text,
                        Err(e) => {
                            log::warn!(
                                "generation failed for agent {i} at step {next_step}: {e}; reposting previous text"
                            );
                            state.posts[i].text.clone()
                        }
                    }
                }
            };
            posts.push(Post::new(agent.clone(), next_step, text)?);
        }

        // opinion elicitation
        let mut opinions = Vec::with_capacity(n);
        for (i, post) in posts.iter_mut().enumerate() {
            let score = match elicit_opinion(&post.text, &self.cfg.topic, self.scorer.as_ref()) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!(
                        "elicitation failed for agent {i} at step {next_step}: {e}; carrying previous opinion"
                    );
                    state.opinions[i]
                }
            };
            post.opinion = Some(score);
            opinions.push(score);
        }
        let categories: Vec<PolarityCategory> = opinions
            .iter()
            .map(|s| categorize(*s, &self.cfg.topic.category_scheme))
            .collect();

        // link update from its own per-step stream
        let mut graph = state.graph.clone();
        let mut rng =
            ChaCha8Rng::seed_from_u64(stream_seed(state.rng_seed, "links", next_step as u64, 0));
        update_links(
            &mut graph,
            &categories,
            &self.cfg.link,
            self.cfg.frozen_outgoing,
            &mut rng,
        )?;

        let histories = state
            .histories
            .iter()
            .zip(&posts)
            .map(|(h, p)| {
                let mut h = h.clone();
                h.push(p.clone());
                let skip = h.len().saturating_sub(self.cfg.history_cap);
                h.drain(..skip);
                h
            })
            .collect();

        Ok(SimulationState {
            step: next_step,
            posts,
            histories,
            opinions,
            categories,
            graph,
            rng_seed: state.rng_seed,
        })
    }

    /// Run the full loop and return the trajectory of `t_max + 1` states
    /// including step 0.
    pub fn run(&self, seed_posts: &[Post]) -> Result<Vec<SimulationState>, EnvError> {
        let mut states = Vec::with_capacity(self.cfg.t_max as usize + 1);
        states.push(self.init(seed_posts)?);
        let no_injection = BTreeMap::new();
        for _ in 0..self.cfg.t_max {
            let next = self.step(states.last().unwrap(), &no_injection)?;
            states.push(next);
        }
        Ok(states)
    }
}

/// One JSON record per step: opinions, categories, edge list, histogram.
pub fn write_trajectory_jsonl<W: Write>(
    states: &[SimulationState],
    w: &mut W,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        step: u32,
        opinions: Vec<f64>,
        categories: &'a [PolarityCategory],
        edges: Vec<(u32, u32)>,
        histogram: [usize; 5],
    }
    for s in states {
        let rec = Record {
            step: s.step,
            opinions: s.opinions.iter().map(|o| o.value).collect(),
            categories: &s.categories,
            edges: s.graph.edges().collect(),
            histogram: s.category_histogram(),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Long-format CSV of the opinion trajectories: one row per (step, agent).
pub fn write_opinions_csv<W: Write>(states: &[SimulationState], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "step,agent,opinion")?;
    for s in states {
        for (i, o) in s.opinions.iter().enumerate() {
            writeln!(w, "{},{},{}", s.step, i, o.value)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CategoryScheme;
    use crate::textmodel::stub::{CompletionBank, StubBackend, StubSpec};

    fn stub_with_bank() -> Arc<StubBackend> {
        let mut spec = StubSpec::echo(-1.0, -8.0);
        spec.pro_markers = vec!["good".into(), "PRO_SEED".into()];
        spec.con_markers = vec!["bad".into(), "CON_SEED".into()];
        spec.completions = CompletionBank {
            pro: vec!["a really good idea with good points".into()],
            con: vec!["a really bad idea with bad points".into()],
            neutral: vec!["people keep talking about it".into()],
        };
        Arc::new(StubBackend::new(spec).unwrap())
    }

    fn neutral_topic() -> Topic {
        // claims share no tokens with any generated or seeded text below
        Topic::new("t", "xzq wvu", "jkl mno", CategoryScheme::gender()).unwrap()
    }

    fn config(n: usize, t_max: u32, topic: Topic) -> EnvironmentConfig {
        EnvironmentConfig {
            n_agents: n,
            t_max,
            decoding: DecodingParams::narrow("stub"),
            link: LinkDynamicsConfig::follow_dynamics(2),
            topic,
            seed: 42,
            history_cap: 1,
            initial_edges: vec![],
            frozen_outgoing: None,
            agent_names: None,
        }
    }

    fn seed_posts(sim: &Simulator, texts: &[&str]) -> Vec<Post> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Post::new(sim.agents()[i].clone(), 0, *t).unwrap())
            .collect()
    }

    #[test]
    fn symmetric_claims_give_exactly_half_at_init() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(2, 1, neutral_topic()), stub.clone(), stub).unwrap();
        let posts = seed_posts(&sim, &["hello there", "more words"]);
        let state = sim.init(&posts).unwrap();
        assert_eq!(state.opinions[0].value, 0.5);
        assert_eq!(state.opinions[1].value, 0.5);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn seed_post_count_mismatch_is_an_error() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(4, 1, neutral_topic()), stub.clone(), stub).unwrap();
        let posts = seed_posts(&sim, &["a", "b", "c"]);
        assert!(matches!(
            sim.init(&posts[..3]),
            Err(EnvError::SeedPostCountMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn duplicate_seed_authors_are_rejected() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(2, 1, neutral_topic()), stub.clone(), stub).unwrap();
        let a0 = sim.agents()[0].clone();
        let posts = vec![
            Post::new(a0.clone(), 0, "one").unwrap(),
            Post::new(a0, 0, "two").unwrap(),
        ];
        assert!(matches!(sim.init(&posts), Err(EnvError::SeedPostCoverage)));
    }

    #[test]
    fn injected_post_is_stored_verbatim() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(2, 1, neutral_topic()), stub.clone(), stub).unwrap();
        let state = sim.init(&seed_posts(&sim, &["x y", "z w"])).unwrap();
        let mut external = BTreeMap::new();
        external.insert(1u32, "  injected text, kept exactly  ".to_string());
        let next = sim.step(&state, &external).unwrap();
        assert_eq!(next.posts[1].text, "  injected text, kept exactly  ");
        assert_eq!(next.step, 1);
    }

    #[test]
    fn follower_echoes_followee_markers() {
        // agent 0 follows agent 1 whose seed post carries a pro marker, so
        // agent 0's generated post must come from the stub's pro bank
        let stub = stub_with_bank();
        let mut cfg = config(2, 1, neutral_topic());
        cfg.initial_edges = vec![(0, 1)];
        let sim = Simulator::new(cfg, stub.clone(), stub.clone()).unwrap();
        let state = sim
            .init(&seed_posts(&sim, &["plain words here", "PRO_SEED spotted today"]))
            .unwrap();
        let next = sim.step(&state, &BTreeMap::new()).unwrap();
        assert!(stub.spec().completions.pro.contains(&next.posts[0].text));
        // agent 1 has no followees and a marker-bearing own post
        assert!(stub.spec().completions.pro.contains(&next.posts[1].text));
    }

    #[test]
    fn trajectory_has_t_max_plus_one_states() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(3, 5, neutral_topic()), stub.clone(), stub).unwrap();
        let states = sim.run(&seed_posts(&sim, &["a b", "c d", "e f"])).unwrap();
        assert_eq!(states.len(), 6);
        for (t, s) in states.iter().enumerate() {
            assert_eq!(s.step as usize, t);
            assert_eq!(s.categories.len(), 3);
        }
    }

    #[test]
    fn fixed_seed_runs_are_identical() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(3, 4, Topic::gender()), stub.clone(), stub.clone()).unwrap();
        let texts = ["a really good idea", "a really bad idea", "whatever else"];
        let a = sim.run(&seed_posts(&sim, &texts)).unwrap();
        let b = sim.run(&seed_posts(&sim, &texts)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn categories_always_match_opinions() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(4, 6, Topic::gender()), stub.clone(), stub).unwrap();
        let texts = ["good plan", "bad plan", "nothing much", "a really good idea"];
        for s in sim.run(&seed_posts(&sim, &texts)).unwrap() {
            for (o, c) in s.opinions.iter().zip(&s.categories) {
                assert_eq!(categorize(*o, &sim.topic().category_scheme), *c);
            }
        }
    }

    #[test]
    fn step_reads_only_previous_state() {
        // synchronous update: recomputing any agent's post directly from the
        // step-t snapshot reproduces what step() committed
        let stub = stub_with_bank();
        let mut cfg = config(4, 1, Topic::gender());
        cfg.initial_edges = vec![(0, 1), (1, 2), (2, 3), (3, 0)];
        let sim = Simulator::new(cfg, stub.clone(), stub.clone()).unwrap();
        let texts = ["good one", "bad one", "plain one", "good again"];
        let state = sim.init(&seed_posts(&sim, &texts)).unwrap();
        let next = sim.step(&state, &BTreeMap::new()).unwrap();
        for i in 0..4usize {
            let followee_posts: Vec<(AgentId, Post)> = state
                .graph
                .followees(i as u32)
                .into_iter()
                .map(|j| (sim.agents()[j as usize].clone(), state.posts[j as usize].clone()))
                .collect();
            let ctx = PromptContext::new(
                sim.agents()[i].clone(),
                sim.topic().label.clone(),
                vec![state.posts[i].clone()],
                followee_posts,
                1,
            );
            let expected = stub
                .generate(&build_prompt(&ctx), &sim.config().decoding)
                .unwrap();
            assert_eq!(next.posts[i].text, expected);
        }
    }

    #[test]
    fn state_round_trips_through_json() {
        let stub = stub_with_bank();
        let sim = Simulator::new(config(2, 1, Topic::gender()), stub.clone(), stub).unwrap();
        let state = sim.init(&seed_posts(&sim, &["good stuff", "bad stuff"])).unwrap();
        let state2: SimulationState =
            serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
        assert_eq!(state, state2);
    }
}
