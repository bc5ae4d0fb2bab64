//! Declarative run configuration. Parsing is strict: unknown keys anywhere
//! in the file are rejected so a typo like `folow_prob` cannot silently
//! change an experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use leadsim_core::domain::{CategoryScheme, PolarityCategory, Topic};
use leadsim_core::environment::EnvironmentConfig;
use leadsim_core::experiments::{DecodingPreset, DynamicsPreset};
use leadsim_core::rl::{Observability, RLConfig};
use leadsim_core::textmodel::remote::{GenerateApi, RemoteBackend, RemoteConfig, RetryPolicy};
use leadsim_core::textmodel::stub::StubBackend;
use leadsim_core::textmodel::{DecodingParams, TextModel};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Label used in output file names.
    #[serde(default = "default_name")]
    pub name: String,
    pub backend: BackendSection,
    #[serde(default)]
    pub topic: Option<TopicSection>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub environment: Option<EnvSection>,
    #[serde(default)]
    pub rl: Option<RlSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub grid: Option<GridSection>,
}

fn default_name() -> String {
    "run".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: String,
    #[serde(default)]
    pub stub_file: Option<PathBuf>,
    #[serde(default)]
    pub remote: Option<RemoteSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub generate_api: Option<String>,
    #[serde(default)]
    pub supports_scoring: Option<bool>,
    #[serde(default)]
    pub retry_attempts: Option<u32>,
    #[serde(default)]
    pub retry_initial_backoff_ms: Option<u64>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicSection {
    pub label: String,
    pub pro_claim: String,
    pub con_claim: String,
    pub thresholds: [f64; 4],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub corpus: PathBuf,
    #[serde(default)]
    pub topic_filter: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub n_agents: usize,
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    pub decoding: String,
    pub dynamics: String,
    #[serde(default = "default_streak_k")]
    pub streak_k: u32,
    pub seed: u64,
    #[serde(default = "default_history_cap")]
    pub history_cap: usize,
    #[serde(default)]
    pub initial_edges: Vec<(u32, u32)>,
    #[serde(default)]
    pub agent_names: Option<Vec<String>>,
}

fn default_t_max() -> u32 {
    50
}

fn default_streak_k() -> u32 {
    2
}

fn default_history_cap() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_gamma")]
    pub discount: f64,
    #[serde(default = "d_eps")]
    pub exploration_rate: f64,
    #[serde(default = "d_floor")]
    pub epsilon_floor: f64,
    #[serde(default = "d_episodes")]
    pub episodes: u32,
    #[serde(default = "d_steps")]
    pub steps_per_episode: u32,
    pub observability: String,
    #[serde(default = "d_clamp")]
    pub count_clamp: u8,
}

fn d_lr() -> f64 {
    0.01
}
fn d_gamma() -> f64 {
    0.99
}
fn d_eps() -> f64 {
    0.01
}
fn d_floor() -> f64 {
    0.005
}
fn d_episodes() -> u32 {
    500
}
fn d_steps() -> u32 {
    5
}
fn d_clamp() -> u8 {
    3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_train_env")]
    pub env: String,
    #[serde(default)]
    pub toy_target: Option<PolarityCategory>,
    #[serde(default)]
    pub toy_bucket_clamp: Option<u8>,
    pub seed: u64,
}

fn default_train_env() -> String {
    "simulator".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    pub base_seed: u64,
}

fn default_repeats() -> u32 {
    5
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfigFile = toml::from_str(&raw)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(cfg)
    }

    pub fn topic(&self) -> Result<Topic> {
        let t = self.topic.as_ref().context("config needs a [topic] section")?;
        let scheme = CategoryScheme::new(t.thresholds).context("invalid topic thresholds")?;
        Topic::new(&t.label, &t.pro_claim, &t.con_claim, scheme).context("invalid topic claims")
    }

    pub fn data(&self) -> Result<&DataSection> {
        self.data.as_ref().context("config needs a [data] section")
    }

    /// Build the backend, honoring an optional `--backend` override. Remote
    /// credentials come only from the environment variable, never the file.
    pub fn backend(&self, kind_override: Option<&str>) -> Result<Arc<dyn TextModel>> {
        let kind = kind_override.unwrap_or(&self.backend.kind);
        match kind {
            "stub" => {
                let path = self
                    .backend
                    .stub_file
                    .as_ref()
                    .context("backend.stub_file is required for the stub backend")?;
                Ok(Arc::new(StubBackend::from_file(path)?))
            }
            "remote" => {
                let r = self
                    .backend
                    .remote
                    .as_ref()
                    .context("[backend.remote] is required for the remote backend")?;
                let generate_api = match r.generate_api.as_deref().unwrap_or("completions") {
                    "completions" => GenerateApi::Completions,
                    "chat" => GenerateApi::Chat,
                    other => bail!("unknown generate_api '{other}'"),
                };
                let cfg = RemoteConfig {
                    base_url: r.base_url.clone(),
                    model: r.model.clone(),
                    api_key_env: r
                        .api_key_env
                        .clone()
                        .unwrap_or_else(|| "OPENAI_API_KEY".to_string()),
                    generate_api,
                    retry: RetryPolicy {
                        attempts: r.retry_attempts.unwrap_or(3),
                        initial_backoff_ms: r.retry_initial_backoff_ms.unwrap_or(1000),
                    },
                    timeout_secs: r.timeout_secs.unwrap_or(60),
                    supports_scoring: r.supports_scoring.unwrap_or(true),
                };
                Ok(Arc::new(RemoteBackend::new(cfg)?))
            }
            other => bail!("unknown backend kind '{other}' (expected stub or remote)"),
        }
    }

    fn model_name(&self) -> String {
        match &self.backend.remote {
            Some(r) if self.backend.kind == "remote" => r.model.clone(),
            _ => "stub".to_string(),
        }
    }

    pub fn decoding_preset(&self) -> Result<DecodingPreset> {
        let e = self.env_section()?;
        match e.decoding.as_str() {
            "narrow" => Ok(DecodingPreset::Narrow),
            "creative" => Ok(DecodingPreset::Creative),
            other => bail!("unknown decoding preset '{other}'"),
        }
    }

    pub fn dynamics_preset(&self) -> Result<DynamicsPreset> {
        let e = self.env_section()?;
        match e.dynamics.as_str() {
            "follow" => Ok(DynamicsPreset::Follow),
            "follow_unfollow" => Ok(DynamicsPreset::FollowUnfollow),
            other => bail!("unknown dynamics preset '{other}'"),
        }
    }

    fn env_section(&self) -> Result<&EnvSection> {
        self.environment
            .as_ref()
            .context("config needs an [environment] section")
    }

    pub fn environment(&self, seed_override: Option<u64>) -> Result<EnvironmentConfig> {
        let e = self.env_section()?;
        let decoding: DecodingParams = self.decoding_preset()?.params(&self.model_name());
        let link = self.dynamics_preset()?.config(e.streak_k);
        let cfg = EnvironmentConfig {
            n_agents: e.n_agents,
            t_max: e.t_max,
            decoding,
            link,
            topic: self.topic()?,
            seed: seed_override.unwrap_or(e.seed),
            history_cap: e.history_cap,
            initial_edges: e.initial_edges.clone(),
            frozen_outgoing: None,
            agent_names: e.agent_names.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rl(&self) -> Result<RLConfig> {
        let r = self.rl.as_ref().context("config needs an [rl] section")?;
        let observability = match r.observability.as_str() {
            "part" => Observability::Part,
            "full" => Observability::Full,
            other => bail!("unknown observability '{other}' (expected part or full)"),
        };
        let cfg = RLConfig {
            learning_rate: r.learning_rate,
            discount: r.discount,
            exploration_rate: r.exploration_rate,
            epsilon_floor: r.epsilon_floor,
            episodes: r.episodes,
            steps_per_episode: r.steps_per_episode,
            observability,
            count_clamp: r.count_clamp,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
