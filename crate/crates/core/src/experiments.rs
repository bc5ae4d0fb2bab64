//! Dataset ingestion, category-bank construction, scheme calibration, and
//! the eight-scenario experiment grid with CSV metrics emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{categorize, CategoryScheme, OpinionScore, PolarityCategory, Post, Topic};
use crate::environment::EnvironmentConfig;
use crate::network::LinkDynamicsConfig;
use crate::opinion::{elicit_opinion, OpinionError};
use crate::rl::{train, ActionBank, Observability, QTable, RLConfig, RlError};
use crate::seeding::stream_seed;
use crate::textmodel::{DecodingParams, TextModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line} of {path}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("corpus {0} contains no usable posts")]
    EmptyCorpus(PathBuf),
    #[error("category {0} has no posts; the action bank is incomplete")]
    IncompleteBank(PolarityCategory),
    #[error("need at least {needed} scores to calibrate, got {got}")]
    TooFewScores { needed: usize, got: usize },
    #[error("calibration produced degenerate thresholds {0:?}")]
    DegenerateThresholds([f64; 4]),
    #[error(transparent)]
    Opinion(#[from] OpinionError),
    #[error(transparent)]
    Rl(#[from] RlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Pro,
    Con,
}

/// One post from the ingested debate corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPost {
    pub id: String,
    pub topic_tag: String,
    pub text: String,
    pub stance_hint: Option<Stance>,
}

#[derive(Debug, Deserialize)]
struct CorpusRow {
    id: String,
    topic: String,
    #[serde(default)]
    stance: Option<String>,
    text: String,
}

fn row_to_post(
    row: CorpusRow,
    path: &Path,
    line: u64,
) -> Result<CorpusPost, ExperimentError> {
    if row.text.trim().is_empty() {
        return Err(ExperimentError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("post '{}' has empty text", row.id),
        });
    }
    let stance_hint = match row.stance.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) if s.eq_ignore_ascii_case("pro") => Some(Stance::Pro),
        Some(s) if s.eq_ignore_ascii_case("con") => Some(Stance::Con),
        Some(other) => {
            return Err(ExperimentError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("unknown stance '{other}'"),
            })
        }
    };
    Ok(CorpusPost {
        id: row.id,
        topic_tag: row.topic,
        text: row.text,
        stance_hint,
    })
}

/// Read a corpus file (CSV with `id,topic,stance,text` headers, or JSON
/// lines with the same keys) and keep the posts matching `topic_filter`,
/// case-insensitively. Everything is an error except a clean parse with at
/// least one matching post.
pub fn ingest_corpus(
    path: impl AsRef<Path>,
    topic_filter: Option<&str>,
) -> Result<Vec<CorpusPost>, ExperimentError> {
    let path = path.as_ref();
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson") | Some("json")
    );
    let mut posts = Vec::new();
    if is_jsonl {
        let raw = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, line) in raw.lines().enumerate() {
            let line_no = i as u64 + 1;
            if line.trim().is_empty() {
                continue;
            }
            let row: CorpusRow =
                serde_json::from_str(line).map_err(|e| ExperimentError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            posts.push(row_to_post(row, path, line_no)?);
        }
    } else {
        let file = fs::File::open(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        for (i, result) in reader.deserialize::<CorpusRow>().enumerate() {
            let line = i as u64 + 2; // header is line 1
            let row = result.map_err(|e| ExperimentError::Parse {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line()).unwrap_or(line),
                message: e.to_string(),
            })?;
            posts.push(row_to_post(row, path, line)?);
        }
    }
    if let Some(filter) = topic_filter {
        posts.retain(|p| p.topic_tag.eq_ignore_ascii_case(filter));
    }
    if posts.is_empty() {
        return Err(ExperimentError::EmptyCorpus(path.to_path_buf()));
    }
    Ok(posts)
}

/// Elicit every post's opinion, bucket the texts by the topic's scheme, and
/// return the bank plus the raw scores for distribution reporting. Any empty
/// category fails with `IncompleteBank`.
pub fn build_action_bank(
    posts: &[CorpusPost],
    topic: &Topic,
    scorer: &dyn TextModel,
) -> Result<(ActionBank, Vec<OpinionScore>), ExperimentError> {
    let mut scores = Vec::with_capacity(posts.len());
    let mut buckets: BTreeMap<PolarityCategory, Vec<String>> = BTreeMap::new();
    for cat in PolarityCategory::ALL {
        buckets.insert(cat, vec![]);
    }
    for post in posts {
        let score = elicit_opinion(&post.text, topic, scorer)?;
        let cat = categorize(score, &topic.category_scheme);
        buckets.get_mut(&cat).unwrap().push(post.text.clone());
        scores.push(score);
    }
    if let Some((cat, _)) = buckets.iter().find(|(_, v)| v.is_empty()) {
        return Err(ExperimentError::IncompleteBank(*cat));
    }
    let bank = ActionBank::new(buckets)?;
    Ok((bank, scores))
}

/// Thresholds at the 20/40/60/80th percentiles of the empirical score
/// distribution, with linear interpolation between closest ranks, aiming for
/// an even split across the five categories.
pub fn calibrate_scheme(scores: &[OpinionScore]) -> Result<CategoryScheme, ExperimentError> {
    if scores.len() < 5 {
        return Err(ExperimentError::TooFewScores {
            needed: 5,
            got: scores.len(),
        });
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.value).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| -> f64 {
        let h = (sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let thresholds = [pct(0.2), pct(0.4), pct(0.6), pct(0.8)];
    CategoryScheme::new(thresholds)
        .map_err(|_| ExperimentError::DegenerateThresholds(thresholds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodingPreset {
    Narrow,
    Creative,
}

impl DecodingPreset {
    pub fn params(self, model_name: &str) -> DecodingParams {
        match self {
            DecodingPreset::Narrow => DecodingParams::narrow(model_name),
            DecodingPreset::Creative => DecodingParams::creative(model_name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsPreset {
    Follow,
    FollowUnfollow,
}

impl DynamicsPreset {
    pub fn config(self, streak_k: u32) -> LinkDynamicsConfig {
        match self {
            DynamicsPreset::Follow => LinkDynamicsConfig::follow_dynamics(streak_k),
            DynamicsPreset::FollowUnfollow => LinkDynamicsConfig::follow_unfollow_dynamics(streak_k),
        }
    }
}

/// One cell of the experiment grid, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub topic: Topic,
    pub decoding_preset: DecodingPreset,
    pub dynamics_preset: DynamicsPreset,
    pub observability: Observability,
    pub repeats: u32,
    pub env: EnvironmentConfig,
    pub rl: RLConfig,
    pub seeds: Vec<u64>,
}

/// Shared knobs from which the eight-cell grid expands.
#[derive(Debug, Clone)]
pub struct GridBase {
    pub topic: Topic,
    pub topic_slug: String,
    pub n_agents: usize,
    pub streak_k: u32,
    pub model_name: String,
    pub rl: RLConfig,
    pub repeats: u32,
    pub base_seed: u64,
}

/// The eight scenarios {Narrow, Creative} x {Follow, FollowUnfollow} x
/// {Part, Full} for one topic, each with `repeats` derived seeds.
pub fn expand_grid(base: &GridBase) -> Vec<ScenarioConfig> {
    let mut scenarios = Vec::with_capacity(8);
    for decoding_preset in [DecodingPreset::Narrow, DecodingPreset::Creative] {
        for dynamics_preset in [DynamicsPreset::Follow, DynamicsPreset::FollowUnfollow] {
            for observability in [Observability::Part, Observability::Full] {
                let name = format!(
                    "{}_{}_{}_{}",
                    base.topic_slug,
                    match decoding_preset {
                        DecodingPreset::Narrow => "narrow",
                        DecodingPreset::Creative => "creative",
                    },
                    match dynamics_preset {
                        DynamicsPreset::Follow => "follow",
                        DynamicsPreset::FollowUnfollow => "followunfollow",
                    },
                    match observability {
                        Observability::Part => "part",
                        Observability::Full => "full",
                    },
                );
                let env = EnvironmentConfig {
                    n_agents: base.n_agents,
                    t_max: base.rl.steps_per_episode.max(1),
                    decoding: decoding_preset.params(&base.model_name),
                    link: dynamics_preset.config(base.streak_k),
                    topic: base.topic.clone(),
                    seed: base.base_seed,
                    history_cap: 1,
                    initial_edges: vec![],
                    frozen_outgoing: None,
                    agent_names: None,
                };
                let rl = RLConfig {
                    observability,
                    ..base.rl.clone()
                };
                let seeds = (0..base.repeats)
                    .map(|r| stream_seed(base.base_seed, &name, r as u64, 0))
                    .collect();
                scenarios.push(ScenarioConfig {
                    name,
                    topic: base.topic.clone(),
                    decoding_preset,
                    dynamics_preset,
                    observability,
                    repeats: base.repeats,
                    env,
                    rl,
                    seeds,
                });
            }
        }
    }
    scenarios
}

/// Per-episode mean and population variance across repeats.
pub fn curve_from_raw(raw: &[Vec<f64>]) -> Vec<(u32, f64, f64)> {
    if raw.is_empty() {
        return vec![];
    }
    let episodes = raw[0].len();
    let repeats = raw.len() as f64;
    (0..episodes)
        .map(|ep| {
            let mean = raw.iter().map(|r| r[ep]).sum::<f64>() / repeats;
            let variance = raw.iter().map(|r| (r[ep] - mean).powi(2)).sum::<f64>() / repeats;
            (ep as u32, mean, variance)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub config: ScenarioConfig,
    pub files: Vec<String>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub scenarios: Vec<ManifestEntry>,
}

pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub raw_rewards: Vec<Vec<f64>>,
    pub curve: Vec<(u32, f64, f64)>,
    pub policies: Vec<QTable>,
    pub error: Option<String>,
}

pub struct GridOutcome {
    pub outcomes: Vec<ScenarioOutcome>,
    pub manifest: Manifest,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run_scenario(
    scenario: &ScenarioConfig,
    seed_posts: &[Post],
    bank: &ActionBank,
    generator: Arc<dyn TextModel>,
    scorer: Arc<dyn TextModel>,
) -> Result<(Vec<Vec<f64>>, Vec<QTable>), ExperimentError> {
    let mut raw = Vec::with_capacity(scenario.seeds.len());
    let mut policies = Vec::with_capacity(scenario.seeds.len());
    for &seed in &scenario.seeds {
        let out = train(
            &scenario.env,
            &scenario.rl,
            bank,
            seed_posts,
            generator.clone(),
            scorer.clone(),
            seed,
        )?;
        raw.push(out.episode_rewards);
        policies.push(out.q_table);
    }
    Ok((raw, policies))
}

/// Run every scenario, emitting per-scenario learning-curve and raw-reward
/// CSVs plus a policy dump, and a manifest tying each output file to the
/// exact configuration that produced it. A failing scenario is recorded in
/// the manifest and does not stop the others.
pub fn run_grid(
    scenarios: &[ScenarioConfig],
    seed_posts: &[Post],
    bank: &ActionBank,
    generator: Arc<dyn TextModel>,
    scorer: Arc<dyn TextModel>,
    out_dir: impl AsRef<Path>,
) -> Result<GridOutcome, ExperimentError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut outcomes = Vec::with_capacity(scenarios.len());
    let mut entries = Vec::with_capacity(scenarios.len());
    for scenario in scenarios {
        match run_scenario(scenario, seed_posts, bank, generator.clone(), scorer.clone()) {
            Ok((raw, policies)) => {
                let curve = curve_from_raw(&raw);
                let mut files = Vec::new();

                let curves_name = format!("curves_{}.csv", scenario.name);
                let mut buf = String::from("episode,mean_reward,variance\n");
                for (ep, mean, var) in &curve {
                    buf.push_str(&format!("{ep},{mean},{var}\n"));
                }
                write_file(&out_dir.join(&curves_name), buf.as_bytes())?;
                files.push(curves_name);

                let raw_name = format!("rewards_raw_{}.csv", scenario.name);
                let mut buf = String::from("repeat,episode,reward\n");
                for (r, rewards) in raw.iter().enumerate() {
                    for (ep, reward) in rewards.iter().enumerate() {
                        buf.push_str(&format!("{r},{ep},{reward}\n"));
                    }
                }
                write_file(&out_dir.join(&raw_name), buf.as_bytes())?;
                files.push(raw_name);

                let policy_name = format!("policy_{}.json", scenario.name);
                #[derive(Serialize)]
                struct PolicyDump<'a> {
                    repeat: usize,
                    seed: u64,
                    q_table: &'a QTable,
                }
                let dumps: Vec<PolicyDump> = policies
                    .iter()
                    .enumerate()
                    .map(|(i, q)| PolicyDump {
                        repeat: i,
                        seed: scenario.seeds[i],
                        q_table: q,
                    })
                    .collect();
                write_file(
                    &out_dir.join(&policy_name),
                    serde_json::to_string_pretty(&dumps).unwrap().as_bytes(),
                )?;
                files.push(policy_name);

                entries.push(ManifestEntry {
                    name: scenario.name.clone(),
                    config: scenario.clone(),
                    files,
                    status: "ok".to_string(),
                });
                outcomes.push(ScenarioOutcome {
                    config: scenario.clone(),
                    raw_rewards: raw,
                    curve,
                    policies,
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("scenario {} failed: {e}", scenario.name);
                entries.push(ManifestEntry {
                    name: scenario.name.clone(),
                    config: scenario.clone(),
                    files: vec![],
                    status: format!("error: {e}"),
                });
                outcomes.push(ScenarioOutcome {
                    config: scenario.clone(),
                    raw_rewards: vec![],
                    curve: vec![],
                    policies: vec![],
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let manifest = Manifest { scenarios: entries };
    write_file(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap().as_bytes(),
    )?;
    Ok(GridOutcome { outcomes, manifest })
}

/// Mean learning-curve variance of a scenario across its episodes.
pub fn mean_curve_variance(curve: &[(u32, f64, f64)]) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    curve.iter().map(|(_, _, v)| v).sum::<f64>() / curve.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct VariancePairing {
    pub pairing: String,
    pub follow_variance: f64,
    pub follow_unfollow_variance: f64,
    pub ratio: f64,
}

/// Pair each follow-dynamics scenario with its follow-unfollow counterpart
/// under otherwise matched settings and report the variance ratio.
pub fn variance_pairings(outcomes: &[ScenarioOutcome]) -> Vec<VariancePairing> {
    let mut pairings = Vec::new();
    for a in outcomes {
        if a.config.dynamics_preset != DynamicsPreset::Follow || a.error.is_some() {
            continue;
        }
        let partner = outcomes.iter().find(|b| {
            b.error.is_none()
                && b.config.dynamics_preset == DynamicsPreset::FollowUnfollow
                && b.config.decoding_preset == a.config.decoding_preset
                && b.config.observability == a.config.observability
        });
        if let Some(b) = partner {
            let va = mean_curve_variance(&a.curve);
            let vb = mean_curve_variance(&b.curve);
            pairings.push(VariancePairing {
                pairing: format!(
                    "{:?}/{:?}",
                    a.config.decoding_preset, a.config.observability
                ),
                follow_variance: va,
                follow_unfollow_variance: vb,
                ratio: if va > 0.0 { vb / va } else { f64::INFINITY },
            });
        }
    }
    pairings
}

/// Seed posts for `n_agents` taken from the head of the corpus.
pub fn seed_posts_from_corpus(
    corpus: &[CorpusPost],
    agents: &[crate::domain::AgentId],
) -> Result<Vec<Post>, ExperimentError> {
    if corpus.len() < agents.len() {
        return Err(ExperimentError::TooFewScores {
            needed: agents.len(),
            got: corpus.len(),
        });
    }
    Ok(agents
        .iter()
        .zip(corpus)
        .map(|(a, c)| Post::new(a.clone(), 0, c.text.clone()).expect("corpus text is non-empty"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmodel::stub::{StubBackend, StubSpec};
    use std::io::Write as _;

    fn write_temp(name: &str, contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("leadsim-exp-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn csv_corpus_round_trip() {
        let path = write_temp(
            "ok.csv",
            "id,topic,stance,text\n1,gender,pro,first text\n2,gender,,second text\n3,drug,con,third text\n",
        );
        let posts = ingest_corpus(&path, None).unwrap();
        assert_eq!(posts.len(), 3);
        assert_eq!(posts[0].stance_hint, Some(Stance::Pro));
        assert_eq!(posts[1].stance_hint, None);
        let filtered = ingest_corpus(&path, Some("Gender")).unwrap();
        assert_eq!(filtered.len(), 2);
    }

    #[test]
    fn jsonl_corpus_parses() {
        let path = write_temp(
            "ok.jsonl",
            "{\"id\":\"a\",\"topic\":\"gender\",\"stance\":\"con\",\"text\":\"hello\"}\n\
             {\"id\":\"b\",\"topic\":\"gender\",\"text\":\"world\"}\n",
        );
        let posts = ingest_corpus(&path, Some("gender")).unwrap();
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].stance_hint, Some(Stance::Con));
    }

    #[test]
    fn empty_text_names_the_line() {
        let path = write_temp("bad.csv", "id,topic,stance,text\n1,gender,pro,ok\n2,gender,,\n");
        match ingest_corpus(&path, None) {
            Err(ExperimentError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_empty_filter_fail() {
        assert!(matches!(
            ingest_corpus("/nonexistent/corpus.csv", None),
            Err(ExperimentError::Io { .. })
        ));
        let path = write_temp("one.csv", "id,topic,stance,text\n1,gender,pro,hi\n");
        assert!(matches!(
            ingest_corpus(&path, Some("drug")),
            Err(ExperimentError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn calibration_matches_the_percentile_oracle() {
        let scores: Vec<OpinionScore> = (1..=10)
            .map(|i| OpinionScore::new(i as f64 / 10.0).unwrap())
            .collect();
        let scheme = calibrate_scheme(&scores).unwrap();
        let expected = [0.28, 0.46, 0.64, 0.82];
        for (t, e) in scheme.thresholds.iter().zip(expected) {
            assert!((t - e).abs() < 1e-12, "{t} vs {e}");
        }
    }

    #[test]
    fn calibration_rejects_degenerate_and_short_inputs() {
        let same = vec![OpinionScore::new(0.5).unwrap(); 8];
        assert!(matches!(
            calibrate_scheme(&same),
            Err(ExperimentError::DegenerateThresholds(_))
        ));
        let few = vec![OpinionScore::new(0.5).unwrap(); 4];
        assert!(matches!(
            calibrate_scheme(&few),
            Err(ExperimentError::TooFewScores { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn incomplete_bank_names_the_missing_category() {
        let stub = StubBackend::new(StubSpec::echo(-1.0, -8.0)).unwrap();
        // all neutral-ish posts: nothing reaches the outer buckets
        let posts: Vec<CorpusPost> = (0..4)
            .map(|i| CorpusPost {
                id: format!("p{i}"),
                topic_tag: "gender".to_string(),
                text: "totally unrelated words".to_string(),
                stance_hint: None,
            })
            .collect();
        match build_action_bank(&posts, &Topic::gender(), &stub) {
            Err(ExperimentError::IncompleteBank(cat)) => {
                assert_eq!(cat, PolarityCategory::StrongCon)
            }
            other => panic!("expected IncompleteBank, got {other:?}"),
        }
    }

    #[test]
    fn grid_expands_to_eight_distinct_scenarios() {
        let base = GridBase {
            topic: Topic::gender(),
            topic_slug: "gender".to_string(),
            n_agents: 4,
            streak_k: 2,
            model_name: "stub".to_string(),
            rl: RLConfig::default(),
            repeats: 2,
            base_seed: 11,
        };
        let scenarios = expand_grid(&base);
        assert_eq!(scenarios.len(), 8);
        let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 8);
        for s in &scenarios {
            assert_eq!(s.seeds.len(), 2);
            assert_eq!(s.rl.observability, s.observability);
        }
    }

    #[test]
    fn curve_matches_brute_force_mean_and_variance() {
        let raw = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], vec![2.0, 2.0, 2.0]];
        let curve = curve_from_raw(&raw);
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0], (0, 2.0, 2.0 / 3.0));
        assert_eq!(curve[1], (1, 2.0, 0.0));
        assert_eq!(curve[2], (2, 2.0, 2.0 / 3.0));
    }
}
