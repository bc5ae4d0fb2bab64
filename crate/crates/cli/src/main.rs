//! Command-line entry point: ingest, elicit, simulate, train, grid.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 runtime error.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfigFile;
use leadsim_core::domain::{categorize, PolarityCategory, Post};
use leadsim_core::environment::{write_opinions_csv, write_trajectory_jsonl, Simulator};
use leadsim_core::experiments::{
    build_action_bank, expand_grid, ingest_corpus, run_grid, seed_posts_from_corpus,
    variance_pairings, GridBase,
};
use leadsim_core::opinion::elicit_opinion;
use leadsim_core::rl::{toy::ToyEnv, train, train_loop, QTable, TrainOutput};

#[derive(Parser)]
#[command(name = "leadsim", version, about = "Opinion dynamics simulator and RL trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the environment/training seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the backend kind from the config.
    #[arg(long, value_parser = ["stub", "remote"])]
    backend: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and write the parsed posts as JSON lines.
    Ingest(CommonArgs),
    /// Score every corpus post and write scores plus a category histogram.
    Elicit(CommonArgs),
    /// Run the simulation loop and write the trajectory files.
    Simulate(CommonArgs),
    /// Train the target agent and write the reward curve and policy.
    Train(CommonArgs),
    /// Run the full eight-scenario grid and write the report set.
    Grid(CommonArgs),
}

enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Phase<T> {
    fn config_phase(self) -> Result<T, CliError>;
    fn runtime_phase(self) -> Result<T, CliError>;
}

impl<T> Phase<T> for Result<T> {
    fn config_phase(self) -> Result<T, CliError> {
        self.map_err(CliError::Config)
    }
    fn runtime_phase(self) -> Result<T, CliError> {
        self.map_err(CliError::Runtime)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Elicit(args) => cmd_elicit(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Grid(args) => cmd_grid(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn prepare_out(args: &CommonArgs) -> Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))
}

fn load(args: &CommonArgs) -> Result<RunConfigFile, CliError> {
    RunConfigFile::load(&args.config).config_phase()
}

fn cmd_ingest(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let data = cfg.data().config_phase()?;
    let posts =
        ingest_corpus(&data.corpus, data.topic_filter.as_deref()).map_err(|e| {
            CliError::Config(anyhow::Error::new(e))
        })?;
    prepare_out(args).runtime_phase()?;
    let mut buf = String::new();
    for p in &posts {
        buf.push_str(&serde_json::to_string(p).unwrap());
        buf.push('\n');
    }
    let out = args.out.join(format!("posts_{}.jsonl", cfg.name));
    fs::write(&out, buf).context("writing posts file").runtime_phase()?;
    println!("ingested {} posts -> {}", posts.len(), out.display());
    Ok(())
}

fn cmd_elicit(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let topic = cfg.topic().config_phase()?;
    let backend = cfg.backend(args.backend.as_deref()).config_phase()?;
    let data = cfg.data().config_phase()?;
    let posts = ingest_corpus(&data.corpus, data.topic_filter.as_deref())
        .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
    prepare_out(args).runtime_phase()?;

    let mut scores_csv = String::from("id,opinion,category\n");
    let mut histogram = [0usize; 5];
    for p in &posts {
        let score = elicit_opinion(&p.text, &topic, backend.as_ref())
            .with_context(|| format!("scoring post '{}'", p.id))
            .runtime_phase()?;
        let cat = categorize(score, &topic.category_scheme);
        histogram[cat.rank()] += 1;
        scores_csv.push_str(&format!("{},{},{}\n", p.id, score.value, cat));
    }
    let scores_path = args.out.join(format!("scores_{}.csv", cfg.name));
    fs::write(&scores_path, scores_csv).context("writing scores").runtime_phase()?;

    let mut hist_csv = String::from("category,count\n");
    for (cat, count) in PolarityCategory::ALL.into_iter().zip(histogram) {
        hist_csv.push_str(&format!("{cat},{count}\n"));
        println!("{cat:>10}: {count}");
    }
    let hist_path = args.out.join(format!("histogram_{}.csv", cfg.name));
    fs::write(&hist_path, hist_csv).context("writing histogram").runtime_phase()?;
    println!("wrote {} and {}", scores_path.display(), hist_path.display());
    Ok(())
}

fn seed_posts(cfg: &RunConfigFile, sim: &Simulator) -> Result<Vec<Post>> {
    let data = cfg.data()?;
    let corpus = ingest_corpus(&data.corpus, data.topic_filter.as_deref())?;
    Ok(seed_posts_from_corpus(&corpus, sim.agents())?)
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let env_cfg = cfg.environment(args.seed).config_phase()?;
    let backend = cfg.backend(args.backend.as_deref()).config_phase()?;
    let sim = Simulator::new(env_cfg, backend.clone(), backend)
        .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
    let posts = seed_posts(&cfg, &sim).config_phase()?;
    prepare_out(args).runtime_phase()?;

    let states = sim.run(&posts).map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;

    let traj_path = args.out.join(format!("trajectory_{}.jsonl", cfg.name));
    let mut traj = Vec::new();
    write_trajectory_jsonl(&states, &mut traj).context("rendering trajectory").runtime_phase()?;
    fs::write(&traj_path, traj).context("writing trajectory").runtime_phase()?;

    let opin_path = args.out.join(format!("opinions_{}.csv", cfg.name));
    let mut opin = Vec::new();
    write_opinions_csv(&states, &mut opin).context("rendering opinions").runtime_phase()?;
    fs::write(&opin_path, opin).context("writing opinions").runtime_phase()?;

    let last = states.last().unwrap();
    println!(
        "simulated {} steps: {} edges, histogram {:?}",
        last.step,
        last.graph.edge_count(),
        last.category_histogram()
    );
    println!("wrote {} and {}", traj_path.display(), opin_path.display());
    Ok(())
}

fn write_train_output(args: &CommonArgs, name: &str, out: &TrainOutput) -> Result<()> {
    let mut rewards_csv = String::from("episode,reward\n");
    for (ep, r) in out.episode_rewards.iter().enumerate() {
        rewards_csv.push_str(&format!("{ep},{r}\n"));
    }
    let rewards_path = args.out.join(format!("rewards_{name}.csv"));
    fs::write(&rewards_path, rewards_csv).context("writing rewards")?;

    #[derive(serde::Serialize)]
    struct GreedyChoice<'a> {
        state: &'a leadsim_core::rl::RLState,
        action: PolarityCategory,
    }
    #[derive(serde::Serialize)]
    struct PolicyFile<'a> {
        q_table: &'a QTable,
        greedy: Vec<GreedyChoice<'a>>,
    }
    let entries: Vec<leadsim_core::rl::QEntry> = out.q_table.clone().into();
    let states: std::collections::BTreeSet<leadsim_core::rl::RLState> =
        entries.iter().map(|e| e.state).collect();
    let greedy: Vec<GreedyChoice> = states
        .iter()
        .map(|s| GreedyChoice {
            state: s,
            action: out.q_table.greedy(s),
        })
        .collect();
    let policy = PolicyFile {
        q_table: &out.q_table,
        greedy,
    };
    let policy_path = args.out.join(format!("policy_{name}.json"));
    fs::write(&policy_path, serde_json::to_string_pretty(&policy).unwrap())
        .context("writing policy")?;
    println!(
        "trained {} episodes; wrote {} and {}",
        out.episode_rewards.len(),
        rewards_path.display(),
        policy_path.display()
    );
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let rl_cfg = cfg.rl().config_phase()?;
    let train_section = cfg
        .train
        .as_ref()
        .context("config needs a [train] section")
        .config_phase()?;
    let seed = args.seed.unwrap_or(train_section.seed);
    prepare_out(args).runtime_phase()?;

    let out = match train_section.env.as_str() {
        "toy" => {
            let target = train_section
                .toy_target
                .context("train.toy_target is required for the toy environment")
                .config_phase()?;
            let clamp = train_section.toy_bucket_clamp.unwrap_or(0);
            let mut env = ToyEnv::new(target, clamp);
            train_loop(&mut env, &rl_cfg, seed)
                .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?
        }
        "simulator" => {
            let env_cfg = cfg.environment(None).config_phase()?;
            let backend = cfg.backend(args.backend.as_deref()).config_phase()?;
            let sim = Simulator::new(env_cfg.clone(), backend.clone(), backend.clone())
                .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
            let posts = seed_posts(&cfg, &sim).config_phase()?;
            let topic = cfg.topic().config_phase()?;
            let data = cfg.data().config_phase()?;
            let corpus = ingest_corpus(&data.corpus, data.topic_filter.as_deref())
                .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
            let (bank, _) = build_action_bank(&corpus, &topic, backend.as_ref())
                .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
            train(&env_cfg, &rl_cfg, &bank, &posts, backend.clone(), backend, seed)
                .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?
        }
        other => {
            return Err(CliError::Config(anyhow::anyhow!(
                "unknown train.env '{other}' (expected simulator or toy)"
            )))
        }
    };
    write_train_output(args, &cfg.name, &out).runtime_phase()
}

fn cmd_grid(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let rl_cfg = cfg.rl().config_phase()?;
    let grid_section = cfg
        .grid
        .as_ref()
        .context("config needs a [grid] section")
        .config_phase()?;
    let topic = cfg.topic().config_phase()?;
    let env_cfg = cfg.environment(None).config_phase()?;
    let backend = cfg.backend(args.backend.as_deref()).config_phase()?;
    let data = cfg.data().config_phase()?;
    let corpus = ingest_corpus(&data.corpus, data.topic_filter.as_deref())
        .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
    prepare_out(args).runtime_phase()?;

    let (bank, scores) = build_action_bank(&corpus, &topic, backend.as_ref())
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    let bank_path = args.out.join(format!("bank_{}.json", cfg.name));
    fs::write(&bank_path, serde_json::to_string_pretty(&bank).unwrap())
        .context("writing bank")
        .runtime_phase()?;
    println!(
        "action bank from {} posts (score range {:.3}..{:.3}) -> {}",
        scores.len(),
        scores.iter().map(|s| s.value).fold(f64::INFINITY, f64::min),
        scores.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max),
        bank_path.display()
    );

    let base = GridBase {
        topic: topic.clone(),
        topic_slug: cfg.name.clone(),
        n_agents: env_cfg.n_agents,
        streak_k: env_cfg.link.streak_k,
        model_name: env_cfg.decoding.model_name.clone(),
        rl: rl_cfg,
        repeats: grid_section.repeats,
        base_seed: args.seed.unwrap_or(grid_section.base_seed),
    };
    let scenarios = expand_grid(&base);

    let sim = Simulator::new(scenarios[0].env.clone(), backend.clone(), backend.clone())
        .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;
    let posts = seed_posts_from_corpus(&corpus, sim.agents())
        .map_err(|e| CliError::Config(anyhow::Error::new(e)))?;

    let outcome = run_grid(&scenarios, &posts, &bank, backend.clone(), backend, &args.out)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    for entry in &outcome.manifest.scenarios {
        println!("scenario {}: {}", entry.name, entry.status);
    }
    for p in variance_pairings(&outcome.outcomes) {
        println!(
            "variance ratio follow-unfollow/follow for {}: {:.3} ({:.4} vs {:.4})",
            p.pairing, p.ratio, p.follow_unfollow_variance, p.follow_variance
        );
    }
    println!("manifest: {}", args.out.join("manifest.json").display());
    Ok(())
}
