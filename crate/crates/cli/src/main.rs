mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{ConfigError, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "cofirec", about = "Coarse-to-fine item tokenization and generative recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `output_dir` from the config, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces every stage seed; takes precedence over the environment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic corpus.
    Synth,
    /// Fit the item tokenizer.
    TrainTokenizer,
    /// Assign token tuples to every item.
    Tokenize,
    /// Train the next-item generator.
    TrainGenerator,
    /// Score the test split.
    Evaluate,
    /// Run every ablation variant over the configured seeds.
    Ablate,
    /// Check the expected-dissimilarity closed forms and simulations.
    Theory,
}

fn setup(cli: &Cli) -> anyhow::Result<Ctx> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| ConfigError(format!("{SEED_ENV}={v} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    if let Some(seed) = cli.seed.or(env_seed).or(config.seed) {
        config.apply_seed(seed);
    }
    config.validate()?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(ConfigError("--workers must be ≥ 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    commands::ensure_dir(&out)?;
    Ok(Ctx { config, out })
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = setup(cli)?;
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::TrainTokenizer => commands::train_tokenizer(&ctx),
        Command::Tokenize => commands::tokenize(&ctx),
        Command::TrainGenerator => commands::train_generator_cmd(&ctx),
        Command::Evaluate => commands::evaluate_cmd(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::Theory => commands::theory(&ctx),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ConfigError>().is_some() || matches!(c.downcast_ref::<cofirec::Error>(), Some(cofirec::Error::Config(_)))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
