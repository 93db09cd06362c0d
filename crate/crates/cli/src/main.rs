//! `dcf`: synthesize or ingest car-following data, analyze it, train the
//! teacher, student and distilled models, and evaluate them.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcf_core::Error;

use commands::Which;
use config::Config;
use run::{write_summary, Run, Summary};

#[derive(Debug, Parser)]
#[command(name = "dcf", version, about = "Distilled car-following models for mixed traffic")]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Root seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs, 0 uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set teacher.epochs=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trajectory dataset with Gipps followers.
    Synth {
        /// Pairs per class.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Load, filter and window a trajectory CSV; split and normalize.
    Ingest {
        #[arg(long, value_name = "CSV")]
        input: Option<String>,
    },
    /// Speed variability, higher moments and class comparison tables.
    Analyze,
    /// Train the teacher and/or the plain student.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        model: Which,
        /// Pick hyperparameters by random search with expanding-window CV first.
        #[arg(long)]
        search: bool,
    },
    /// Train one distilled student at `distill.alpha`.
    Distill {
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Train distilled students over an alpha grid and tabulate test RMSE.
    Sweep {
        /// `lo:hi:step` or a comma list.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// One-step RMSE tables, closed-loop minimum TTC and speed profiles.
    Evaluate,
    /// Closed-loop trajectories for every test segment and model.
    Rollout {
        /// Simulated steps per segment; 0 runs to the end.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Inference timing and multiply-add counts.
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Analyze => "analyze",
            Command::Train { .. } => "train",
            Command::Distill { .. } => "distill",
            Command::Sweep { .. } => "sweep",
            Command::Evaluate => "evaluate",
            Command::Rollout { .. } => "rollout",
            Command::Bench => "bench",
        }
    }

    /// Subcommand flags as config overrides.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        match self {
            Command::Synth { pairs: Some(n) } => vec![("synth.pairs", n.to_string())],
            Command::Ingest { input: Some(p) } => vec![("data.input", p.clone())],
            Command::Distill { alpha: Some(a) } => vec![("distill.alpha", a.to_string())],
            Command::Sweep { alphas: Some(a) } => vec![("distill.alphas", a.clone())],
            Command::Rollout { horizon: Some(h) } => vec![("eval.horizon", h.to_string())],
            _ => Vec::new(),
        }
    }
}

fn resolve(cli: &Cli) -> dcf_core::Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    for raw in &cli.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {raw:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    if let Some(threads) = cli.threads {
        cfg.set("run.threads", &threads.to_string())?;
    }
    for (k, v) in cli.command.overrides() {
        cfg.set(k, &v)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> dcf_core::Result<()> {
    let cfg = resolve(cli)?;
    cfg.validate()?;
    let threads: usize = cfg.parse("run.threads")?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let mut run = Run::new(cfg, cli.out.clone(), cli.command.name())?;
    match &cli.command {
        Command::Synth { .. } => commands::synth(&mut run)?,
        Command::Ingest { .. } => commands::ingest(&mut run)?,
        Command::Analyze => commands::analyze(&mut run)?,
        Command::Train { model, search } => commands::train(&mut run, *model, *search)?,
        Command::Distill { .. } => commands::distill(&mut run)?,
        Command::Sweep { .. } => commands::sweep(&mut run)?,
        Command::Evaluate => commands::evaluate(&mut run)?,
        Command::Rollout { .. } => commands::rollout(&mut run)?,
        Command::Bench => commands::bench(&mut run)?,
    }
    run.finish()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("dcf {}: {e}", cli.command.name());
            if cli.out.is_dir() {
                let summary = Summary {
                    command: cli.command.name(),
                    status: "error",
                    exit_code: i32::from(code),
                    message: Some(e.to_string()),
                    artifacts: Vec::new(),
                    details: Default::default(),
                };
                let path = cli.out.join(format!("summary_{}.json", cli.command.name()));
                if let Err(w) = write_summary(&path, &summary) {
                    eprintln!("cannot write {}: {w}", path.display());
                }
            }
            ExitCode::from(code)
        }
    }
}
