use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairranklab::pipeline::{self, EvaluateOptions, ExperimentConfig};
use fairranklab::Error;

#[derive(Parser)]
#[command(name = "fairranklab", version, about = "Pairwise fairness experiments on a simulated recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Regularization weight for train and evaluate.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    GenEnv,
    SimulateLog,
    PairExperiment,
    Train,
    Evaluate {
        /// Checkpoint to evaluate instead of the one trained with --lambda.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pair file to evaluate on instead of the evaluation half.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        allow_overlap: bool,
    },
    ReproduceLemmas,
}

fn run(cli: Cli) -> Result<bool, Error> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if matches!(cli.command, Command::ReproduceLemmas) => ExperimentConfig::default(),
        None => return Err(Error::Config(vec!["--config <path> is required".into()])),
    };
    let cfg = base.with_overrides(cli.seed, cli.lambda)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config(vec!["no output directory: pass --out or set output_dir".into()]))?;
    let outcome = match cli.command {
        Command::GenEnv => pipeline::cmd_gen_env(&cfg, &out)?,
        Command::SimulateLog => pipeline::cmd_simulate_log(&cfg, &out)?,
        Command::PairExperiment => pipeline::cmd_pair_experiment(&cfg, &out)?,
        Command::Train => pipeline::cmd_train(&cfg, &out)?,
        Command::Evaluate {
            model,
            pairs,
            allow_overlap,
        } => pipeline::cmd_evaluate(
            &cfg,
            &out,
            &EvaluateOptions {
                model,
                pairs,
                allow_overlap,
            },
        )?,
        Command::ReproduceLemmas => {
            let o = pipeline::cmd_reproduce_lemmas(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(&o.outputs[0]).unwrap_or_default());
            o
        }
    };
    for p in &outcome.outputs {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("manifest {}", outcome.manifest.display());
    Ok(outcome.check_passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: acceptance check failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                _ => 2,
            })
        }
    }
}
