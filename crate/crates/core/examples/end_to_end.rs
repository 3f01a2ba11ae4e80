//! Runs every pipeline stage into a directory at reduced scale, the same way
//! the `fairranklab` binary does, and lists the artifacts.
//!
//!     cargo run --release --example end_to_end [out_dir]

use std::path::PathBuf;

use fairranklab::pipeline::{self, EvaluateOptions, ExperimentConfig, REGULARIZED_LAMBDA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fairranklab-demo".into()));
    let mut cfg = ExperimentConfig::default();
    cfg.evaluation.n_log_queries = 5000;
    cfg.evaluation.n_pair_queries = 400_000;
    cfg.evaluation.bootstrap_resamples = 200;
    cfg.training.steps = 1000;

    pipeline::cmd_gen_env(&cfg, &out)?;
    pipeline::cmd_simulate_log(&cfg, &out)?;
    pipeline::cmd_pair_experiment(&cfg, &out)?;
    for lambda in [0.0, REGULARIZED_LAMBDA] {
        let cfg = cfg.clone().with_overrides(None, Some(lambda))?;
        pipeline::cmd_train(&cfg, &out)?;
        pipeline::cmd_evaluate(&cfg, &out, &EvaluateOptions::default())?;
    }
    pipeline::cmd_reproduce_lemmas(&cfg, &out)?;

    let mut files: Vec<_> = std::fs::read_dir(&out)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    files.sort();
    for f in files {
        println!("{}", out.join(f).display());
    }
    Ok(())
}
