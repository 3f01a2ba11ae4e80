//! Trains the baseline and the correlation-regularized ranker on the default
//! experiment and compares inter-group accuracy. Takes a few minutes.
//!
//!     cargo run --release --example train_with_regularizer [lambda]

use fairranklab::metrics::PairType;
use fairranklab::pipeline::{Experiment, ExperimentConfig, REGULARIZED_LAMBDA};
use fairranklab::{Group, TrainConfig};

fn main() -> fairranklab::Result<()> {
    let lambda = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("lambda must be a number"))
        .unwrap_or(REGULARIZED_LAMBDA);
    let cfg = ExperimentConfig::default();
    let exp = Experiment::prepare(&cfg)?;
    println!(
        "{} logged impressions, {} training pairs, {} evaluation pairs",
        exp.log.len(),
        exp.train_pairs.len(),
        exp.eval_pairs.len()
    );

    for l in [0.0, lambda] {
        let outcome = exp.train(&TrainConfig {
            lambda: l,
            ..cfg.training.clone()
        })?;
        let tally = exp.tally(&outcome.params)?;
        let tail: Vec<f64> = outcome.trajectory.iter().rev().take(200).filter_map(|s| s.correlation).collect();
        let corr = tail.iter().map(|c| c.abs()).sum::<f64>() / tail.len().max(1) as f64;
        println!(
            "λ = {l}: inter accuracy {:.3} / {:.3} (not subgroup / subgroup), gap ratio {:.3}, late |corr| {corr:.3}",
            tally.bucket_average(Group::NotSubgroup, PairType::Inter).unwrap_or(f64::NAN),
            tally.bucket_average(Group::Subgroup, PairType::Inter).unwrap_or(f64::NAN),
            tally.gap_ratio(PairType::Inter).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
