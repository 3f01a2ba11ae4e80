//! Exposure versus base CTR per engagement bucket, with bootstrap intervals,
//! for the ground-truth scorer and a group-penalizing scorer.
//!
//!     cargo run --release --example exposure_analysis

use fairranklab::metrics::{score_pairs, MetricsReport};
use fairranklab::pipeline::{bucket_scheme, split_pairs};
use fairranklab::ranker::FnScorer;
use fairranklab::simgym::{generate_environment, run_pair_experiment, TrueUtility};
use fairranklab::{EnvironmentConfig, Group, Item, Query, Scorer};

fn show(name: &str, report: &MetricsReport, buckets: usize) {
    println!("{name}");
    for b in 0..buckets {
        let row = report.find("exposure", Some(Group::Subgroup), Some(b), None).unwrap();
        let ctr = report.value("base_ctr", Some(Group::Subgroup), Some(b), None).unwrap();
        println!(
            "  bucket {b}: exposure {:.3} [{:.3}, {:.3}]  base ctr {ctr:.3}",
            row.value,
            row.ci_low.unwrap_or(f64::NAN),
            row.ci_high.unwrap_or(f64::NAN)
        );
    }
}

fn main() -> fairranklab::Result<()> {
    let env = generate_environment(&EnvironmentConfig::default())?;
    let pairs = run_pair_experiment(&env, 500_000);
    let (train, eval) = split_pairs(&pairs, 1);
    let scheme = bucket_scheme(&train, 4)?;

    let truth = TrueUtility(&env);
    let penalized = FnScorer(|q: &Query, i: &Item| {
        let u = truth.score(q, i).unwrap_or(f64::NEG_INFINITY);
        if i.group == Group::Subgroup { u - 1.0 } else { u }
    });

    for (name, scorer) in [("true utility", &truth as &(dyn Scorer + Sync)), ("penalized subgroup", &penalized)] {
        let outcomes = score_pairs(&eval, scorer, &env.items, &scheme)?;
        let report = MetricsReport::build(&outcomes, scheme.len(), 200, 9)?;
        show(name, &report, scheme.len());
    }
    Ok(())
}
