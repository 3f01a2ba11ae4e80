//! Expected rank of the clicked item per group and bucket. Under a symmetric
//! environment and a group-blind scorer the two groups land at the same
//! average position.
//!
//!     cargo run --release --example ranking_positions

use fairranklab::metrics::expected_position;
use fairranklab::pipeline::bucket_scheme;
use fairranklab::ranker::ConstantScorer;
use fairranklab::simgym::{generate_environment, run_pair_experiment, TrueUtility};
use fairranklab::{EnvironmentConfig, Group, Scorer};

fn main() -> fairranklab::Result<()> {
    let cfg = EnvironmentConfig {
        retrieval_size: 4,
        slate_size: 4,
        ..EnvironmentConfig::symmetric()
    };
    let env = generate_environment(&cfg)?;
    let pairs = run_pair_experiment(&env, 100_000);
    let scheme = bucket_scheme(&pairs, 3)?;

    let truth = TrueUtility(&env);
    for (name, scorer) in [("true utility", &truth as &(dyn Scorer + Sync)), ("constant", &ConstantScorer(0.0))] {
        let table = expected_position(&env, scorer, &pairs, &scheme, 5)?;
        println!("{name}: max group gap {:.4}", table.max_group_gap(scheme.len()).unwrap_or(f64::NAN));
        for b in 0..scheme.len() {
            println!(
                "  bucket {b}: {:.3} vs {:.3}",
                table.mean(Group::NotSubgroup, b).unwrap_or(f64::NAN),
                table.mean(Group::Subgroup, b).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
