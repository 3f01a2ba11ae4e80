//! Generates a synthetic environment, runs the randomized pair experiment
//! and summarizes what was recorded.
//!
//!     cargo run --release --example pair_experiment

use fairranklab::simgym::{generate_environment, run_pair_experiment_traced};
use fairranklab::{EnvironmentConfig, Group};

fn main() -> fairranklab::Result<()> {
    let cfg = EnvironmentConfig::default();
    let env = generate_environment(&cfg)?;
    println!(
        "{} items, {} in the subgroup, input dimension {}",
        env.items.len(),
        cfg.subgroup_size(),
        cfg.input_dim()
    );

    let (pairs, trace) = run_pair_experiment_traced(&env, 200_000);
    println!("{trace:?}");
    let inter: Vec<_> = pairs.records.iter().filter(|r| r.is_intergroup()).collect();
    let sub_clicks = inter.iter().filter(|r| r.clicked_group() == Group::Subgroup).count();
    println!("{} recorded pairs, {} cross-group", pairs.len(), inter.len());
    println!(
        "subgroup wins {:.3} of cross-group clicks",
        sub_clicks as f64 / inter.len().max(1) as f64
    );

    // The earlier slot draws more clicks; randomizing the order keeps that
    // from favoring either group.
    let first = pairs.records.iter().filter(|r| r.slate_order == r.clicked).count();
    println!("clicked item shown first in {:.3} of pairs", first as f64 / pairs.len() as f64);
    Ok(())
}
