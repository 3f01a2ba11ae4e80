//! Pairwise accuracy on a six-item toy: three items per group, one click,
//! and a fixed ranking. Prints overall, intra-group and inter-group accuracy.
//!
//!     cargo run --example worked_example

use fairranklab::metrics::{pairwise_accuracy, PairType};
use fairranklab::ranker::FnScorer;
use fairranklab::{BucketScheme, Group, Item, PairDataset, PairObservation, Query, Side};

const NAMES: [&str; 6] = ["A1", "A2", "A3", "B1", "B2", "B3"];

fn main() -> fairranklab::Result<()> {
    let catalog: Vec<Item> = (0..6u64)
        .map(|j| Item {
            item_id: j,
            features: vec![],
            group: if j < 3 { Group::NotSubgroup } else { Group::Subgroup },
        })
        .collect();
    let query = Query {
        query_id: 0,
        user_features: vec![],
        context_features: vec![],
    };

    for (ranking, clicked) in [([1u64, 2, 3, 0, 4, 5], 0u64), ([0, 1, 2, 3, 4, 5], 3)] {
        // Clicked item against every other candidate.
        let pairs = PairDataset::new(
            catalog
                .iter()
                .filter(|i| i.item_id != clicked)
                .map(|u| PairObservation {
                    query: query.clone(),
                    item_a: clicked,
                    item_b: u.item_id,
                    clicked: Side::A,
                    engagement: 1.0,
                    group_a: catalog[clicked as usize].group,
                    group_b: u.group,
                    slate_order: Side::A,
                })
                .collect(),
        );
        let scorer = FnScorer(move |_: &Query, i: &Item| -(ranking.iter().position(|&r| r == i.item_id).unwrap() as f64));
        let table = pairwise_accuracy(&pairs, &scorer, &catalog, &BucketScheme::single())?;

        let order: Vec<&str> = ranking.iter().map(|&j| NAMES[j as usize]).collect();
        println!("ranking {} with {} clicked", order.join(" > "), NAMES[clicked as usize]);
        let group = catalog[clicked as usize].group;
        for t in PairType::ALL {
            let cell = table.get(group, 0, t).expect("non-empty cell");
            println!("  {t:<5} accuracy {:.3} over {} pairs", cell.accuracy, cell.count);
        }
    }
    Ok(())
}
