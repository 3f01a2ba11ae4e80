//! Positions of clicked items in fully ranked candidate sets.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bucket::BucketScheme;
use crate::error::{Error, Result};
use crate::ranker::{self, Scorer};
use crate::simgym::Environment;
use crate::types::{Group, Item, PairDataset, Query};

/// Win counts behind one position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionCheck {
    pub position: usize,
    pub candidates: usize,
    pub same_group_wins: usize,
    pub cross_group_wins: usize,
}

impl PositionCheck {
    /// `|ℓ(j) − (|R| − same − cross)|`.
    pub fn violation(&self) -> f64 {
        let rebuilt = self.candidates as f64 - self.same_group_wins as f64 - self.cross_group_wins as f64;
        (self.position as f64 - rebuilt).abs()
    }
}

/// Ranks `candidates` and rebuilds the position of `candidates[clicked]`
/// from its same-group and cross-group comparison wins.
pub fn position_decomposition_check<S: Scorer + ?Sized>(
    scorer: &S,
    query: &Query,
    candidates: &[&Item],
    clicked: usize,
    tie_seed: u64,
) -> Result<PositionCheck> {
    if clicked >= candidates.len() {
        return Err(Error::invalid(format!(
            "clicked index {clicked} outside a candidate set of {}",
            candidates.len()
        )));
    }
    let ranking = ranker::rank(scorer, query, candidates, tie_seed)?;
    let group = candidates[clicked].group;
    let (mut same, mut cross) = (0, 0);
    for (k, other) in candidates.iter().enumerate() {
        if k == clicked || !ranking.beats(clicked, k) {
            continue;
        }
        if other.group == group {
            same += 1;
        } else {
            cross += 1;
        }
    }
    Ok(PositionCheck {
        position: ranking.positions[clicked],
        candidates: candidates.len(),
        same_group_wins: same,
        cross_group_wins: cross,
    })
}

/// Mean clicked-item position per (group, bucket).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositionTable {
    cells: BTreeMap<(Group, usize), (f64, u64)>,
}

impl PositionTable {
    pub fn mean(&self, group: Group, bucket: usize) -> Option<f64> {
        self.cells.get(&(group, bucket)).map(|&(sum, n)| sum / n as f64)
    }

    pub fn count(&self, group: Group, bucket: usize) -> u64 {
        self.cells.get(&(group, bucket)).map_or(0, |c| c.1)
    }

    /// Largest `|mean(subgroup) − mean(not subgroup)|` over buckets where
    /// both groups are present.
    pub fn max_group_gap(&self, buckets: usize) -> Option<f64> {
        (0..buckets)
            .filter_map(|b| Some((self.mean(Group::Subgroup, b)? - self.mean(Group::NotSubgroup, b)?).abs()))
            .reduce(f64::max)
    }
}

/// Re-retrieves `R_q` for every evaluation record, ranks it with `scorer` and
/// averages the position of the clicked item by (group, bucket).
pub fn expected_position<S: Scorer + Sync + ?Sized>(
    env: &Environment,
    scorer: &S,
    pairs: &PairDataset,
    scheme: &BucketScheme,
    tie_seed: u64,
) -> Result<PositionTable> {
    let placed: Vec<(Group, usize, usize)> = pairs
        .records
        .par_iter()
        .map(|r| {
            let ids = env.retrieve(&r.query);
            let target = r.clicked_item();
            let k = ids.iter().position(|&j| j == target).ok_or_else(|| {
                Error::invalid(format!(
                    "clicked item {target} is not in the retrieval set of query {}",
                    r.query.query_id
                ))
            })?;
            let items: Vec<&Item> = ids.iter().map(|&j| env.item(j)).collect();
            let ranking = ranker::rank(scorer, &r.query, &items, tie_seed)?;
            Ok((r.clicked_group(), scheme.bucketize(r.engagement)?, ranking.positions[k]))
        })
        .collect::<Result<_>>()?;
    let mut table = PositionTable::default();
    for (g, b, pos) in placed {
        let cell = table.cells.entry((g, b)).or_insert((0.0, 0));
        cell.0 += pos as f64;
        cell.1 += 1;
    }
    Ok(table)
}
