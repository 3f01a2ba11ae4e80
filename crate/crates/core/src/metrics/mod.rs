//! Pairwise fairness metrics over randomized pair data.
//!
//! Every pair in `P` is reduced to a [`PairOutcome`]: the groups of the
//! clicked and unclicked items, the engagement bucket of the click, and
//! whether the scorer put the clicked item on top (1), below (0) or tied
//! (½). All metrics are ratios of counts over a [`Tally`] of outcomes, which
//! makes them exact, mergeable and cheap to bootstrap.

mod lemmas;
mod pointwise;
mod report;
mod theory;

pub use lemmas::{lemma_counterexamples, LemmaInstance, LemmaReport};
pub use pointwise::{calibration_and_mse, CalibrationBin, GroupCalibration, LabeledPrediction};
pub use report::{MetricsReport, ReportRow, REPORT_VERSION};
pub use theory::{expected_position, position_decomposition_check, PositionCheck, PositionTable};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bucket::BucketScheme;
use crate::error::{Error, Result};
use crate::ranker::Scorer;
use crate::types::{Group, Item, PairDataset, PairObservation};

/// Which comparisons a cell is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    Any,
    Intra,
    Inter,
}

impl PairType {
    pub const ALL: [PairType; 3] = [PairType::Any, PairType::Intra, PairType::Inter];

    fn index(self) -> usize {
        self as usize
    }

    fn matches(self, clicked: Group, unclicked: Group) -> bool {
        match self {
            PairType::Any => true,
            PairType::Intra => clicked == unclicked,
            PairType::Inter => clicked != unclicked,
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairType::Any => "any",
            PairType::Intra => "intra",
            PairType::Inter => "inter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub clicked_group: Group,
    pub unclicked_group: Group,
    pub bucket: usize,
    /// Twice the comparison outcome: 2 win, 1 tie, 0 loss.
    pub half_wins: u8,
}

impl PairOutcome {
    pub fn win(&self) -> f64 {
        f64::from(self.half_wins) / 2.0
    }
}

fn lookup(catalog: &[Item], item_id: u64) -> Result<&Item> {
    catalog
        .get(item_id as usize)
        .filter(|it| it.item_id == item_id)
        .ok_or_else(|| Error::invalid(format!("item {item_id} is not in the catalog")))
}

pub fn pair_outcome<S: Scorer + ?Sized>(
    scorer: &S,
    record: &PairObservation,
    catalog: &[Item],
    scheme: &BucketScheme,
) -> Result<PairOutcome> {
    let clicked = scorer.score(&record.query, lookup(catalog, record.clicked_item())?)?;
    let unclicked = scorer.score(&record.query, lookup(catalog, record.unclicked_item())?)?;
    let half_wins = if clicked > unclicked {
        2
    } else if clicked == unclicked {
        1
    } else {
        0
    };
    Ok(PairOutcome {
        clicked_group: record.clicked_group(),
        unclicked_group: record.unclicked_group(),
        bucket: scheme.bucketize(record.engagement)?,
        half_wins,
    })
}

/// Scores every pair; evaluation runs in parallel and keeps input order.
pub fn score_pairs<S: Scorer + Sync + ?Sized>(
    pairs: &PairDataset,
    scorer: &S,
    catalog: &[Item],
    scheme: &BucketScheme,
) -> Result<Vec<PairOutcome>> {
    pairs
        .records
        .par_iter()
        .map(|r| pair_outcome(scorer, r, catalog, scheme))
        .collect()
}

/// Integer counts behind every metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    buckets: usize,
    /// `[clicked group][bucket][pair type] -> (half wins, pairs)`
    accuracy: Vec<[[(u64, u64); 3]; 2]>,
    /// `[bucket] -> (half-wins of the subgroup item, subgroup clicks, inter-group pairs)`
    inter: Vec<(u64, u64, u64)>,
}

impl Tally {
    pub fn new(buckets: usize) -> Self {
        Tally {
            buckets,
            accuracy: vec![[[(0, 0); 3]; 2]; buckets],
            inter: vec![(0, 0, 0); buckets],
        }
    }

    pub fn from_outcomes<'a>(buckets: usize, outcomes: impl IntoIterator<Item = &'a PairOutcome>) -> Self {
        let mut t = Tally::new(buckets);
        outcomes.into_iter().for_each(|o| t.add(o));
        t
    }

    pub fn add(&mut self, o: &PairOutcome) {
        let w = u64::from(o.half_wins);
        let cells = &mut self.accuracy[o.bucket][o.clicked_group.index()];
        for t in PairType::ALL {
            if t.matches(o.clicked_group, o.unclicked_group) {
                cells[t.index()].0 += w;
                cells[t.index()].1 += 1;
            }
        }
        if o.clicked_group != o.unclicked_group {
            let cell = &mut self.inter[o.bucket];
            if o.clicked_group == Group::Subgroup {
                cell.0 += w;
                cell.1 += 1;
            } else {
                cell.0 += 2 - w;
            }
            cell.2 += 1;
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        assert_eq!(self.buckets, other.buckets, "tallies over different bucket schemes");
        for (a, b) in self.accuracy.iter_mut().zip(&other.accuracy) {
            for g in 0..2 {
                for t in 0..3 {
                    a[g][t].0 += b[g][t].0;
                    a[g][t].1 += b[g][t].1;
                }
            }
        }
        for (a, b) in self.inter.iter_mut().zip(&other.inter) {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn count(&self, clicked: Group, bucket: usize, pair_type: PairType) -> u64 {
        self.accuracy[bucket][clicked.index()][pair_type.index()].1
    }

    /// Pairwise accuracy of one cell; `None` when the cell holds no pairs.
    pub fn accuracy(&self, clicked: Group, bucket: usize, pair_type: PairType) -> Option<f64> {
        let (hw, n) = self.accuracy[bucket][clicked.index()][pair_type.index()];
        (n > 0).then(|| hw as f64 / (2 * n) as f64)
    }

    /// Unweighted mean of the nonempty per-bucket accuracies.
    pub fn bucket_average(&self, clicked: Group, pair_type: PairType) -> Option<f64> {
        let vals: Vec<f64> = (0..self.buckets)
            .filter_map(|b| self.accuracy(clicked, b, pair_type))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Bucket-averaged accuracy of the non-subgroup over that of the subgroup.
    pub fn gap_ratio(&self, pair_type: PairType) -> Option<f64> {
        let num = self.bucket_average(Group::NotSubgroup, pair_type)?;
        let den = self.bucket_average(Group::Subgroup, pair_type)?;
        (den > 0.0).then(|| num / den)
    }

    pub fn inter_count(&self, bucket: usize) -> u64 {
        self.inter[bucket].2
    }

    /// Probability that the `group` item of an inter-group pair is ranked
    /// above the other, whichever was clicked.
    pub fn exposure(&self, group: Group, bucket: usize) -> Option<f64> {
        let (hw, _, n) = self.inter[bucket];
        (n > 0).then(|| {
            let sub = hw as f64 / (2 * n) as f64;
            match group {
                Group::Subgroup => sub,
                Group::NotSubgroup => (2 * n - hw) as f64 / (2 * n) as f64,
            }
        })
    }

    /// Fraction of inter-group pairs whose click went to `group`.
    pub fn base_ctr(&self, group: Group, bucket: usize) -> Option<f64> {
        let (_, sub, n) = self.inter[bucket];
        (n > 0).then(|| match group {
            Group::Subgroup => sub as f64 / n as f64,
            Group::NotSubgroup => (n - sub) as f64 / n as f64,
        })
    }

    /// Largest violation, over all `(group, bucket)` cells, of
    /// `acc_any = Σ_t P(t | cell)·acc_t` for `t ∈ {intra, inter}`.
    pub fn decomposition_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for b in 0..self.buckets {
            for g in Group::BOTH {
                let Some(any) = self.accuracy(g, b, PairType::Any) else {
                    continue;
                };
                let n = self.count(g, b, PairType::Any) as f64;
                let mixed: f64 = [PairType::Intra, PairType::Inter]
                    .into_iter()
                    .filter_map(|t| self.accuracy(g, b, t).map(|a| self.count(g, b, t) as f64 / n * a))
                    .sum();
                worst = worst.max((any - mixed).abs());
            }
        }
        worst
    }
}

/// One cell of an accuracy table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub accuracy: f64,
    pub count: u64,
}

/// Pairwise accuracy for every (clicked group, bucket, pair type) cell that
/// holds at least one pair.
#[derive(Debug, Clone)]
pub struct AccuracyTable {
    tally: Tally,
}

impl AccuracyTable {
    pub fn get(&self, clicked: Group, bucket: usize, pair_type: PairType) -> Option<Cell> {
        self.tally.accuracy(clicked, bucket, pair_type).map(|accuracy| Cell {
            accuracy,
            count: self.tally.count(clicked, bucket, pair_type),
        })
    }

    pub fn tally(&self) -> &Tally {
        &self.tally
    }

    pub fn buckets(&self) -> usize {
        self.tally.buckets
    }
}

/// Scores `pairs` and tallies them by clicked group, bucket and pair type.
pub fn pairwise_accuracy<S: Scorer + Sync + ?Sized>(
    pairs: &PairDataset,
    scorer: &S,
    catalog: &[Item],
    scheme: &BucketScheme,
) -> Result<AccuracyTable> {
    if pairs.is_empty() {
        return Err(Error::invalid("pairwise accuracy needs a nonempty evaluation set"));
    }
    let outcomes = score_pairs(pairs, scorer, catalog, scheme)?;
    Ok(AccuracyTable {
        tally: Tally::from_outcomes(scheme.len(), &outcomes),
    })
}

/// Largest violation of the intra/inter decomposition of overall accuracy.
pub fn decomposition_check<S: Scorer + Sync + ?Sized>(
    pairs: &PairDataset,
    scorer: &S,
    catalog: &[Item],
    scheme: &BucketScheme,
) -> Result<f64> {
    Ok(pairwise_accuracy(pairs, scorer, catalog, scheme)?.tally.decomposition_violation())
}

pub fn exposure<S: Scorer + Sync + ?Sized>(
    pairs: &PairDataset,
    scorer: &S,
    catalog: &[Item],
    scheme: &BucketScheme,
    group: Group,
    bucket: usize,
) -> Result<Option<f64>> {
    let outcomes = score_pairs(pairs, scorer, catalog, scheme)?;
    Ok(Tally::from_outcomes(scheme.len(), &outcomes).exposure(group, bucket))
}

pub fn base_ctr(pairs: &PairDataset, scheme: &BucketScheme, group: Group, bucket: usize) -> Result<Option<f64>> {
    let mut t = Tally::new(scheme.len());
    for r in &pairs.records {
        t.add(&PairOutcome {
            clicked_group: r.clicked_group(),
            unclicked_group: r.unclicked_group(),
            bucket: scheme.bucketize(r.engagement)?,
            half_wins: 1,
        });
    }
    Ok(t.base_ctr(group, bucket))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::{ConstantScorer, FnScorer};
    use crate::types::{Query, Side};
    use proptest::prelude::*;

    fn outcome(c: u8, u: u8, bucket: usize, half_wins: u8) -> PairOutcome {
        PairOutcome {
            clicked_group: Group::from_bit(c).unwrap(),
            unclicked_group: Group::from_bit(u).unwrap(),
            bucket,
            half_wins,
        }
    }

    fn arb_outcome() -> impl Strategy<Value = PairOutcome> {
        (0u8..2, 0u8..2, 0usize..4, 0u8..3).prop_map(|(c, u, b, w)| outcome(c, u, b, w))
    }

    #[test]
    fn empty_cells_are_absent() {
        let t = Tally::from_outcomes(2, &[outcome(0, 0, 0, 2)]);
        assert_eq!(t.accuracy(Group::NotSubgroup, 0, PairType::Any), Some(1.0));
        assert_eq!(t.accuracy(Group::NotSubgroup, 0, PairType::Inter), None);
        assert_eq!(t.accuracy(Group::Subgroup, 1, PairType::Any), None);
        assert_eq!(t.exposure(Group::Subgroup, 0), None);
    }

    #[test]
    fn single_pair_has_zero_violation() {
        let t = Tally::from_outcomes(1, &[outcome(1, 0, 0, 0)]);
        assert_eq!(t.decomposition_violation(), 0.0);
    }

    #[test]
    fn empty_evaluation_set_rejected() {
        let r = pairwise_accuracy(&PairDataset::default(), &ConstantScorer(0.0), &[], &BucketScheme::single());
        assert!(r.is_err());
    }

    #[test]
    fn dominant_scorer_has_full_exposure() {
        let catalog: Vec<Item> = (0..4)
            .map(|j| Item {
                item_id: j,
                features: vec![],
                group: Group::from_bit((j % 2) as u8).unwrap(),
            })
            .collect();
        let q = Query {
            query_id: 0,
            user_features: vec![],
            context_features: vec![],
        };
        let recs = (0..4u64)
            .map(|i| PairObservation {
                query: q.clone(),
                item_a: 0,
                item_b: 1,
                clicked: if i % 2 == 0 { Side::A } else { Side::B },
                engagement: 0.5,
                group_a: Group::NotSubgroup,
                group_b: Group::Subgroup,
                slate_order: Side::A,
            })
            .collect();
        let pairs = PairDataset::new(recs);
        let scorer = FnScorer(|_: &Query, i: &Item| if i.group == Group::NotSubgroup { 1.0 } else { 0.0 });
        let s = BucketScheme::single();
        assert_eq!(exposure(&pairs, &scorer, &catalog, &s, Group::NotSubgroup, 0).unwrap(), Some(1.0));
        assert_eq!(exposure(&pairs, &scorer, &catalog, &s, Group::Subgroup, 0).unwrap(), Some(0.0));
        assert_eq!(base_ctr(&pairs, &s, Group::Subgroup, 0).unwrap(), Some(0.5));
    }

    proptest! {
        #[test]
        fn decomposition_identity_holds(outcomes in prop::collection::vec(arb_outcome(), 1..400)) {
            let t = Tally::from_outcomes(4, &outcomes);
            prop_assert!(t.decomposition_violation() <= 1e-12);
        }

        #[test]
        fn complements_and_ranges(outcomes in prop::collection::vec(arb_outcome(), 1..400)) {
            let t = Tally::from_outcomes(4, &outcomes);
            for b in 0..4 {
                if let (Some(e0), Some(e1)) = (t.exposure(Group::NotSubgroup, b), t.exposure(Group::Subgroup, b)) {
                    prop_assert_eq!(e0 + e1, 1.0);
                }
                if let (Some(c0), Some(c1)) = (t.base_ctr(Group::NotSubgroup, b), t.base_ctr(Group::Subgroup, b)) {
                    prop_assert!((c0 + c1 - 1.0).abs() <= 1e-15);
                }
                for g in Group::BOTH {
                    for pt in PairType::ALL {
                        if let Some(a) = t.accuracy(g, b, pt) {
                            prop_assert!((0.0..=1.0).contains(&a));
                        }
                    }
                }
            }
        }

        #[test]
        fn merged_partitions_equal_serial(outcomes in prop::collection::vec(arb_outcome(), 0..400), cut in 0usize..400) {
            let cut = cut.min(outcomes.len());
            let mut left = Tally::from_outcomes(4, &outcomes[..cut]);
            left.merge(&Tally::from_outcomes(4, &outcomes[cut..]));
            prop_assert_eq!(left, Tally::from_outcomes(4, &outcomes));
        }

        #[test]
        fn leave_one_out_delta(outcomes in prop::collection::vec(arb_outcome(), 2..200), drop in 0usize..200) {
            let drop = drop % outcomes.len();
            let full = Tally::from_outcomes(4, &outcomes);
            let mut rest = outcomes.clone();
            let removed = rest.remove(drop);
            let loo = Tally::from_outcomes(4, &rest);
            let g = removed.clicked_group;
            let b = removed.bucket;
            let n = full.count(g, b, PairType::Any) as f64;
            let acc = full.accuracy(g, b, PairType::Any).unwrap();
            let expected = if n > 1.0 { Some((acc * n - removed.win()) / (n - 1.0)) } else { None };
            match (loo.accuracy(g, b, PairType::Any), expected) {
                (Some(a), Some(e)) => prop_assert!((a - e).abs() < 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
