//! Pointwise two-head ranker, the ranking score `g`, list construction and
//! the training loop.

mod model;
mod train;

pub use model::{Forward, ModelParams, MODEL_VERSION};
pub use train::{
    objective_and_grad, pointwise_loss, train, Objective, StepRecord, TrainConfig, TrainOutcome,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::types::{Item, Query};

/// Anything that assigns a ranking score to a (query, item) pair.
pub trait Scorer {
    fn score(&self, query: &Query, item: &Item) -> Result<f64>;
}

impl Scorer for ModelParams {
    fn score(&self, query: &Query, item: &Item) -> Result<f64> {
        let (y, z) = self.predict(query, item)?;
        Ok(g(y, z))
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, query: &Query, item: &Item) -> Result<f64> {
        (**self).score(query, item)
    }
}

/// Scores every item the same; all comparisons are ties.
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _: &Query, _: &Item) -> Result<f64> {
        Ok(self.0)
    }
}

/// Adapts a closure into a [`Scorer`].
pub struct FnScorer<F>(pub F);

impl<F: Fn(&Query, &Item) -> f64> Scorer for FnScorer<F> {
    fn score(&self, query: &Query, item: &Item) -> Result<f64> {
        Ok((self.0)(query, item))
    }
}

/// `g(ŷ, ẑ) = ŷ·(1 + ẑ)` without range checks.
#[inline]
pub fn g(y_hat: f64, z_hat: f64) -> f64 {
    y_hat * (1.0 + z_hat)
}

/// Partial derivatives `(∂g/∂ŷ, ∂g/∂ẑ)`.
#[inline]
pub fn g_grad(y_hat: f64, z_hat: f64) -> (f64, f64) {
    (1.0 + z_hat, y_hat)
}

/// The ranking score, strictly increasing in both predictions.
pub fn ranking_score(y_hat: f64, z_hat: f64) -> Result<f64> {
    if !(y_hat > 0.0 && y_hat < 1.0) {
        return Err(Error::invalid(format!("predicted click must lie in (0, 1), got {y_hat}")));
    }
    if !(z_hat.is_finite() && z_hat >= 0.0) {
        return Err(Error::invalid(format!(
            "predicted engagement must be finite and nonnegative, got {z_hat}"
        )));
    }
    Ok(g(y_hat, z_hat))
}

/// A scored and sorted candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Item ids, best first.
    pub order: Vec<u64>,
    /// 1-based position of each input item, parallel to the input slice.
    pub positions: Vec<usize>,
    pub scores: Vec<f64>,
    tie_keys: Vec<u64>,
}

impl Ranking {
    /// Whether input item `a` is placed above input item `b`: a strictly
    /// higher score, or an equal score and a won coin flip.
    pub fn beats(&self, a: usize, b: usize) -> bool {
        let sa = self.scores[a];
        let sb = self.scores[b];
        if sa != sb {
            return sa > sb;
        }
        (self.tie_keys[a], b) > (self.tie_keys[b], a)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Sorts `items` by descending score. Ties are split by a coin seeded from
/// `(tie_seed, query_id)`; position `ℓ(j)` is `|R| − #{j' : j beats j'}`.
pub fn rank<S: Scorer + ?Sized>(scorer: &S, query: &Query, items: &[&Item], tie_seed: u64) -> Result<Ranking> {
    if items.is_empty() {
        return Err(Error::invalid("cannot rank an empty candidate set"));
    }
    let scores = items
        .iter()
        .map(|item| scorer.score(query, item))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("scorer returned {bad}")));
    }
    let mut coin = rng::stream(tie_seed, query.query_id, Stream::TieBreak);
    let tie_keys: Vec<u64> = (0..items.len()).map(|_| coin.random()).collect();
    let mut ranking = Ranking {
        order: Vec::new(),
        positions: vec![0; items.len()],
        scores,
        tie_keys,
    };
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| {
        if ranking.beats(a, b) {
            std::cmp::Ordering::Less
        } else if ranking.beats(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    for (pos, &i) in idx.iter().enumerate() {
        ranking.positions[i] = pos + 1;
    }
    ranking.order = idx.iter().map(|&i| items[i].item_id).collect();
    Ok(ranking)
}
