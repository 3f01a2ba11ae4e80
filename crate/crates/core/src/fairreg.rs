//! Pairwise correlation regularizer.
//!
//! For every recorded pair, orient the two items so that `j` is the clicked
//! one. Then
//!
//! ```text
//! A = g(f(q, v_j)) − g(f(q, v_j'))      (score residual)
//! B = s_j − s_j'                         (group orientation)
//! ```
//!
//! and the penalty is `|Corr(A, B)|` over a batch of pairs. `B` carries no
//! parameters, so the gradient flows through `A` only.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::ranker::{g_grad, ModelParams, Scorer};
use crate::rng::{self, Stream};
use crate::simgym::sigmoid;
use crate::types::{Group, Item, PairDataset, PairObservation};

/// Keeps only pairs whose two items belong to different groups.
pub fn filter_intergroup(pairs: &PairDataset) -> PairDataset {
    PairDataset::new(pairs.records.iter().filter(|r| r.is_intergroup()).cloned().collect())
}

/// Downsamples the majority clicked-group to the size of the minority one.
/// Retained records keep their original relative order.
pub fn rebalance(pairs: &PairDataset, seed: u64) -> Result<PairDataset> {
    let mut by_group: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in pairs.records.iter().enumerate() {
        by_group[r.clicked_group().index()].push(i);
    }
    for g in Group::BOTH {
        if by_group[g.index()].is_empty() {
            return Err(Error::Imbalance { missing: g.bit() });
        }
    }
    let target = by_group[0].len().min(by_group[1].len());
    let mut rng = rng::stream(seed, 0, Stream::Rebalance);
    let mut keep = vec![false; pairs.len()];
    for members in &by_group {
        if members.len() == target {
            members.iter().for_each(|&i| keep[i] = true);
        } else {
            let mut chosen: Vec<usize> = index::sample(&mut rng, members.len(), target).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().for_each(|k| keep[members[k]] = true);
        }
    }
    Ok(PairDataset::new(
        pairs
            .records
            .iter()
            .zip(keep)
            .filter(|&(_r, k)| k).map(|(r, _k)| r.clone())
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResiduals {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn lookup(catalog: &[Item], item_id: u64) -> Result<&Item> {
    catalog
        .get(item_id as usize)
        .filter(|it| it.item_id == item_id)
        .ok_or_else(|| Error::invalid(format!("item {item_id} is not in the catalog")))
}

pub fn residuals<S: Scorer + ?Sized>(scorer: &S, batch: &[PairObservation], catalog: &[Item]) -> Result<PairResiduals> {
    if batch.is_empty() {
        return Err(Error::invalid("residuals need a nonempty pair batch"));
    }
    let mut out = PairResiduals {
        a: Vec::with_capacity(batch.len()),
        b: Vec::with_capacity(batch.len()),
    };
    for r in batch {
        let clicked = scorer.score(&r.query, lookup(catalog, r.clicked_item())?)?;
        let unclicked = scorer.score(&r.query, lookup(catalog, r.unclicked_item())?)?;
        out.a.push(clicked - unclicked);
        out.b.push(r.clicked_group().value() - r.unclicked_group().value());
    }
    Ok(out)
}

/// Pearson correlation; `degenerate` marks a zero-variance input, in which
/// case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

struct Moments {
    mean_a: f64,
    mean_b: f64,
    ss_a: f64,
    ss_b: f64,
    sp: f64,
}

fn moments(a: &[f64], b: &[f64]) -> Moments {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut ss_a, mut ss_b, mut sp) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - mean_a, y - mean_b);
        ss_a += da * da;
        ss_b += db * db;
        sp += da * db;
    }
    Moments {
        mean_a,
        mean_b,
        ss_a,
        ss_b,
        sp,
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

pub fn correlation(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "correlation inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid(format!("correlation needs at least 2 points, got {}", a.len())));
    }
    let m = moments(a, b);
    if is_constant(a) || is_constant(b) || m.ss_a <= 0.0 || m.ss_b <= 0.0 {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (m.sp / (m.ss_a.sqrt() * m.ss_b.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// `|Corr(A, B)|` on one batch together with its parameter gradient.
#[derive(Debug, Clone)]
pub struct RegTerm {
    pub loss: f64,
    pub correlation: f64,
    pub degenerate: bool,
    pub grad: Vec<f64>,
}

pub fn reg_loss_and_grad(params: &ModelParams, batch: &[PairObservation], catalog: &[Item]) -> Result<RegTerm> {
    if batch.is_empty() {
        return Err(Error::invalid("regularizer needs a nonempty pair batch"));
    }
    let mut cache = Vec::with_capacity(batch.len());
    let mut a = Vec::with_capacity(batch.len());
    let mut b = Vec::with_capacity(batch.len());
    for r in batch {
        let xc = params.input(&r.query, lookup(catalog, r.clicked_item())?)?;
        let xu = params.input(&r.query, lookup(catalog, r.unclicked_item())?)?;
        let fc = params.forward(&xc);
        let fu = params.forward(&xu);
        a.push(crate::ranker::g(fc.y_hat, fc.z_hat) - crate::ranker::g(fu.y_hat, fu.z_hat));
        b.push(r.clicked_group().value() - r.unclicked_group().value());
        cache.push((xc, fc, xu, fu));
    }
    let corr = correlation(&a, &b)?;
    let mut grad = vec![0.0; params.theta().len()];
    let sign = if corr.value > 0.0 {
        1.0
    } else if corr.value < 0.0 {
        -1.0
    } else {
        0.0
    };
    if corr.degenerate || sign == 0.0 {
        return Ok(RegTerm {
            loss: corr.value.abs(),
            correlation: corr.value,
            degenerate: corr.degenerate,
            grad,
        });
    }
    // ∂ρ/∂A_i = (B_i − B̄)/sqrt(Saa·Sbb) − ρ·(A_i − Ā)/Saa
    let m = moments(&a, &b);
    let scale = 1.0 / (m.ss_a.sqrt() * m.ss_b.sqrt());
    for (i, (xc, fc, xu, fu)) in cache.iter().enumerate() {
        let d_a = sign * ((b[i] - m.mean_b) * scale - corr.value * (a[i] - m.mean_a) / m.ss_a);
        for (x, f, w) in [(xc, fc, d_a), (xu, fu, -d_a)] {
            let (dg_dy, dg_dz) = g_grad(f.y_hat, f.z_hat);
            let d_logit = w * dg_dy * f.y_hat * (1.0 - f.y_hat);
            let d_raw = w * dg_dz * sigmoid(f.engagement_raw);
            params.backward(x, f, d_logit, d_raw, &mut grad);
        }
    }
    Ok(RegTerm {
        loss: corr.value.abs(),
        correlation: corr.value,
        degenerate: false,
        grad,
    })
}
