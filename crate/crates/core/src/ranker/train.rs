use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{softplus, ModelParams};
use crate::error::{Error, Result};
use crate::fairreg::{self, RegTerm};
use crate::rng::{self, Stream};
use crate::simgym::sigmoid;
use crate::types::{Interaction, InteractionLog, Item, PairDataset, PairObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// When set, the step size decays linearly from `learning_rate` to this
    /// value over the run.
    pub final_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub pair_batch_size: usize,
    pub steps: usize,
    /// Weight of the `|Corr(A, B)|` penalty.
    pub lambda: f64,
    /// Weight `α` of the squared engagement error.
    pub engagement_weight: f64,
    pub hidden: usize,
    /// Restrict the regularizer to pairs whose items differ in group.
    pub filter_intergroup: bool,
    /// Downsample pairs to equal clicked-group counts before training.
    pub rebalance: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            final_learning_rate: Some(0.05),
            batch_size: 1024,
            pair_batch_size: 1024,
            steps: 8000,
            lambda: 0.0,
            engagement_weight: 0.1,
            hidden: 32,
            filter_intergroup: true,
            rebalance: true,
            seed: 5,
        }
    }
}

impl TrainConfig {
    pub fn step_size(&self, step: usize) -> f64 {
        match self.final_learning_rate {
            Some(end) if self.steps > 1 => {
                let t = step as f64 / (self.steps - 1) as f64;
                self.learning_rate + (end - self.learning_rate) * t
            }
            _ => self.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if let Some(f) = self.final_learning_rate {
            if !(f.is_finite() && f > 0.0) {
                errs.push(format!("final_learning_rate must be positive, got {f}"));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            errs.push(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.engagement_weight.is_finite() && self.engagement_weight >= 0.0) {
            errs.push(format!(
                "engagement_weight must be nonnegative, got {}",
                self.engagement_weight
            ));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if self.pair_batch_size < 2 {
            errs.push(format!("pair_batch_size must be at least 2, got {}", self.pair_batch_size));
        }
        if self.hidden == 0 {
            errs.push("hidden must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn lookup(catalog: &[Item], item_id: u64) -> Result<&Item> {
    catalog
        .get(item_id as usize)
        .filter(|it| it.item_id == item_id)
        .ok_or_else(|| Error::invalid(format!("item {item_id} is not in the catalog")))
}

/// Mean over the batch of `BCE(ŷ, y) + α·(ẑ − z)²`.
pub fn pointwise_loss(params: &ModelParams, batch: &[Interaction], catalog: &[Item], alpha: f64) -> Result<f64> {
    let refs: Vec<&Interaction> = batch.iter().collect();
    pointwise(params, &refs, catalog, alpha, None)
}

fn pointwise(
    params: &ModelParams,
    batch: &[&Interaction],
    catalog: &[Item],
    alpha: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("pointwise loss needs a nonempty batch"));
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    for r in batch {
        let x = params.input(&r.query, lookup(catalog, r.item_id)?)?;
        let f = params.forward(&x);
        let y = r.label();
        // BCE through the logit: softplus(l) − y·l.
        let bce = softplus(f.click_logit) - y * f.click_logit;
        let err = f.z_hat - r.engagement;
        total += bce + alpha * err * err;
        if let Some(g) = grad.as_deref_mut() {
            let d_logit = (f.y_hat - y) / n;
            let d_raw = 2.0 * alpha * err * sigmoid(f.engagement_raw) / n;
            params.backward(&x, &f, d_logit, d_raw, g);
        }
    }
    Ok(total / n)
}

/// Value and gradient of `pointwise + λ·|Corr(A, B)|`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    pub pointwise: f64,
    pub regularizer: Option<RegTerm>,
    pub grad: Vec<f64>,
}

pub fn objective_and_grad(
    params: &ModelParams,
    batch: &[Interaction],
    pairs: Option<&[PairObservation]>,
    catalog: &[Item],
    alpha: f64,
    lambda: f64,
) -> Result<Objective> {
    let refs: Vec<&Interaction> = batch.iter().collect();
    objective(params, &refs, pairs, catalog, alpha, lambda)
}

fn objective(
    params: &ModelParams,
    batch: &[&Interaction],
    pairs: Option<&[PairObservation]>,
    catalog: &[Item],
    alpha: f64,
    lambda: f64,
) -> Result<Objective> {
    let mut grad = vec![0.0; params.theta().len()];
    let pw = pointwise(params, batch, catalog, alpha, Some(&mut grad))?;
    let mut total = pw;
    let mut regularizer = None;
    if let (Some(pairs), true) = (pairs, lambda > 0.0) {
        let reg = fairreg::reg_loss_and_grad(params, pairs, catalog)?;
        total += lambda * reg.loss;
        for (g, r) in grad.iter_mut().zip(&reg.grad) {
            *g += lambda * r;
        }
        regularizer = Some(reg);
    }
    Ok(Objective {
        total,
        pointwise: pw,
        regularizer,
        grad,
    })
}

/// One row of the training trajectory. The correlation columns are filled
/// whenever pairs were supplied, even when `λ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub pointwise: f64,
    pub correlation: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trajectory: Vec<StepRecord>,
    /// Pairs actually used by the regularizer after filtering and rebalancing.
    pub regularizer_pairs: usize,
}

impl TrainOutcome {
    pub fn degenerate_batches(&self) -> usize {
        self.trajectory.iter().filter(|s| s.degenerate).count()
    }

    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("step,total,pointwise,abs_correlation,correlation,degenerate\n");
        for s in &self.trajectory {
            let (abs, corr) = match s.correlation {
                Some(c) => (crate::dataset::format_real(c.abs()), crate::dataset::format_real(c)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.step,
                crate::dataset::format_real(s.total),
                crate::dataset::format_real(s.pointwise),
                abs,
                corr,
                u8::from(s.degenerate)
            ));
        }
        out
    }
}

/// Prepares the regularizer's pair pool according to the config toggles.
pub fn regularizer_pairs(pairs: &PairDataset, cfg: &TrainConfig) -> Result<PairDataset> {
    let filtered = if cfg.filter_intergroup {
        fairreg::filter_intergroup(pairs)
    } else {
        pairs.clone()
    };
    if cfg.rebalance {
        fairreg::rebalance(&filtered, cfg.seed)
    } else {
        Ok(filtered)
    }
}

/// Mini-batch gradient descent on `pointwise + λ·|Corr(A, B)|`.
///
/// Interaction batches and pair batches come from separate random streams,
/// so supplying pairs with `λ = 0` only adds monitoring and leaves the
/// parameter trajectory untouched.
pub fn train(
    params: ModelParams,
    log: &InteractionLog,
    pairs: Option<&PairDataset>,
    catalog: &[Item],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(Error::invalid("training log is empty"));
    }
    let pool = match pairs {
        Some(p) if cfg.lambda > 0.0 => {
            if p.is_empty() {
                return Err(Error::invalid("lambda > 0 requires a nonempty pair dataset"));
            }
            let pool = regularizer_pairs(p, cfg)?;
            if pool.len() < 2 {
                return Err(Error::invalid(format!(
                    "regularizer needs at least 2 pairs after filtering, got {}",
                    pool.len()
                )));
            }
            Some(pool)
        }
        Some(p) => regularizer_pairs(p, cfg).ok().filter(|pool| pool.len() >= 2),
        None if cfg.lambda > 0.0 => {
            return Err(Error::invalid("lambda > 0 requires a pair dataset"));
        }
        None => None,
    };

    let mut params = params;
    let mut batch_rng = rng::stream(cfg.seed, 0, Stream::Batches);
    let mut pair_rng = rng::stream(cfg.seed, 0, Stream::PairBatches);
    let mut trajectory = Vec::with_capacity(cfg.steps);
    let n = log.len();
    for step in 0..cfg.steps {
        let batch: Vec<&Interaction> = (0..cfg.batch_size)
            .map(|_| &log.records[batch_rng.random_range(0..n)])
            .collect();
        let pair_batch: Option<Vec<PairObservation>> = pool.as_ref().map(|pool| {
            (0..cfg.pair_batch_size)
                .map(|_| pool.records[pair_rng.random_range(0..pool.len())].clone())
                .collect()
        });
        let obj = objective(&params, &batch, pair_batch.as_deref(), catalog, cfg.engagement_weight, cfg.lambda)?;
        let (correlation, degenerate) = match (&obj.regularizer, &pair_batch) {
            (Some(reg), _) => (Some(reg.correlation), reg.degenerate),
            (None, Some(pb)) => {
                let res = fairreg::residuals(&params, pb, catalog)?;
                let c = fairreg::correlation(&res.a, &res.b)?;
                (Some(c.value), c.degenerate)
            }
            (None, None) => (None, false),
        };
        if !obj.total.is_finite() || obj.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                learning_rate: cfg.step_size(step),
            });
        }
        trajectory.push(StepRecord {
            step,
            total: obj.total,
            pointwise: obj.pointwise,
            correlation,
            degenerate,
        });
        let lr = cfg.step_size(step);
        for (t, g) in params.theta_mut().iter_mut().zip(&obj.grad) {
            *t -= lr * g;
        }
    }
    Ok(TrainOutcome {
        params,
        trajectory,
        regularizer_pairs: pool.map_or(0, |p| p.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Group, Query};

    fn item(j: u64, f: f64) -> Item {
        Item {
            item_id: j,
            features: vec![f],
            group: Group::NotSubgroup,
        }
    }

    fn record(qid: u64, item_id: u64, clicked: bool, z: f64) -> Interaction {
        Interaction {
            query: Query {
                query_id: qid,
                user_features: vec![0.5],
                context_features: vec![],
            },
            item_id,
            clicked,
            engagement: z,
        }
    }

    #[test]
    fn uniform_predictor_costs_ln2() {
        let cat = vec![item(0, 1.0), item(1, -1.0)];
        let batch = vec![record(0, 0, true, 1.0), record(0, 1, false, 0.0)];
        let loss = pointwise_loss(&ModelParams::zeros(2, 3), &batch, &cat, 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn near_perfect_fit_has_near_zero_loss() {
        // Click head saturated in the right direction, engagement head
        // pinned at softplus(raw) ≈ 0 for the unclicked target z = 0.
        let cat = vec![item(0, 1.0)];
        let mut p = ModelParams::zeros(2, 1);
        let n = p.theta().len();
        p.theta_mut()[n - 3] = -40.0; // b_click
        p.theta_mut()[n - 1] = -40.0; // b_eng
        let loss = pointwise_loss(&p, &[record(0, 0, false, 0.0)], &cat, 1.0).unwrap();
        assert!(loss < 1e-15, "{loss}");
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(pointwise_loss(&ModelParams::zeros(2, 1), &[], &[], 0.0).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let cat = vec![item(0, 1e200)];
        let log = InteractionLog::new(vec![record(0, 0, true, 1e200)]);
        let cfg = TrainConfig {
            steps: 5,
            hidden: 2,
            learning_rate: 1e10,
            engagement_weight: 1.0,
            ..TrainConfig::default()
        };
        let err = train(ModelParams::init(2, 2, 1), &log, None, &cat, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn lambda_requires_pairs() {
        let cat = vec![item(0, 1.0)];
        let log = InteractionLog::new(vec![record(0, 0, true, 1.0)]);
        let cfg = TrainConfig {
            lambda: 1.0,
            hidden: 2,
            ..TrainConfig::default()
        };
        assert!(train(ModelParams::init(2, 2, 1), &log, None, &cat, &cfg).is_err());
    }
}
