//! Synthetic recommendation environment with known ground truth.
//!
//! Users and items carry latent vectors; the true click utility of item `j`
//! for a query from user `i` is
//!
//! ```text
//! u(q, j) = base_utility + <w_i, v_j> + group_utility_bias * s_j
//! ```
//!
//! and an item shown at slot `p` is clicked with probability
//! `sigmoid(u) * position_bias[p]`. A slate is scanned top-down and the
//! first success is the only click. Engagement after a click is exponential
//! with mean `engagement_mean_per_group[s_j] * sigmoid(u)^engagement_utility_exponent`.
//!
//! User latents are drawn per dimension from `N(1/sqrt 2, 1/2)` and item
//! latents from `N(0, 1/latent_dim)`, which puts the per-user spread of
//! `<w, v>` across items at unit variance. Rankers observe the user latent
//! exactly, random context features, and a noisy view of the item: the
//! latent plus `N(0, feature_noise^2 / latent_dim)` per component, followed
//! by a group indicator `s_j + N(0, group_feature_noise^2)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranker::{self, ModelParams};
use crate::rng::{self, Stream};
use crate::types::{Group, Interaction, InteractionLog, Item, PairDataset, PairObservation, Query, Side};

/// Query ids used by [`simulate_log`] start here.
pub const LOG_QUERY_BASE: u64 = 0;
/// Query ids used by [`run_pair_experiment`] start here, so experiment
/// queries never reuse the random streams of logged queries.
pub const PAIR_QUERY_BASE: u64 = 1 << 40;
/// Query ids reserved for ad-hoc evaluation queries.
pub const EVAL_QUERY_BASE: u64 = 2 << 40;

/// Slots (0-based) that host the randomized pair.
pub const PAIR_SLOTS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Uniform sample without replacement; blind to groups and utility.
    #[default]
    Uniform,
    /// The `retrieval_size` items of highest true utility.
    UtilityTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub subgroup_fraction: f64,
    pub latent_dim: usize,
    pub context_dim: usize,
    pub base_utility: f64,
    pub group_utility_bias: f64,
    pub feature_noise: f64,
    pub group_feature_noise: f64,
    pub engagement_mean_per_group: [f64; 2],
    /// How strongly engagement follows click utility; 0 makes it
    /// independent of utility within a group.
    pub engagement_utility_exponent: f64,
    pub position_bias: Vec<f64>,
    pub retrieval_size: usize,
    pub retrieval_mode: RetrievalMode,
    pub slate_size: usize,
    pub legacy_exposure_bias: f64,
    pub seed: u64,
}

impl Default for EnvironmentConfig {
    /// The biased desk-scale environment used by the end-to-end experiments.
    fn default() -> Self {
        EnvironmentConfig {
            n_users: 2000,
            n_items: 5000,
            subgroup_fraction: 0.1,
            latent_dim: 4,
            context_dim: 2,
            base_utility: -2.0,
            group_utility_bias: -1.0,
            feature_noise: 1.0,
            group_feature_noise: 0.21,
            engagement_mean_per_group: [2.0, 2.0],
            engagement_utility_exponent: 0.0,
            position_bias: vec![1.0, 0.8, 0.65, 0.55, 0.47, 0.41, 0.36, 0.32, 0.29, 0.26],
            retrieval_size: 20,
            retrieval_mode: RetrievalMode::Uniform,
            slate_size: 10,
            legacy_exposure_bias: 0.8,
            seed: 17,
        }
    }
}

impl EnvironmentConfig {
    /// A group-symmetric environment: no utility gap, no legacy demotion,
    /// equal engagement, half the catalog in the subgroup.
    pub fn symmetric() -> Self {
        EnvironmentConfig {
            subgroup_fraction: 0.5,
            group_utility_bias: 0.0,
            legacy_exposure_bias: 0.0,
            ..EnvironmentConfig::default()
        }
    }

    pub fn subgroup_size(&self) -> usize {
        (self.n_items as f64 * self.subgroup_fraction).round() as usize
    }

    pub fn item_feature_dim(&self) -> usize {
        self.latent_dim + 1
    }

    /// Width of the ranker input: user, context and item features.
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.context_dim + self.item_feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_users == 0 {
            errs.push("n_users must be positive".to_string());
        }
        if self.n_items < 2 {
            errs.push(format!("n_items must be at least 2, got {}", self.n_items));
        }
        if !(self.subgroup_fraction > 0.0 && self.subgroup_fraction < 1.0) {
            errs.push(format!(
                "subgroup_fraction must lie in (0, 1), got {}",
                self.subgroup_fraction
            ));
        } else if self.n_items >= 2 {
            let k = self.subgroup_size();
            if k == 0 || k == self.n_items {
                errs.push(format!(
                    "subgroup_fraction {} of {} items leaves one group empty",
                    self.subgroup_fraction, self.n_items
                ));
            }
        }
        if self.latent_dim == 0 {
            errs.push("latent_dim must be positive".to_string());
        }
        for (name, v) in [
            ("base_utility", self.base_utility),
            ("group_utility_bias", self.group_utility_bias),
        ] {
            if !v.is_finite() {
                errs.push(format!("{name} must be finite, got {v}"));
            }
        }
        for (name, v) in [
            ("feature_noise", self.feature_noise),
            ("group_feature_noise", self.group_feature_noise),
            ("engagement_utility_exponent", self.engagement_utility_exponent),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        for (g, m) in self.engagement_mean_per_group.iter().enumerate() {
            if !(m.is_finite() && *m > 0.0) {
                errs.push(format!("engagement_mean_per_group[{g}] must be positive, got {m}"));
            }
        }
        if self.slate_size == 0 {
            errs.push("slate_size must be positive".to_string());
        }
        if self.slate_size > self.retrieval_size {
            errs.push(format!(
                "slate_size {} exceeds retrieval_size {}",
                self.slate_size, self.retrieval_size
            ));
        }
        if self.retrieval_size > self.n_items {
            errs.push(format!(
                "retrieval_size {} exceeds n_items {}",
                self.retrieval_size, self.n_items
            ));
        }
        let needed = self.slate_size.max(PAIR_SLOTS[1] + 1);
        if self.position_bias.len() < needed {
            errs.push(format!(
                "position_bias needs at least {needed} entries, got {}",
                self.position_bias.len()
            ));
        }
        for (p, b) in self.position_bias.iter().enumerate() {
            if !(b.is_finite() && (0.0..=1.0).contains(b)) {
                errs.push(format!("position_bias[{p}] must lie in [0, 1], got {b}"));
            }
        }
        if !(0.0..=1.0).contains(&self.legacy_exposure_bias) {
            errs.push(format!(
                "legacy_exposure_bias must lie in [0, 1], got {}",
                self.legacy_exposure_bias
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub config: EnvironmentConfig,
    pub user_latents: Vec<Vec<f64>>,
    pub item_latents: Vec<Vec<f64>>,
    /// Observed catalog; `items[j].item_id == j`.
    pub items: Vec<Item>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn generate_environment(config: &EnvironmentConfig) -> Result<Environment> {
    config.validate()?;
    let d = config.latent_dim;
    let mut rng = rng::stream(config.seed, 0, Stream::Catalog);
    let user_dist = Normal::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
        .expect("valid normal");
    let item_dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid normal");
    let noise_dist = Normal::new(0.0, config.feature_noise / (d as f64).sqrt()).expect("valid normal");
    let group_noise = Normal::new(0.0, config.group_feature_noise).expect("valid normal");

    let user_latents: Vec<Vec<f64>> = (0..config.n_users)
        .map(|_| (0..d).map(|_| user_dist.sample(&mut rng)).collect())
        .collect();

    let mut groups = vec![Group::NotSubgroup; config.n_items];
    for j in index::sample(&mut rng, config.n_items, config.subgroup_size()) {
        groups[j] = Group::Subgroup;
    }

    let mut item_latents = Vec::with_capacity(config.n_items);
    let mut items = Vec::with_capacity(config.n_items);
    for (j, group) in groups.into_iter().enumerate() {
        let latent: Vec<f64> = (0..d).map(|_| item_dist.sample(&mut rng)).collect();
        let mut features: Vec<f64> = latent.iter().map(|x| x + noise_dist.sample(&mut rng)).collect();
        features.push(group.value() + group_noise.sample(&mut rng));
        item_latents.push(latent);
        items.push(Item {
            item_id: j as u64,
            features,
            group,
        });
    }

    Ok(Environment {
        config: config.clone(),
        user_latents,
        item_latents,
        items,
    })
}

/// Outcome of one simulated pair trial, kept for auditing record counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairTrace {
    pub trials: usize,
    pub clicked_trials: usize,
}

/// Whose ranking decides the logged slates.
#[derive(Debug, Clone, Copy)]
pub enum LoggingPolicy<'a> {
    /// True-utility ranking, with each subgroup item demoted one slot with
    /// probability `legacy_exposure_bias`.
    Legacy,
    /// Ranking by a trained model's score `g(f(q, v))`.
    Model(&'a ModelParams),
}

impl Environment {
    pub fn item(&self, item_id: u64) -> &Item {
        &self.items[item_id as usize]
    }

    pub fn query(&self, query_id: u64) -> Query {
        let mut rng = rng::stream(self.config.seed, query_id, Stream::Query);
        let user = rng.random_range(0..self.config.n_users);
        let std = Normal::new(0.0, 1.0).expect("valid normal");
        let context_features = (0..self.config.context_dim).map(|_| std.sample(&mut rng)).collect();
        Query {
            query_id,
            user_features: self.user_latents[user].clone(),
            context_features,
        }
    }

    /// True click utility. The user latent is read from the query's user
    /// features, which this environment exposes without noise.
    pub fn utility(&self, query: &Query, item_id: u64) -> f64 {
        let latent = &self.item_latents[item_id as usize];
        let dot: f64 = query.user_features.iter().zip(latent).map(|(a, b)| a * b).sum();
        self.config.base_utility + dot + self.config.group_utility_bias * self.item(item_id).group.value()
    }

    pub fn click_probability(&self, query: &Query, item_id: u64, slot: usize) -> f64 {
        sigmoid(self.utility(query, item_id)) * self.config.position_bias[slot]
    }

    fn engagement(&self, query: &Query, item_id: u64, rng: &mut impl Rng) -> f64 {
        let group = self.item(item_id).group;
        let mean = self.config.engagement_mean_per_group[group.index()]
            * sigmoid(self.utility(query, item_id)).powf(self.config.engagement_utility_exponent);
        Exp::new(1.0 / mean).expect("positive rate").sample(rng)
    }

    /// Candidate set `R_q` for a query, as item ids.
    pub fn retrieve(&self, query: &Query) -> Vec<u64> {
        let m = self.config.retrieval_size;
        match self.config.retrieval_mode {
            RetrievalMode::Uniform => {
                let mut rng = rng::stream(self.config.seed, query.query_id, Stream::Retrieval);
                index::sample(&mut rng, self.config.n_items, m)
                    .into_iter()
                    .map(|j| j as u64)
                    .collect()
            }
            RetrievalMode::UtilityTop => {
                let mut scored: Vec<(f64, u64)> = (0..self.config.n_items as u64)
                    .map(|j| (self.utility(query, j), j))
                    .collect();
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                scored.into_iter().take(m).map(|(_, j)| j).collect()
            }
        }
    }

    fn legacy_ranking(&self, query: &Query, candidates: &[u64]) -> Vec<u64> {
        let mut scored: Vec<(f64, u64)> = candidates.iter().map(|&j| (self.utility(query, j), j)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut order: Vec<u64> = scored.into_iter().map(|(_, j)| j).collect();
        let mut rng = rng::stream(self.config.seed, query.query_id, Stream::Logging);
        let mut p = 0;
        while p + 1 < order.len() {
            if self.item(order[p]).group == Group::Subgroup
                && rng.random::<f64>() < self.config.legacy_exposure_bias
            {
                order.swap(p, p + 1);
                p += 2;
            } else {
                p += 1;
            }
        }
        order
    }

    fn simulate_query(&self, query_id: u64, policy: LoggingPolicy<'_>) -> Vec<Interaction> {
        let query = self.query(query_id);
        let candidates = self.retrieve(&query);
        let order = match policy {
            LoggingPolicy::Legacy => self.legacy_ranking(&query, &candidates),
            LoggingPolicy::Model(params) => {
                let items: Vec<&Item> = candidates.iter().map(|&j| self.item(j)).collect();
                ranker::rank(params, &query, &items, self.config.seed)
                    .expect("validated dimensions")
                    .order
            }
        };
        let mut rng = rng::stream(self.config.seed, query_id, Stream::Clicks);
        let mut clicked_any = false;
        order
            .into_iter()
            .take(self.config.slate_size)
            .enumerate()
            .map(|(slot, item_id)| {
                let mut clicked = false;
                let mut engagement = 0.0;
                if !clicked_any && rng.random::<f64>() < self.click_probability(&query, item_id, slot) {
                    clicked = true;
                    clicked_any = true;
                    engagement = self.engagement(&query, item_id, &mut rng);
                }
                Interaction {
                    query: query.clone(),
                    item_id,
                    clicked,
                    engagement,
                }
            })
            .collect()
    }

    fn pair_trial(&self, query_id: u64) -> Option<PairObservation> {
        let query = self.query(query_id);
        let candidates = self.retrieve(&query);
        let mut draw = rng::stream(self.config.seed, query_id, Stream::PairDraw);
        let picked = index::sample(&mut draw, candidates.len(), 2);
        let (item_a, item_b) = (candidates[picked.index(0)], candidates[picked.index(1)]);
        let slate_order = if draw.random::<bool>() { Side::A } else { Side::B };
        let shown = [slate_order, slate_order.flip()];

        let mut rng = rng::stream(self.config.seed, query_id, Stream::Clicks);
        let pick = |side: Side| if side == Side::A { item_a } else { item_b };
        for (side, slot) in shown.into_iter().zip(PAIR_SLOTS) {
            let item_id = pick(side);
            if rng.random::<f64>() < self.click_probability(&query, item_id, slot) {
                let engagement = self.engagement(&query, item_id, &mut rng);
                return Some(PairObservation {
                    group_a: self.item(item_a).group,
                    group_b: self.item(item_b).group,
                    query,
                    item_a,
                    item_b,
                    clicked: side,
                    engagement,
                    slate_order,
                });
            }
        }
        None
    }
}

/// Logs the top `slate_size` slots of `n_queries` queries ranked by `policy`.
pub fn simulate_log(env: &Environment, n_queries: usize, policy: LoggingPolicy<'_>) -> InteractionLog {
    let records: Vec<Vec<Interaction>> = (0..n_queries as u64)
        .into_par_iter()
        .map(|i| env.simulate_query(LOG_QUERY_BASE + i, policy))
        .collect();
    InteractionLog::new(records.into_iter().flatten().collect())
}

/// Runs the randomized pair experiment on `n_queries` queries and keeps the
/// trials where one member of the pair was clicked.
pub fn run_pair_experiment(env: &Environment, n_queries: usize) -> PairDataset {
    run_pair_experiment_traced(env, n_queries).0
}

pub fn run_pair_experiment_traced(env: &Environment, n_queries: usize) -> (PairDataset, PairTrace) {
    let trials: Vec<Option<PairObservation>> = (0..n_queries as u64)
        .into_par_iter()
        .map(|i| env.pair_trial(PAIR_QUERY_BASE + i))
        .collect();
    let trace = PairTrace {
        trials: trials.len(),
        clicked_trials: trials.iter().filter(|t| t.is_some()).count(),
    };
    (PairDataset::new(trials.into_iter().flatten().collect()), trace)
}

/// Ground-truth scorer: ranks by true click utility.
pub struct TrueUtility<'a>(pub &'a Environment);

impl ranker::Scorer for TrueUtility<'_> {
    fn score(&self, query: &Query, item: &Item) -> Result<f64> {
        Ok(self.0.utility(query, item.item_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvironmentConfig {
        EnvironmentConfig {
            n_users: 50,
            n_items: 10,
            subgroup_fraction: 0.5,
            retrieval_size: 6,
            slate_size: 4,
            ..EnvironmentConfig::default()
        }
    }

    #[test]
    fn exact_subgroup_count() {
        let env = generate_environment(&small()).unwrap();
        assert_eq!(env.items.iter().filter(|i| i.group == Group::Subgroup).count(), 5);
        let cfg = EnvironmentConfig::default();
        let default = generate_environment(&cfg).unwrap();
        let expected = (cfg.n_items as f64 * cfg.subgroup_fraction).round() as usize;
        assert_eq!(default.items.iter().filter(|i| i.group == Group::Subgroup).count(), expected);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_environment(&small()).unwrap();
        let b = generate_environment(&small()).unwrap();
        assert_eq!(a, b);
        let bits = |e: &Environment| -> Vec<u64> {
            e.item_latents.iter().flatten().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn config_errors_list_every_violation() {
        let cfg = EnvironmentConfig {
            subgroup_fraction: 1.5,
            slate_size: 30,
            legacy_exposure_bias: -0.1,
            ..EnvironmentConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 4, "{errs:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<EnvironmentConfig>(r#"{"n_items": 10, "bogus": 1}"#);
        assert!(err.is_err());
        let ok: EnvironmentConfig = serde_json::from_str(r#"{"n_items": 30}"#).unwrap();
        assert_eq!(ok.n_items, 30);
    }

    #[test]
    fn full_retrieval_is_the_catalog() {
        let cfg = EnvironmentConfig {
            retrieval_size: 10,
            ..small()
        };
        let env = generate_environment(&cfg).unwrap();
        let mut r = env.retrieve(&env.query(3));
        r.sort_unstable();
        assert_eq!(r, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn retrieval_is_deterministic_per_query() {
        let env = generate_environment(&small()).unwrap();
        assert_eq!(env.retrieve(&env.query(9)), env.retrieve(&env.query(9)));
        let top = Environment {
            config: EnvironmentConfig {
                retrieval_mode: RetrievalMode::UtilityTop,
                ..small()
            },
            ..env.clone()
        };
        let q = top.query(2);
        let r = top.retrieve(&q);
        let worst_kept = r.iter().map(|&j| top.utility(&q, j)).fold(f64::INFINITY, f64::min);
        let best_dropped = (0..10u64)
            .filter(|j| !r.contains(j))
            .map(|j| top.utility(&q, j))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(worst_kept >= best_dropped);
    }

    #[test]
    fn uniform_retrieval_is_group_neutral() {
        let env = generate_environment(&EnvironmentConfig::default()).unwrap();
        let (mut sub, mut total) = (0usize, 0usize);
        for q in 0..10_000 {
            for j in env.retrieve(&env.query(EVAL_QUERY_BASE + q)) {
                total += 1;
                sub += usize::from(env.item(j).group == Group::Subgroup);
            }
        }
        let share = sub as f64 / total as f64;
        assert!((share - 0.1).abs() < 0.01, "subgroup share {share}");
    }

    #[test]
    fn zero_position_bias_means_no_clicks() {
        let cfg = EnvironmentConfig {
            position_bias: vec![0.0; 10],
            ..EnvironmentConfig::default()
        };
        let env = generate_environment(&cfg).unwrap();
        let log = simulate_log(&env, 500, LoggingPolicy::Legacy);
        assert_eq!(log.len(), 500 * cfg.slate_size);
        assert_eq!(log.click_count(), 0);
    }

    #[test]
    fn empty_runs() {
        let env = generate_environment(&small()).unwrap();
        assert!(simulate_log(&env, 0, LoggingPolicy::Legacy).is_empty());
        assert!(run_pair_experiment(&env, 0).is_empty());
    }

    #[test]
    fn logs_respect_invariants() {
        let env = generate_environment(&EnvironmentConfig::default()).unwrap();
        let log = simulate_log(&env, 2000, LoggingPolicy::Legacy);
        log.validate().unwrap();
        for slate in log.records.chunks(env.config.slate_size) {
            assert!(slate.iter().filter(|r| r.clicked).count() <= 1);
        }
        let pairs = run_pair_experiment(&env, 2000);
        pairs.validate().unwrap();
        assert!(pairs.records.iter().all(|p| p.engagement > 0.0));
    }

    #[test]
    fn legacy_demotion_depresses_subgroup_ctr() {
        let ctr = |bias: f64| {
            let cfg = EnvironmentConfig {
                legacy_exposure_bias: bias,
                ..EnvironmentConfig::default()
            };
            let env = generate_environment(&cfg).unwrap();
            let log = simulate_log(&env, 20_000, LoggingPolicy::Legacy);
            let sub: Vec<_> = log
                .records
                .iter()
                .filter(|r| env.item(r.item_id).group == Group::Subgroup)
                .collect();
            sub.iter().filter(|r| r.clicked).count() as f64 / sub.len() as f64
        };
        let (fair, biased) = (ctr(0.0), ctr(0.8));
        assert!(biased < fair, "biased {biased} vs unbiased {fair}");
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let env = generate_environment(&EnvironmentConfig::default()).unwrap();
        let parallel = run_pair_experiment(&env, 3000);
        let serial: Vec<PairObservation> =
            (0..3000).filter_map(|i| env.pair_trial(PAIR_QUERY_BASE + i)).collect();
        assert_eq!(parallel.records, serial);
    }

    #[test]
    fn trace_counts_clicked_trials() {
        let env = generate_environment(&EnvironmentConfig::default()).unwrap();
        let (pairs, trace) = run_pair_experiment_traced(&env, 5000);
        assert_eq!(trace.trials, 5000);
        assert_eq!(pairs.len(), trace.clicked_trials);
        assert!(pairs.len() <= 5000);
    }
}
