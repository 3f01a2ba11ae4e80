//! File-based experiment stages behind the command-line tool.
//!
//! Every stage reads its inputs from and writes its outputs to one output
//! directory, and records a manifest listing the effective configuration,
//! seeds, and SHA-256 digests of every input and output file. Artifacts
//! carry no timestamps, so identical configurations reproduce identical
//! bytes.
//!
//! | stage              | reads                                  | writes |
//! |--------------------|----------------------------------------|--------|
//! | `gen-env`          |                                        | `environment.json` |
//! | `simulate-log`     | `environment.json`                     | `log.tsv` |
//! | `pair-experiment`  | `environment.json`                     | `pairs_train.tsv`, `pairs_eval.tsv`, `pairs_split.json` |
//! | `train`            | `environment.json`, `log.tsv`, pairs   | `model_lambda-<λ>.ckpt`, `trajectory_lambda-<λ>.csv` |
//! | `evaluate`         | environment, model, `pairs_eval.tsv`   | `report_lambda-<λ>.{csv,json}`, `plot_*` |
//! | `reproduce-lemmas` |                                        | `lemmas.txt`, `lemmas.json` |

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bucket::BucketScheme;
use crate::dataset::{load_dataset, save_dataset};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport, PairType};
use crate::ranker::{self, ModelParams, Scorer, TrainConfig};
use crate::rng::{self, Stream};
use crate::simgym::{self, Environment, EnvironmentConfig, LoggingPolicy};
use crate::types::{InteractionLog, PairDataset};

pub const ENVIRONMENT_FILE: &str = "environment.json";
pub const LOG_FILE: &str = "log.tsv";
pub const PAIRS_TRAIN_FILE: &str = "pairs_train.tsv";
pub const PAIRS_EVAL_FILE: &str = "pairs_eval.tsv";
pub const SPLIT_FILE: &str = "pairs_split.json";

/// Regularization weight of the reference regularized run.
pub const REGULARIZED_LAMBDA: f64 = 1.25;

// ── Configuration ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Queries logged by the legacy policy for training.
    pub n_log_queries: usize,
    /// Trials of the randomized pair experiment.
    pub n_pair_queries: usize,
    /// Engagement buckets, with edges at quantiles of the regularization
    /// half's engagement.
    pub buckets: usize,
    pub bootstrap_resamples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            n_log_queries: 20_000,
            n_pair_queries: 4_000_000,
            buckets: crate::bucket::DEFAULT_BUCKETS,
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub output_dir: Option<PathBuf>,
    /// When set, replaces the environment and training seeds and keys the
    /// pair split and bootstrap.
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Parses a JSON config. Any failure, including a missing file, is a
    /// configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for r in [self.environment.validate(), self.training.validate()] {
            match r {
                Err(Error::Config(e)) => errs.extend(e),
                Err(e) => errs.push(e.to_string()),
                Ok(()) => {}
            }
        }
        if self.evaluation.buckets == 0 {
            errs.push("evaluation.buckets must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, lambda: Option<f64>) -> Result<Self> {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.environment.seed = s;
            self.training.seed = s;
        }
        if let Some(l) = lambda {
            self.training.lambda = l;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn experiment_seed(&self) -> u64 {
        self.seed.unwrap_or(self.environment.seed)
    }
}

// ── Manifest ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when the file lives under it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub config: ExperimentConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(out: &Path, path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let shown = path.strip_prefix(out).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// What a stage produced. `check_passed` is false only when a stage that
/// verifies an expected outcome saw a deviation.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub manifest: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub check_passed: bool,
}

struct Stage<'a> {
    name: String,
    out: &'a Path,
    cfg: &'a ExperimentConfig,
    lambda: Option<f64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Stage<'a> {
    fn new(name: impl Into<String>, out: &'a Path, cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Stage {
            name: name.into(),
            out,
            cfg,
            lambda: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, file: impl AsRef<Path>) -> PathBuf {
        let p = self.out.join(file);
        self.inputs.push(p.clone());
        p
    }

    fn external_input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn write(&mut self, file: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.out.join(file);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        self.outputs.push(p.clone());
        Ok(p)
    }

    fn written(&mut self, file: &str) -> PathBuf {
        let p = self.out.join(file);
        self.outputs.push(p.clone());
        p
    }

    fn finish(self, check_passed: bool) -> Result<StageOutcome> {
        let manifest = Manifest {
            command: self.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.experiment_seed(),
            lambda: self.lambda,
            config: ExperimentConfig {
                output_dir: None,
                ..self.cfg.clone()
            },
            inputs: self.inputs.iter().map(|p| digest(self.out, p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(self.out, p)).collect::<Result<_>>()?,
        };
        let path = self.out.join(format!("manifest_{}.json", self.name));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(StageOutcome {
            manifest: path,
            outputs: self.outputs,
            check_passed,
        })
    }
}

/// File-name tag for a regularization weight, e.g. `lambda-0.5`.
pub fn lambda_tag(lambda: f64) -> String {
    format!("lambda-{lambda}")
}

pub fn model_file(lambda: f64) -> String {
    format!("model_{}.ckpt", lambda_tag(lambda))
}

// ── Shared helpers ──

pub fn load_environment(path: &Path) -> Result<Environment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Environment = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    env.config.validate()?;
    Ok(env)
}

/// Splits pairs into a regularization half and an evaluation half by a
/// seeded shuffle. Each half keeps the original record order.
pub fn split_pairs(pairs: &PairDataset, seed: u64) -> (PairDataset, PairDataset) {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut rng::stream(seed, 0, Stream::Split));
    let half = pairs.len() / 2;
    let mut in_train = vec![false; pairs.len()];
    idx[..half].iter().for_each(|&i| in_train[i] = true);
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (r, &t) in pairs.records.iter().zip(&in_train) {
        if t {
            train.push(r.clone());
        } else {
            eval.push(r.clone());
        }
    }
    (PairDataset::new(train), PairDataset::new(eval))
}

/// Quantile bucket edges over the clicked engagement of `pairs`, or a
/// single bucket when there is nothing to estimate from.
pub fn bucket_scheme(pairs: &PairDataset, buckets: usize) -> Result<BucketScheme> {
    if pairs.is_empty() || buckets <= 1 {
        return Ok(BucketScheme::single());
    }
    BucketScheme::from_quantiles(pairs.records.iter().map(|r| r.engagement), buckets)
}

/// Scores `pairs` and builds the full metrics report.
pub fn evaluate_scorer<S: Scorer + Sync + ?Sized>(
    scorer: &S,
    env: &Environment,
    pairs: &PairDataset,
    scheme: &BucketScheme,
    resamples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let outcomes = metrics::score_pairs(pairs, scorer, &env.items, scheme)?;
    MetricsReport::build(&outcomes, scheme.len(), resamples, seed)
}

/// A prepared experiment held in memory: environment, legacy log, the two
/// pair halves and the bucket scheme.
pub struct Experiment {
    pub env: Environment,
    pub log: InteractionLog,
    pub train_pairs: PairDataset,
    pub eval_pairs: PairDataset,
    pub scheme: BucketScheme,
}

impl Experiment {
    /// Runs the same simulation steps as the file-based stages.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let env = simgym::generate_environment(&cfg.environment)?;
        let log = simgym::simulate_log(&env, cfg.evaluation.n_log_queries, LoggingPolicy::Legacy);
        let pairs = simgym::run_pair_experiment(&env, cfg.evaluation.n_pair_queries);
        let (train_pairs, eval_pairs) = split_pairs(&pairs, cfg.experiment_seed());
        let scheme = bucket_scheme(&train_pairs, cfg.evaluation.buckets)?;
        Ok(Experiment {
            env,
            log,
            train_pairs,
            eval_pairs,
            scheme,
        })
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<ranker::TrainOutcome> {
        let init = ModelParams::init(self.env.config.input_dim(), cfg.hidden, cfg.seed);
        let pairs = (!self.train_pairs.is_empty()).then_some(&self.train_pairs);
        ranker::train(init, &self.log, pairs, &self.env.items, cfg)
    }

    /// Outcome counts of `scorer` on the evaluation half.
    pub fn tally<S: Scorer + Sync + ?Sized>(&self, scorer: &S) -> Result<metrics::Tally> {
        let outcomes = metrics::score_pairs(&self.eval_pairs, scorer, &self.env.items, &self.scheme)?;
        Ok(metrics::Tally::from_outcomes(self.scheme.len(), &outcomes))
    }
}

// ── Stages ──

pub fn cmd_gen_env(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    let mut stage = Stage::new("gen-env", out, cfg)?;
    let env = simgym::generate_environment(&cfg.environment)?;
    stage.write(ENVIRONMENT_FILE, serde_json::to_string(&env)? + "\n")?;
    stage.finish(true)
}

pub fn cmd_simulate_log(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    let mut stage = Stage::new("simulate-log", out, cfg)?;
    let env = load_environment(&stage.input(ENVIRONMENT_FILE))?;
    let log = simgym::simulate_log(&env, cfg.evaluation.n_log_queries, LoggingPolicy::Legacy);
    save_dataset(&log, stage.written(LOG_FILE))?;
    stage.finish(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub trials: usize,
    pub clicked_trials: usize,
    pub train_records: usize,
    pub eval_records: usize,
}

pub fn cmd_pair_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    let mut stage = Stage::new("pair-experiment", out, cfg)?;
    let env = load_environment(&stage.input(ENVIRONMENT_FILE))?;
    let (pairs, trace) = simgym::run_pair_experiment_traced(&env, cfg.evaluation.n_pair_queries);
    let split_seed = cfg.experiment_seed();
    let (train, eval) = split_pairs(&pairs, split_seed);
    save_dataset(&train, stage.written(PAIRS_TRAIN_FILE))?;
    save_dataset(&eval, stage.written(PAIRS_EVAL_FILE))?;
    let split = SplitRecord {
        seed: split_seed,
        trials: trace.trials,
        clicked_trials: trace.clicked_trials,
        train_records: train.len(),
        eval_records: eval.len(),
    };
    stage.write(SPLIT_FILE, serde_json::to_string_pretty(&split)? + "\n")?;
    stage.finish(true)
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    let lambda = cfg.training.lambda;
    let mut stage = Stage::new(format!("train_{}", lambda_tag(lambda)), out, cfg)?;
    stage.lambda = Some(lambda);
    let env = load_environment(&stage.input(ENVIRONMENT_FILE))?;
    let log: InteractionLog = load_dataset(stage.input(LOG_FILE))?;
    let pairs_path = out.join(PAIRS_TRAIN_FILE);
    let pairs: Option<PairDataset> = if pairs_path.exists() {
        Some(load_dataset(stage.input(PAIRS_TRAIN_FILE))?)
    } else if lambda > 0.0 {
        return Err(Error::io(
            &pairs_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "lambda > 0 needs the pair experiment's training half"),
        ));
    } else {
        None
    };
    let init = ModelParams::init(env.config.input_dim(), cfg.training.hidden, cfg.training.seed);
    let outcome = ranker::train(init, &log, pairs.as_ref(), &env.items, &cfg.training)?;
    stage.write(&model_file(lambda), outcome.params.to_checkpoint())?;
    stage.write(&format!("trajectory_{}.csv", lambda_tag(lambda)), outcome.trajectory_csv())?;
    stage.finish(true)
}

/// Options of the evaluate stage beyond the shared config.
#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Checkpoint path; defaults to the model trained with the config's λ.
    pub model: Option<PathBuf>,
    /// Evaluation pairs; defaults to the evaluation half.
    pub pairs: Option<PathBuf>,
    /// Permit evaluation pairs that share queries with the training half.
    pub allow_overlap: bool,
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path, opts: &EvaluateOptions) -> Result<StageOutcome> {
    let lambda = cfg.training.lambda;
    let tag = lambda_tag(lambda);
    let mut stage = Stage::new(format!("evaluate_{tag}"), out, cfg)?;
    stage.lambda = Some(lambda);
    let env = load_environment(&stage.input(ENVIRONMENT_FILE))?;
    let model_path = match &opts.model {
        Some(p) => stage.external_input(p),
        None => stage.input(model_file(lambda)),
    };
    let params = ModelParams::load(&model_path)?;
    if params.input_dim() != env.config.input_dim() {
        return Err(Error::Schema {
            path: model_path,
            message: format!(
                "model expects {} input features, environment provides {}",
                params.input_dim(),
                env.config.input_dim()
            ),
        });
    }
    let eval_path = match &opts.pairs {
        Some(p) => stage.external_input(p),
        None => stage.input(PAIRS_EVAL_FILE),
    };
    let eval: PairDataset = load_dataset(&eval_path)?;
    let train_path = out.join(PAIRS_TRAIN_FILE);
    let train: PairDataset = if train_path.exists() {
        load_dataset(stage.input(PAIRS_TRAIN_FILE))?
    } else {
        PairDataset::default()
    };
    if !opts.allow_overlap {
        let seen: std::collections::HashSet<u64> = train.records.iter().map(|r| r.query.query_id).collect();
        let shared = eval.records.iter().filter(|r| seen.contains(&r.query.query_id)).count();
        if shared > 0 {
            return Err(Error::invalid(format!(
                "{shared} evaluation pairs share queries with the training half; pass --allow-overlap to evaluate anyway"
            )));
        }
    }
    let scheme = bucket_scheme(&train, cfg.evaluation.buckets)?;
    let report = evaluate_scorer(
        &params,
        &env,
        &eval,
        &scheme,
        cfg.evaluation.bootstrap_resamples,
        cfg.experiment_seed(),
    )?;
    stage.write(&format!("report_{tag}.csv"), report.to_csv())?;
    stage.write(&format!("report_{tag}.json"), report.to_json()?)?;
    for t in PairType::ALL {
        stage.write(&format!("plot_accuracy_{t}_{tag}.csv"), report.accuracy_plot_csv(t))?;
    }
    stage.write(&format!("plot_exposure_{tag}.csv"), report.exposure_plot_csv())?;
    stage.finish(true)
}

pub fn cmd_reproduce_lemmas(cfg: &ExperimentConfig, out: &Path) -> Result<StageOutcome> {
    let mut stage = Stage::new("reproduce-lemmas", out, cfg)?;
    let report = metrics::lemma_counterexamples();
    stage.write("lemmas.txt", report.verdict_text())?;
    stage.write("lemmas.json", serde_json::to_string_pretty(&report)? + "\n")?;
    stage.finish(report.passed())
}
