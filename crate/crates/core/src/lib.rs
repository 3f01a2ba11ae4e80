//! Pairwise fairness laboratory for recommender rankings.
//!
//! The crate bundles four things that are usually scattered across a
//! production stack:
//!
//! - [`simgym`]: a synthetic recommendation environment with known
//!   ground-truth utilities, a legacy logging policy, and the randomized
//!   pair experiment (two random candidates shown in slots two and three
//!   in random order).
//! - [`ranker`]: a two-head pointwise scorer `f(q, v) -> (ŷ, ẑ)`, the
//!   monotone ranking score `g(ŷ, ẑ) = ŷ·(1 + ẑ)` and a plain gradient
//!   descent trainer.
//! - [`fairreg`]: the pairwise correlation regularizer `|Corr(A, B)|` over
//!   clicked-vs-unclicked pairs, with its analytic gradient.
//! - [`metrics`]: overall / intra-group / inter-group pairwise accuracy,
//!   exposure, base CTR, the counting identities that tie them to ranked
//!   positions, and executable counterexamples showing that calibration and
//!   equal MSE do not imply pairwise fairness.
//!
//! [`pipeline`] strings everything together into the file-based workflow
//! driven by the `fairranklab` binary. Runnable walkthroughs live in the
//! crate's `examples/` directory.

pub mod bucket;
pub mod dataset;
pub mod error;
pub mod fairreg;
pub mod metrics;
pub mod pipeline;
pub mod ranker;
pub mod rng;
pub mod simgym;
pub mod types;

pub use bucket::BucketScheme;
pub use error::{Error, Result};
pub use ranker::{ModelParams, Scorer, TrainConfig};
pub use simgym::{Environment, EnvironmentConfig};
pub use types::{ClickedSide, Group, Interaction, InteractionLog, Item, PairDataset, PairObservation, Query, Side};
