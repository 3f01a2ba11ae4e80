//! Engagement levels.
//!
//! Engagement is stored raw and only discretized when metrics or the
//! regularizer condition on it. A scheme with edges `e_0 < e_1 < ... < e_{B-2}`
//! defines `B` left-closed intervals `[-inf, e_0), [e_0, e_1), ..., [e_{B-2}, inf)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScheme {
    edges: Vec<f64>,
}

impl BucketScheme {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if let Some(bad) = edges.iter().find(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("bucket edge {bad} is not finite")));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "bucket edges must be strictly ascending, got {edges:?}"
            )));
        }
        Ok(BucketScheme { edges })
    }

    /// A single bucket covering every engagement value.
    pub fn single() -> Self {
        BucketScheme { edges: Vec::new() }
    }

    /// Edges at the `1/B, 2/B, ...` empirical quantiles of the strictly
    /// positive engagement values. Duplicate quantiles collapse, so the
    /// result can have fewer than `n_buckets` buckets on degenerate data.
    pub fn from_quantiles(values: impl IntoIterator<Item = f64>, n_buckets: usize) -> Result<Self> {
        if n_buckets == 0 {
            return Err(Error::invalid("bucket count must be at least 1"));
        }
        let mut positive: Vec<f64> = values.into_iter().filter(|z| *z > 0.0 && z.is_finite()).collect();
        if positive.is_empty() || n_buckets == 1 {
            return Ok(BucketScheme::single());
        }
        positive.sort_by(f64::total_cmp);
        let n = positive.len();
        let mut edges: Vec<f64> = Vec::with_capacity(n_buckets - 1);
        for k in 1..n_buckets {
            let idx = (k * n / n_buckets).min(n - 1);
            let edge = positive[idx];
            if edges.last().is_none_or(|last| edge > *last) {
                edges.push(edge);
            }
        }
        BucketScheme::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bucketize(&self, z: f64) -> Result<usize> {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::invalid(format!(
                "engagement must be finite and nonnegative, got {z}"
            )));
        }
        Ok(self.edges.partition_point(|e| *e <= z))
    }
}
