//! Tabular metric reports with bootstrap percentile intervals.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PairOutcome, PairType, Tally};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::types::Group;

pub const REPORT_VERSION: u32 = 1;

const CSV_HEADER: &str = "metric,group,bucket,pair_type,value,count,ci_low,ci_high";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub group: Option<Group>,
    pub bucket: Option<usize>,
    pub pair_type: Option<PairType>,
    pub value: f64,
    pub count: u64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub buckets: usize,
    pub pairs: u64,
    pub resamples: usize,
    pub rows: Vec<ReportRow>,
}

// ── Metric enumeration ──

#[derive(Debug, Clone, Copy)]
enum Key {
    Accuracy(Group, usize, PairType),
    BucketAverage(Group, PairType),
    GapRatio(PairType),
    Exposure(Group, usize),
    BaseCtr(Group, usize),
    Decomposition,
}

impl Key {
    fn all(buckets: usize) -> Vec<Key> {
        let mut keys = Vec::new();
        for t in PairType::ALL {
            for g in Group::BOTH {
                for b in 0..buckets {
                    keys.push(Key::Accuracy(g, b, t));
                }
                keys.push(Key::BucketAverage(g, t));
            }
            keys.push(Key::GapRatio(t));
        }
        for g in Group::BOTH {
            for b in 0..buckets {
                keys.push(Key::Exposure(g, b));
                keys.push(Key::BaseCtr(g, b));
            }
        }
        keys.push(Key::Decomposition);
        keys
    }

    fn eval(self, t: &Tally) -> Option<f64> {
        match self {
            Key::Accuracy(g, b, p) => t.accuracy(g, b, p),
            Key::BucketAverage(g, p) => t.bucket_average(g, p),
            Key::GapRatio(p) => t.gap_ratio(p),
            Key::Exposure(g, b) => t.exposure(g, b),
            Key::BaseCtr(g, b) => t.base_ctr(g, b),
            Key::Decomposition => Some(t.decomposition_violation()),
        }
    }

    fn count(self, t: &Tally) -> u64 {
        match self {
            Key::Accuracy(g, b, p) => t.count(g, b, p),
            Key::BucketAverage(g, p) => (0..t.buckets()).map(|b| t.count(g, b, p)).sum(),
            Key::GapRatio(p) => Group::BOTH
                .iter()
                .flat_map(|&g| (0..t.buckets()).map(move |b| (g, b)))
                .map(|(g, b)| t.count(g, b, p))
                .sum(),
            Key::Exposure(_, b) | Key::BaseCtr(_, b) => t.inter_count(b),
            Key::Decomposition => (0..t.buckets())
                .map(|b| Group::BOTH.iter().map(|&g| t.count(g, b, PairType::Any)).sum::<u64>())
                .sum(),
        }
    }

    fn row(self, value: f64, count: u64, ci: Option<(f64, f64)>) -> ReportRow {
        let (metric, group, bucket, pair_type) = match self {
            Key::Accuracy(g, b, p) => ("accuracy", Some(g), Some(b), Some(p)),
            Key::BucketAverage(g, p) => ("bucket_avg_accuracy", Some(g), None, Some(p)),
            Key::GapRatio(p) => ("gap_ratio", None, None, Some(p)),
            Key::Exposure(g, b) => ("exposure", Some(g), Some(b), Some(PairType::Inter)),
            Key::BaseCtr(g, b) => ("base_ctr", Some(g), Some(b), Some(PairType::Inter)),
            Key::Decomposition => ("decomposition_violation", None, None, None),
        };
        ReportRow {
            metric: metric.to_string(),
            group,
            bucket,
            pair_type,
            value,
            count,
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl MetricsReport {
    /// Tallies `outcomes` and attaches 95% percentile intervals from
    /// `resamples` bootstrap draws over pairs. Cells without data are left
    /// out.
    pub fn build(outcomes: &[PairOutcome], buckets: usize, resamples: usize, seed: u64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::invalid("a metrics report needs at least one evaluation pair"));
        }
        let keys = Key::all(buckets);
        let full = Tally::from_outcomes(buckets, outcomes);
        let n = outcomes.len();
        let draws: Vec<Vec<Option<f64>>> = (0..resamples as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::stream(seed, r, Stream::Bootstrap);
                let mut t = Tally::new(buckets);
                for _ in 0..n {
                    t.add(&outcomes[rng.random_range(0..n)]);
                }
                keys.iter().map(|k| k.eval(&t)).collect()
            })
            .collect();
        let rows = keys
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| {
                let value = k.eval(&full)?;
                let mut samples: Vec<f64> = draws.iter().filter_map(|d| d[i]).collect();
                samples.sort_by(f64::total_cmp);
                let ci = (!samples.is_empty()).then(|| (percentile(&samples, 0.025), percentile(&samples, 0.975)));
                Some(k.row(value, k.count(&full), ci))
            })
            .collect();
        Ok(MetricsReport {
            version: REPORT_VERSION,
            buckets,
            pairs: n as u64,
            resamples,
            rows,
        })
    }

    pub fn find(&self, metric: &str, group: Option<Group>, bucket: Option<usize>, pair_type: Option<PairType>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.metric == metric && r.group == group && r.bucket == bucket && (pair_type.is_none() || r.pair_type == pair_type)
        })
    }

    pub fn value(&self, metric: &str, group: Option<Group>, bucket: Option<usize>, pair_type: Option<PairType>) -> Option<f64> {
        self.find(metric, group, bucket, pair_type).map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        csv(self.rows.iter())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: MetricsReport = serde_json::from_str(text)?;
        if report.version != REPORT_VERSION {
            return Err(Error::invalid(format!(
                "report version {} is not supported (expected {REPORT_VERSION})",
                report.version
            )));
        }
        Ok(report)
    }

    /// Per-bucket accuracy rows of one pair type.
    pub fn accuracy_plot_csv(&self, pair_type: PairType) -> String {
        csv(self
            .rows
            .iter()
            .filter(|r| r.metric == "accuracy" && r.pair_type == Some(pair_type)))
    }

    /// Exposure and base CTR rows by bucket.
    pub fn exposure_plot_csv(&self) -> String {
        csv(self.rows.iter().filter(|r| r.metric == "exposure" || r.metric == "base_ctr"))
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv<'a>(rows: impl Iterator<Item = &'a ReportRow>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.metric,
            opt(r.group),
            opt(r.bucket),
            opt(r.pair_type),
            r.value,
            r.count,
            opt(r.ci_low),
            opt(r.ci_high)
        );
    }
    out
}
