//! Calibration curves and squared error of click predictions, per group.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ranker::ModelParams;
use crate::types::{Group, InteractionLog, Item};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPrediction {
    pub group: Group,
    pub prediction: f64,
    pub label: f64,
}

impl LabeledPrediction {
    /// Click predictions of `params` on every logged impression.
    pub fn from_model(params: &ModelParams, log: &InteractionLog, catalog: &[Item]) -> Result<Vec<Self>> {
        log.records
            .iter()
            .map(|r| {
                let item = catalog
                    .get(r.item_id as usize)
                    .ok_or_else(|| Error::invalid(format!("item {} is not in the catalog", r.item_id)))?;
                Ok(LabeledPrediction {
                    group: item.group,
                    prediction: params.predict(&r.query, item)?.0,
                    label: r.label(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub mean_prediction: f64,
    pub mean_label: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCalibration {
    pub group: Group,
    pub count: u64,
    /// `None` for a group with no predictions.
    pub mse: Option<f64>,
    /// Equal-width bins over `[0, 1]`; `None` where a bin is empty.
    pub bins: Vec<Option<CalibrationBin>>,
}

impl GroupCalibration {
    /// Largest `|E[y | bin] − mean prediction in bin|` over nonempty bins.
    pub fn max_calibration_error(&self) -> f64 {
        self.bins
            .iter()
            .flatten()
            .map(|b| (b.mean_label - b.mean_prediction).abs())
            .fold(0.0, f64::max)
    }
}

fn bin_of(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

pub fn calibration_and_mse(data: &[LabeledPrediction], bins: usize) -> Result<[GroupCalibration; 2]> {
    if data.is_empty() {
        return Err(Error::invalid("calibration needs at least one prediction"));
    }
    if bins == 0 {
        return Err(Error::invalid("calibration needs at least one bin"));
    }
    if let Some(bad) = data.iter().find(|d| !(0.0..=1.0).contains(&d.prediction)) {
        return Err(Error::invalid(format!("prediction {} outside [0, 1]", bad.prediction)));
    }
    Ok(Group::BOTH.map(|group| {
        let mut sums = vec![(0.0, 0.0, 0u64); bins];
        let mut sq = 0.0;
        let mut n = 0u64;
        for d in data.iter().filter(|d| d.group == group) {
            let cell = &mut sums[bin_of(d.prediction, bins)];
            cell.0 += d.prediction;
            cell.1 += d.label;
            cell.2 += 1;
            sq += (d.prediction - d.label).powi(2);
            n += 1;
        }
        GroupCalibration {
            group,
            count: n,
            mse: (n > 0).then(|| sq / n as f64),
            bins: sums
                .into_iter()
                .map(|(p, y, c)| {
                    (c > 0).then(|| CalibrationBin {
                        mean_prediction: p / c as f64,
                        mean_label: y / c as f64,
                        count: c,
                    })
                })
                .collect(),
        }
    }))
}
