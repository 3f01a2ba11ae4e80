//! Constructions showing that per-group calibration and equal per-group MSE
//! both leave inter-group pairwise accuracy maximally unequal.
//!
//! Each instance is one query whose catalog holds `ITEMS_PER_GROUP` items per
//! group with click rates `ȳ_0` and `ȳ_1`. The predictor scores every item
//! with its group's click rate, and the evaluation pairs are every clicked
//! item against every unclicked one.

use serde::Serialize;

use super::{pairwise_accuracy, pointwise::LabeledPrediction, PairType};
use crate::bucket::BucketScheme;
use crate::error::Result;
use crate::ranker::FnScorer;
use crate::types::{Group, Item, PairDataset, PairObservation, Query, Side};

const ITEMS_PER_GROUP: usize = 10;
const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaKind {
    /// Calibrated per group, yet unfair.
    Calibration,
    /// Equal MSE per group, yet unfair.
    EqualMse,
    /// Equal click rates; fairness holds.
    Control,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaInstance {
    pub kind: LemmaKind,
    /// Click rate per group, indexed by group.
    pub means: [f64; 2],
    pub mse: [f64; 2],
    pub calibration_error: [f64; 2],
    pub inter_accuracy: [f64; 2],
    pub intra_accuracy: [f64; 2],
    pub fairness_holds: bool,
    /// Whether the measurements match what the construction must produce.
    pub as_expected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub instances: Vec<LemmaInstance>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.instances.iter().all(|i| i.as_expected)
    }

    pub fn verdict_text(&self) -> String {
        let mut out = String::new();
        for i in &self.instances {
            out.push_str(&format!(
                "{:?}: means ({}, {})\n  mse ({}, {})\n  calibration error ({:e}, {:e})\n  inter-group accuracy ({}, {})\n  intra-group accuracy ({}, {})\n  fairness {}\n  {}\n",
                i.kind,
                i.means[0],
                i.means[1],
                i.mse[0],
                i.mse[1],
                i.calibration_error[0],
                i.calibration_error[1],
                i.inter_accuracy[0],
                i.inter_accuracy[1],
                i.intra_accuracy[0],
                i.intra_accuracy[1],
                if i.fairness_holds { "holds" } else { "violated" },
                if i.as_expected { "as expected" } else { "DEVIATION" },
            ));
        }
        out.push_str(if self.passed() { "verdict: pass\n" } else { "verdict: FAIL\n" });
        out
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE
}

fn instance(kind: LemmaKind, means: [f64; 2]) -> Result<LemmaInstance> {
    let mut catalog = Vec::new();
    let mut clicked = Vec::new();
    for g in Group::BOTH {
        let clicks = (means[g.index()] * ITEMS_PER_GROUP as f64).round() as usize;
        for k in 0..ITEMS_PER_GROUP {
            let id = catalog.len() as u64;
            catalog.push(Item {
                item_id: id,
                features: vec![],
                group: g,
            });
            clicked.push(k < clicks);
        }
    }
    let query = Query {
        query_id: 0,
        user_features: vec![],
        context_features: vec![],
    };
    let mut records = Vec::new();
    for c in catalog.iter().filter(|i| clicked[i.item_id as usize]) {
        for u in catalog.iter().filter(|i| !clicked[i.item_id as usize]) {
            records.push(PairObservation {
                query: query.clone(),
                item_a: c.item_id,
                item_b: u.item_id,
                clicked: Side::A,
                engagement: 1.0,
                group_a: c.group,
                group_b: u.group,
                slate_order: Side::A,
            });
        }
    }
    let scorer = FnScorer(move |_: &Query, i: &Item| means[i.group.index()]);
    let table = pairwise_accuracy(&PairDataset::new(records), &scorer, &catalog, &BucketScheme::single())?;
    let acc = |g: Group, t: PairType| table.get(g, 0, t).map_or(f64::NAN, |c| c.accuracy);

    let preds: Vec<LabeledPrediction> = catalog
        .iter()
        .map(|i| LabeledPrediction {
            group: i.group,
            prediction: means[i.group.index()],
            label: if clicked[i.item_id as usize] { 1.0 } else { 0.0 },
        })
        .collect();
    let cal = super::calibration_and_mse(&preds, 10)?;

    let inter = Group::BOTH.map(|g| acc(g, PairType::Inter));
    let intra = Group::BOTH.map(|g| acc(g, PairType::Intra));
    let mse = [0, 1].map(|g| cal[g].mse.unwrap_or(f64::NAN));
    let calibration_error = [0, 1].map(|g| cal[g].max_calibration_error());
    let fairness_holds = close(inter[0], inter[1]);
    let calibrated = calibration_error.iter().all(|&e| e <= TOLERANCE);
    let ties_half = intra.iter().all(|&a| close(a, 0.5));
    let (hi, lo) = if means[0] >= means[1] { (0, 1) } else { (1, 0) };
    let as_expected = match kind {
        LemmaKind::Calibration => calibrated && close(inter[hi], 1.0) && close(inter[lo], 0.0) && ties_half,
        LemmaKind::EqualMse => {
            let closed_form = means.map(|m| m - m * m);
            close(mse[0], mse[1])
                && close(mse[0], closed_form[0])
                && close(mse[1], closed_form[1])
                && close(inter[hi], 1.0)
                && close(inter[lo], 0.0)
                && ties_half
        }
        LemmaKind::Control => calibrated && fairness_holds && inter.iter().all(|&a| close(a, 0.5)),
    };
    Ok(LemmaInstance {
        kind,
        means,
        mse,
        calibration_error,
        inter_accuracy: inter,
        intra_accuracy: intra,
        fairness_holds,
        as_expected,
    })
}

/// Builds and measures the calibration, equal-MSE and control instances.
pub fn lemma_counterexamples() -> LemmaReport {
    let specs = [
        (LemmaKind::Calibration, [0.6, 0.2]),
        (LemmaKind::EqualMse, [0.7, 0.3]),
        (LemmaKind::Control, [0.5, 0.5]),
    ];
    LemmaReport {
        instances: specs
            .into_iter()
            .map(|(k, m)| instance(k, m).expect("self-contained construction"))
            .collect(),
    }
}
