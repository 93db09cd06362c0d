//! Metrics and report assembly: RMSE overall, per class and per pair,
//! closed-loop rollouts with minimum time-to-collision, and compute metering.

mod metering;
mod profile;
mod report;
mod rollout;

use std::collections::BTreeMap;

pub use metering::{compute_metering, peak_rss_kb, Metering};
pub use profile::{speed_profile_export, SpeedSeries};
pub use report::{compute_csv, ComputeRow, EvalReport, ModelReport, PairRow, TtcSummary};
pub use rollout::{closed_loop_rollout, observed_min_ttc, Rollout, WARMUP_STEPS};

use crate::data::{NormalizationSpec, PairClass, Window};
use crate::distill::encode;
use crate::error::{Error, Result};
use crate::gipps::GippsPredictor;
use crate::nn::Weights;

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(targets.len(), predictions.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Data("rmse of an empty set".into()));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// A one-step follower speed predictor in m/s.
pub trait SpeedModel: Sync {
    fn name(&self) -> &str;

    fn predict(&self, windows: &[Window]) -> Result<Vec<f64>>;

    /// Multiply-adds per prediction, when the model has a fixed architecture.
    fn multiply_adds(&self) -> Option<u64> {
        None
    }
}

/// A trained network together with the normalization it was trained under.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub name: String,
    pub weights: Weights,
    pub norm: NormalizationSpec,
}

impl SpeedModel for NeuralModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, windows: &[Window]) -> Result<Vec<f64>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let enc = encode(windows, &self.norm)?;
        let out = self.weights.predict(enc.x.view())?;
        Ok(out.column(0).iter().map(|&y| self.norm.invert_target(y)).collect())
    }

    fn multiply_adds(&self) -> Option<u64> {
        Some(self.weights.spec().multiply_adds())
    }
}

/// Gipps baseline under the common interface.
#[derive(Debug, Clone)]
pub struct GippsModel {
    pub name: String,
    pub predictor: GippsPredictor,
}

impl SpeedModel for GippsModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, windows: &[Window]) -> Result<Vec<f64>> {
        Ok(windows.iter().map(|w| self.predictor.predict(w)).collect())
    }
}

/// RMSE per class; `None` for a class with no windows.
pub fn rmse_by_group(predictions: &[f64], windows: &[Window]) -> Result<BTreeMap<PairClass, Option<f64>>> {
    if predictions.len() != windows.len() {
        return Err(Error::shape(windows.len(), predictions.len()));
    }
    let mut out = BTreeMap::new();
    for class in PairClass::ALL {
        let (p, t): (Vec<f64>, Vec<f64>) = predictions
            .iter()
            .zip(windows)
            .filter(|(_, w)| w.class == class)
            .map(|(p, w)| (*p, w.target))
            .unzip();
        out.insert(class, if p.is_empty() { None } else { Some(rmse(&p, &t)?) });
    }
    Ok(out)
}

/// RMSE per pair id with the pair's class.
pub fn rmse_by_pair(predictions: &[f64], windows: &[Window]) -> Result<BTreeMap<String, (PairClass, f64)>> {
    if predictions.len() != windows.len() {
        return Err(Error::shape(windows.len(), predictions.len()));
    }
    let mut groups: BTreeMap<&str, (PairClass, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (p, w) in predictions.iter().zip(windows) {
        let e = groups.entry(&w.pair_id).or_insert_with(|| (w.class, Vec::new(), Vec::new()));
        e.1.push(*p);
        e.2.push(w.target);
    }
    groups
        .into_iter()
        .map(|(id, (class, p, t))| Ok((id.to_string(), (class, rmse(&p, &t)?))))
        .collect()
}
