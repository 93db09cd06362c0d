use std::time::Instant;

use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Weights;

/// Inference timing for one network. Wall times are scaled to 10 000
/// inferences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metering {
    pub multiply_adds: u64,
    pub batch: usize,
    pub repetitions: usize,
    pub median_ms_per_10k: f64,
    pub iqr_ms_per_10k: f64,
    pub samples_ms_per_10k: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Times `repetitions` inference passes over `batch` after one warm-up pass.
/// Runs on the calling thread.
pub fn compute_metering(weights: &Weights, batch: ArrayView2<'_, f64>, repetitions: usize) -> Result<Metering> {
    if repetitions == 0 || batch.nrows() == 0 {
        return Err(Error::Config("metering needs a non-empty batch and at least one repetition".into()));
    }
    std::hint::black_box(weights.predict(batch)?);
    let scale = 10_000.0 / batch.nrows() as f64;
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        std::hint::black_box(weights.predict(batch)?);
        samples.push(start.elapsed().as_secs_f64() * 1e3 * scale);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(Metering {
        multiply_adds: weights.spec().multiply_adds(),
        batch: batch.nrows(),
        repetitions,
        median_ms_per_10k: quantile(&sorted, 0.5),
        iqr_ms_per_10k: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        samples_ms_per_10k: samples,
    })
}

/// Peak resident set size of this process in KiB, where the platform
/// reports it.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}
