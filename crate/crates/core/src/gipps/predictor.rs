//! One-step Gipps prediction from a history window.
//!
//! Under the rollout scheme the follower commits to a new target every
//! `tau` and moves linearly towards it, so its speed is piecewise linear with
//! a kink at each update. The predictor locates the most recent update inside
//! the window from the speed history, evaluates the Gipps target from the
//! state at that instant, and reads the speed one step past the window off
//! the linear segment.

use std::collections::BTreeMap;

use serde::Serialize;

use super::GippsParams;
use crate::data::{Window, DT};
use crate::error::{Error, Result};

/// Phase-aware prediction of the follower speed one `dt` after the window.
pub fn predict_window(window: &Window, params: &GippsParams) -> f64 {
    predict_steps(window, params, DT)
}

fn predict_steps(window: &Window, params: &GippsParams, dt: f64) -> f64 {
    let n = window.steps();
    let m = ((params.tau / dt).round() as usize).max(1);
    let v: Vec<f64> = (0..n).map(|i| window.follower_speed(i)).collect();
    let target_at = |j: usize| {
        let [spacing, lead, _] = window.step(j);
        params.next_speed(spacing, v[j], lead)
    };
    let first = n.saturating_sub(m);
    let scale = v.iter().fold(1.0f64, |a, x| a.max(x * x));
    // Round-off level only; anything larger is a real inconsistency.
    let tol = 1e-18 * scale;

    let mut best: Option<(f64, usize, f64)> = None;
    let mut scored = Vec::with_capacity(n - first);
    for j in first..n {
        let g = target_at(j);
        let slope = (g - v[j]) / m as f64;
        let mut resid = 0.0;
        for i in 1..j {
            let d = v[i + 1] - 2.0 * v[i] + v[i - 1];
            resid += d * d;
        }
        for (i, vi) in v.iter().enumerate().skip(j + 1) {
            let d = vi - (v[j] + (i - j) as f64 * slope);
            resid += d * d;
        }
        scored.push((resid, j, v[j] + (n - j) as f64 * slope));
        if best.is_none_or(|b| resid < b.0) {
            best = Some((resid, j, 0.0));
        }
    }
    // Among equally consistent phases, the earliest one is backed by the most
    // post-update evidence.
    let min = best.map_or(0.0, |b| b.0);
    scored
        .into_iter()
        .find(|s| s.0 <= min + tol)
        .map_or(v[n - 1], |s| s.2.max(0.0))
}

fn sse(windows: &[&Window], p: &GippsParams) -> f64 {
    windows
        .iter()
        .map(|w| {
            let d = predict_window(w, p) - w.target;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GippsFit {
    pub params: GippsParams,
    /// Mean squared one-step error on the fitted windows, (m/s)^2.
    pub mse: f64,
    pub fallback: bool,
    pub warning: Option<String>,
}

const A_RANGE: (f64, f64) = (0.3, 4.0);
const V_RANGE: (f64, f64) = (3.0, 40.0);
const B_RANGE: (f64, f64) = (-6.0, -1.0);
const S_RANGE: (f64, f64) = (0.5, 15.0);
const GRID: usize = 17;
const ROUNDS: usize = 6;
/// Offset of the assumed lead braking below the follower's own braking.
pub const B_HAT_OFFSET: f64 = -0.5;

/// Least-squares fit of `(a_max, V, b, s_eff)` by coordinate grid search
/// with shrinking brackets, `b_hat = b - 0.5`. Falls back to `initial` when
/// the pair is too short or the fit degenerates.
pub fn fit_params(windows: &[&Window], initial: &GippsParams) -> GippsFit {
    let fallback = |reason: String| GippsFit {
        params: *initial,
        mse: f64::NAN,
        fallback: true,
        warning: Some(reason),
    };
    if windows.len() < 5 {
        return fallback(format!("{} windows are too few to fit Gipps parameters", windows.len()));
    }
    let mut p = GippsParams {
        b_hat: initial.b + B_HAT_OFFSET,
        ..*initial
    };
    let mut best = sse(windows, &p);
    if !best.is_finite() {
        return fallback("non-finite Gipps error at the initial parameters".into());
    }
    let ranges = [A_RANGE, V_RANGE, B_RANGE, S_RANGE];
    let mut half: Vec<f64> = ranges.iter().map(|r| (r.1 - r.0) / 2.0).collect();
    for _ in 0..ROUNDS {
        for (c, &(lo, hi)) in ranges.iter().enumerate() {
            let centre = [p.a_max, p.v_desired, p.b, p.s_eff][c];
            let (a, b) = ((centre - half[c]).max(lo), (centre + half[c]).min(hi));
            for g in 0..GRID {
                let x = a + (b - a) * g as f64 / (GRID - 1) as f64;
                let mut q = p;
                match c {
                    0 => q.a_max = x,
                    1 => q.v_desired = x,
                    2 => {
                        q.b = x;
                        q.b_hat = x + B_HAT_OFFSET;
                    }
                    _ => q.s_eff = x,
                }
                let e = sse(windows, &q);
                if e < best {
                    best = e;
                    p = q;
                }
            }
            half[c] *= 0.5;
        }
    }
    if p.validate().is_err() {
        return fallback("fitted Gipps parameters are invalid".into());
    }
    GippsFit {
        params: p,
        mse: best / windows.len() as f64,
        fallback: false,
        warning: None,
    }
}

/// Per-pair Gipps parameters with a default for unseen pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GippsPredictor {
    pub default: GippsParams,
    pub pairs: BTreeMap<String, GippsFit>,
}

impl GippsPredictor {
    pub fn new(default: GippsParams) -> Result<Self> {
        default.validate()?;
        Ok(GippsPredictor {
            default,
            pairs: BTreeMap::new(),
        })
    }

    /// Fits every pair present in `windows`.
    pub fn fit(windows: &[Window], default: GippsParams) -> Result<Self> {
        use rayon::prelude::*;
        let mut model = Self::new(default)?;
        let mut groups: BTreeMap<&str, Vec<&Window>> = BTreeMap::new();
        for w in windows {
            groups.entry(w.pair_id.as_str()).or_default().push(w);
        }
        let groups: Vec<(&str, Vec<&Window>)> = groups.into_iter().collect();
        let fits: Vec<GippsFit> = groups.par_iter().map(|(_, ws)| fit_params(ws, &default)).collect();
        for ((id, _), fit) in groups.into_iter().zip(fits) {
            model.pairs.insert(id.to_string(), fit);
        }
        Ok(model)
    }

    pub fn params_for(&self, pair_id: &str) -> &GippsParams {
        self.pairs.get(pair_id).map_or(&self.default, |f| &f.params)
    }

    pub fn predict(&self, window: &Window) -> f64 {
        predict_window(window, self.params_for(&window.pair_id))
    }

    pub fn warnings(&self) -> Vec<String> {
        self.pairs
            .iter()
            .filter_map(|(id, f)| f.warning.as_ref().map(|w| format!("pair {id}: {w}")))
            .collect()
    }

    /// Check that every pair fit is usable.
    pub fn validate(&self) -> Result<()> {
        for (id, f) in &self.pairs {
            f.params
                .validate()
                .map_err(|e| Error::Config(format!("pair {id}: {e}")))?;
        }
        Ok(())
    }
}
