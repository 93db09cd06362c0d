use serde::Serialize;

use crate::data::{TrajectoryPair, Window, CHANNELS};
use crate::error::{Error, Result};
use crate::stats::ttc;

/// Observed steps fed to the model before it drives the follower.
pub const WARMUP_STEPS: usize = 10;

/// A simulated follower trajectory. Index `k` matches point `k` of the pair;
/// the first `WARMUP_STEPS` entries are copied from the observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub t: Vec<f64>,
    pub foll_pos: Vec<f64>,
    pub foll_speed: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Minimum TTC over the simulated steps; 0 after a collision, +inf when
    /// the follower never closes in.
    pub min_ttc: f64,
    pub collision: bool,
}

impl Rollout {
    pub fn simulated_steps(&self) -> usize {
        self.t.len().saturating_sub(WARMUP_STEPS)
    }
}

fn history(pair: &TrajectoryPair, x: &[f64], v: &[f64], k: usize) -> Window {
    let mut features = Vec::with_capacity(WARMUP_STEPS * CHANNELS);
    for i in k + 1 - WARMUP_STEPS..=k {
        let p = &pair.points[i];
        features.extend_from_slice(&[p.lead_pos - x[i], p.lead_speed, v[i] - p.lead_speed]);
    }
    Window {
        features,
        target: pair.points[k + 1].foll_speed,
        pair_id: pair.pair_id.clone(),
        class: pair.class,
        segment: pair.segment,
        t_end: pair.points[k].t,
    }
}

/// Drives the follower with `model`, which receives the index of the point
/// being predicted and a history window built from the simulated state. The
/// lead follows its observed trajectory. `horizon` caps the number of
/// simulated steps.
pub fn closed_loop_rollout<F>(pair: &TrajectoryPair, horizon: Option<usize>, mut model: F) -> Result<Rollout>
where
    F: FnMut(usize, &Window) -> Result<f64>,
{
    let n = pair.len();
    if n < WARMUP_STEPS + 1 {
        return Err(Error::Data(format!(
            "pair {}: {n} points, closed-loop rollout needs at least {}",
            pair.pair_id,
            WARMUP_STEPS + 1
        )));
    }
    let end = horizon.map_or(n, |h| n.min(WARMUP_STEPS + h));
    let pts = &pair.points;
    let mut x: Vec<f64> = pts[..WARMUP_STEPS].iter().map(|p| p.foll_pos).collect();
    let mut v: Vec<f64> = pts[..WARMUP_STEPS].iter().map(|p| p.foll_speed).collect();
    let mut spacing: Vec<f64> = pts[..WARMUP_STEPS].iter().map(|p| p.spacing).collect();
    let mut min_ttc = f64::INFINITY;
    let mut collision = false;

    for k in WARMUP_STEPS - 1..end - 1 {
        let w = history(pair, &x, &v, k);
        let next = model(k + 1, &w)?;
        if !next.is_finite() {
            return Err(Error::Data(format!(
                "pair {}: non-finite speed predicted at t = {}",
                pair.pair_id,
                pts[k + 1].t
            )));
        }
        let next = next.max(0.0);
        let dt = pts[k + 1].t - pts[k].t;
        let pos = x[k] + 0.5 * dt * (v[k] + next);
        let s = pts[k + 1].lead_pos - pos;
        x.push(pos);
        v.push(next);
        spacing.push(s);
        if s <= 0.0 {
            collision = true;
            min_ttc = 0.0;
            break;
        }
        min_ttc = min_ttc.min(ttc(s, next - pts[k + 1].lead_speed)?);
    }
    Ok(Rollout {
        t: pts[..x.len()].iter().map(|p| p.t).collect(),
        foll_pos: x,
        foll_speed: v,
        spacing,
        min_ttc,
        collision,
    })
}

/// Minimum observed TTC over the steps a rollout of the same horizon would
/// simulate.
pub fn observed_min_ttc(pair: &TrajectoryPair, horizon: Option<usize>) -> f64 {
    let end = horizon.map_or(pair.len(), |h| pair.len().min(WARMUP_STEPS + h));
    pair.points
        .get(WARMUP_STEPS..end)
        .unwrap_or(&[])
        .iter()
        .map(|p| ttc(p.spacing, p.speed_diff).unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min)
}
