use super::GippsParams;
use crate::data::{PairClass, TrajectoryPair, TrajectoryPoint};
use crate::error::{Error, Result};

/// Lead-vehicle trajectory sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadProfile {
    pub t0: f64,
    pub dt: f64,
    pub pos: Vec<f64>,
    pub speed: Vec<f64>,
}

impl LeadProfile {
    /// Positions integrated trapezoidally from `speed`, starting at `pos0`.
    pub fn from_speeds(t0: f64, dt: f64, pos0: f64, speed: Vec<f64>) -> Self {
        let mut pos = Vec::with_capacity(speed.len());
        for (k, v) in speed.iter().enumerate() {
            pos.push(if k == 0 { pos0 } else { pos[k - 1] + 0.5 * dt * (speed[k - 1] + v) });
        }
        LeadProfile { t0, dt, pos, speed }
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerStart {
    pub spacing: f64,
    pub speed: f64,
}

/// Spacing at which a follower at speed `v` behind a leader at the same
/// speed is held at `v` by the braking branch.
pub fn equilibrium_spacing(v: f64, p: &GippsParams) -> f64 {
    p.s_eff + 1.5 * p.tau * v + 0.5 * v * v * (1.0 / p.b_hat - 1.0 / p.b)
}

/// Simulates a Gipps follower behind `lead`. The follower picks a new target
/// speed every `tau` and moves linearly towards it; positions are integrated
/// trapezoidally on the lead's grid.
pub fn gipps_rollout(
    lead: &LeadProfile,
    params: &GippsParams,
    start: FollowerStart,
    pair_id: &str,
    class: PairClass,
) -> Result<TrajectoryPair> {
    params.validate()?;
    let ratio = params.tau / lead.dt;
    let m = ratio.round();
    if !(lead.dt > 0.0) || m < 1.0 || (ratio - m).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "reaction time {} s is not an integer multiple of dt {} s",
            params.tau, lead.dt
        )));
    }
    let m = m as usize;
    if lead.is_empty() {
        return Ok(TrajectoryPair::new(pair_id, class, Vec::new()));
    }
    if start.spacing <= params.s_eff {
        return Err(Error::Data(format!(
            "initial spacing {} m must exceed s_eff {} m",
            start.spacing, params.s_eff
        )));
    }

    let n = lead.len();
    let mut v = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    v.push(start.speed.max(0.0));
    x.push(lead.pos[0] - start.spacing);
    let (mut from, mut target) = (v[0], v[0]);
    for k in 0..n - 1 {
        let phase = k % m;
        if phase == 0 {
            from = v[k];
            target = params.next_speed(lead.pos[k] - x[k], v[k], lead.speed[k]);
        }
        let next = from + (phase + 1) as f64 / m as f64 * (target - from);
        x.push(x[k] + 0.5 * lead.dt * (v[k] + next));
        v.push(next);
    }
    let points = (0..n)
        .map(|k| TrajectoryPoint::new(lead.t0 + k as f64 * lead.dt, lead.pos[k], x[k], lead.speed[k], v[k]))
        .collect();
    Ok(TrajectoryPair::new(pair_id, class, points))
}
