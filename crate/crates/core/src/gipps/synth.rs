use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::{equilibrium_spacing, gipps_rollout, FollowerStart, GippsParams, LeadProfile};
use crate::data::{PairClass, TrajectoryPair, DT};
use crate::error::{Error, Result};
use crate::seed;

/// Randomized lead speed profile: a base speed with two sinusoids and an
/// optional stop, tracked under acceleration limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadSpec {
    pub base_speed: (f64, f64),
    pub amplitude: (f64, f64),
    /// Period of the main sinusoid, s.
    pub period: (f64, f64),
    pub stop_probability: f64,
    pub accel_max: f64,
    /// Largest braking magnitude the lead ever uses, m/s^2.
    pub decel_max: f64,
}

impl LeadSpec {
    fn human() -> Self {
        LeadSpec {
            base_speed: (6.0, 12.0),
            amplitude: (1.0, 3.0),
            period: (15.0, 40.0),
            stop_probability: 0.3,
            accel_max: 1.5,
            decel_max: 2.5,
        }
    }

    fn automated() -> Self {
        LeadSpec {
            base_speed: (6.0, 12.0),
            amplitude: (0.5, 1.5),
            period: (20.0, 50.0),
            stop_probability: 0.2,
            accel_max: 1.2,
            decel_max: 2.0,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, duration: f64, dt: f64) -> LeadProfile {
        let n = (duration / dt).round() as usize + 1;
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };
        let base = uniform(rng, self.base_speed);
        let amp = uniform(rng, self.amplitude);
        let period = uniform(rng, self.period);
        let (phase, phase2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let stop = (rng.random::<f64>() < self.stop_probability).then(|| {
            let at = rng.random_range(0.3..0.6) * duration;
            (at, at + rng.random_range(2.0..5.0))
        });
        let desired = |t: f64| {
            if stop.is_some_and(|(a, b)| t >= a && t < b) {
                return 0.0;
            }
            let w = 2.0 * PI * t / period;
            (base + amp * (w + phase).sin() + 0.3 * amp * (2.7 * w + phase2).sin()).max(0.0)
        };
        let mut speed = Vec::with_capacity(n);
        speed.push(desired(0.0));
        for k in 1..n {
            let v: f64 = speed[k - 1];
            let dv = (desired((k - 1) as f64 * dt) - v).clamp(-self.decel_max * dt, self.accel_max * dt);
            speed.push((v + dv).max(0.0));
        }
        LeadProfile::from_speeds(0.0, dt, 0.0, speed)
    }
}

/// Generator settings for one pair class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioPreset {
    pub class: PairClass,
    pub mean: GippsParams,
    /// Relative half-width of the uniform jitter applied to each parameter.
    pub jitter: f64,
    pub lead: LeadSpec,
    /// Gaussian noise added to observed speeds, m/s.
    pub noise_std: f64,
    /// Pair length, s.
    pub duration: f64,
}

impl ScenarioPreset {
    /// Automated followers accelerate and brake more gently, keep longer
    /// gaps, and vary little from vehicle to vehicle.
    pub fn for_class(class: PairClass) -> Self {
        let (mean, jitter, lead) = match class {
            PairClass::AvHdv => (
                GippsParams {
                    a_max: 1.2,
                    b: -2.5,
                    b_hat: -3.0,
                    v_desired: 13.0,
                    s_eff: 8.0,
                    tau: 1.0,
                },
                0.05,
                LeadSpec::human(),
            ),
            PairClass::HdvAv => (
                GippsParams {
                    a_max: 2.0,
                    b: -3.2,
                    b_hat: -3.7,
                    v_desired: 14.5,
                    s_eff: 6.0,
                    tau: 1.0,
                },
                0.2,
                LeadSpec::automated(),
            ),
            PairClass::HdvHdv => (GippsParams::default(), 0.2, LeadSpec::human()),
        };
        ScenarioPreset {
            class,
            mean,
            jitter,
            lead,
            noise_std: 0.03,
            duration: 30.0,
        }
    }

    pub fn defaults() -> Vec<Self> {
        PairClass::ALL.iter().map(|&c| Self::for_class(c)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        let bad = |msg: String| Err(Error::Config(format!("preset {}: {msg}", self.class)));
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter {} must lie in [0, 1)", self.jitter));
        }
        if !(self.noise_std >= 0.0) || !(self.duration >= 0.0) {
            return bad("noise and duration must be non-negative".into());
        }
        if !(self.lead.accel_max > 0.0) || !(self.lead.decel_max > 0.0) {
            return bad("lead acceleration limits must be positive".into());
        }
        let offset = self.mean.b_hat - self.mean.b;
        if offset > 0.0 {
            return bad("b_hat must be at least as severe as b".into());
        }
        // The least severe sampled b_hat must still cover the lead's braking.
        let mildest = self.mean.b * (1.0 - self.jitter) + offset;
        if mildest > -self.lead.decel_max {
            return bad(format!(
                "sampled b_hat can be {mildest:.3}, milder than lead braking {}",
                self.lead.decel_max
            ));
        }
        Ok(())
    }

    /// Parameters for one vehicle; `b_hat` keeps its offset from `b`.
    pub fn sample_params(&self, rng: &mut ChaCha8Rng) -> GippsParams {
        let mut jit = |x: f64| {
            if self.jitter > 0.0 {
                x * (1.0 + rng.random_range(-self.jitter..self.jitter))
            } else {
                x
            }
        };
        let b = jit(self.mean.b);
        GippsParams {
            a_max: jit(self.mean.a_max),
            b,
            b_hat: b + (self.mean.b_hat - self.mean.b),
            v_desired: jit(self.mean.v_desired),
            s_eff: jit(self.mean.s_eff),
            tau: self.mean.tau,
        }
    }

    /// One simulated pair with noise applied, plus the parameters used.
    pub fn simulate(&self, pair_id: &str, pair_seed: u64) -> Result<(TrajectoryPair, GippsParams)> {
        let mut rng = seed::rng(pair_seed);
        let params = self.sample_params(&mut rng);
        let lead = self.lead.sample(&mut rng, self.duration, DT);
        let v0 = lead.speed.first().copied().unwrap_or(0.0) * rng.random_range(0.9..1.0);
        let start = FollowerStart {
            spacing: equilibrium_spacing(v0, &params) * rng.random_range(1.0..1.2) + 1.0,
            speed: v0,
        };
        let mut pair = gipps_rollout(&lead, &params, start, pair_id, self.class)?;
        if self.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.noise_std).map_err(|e| Error::Config(e.to_string()))?;
            for p in &mut pair.points {
                p.lead_speed = (p.lead_speed + normal.sample(&mut rng)).max(0.0);
                p.foll_speed = (p.foll_speed + normal.sample(&mut rng)).max(0.0);
                p.speed_diff = p.foll_speed - p.lead_speed;
            }
        }
        Ok((pair, params))
    }
}

/// `n_pairs` simulated pairs per preset. Each pair draws from its own seed,
/// derived from the class and index.
pub fn generate_synthetic_dataset(presets: &[ScenarioPreset], n_pairs: usize, seed_value: u64) -> Result<Vec<TrajectoryPair>> {
    let mut out = Vec::with_capacity(presets.len() * n_pairs);
    for preset in presets {
        preset.validate()?;
        let class_seed = seed::derive(seed_value, preset.class.label());
        for i in 0..n_pairs {
            let id = format!("{}-{:03}", preset.class.label(), i);
            out.push(preset.simulate(&id, seed::derive_index(class_seed, i as u64))?.0);
        }
    }
    Ok(out)
}
