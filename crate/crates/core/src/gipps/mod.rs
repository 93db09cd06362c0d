//! Gipps car-following baseline and a synthetic trajectory generator built
//! on it.
//!
//! The follower's next speed, one reaction time ahead, is the smaller of a
//! free-acceleration branch and a safe-braking branch:
//!
//! ```text
//! v_acc   = v + 2.5 a tau (1 - v/V) sqrt(0.025 + v/V)
//! v_brake = b tau + sqrt(b^2 tau^2 - b (2 (s - s_eff) - v tau - v_lead^2 / b_hat))
//! ```
//!
//! A negative discriminant is treated as an emergency stop.

mod predictor;
mod rollout;
mod synth;

pub use predictor::{fit_params, predict_window, GippsFit, GippsPredictor};
pub use rollout::{equilibrium_spacing, gipps_rollout, FollowerStart, LeadProfile};
pub use synth::{generate_synthetic_dataset, LeadSpec, ScenarioPreset};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GippsParams {
    /// Desired acceleration, m/s^2.
    pub a_max: f64,
    /// Desired braking, m/s^2 (negative).
    pub b: f64,
    /// Braking assumed for the leader, m/s^2 (negative).
    pub b_hat: f64,
    /// Desired speed, m/s.
    pub v_desired: f64,
    /// Effective leader length plus margin, m.
    pub s_eff: f64,
    /// Reaction time, s.
    pub tau: f64,
}

impl Default for GippsParams {
    fn default() -> Self {
        GippsParams {
            a_max: 1.7,
            b: -3.0,
            b_hat: -3.5,
            v_desired: 13.9,
            s_eff: 6.5,
            tau: 1.0,
        }
    }
}

impl GippsParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.a_max > 0.0, "a_max must be > 0"),
            (self.b < 0.0, "b must be < 0"),
            (self.b_hat < 0.0, "b_hat must be < 0"),
            (self.v_desired > 0.0, "desired speed must be > 0"),
            (self.s_eff > 0.0, "s_eff must be > 0"),
            (self.tau > 0.0, "tau must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(format!("invalid Gipps parameters: {msg} ({self:?})")));
            }
        }
        let all = [self.a_max, self.b, self.b_hat, self.v_desired, self.s_eff, self.tau];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("invalid Gipps parameters: non-finite value ({self:?})")));
        }
        Ok(())
    }

    pub fn accel_branch(&self, v: f64) -> f64 {
        let r = v / self.v_desired;
        v + 2.5 * self.a_max * self.tau * (1.0 - r) * (0.025 + r).max(0.0).sqrt()
    }

    /// `None` when the discriminant is negative.
    pub fn brake_branch(&self, spacing: f64, v: f64, v_lead: f64) -> Option<f64> {
        let (b, tau) = (self.b, self.tau);
        let disc = b * b * tau * tau - b * (2.0 * (spacing - self.s_eff) - v * tau - v_lead * v_lead / self.b_hat);
        (disc >= 0.0).then(|| b * tau + disc.sqrt())
    }

    /// Next speed without validating the parameters.
    pub fn next_speed(&self, spacing: f64, v: f64, v_lead: f64) -> f64 {
        match self.brake_branch(spacing, v, v_lead) {
            Some(brake) => self.accel_branch(v).min(brake).max(0.0),
            None => 0.0,
        }
    }
}

/// Follower speed one reaction time after the state `(spacing, v, v_lead)`.
pub fn gipps_step(spacing: f64, v: f64, v_lead: f64, params: &GippsParams) -> Result<f64> {
    params.validate()?;
    Ok(params.next_speed(spacing, v, v_lead))
}
