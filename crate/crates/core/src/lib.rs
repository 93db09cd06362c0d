//! Car-following speed prediction for mixed autonomous / human-driven traffic.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: trajectory ingestion, kinematics, spacing filter, windowing,
//!   normalization and pair-level dataset splits.
//! - [`stats`]: spacing-binned descriptive statistics, one-way ANOVA and
//!   time-to-collision summaries.
//! - [`nn`]: a small dense / stacked-LSTM engine with analytic gradients.
//! - [`distill`]: teacher and student training, the composite distillation
//!   loss, alpha sweeps, expanding-window CV and random search.
//! - [`gipps`]: the Gipps car-following law, rollouts, a synthetic dataset
//!   generator and a per-pair Gipps predictor.
//! - [`eval`]: RMSE tables, closed-loop rollouts with minimum TTC, speed
//!   profile export and compute metering.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gipps;
pub mod nn;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
