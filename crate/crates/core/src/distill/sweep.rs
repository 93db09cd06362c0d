use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{check_alpha, evaluate_mse, train_kdnn, DistillConfig, Encoded, Trained};
use crate::error::{Error, Result};
use crate::nn::Weights;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Evaluation RMSE, m/s.
    pub rmse: f64,
    /// `rmse` minus the plain student's RMSE; negative means the distilled
    /// student is better.
    pub diff_vs_student: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub teacher_rmse: f64,
    pub student_rmse: f64,
    pub rows: Vec<SweepRow>,
    pub best_alpha: f64,
    pub best_rmse: f64,
}

impl SweepReport {
    /// Alpha table: the two reference RMSEs, one row per alpha, then the
    /// best alpha.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "teacher_rmse,{:.6}", self.teacher_rmse);
        let _ = writeln!(out, "student_rmse,{:.6}", self.student_rmse);
        out.push_str("alpha,rmse,error_difference_with_student\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6},{:+.6}", r.alpha, r.rmse, r.diff_vs_student);
        }
        let _ = writeln!(out, "best_alpha,{},{:.6}", self.best_alpha, self.best_rmse);
        out
    }
}

/// 0.1, 0.2, ..., 0.9.
pub fn alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Parses `lo:hi:step` or a comma-separated list.
pub fn parse_alpha_range(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("invalid alpha value '{s}'")))
    };
    let alphas = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("alpha range must be lo:hi:step, got '{text}'")));
        }
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || hi < lo {
            return Err(Error::Config(format!("empty alpha range '{text}'")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if alphas.is_empty() {
        return Err(Error::Config("no alpha values given".into()));
    }
    for &a in &alphas {
        check_alpha(a)?;
    }
    Ok(alphas)
}

fn pick_best(rows: &[SweepRow]) -> &SweepRow {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.rmse < best.rmse || (r.rmse == best.rmse && r.alpha > best.alpha) {
            best = r;
        }
    }
    best
}

fn rmse(weights: &Weights, data: &Encoded) -> Result<f64> {
    Ok(evaluate_mse(weights, data)?.sqrt() * data.target_scale)
}

/// Trains one distilled student per alpha, all from the same seed and
/// teacher, and scores them on `eval`. The best alpha minimizes RMSE; ties go
/// to the larger alpha. Models are returned in `alphas` order.
pub fn alpha_sweep(
    base: &DistillConfig<'_>,
    alphas: &[f64],
    train: &Encoded,
    validation: Option<&Encoded>,
    eval: &Encoded,
    student: &Weights,
) -> Result<(SweepReport, Vec<Trained>)> {
    if alphas.is_empty() {
        return Err(Error::Config("no alpha values given".into()));
    }
    let teacher_rmse = rmse(base.teacher, eval)?;
    let student_rmse = rmse(student, eval)?;
    let runs: Vec<(Trained, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let cfg = DistillConfig { alpha, ..base.clone() };
            let trained = train_kdnn(&cfg, train, validation)?;
            let r = rmse(&trained.weights, eval)?;
            Ok((trained, r))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = alphas
        .iter()
        .zip(&runs)
        .map(|(&alpha, (_, r))| SweepRow {
            alpha,
            rmse: *r,
            diff_vs_student: r - student_rmse,
        })
        .collect();
    let best = pick_best(&rows).clone();
    let report = SweepReport {
        teacher_rmse,
        student_rmse,
        best_alpha: best.alpha,
        best_rmse: best.rmse,
        rows,
    };
    Ok((report, runs.into_iter().map(|(t, _)| t).collect()))
}
