//! Response-based distillation: a frozen teacher's predictions supervise a
//! smaller student alongside the observed targets.
//!
//! The composite objective is
//! `L = alpha * MSE(observed, student) + (1 - alpha) * MSE(teacher, student)`.

mod search;
mod sweep;
mod train;

use ndarray::Array2;

pub use search::{cv_score, random_search, time_order, timeseries_cv, Candidate, Fold, SearchResult, SearchSpace};
pub use sweep::{alpha_grid, alpha_sweep, parse_alpha_range, SweepReport, SweepRow};
pub use train::{
    evaluate_mse, train_kdnn, train_network, train_student_plain, train_teacher, DistillConfig, EpochRecord,
    TeacherSignal, TrainConfig, Trained, TrainingLog,
};

use crate::data::{NormalizationSpec, Window};
use crate::error::{Error, Result};

/// Normalized inputs and targets, one row per window.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    /// Width of the target range in m/s; multiplies a normalized RMSE into m/s.
    pub target_scale: f64,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows `idx` in that order.
    pub fn subset(&self, idx: &[usize]) -> Encoded {
        Encoded {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            target_scale: self.target_scale,
        }
    }
}

pub fn encode(windows: &[Window], norm: &NormalizationSpec) -> Result<Encoded> {
    let width = windows.first().map_or(0, |w| w.features.len());
    let mut flat = Vec::with_capacity(windows.len() * width);
    let mut y = Vec::with_capacity(windows.len());
    for w in windows {
        if w.features.len() != width {
            return Err(Error::shape(width, w.features.len()));
        }
        let start = flat.len();
        flat.extend_from_slice(&w.features);
        norm.apply_features(&mut flat[start..]);
        y.push(norm.apply_target(w.target));
    }
    let x = Array2::from_shape_vec((windows.len(), width), flat).map_err(|e| Error::Data(e.to_string()))?;
    Ok(Encoded {
        x,
        y,
        target_scale: norm.target_range(),
    })
}

/// Observed targets with student and teacher predictions for one batch, all
/// in normalized units.
#[derive(Debug, Clone, Copy)]
pub struct PredictionTriple<'a> {
    pub observed: &'a [f64],
    pub student: &'a [f64],
    pub teacher: &'a [f64],
}

impl<'a> PredictionTriple<'a> {
    pub fn new(observed: &'a [f64], student: &'a [f64], teacher: &'a [f64]) -> Result<Self> {
        let n = observed.len();
        if student.len() != n || teacher.len() != n {
            return Err(Error::Data(format!(
                "prediction lengths differ: observed {n}, student {}, teacher {}",
                student.len(),
                teacher.len()
            )));
        }
        if n == 0 {
            return Err(Error::Data("empty batch".into()));
        }
        Ok(PredictionTriple {
            observed,
            student,
            teacher,
        })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub total: f64,
    /// MSE against the observed targets.
    pub student: f64,
    /// MSE against the teacher predictions.
    pub distill: f64,
    /// Gradient of `total` with respect to each student prediction.
    pub grad: Vec<f64>,
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

pub fn composite_loss(triple: &PredictionTriple<'_>, alpha: f64) -> Result<CompositeLoss> {
    check_alpha(alpha)?;
    let n = triple.len() as f64;
    let scale = 2.0 / n;
    let beta = 1.0 - alpha;
    let (mut so, mut st) = (0.0, 0.0);
    let mut grad = Vec::with_capacity(triple.len());
    for i in 0..triple.len() {
        let s = triple.student[i];
        let d_obs = s - triple.observed[i];
        let d_teach = s - triple.teacher[i];
        so += d_obs * d_obs;
        st += d_teach * d_teach;
        // With alpha = 1 this reduces exactly to the plain MSE gradient.
        grad.push(scale * (alpha * d_obs + beta * d_teach));
    }
    let (student, distill) = (so / n, st / n);
    Ok(CompositeLoss {
        total: alpha * student + beta * distill,
        student,
        distill,
        grad,
    })
}
