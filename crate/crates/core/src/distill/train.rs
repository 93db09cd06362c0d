use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::{check_alpha, composite_loss, Encoded, PredictionTriple};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, LstmSpec, MlpSpec, Mode, NetworkSpec, Optimizer, OptimizerSpec, Weights};
use crate::seed;

/// Architecture, optimizer settings and seed for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub spec: NetworkSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
}

impl TrainConfig {
    pub fn teacher(spec: LstmSpec, seed: u64) -> Self {
        TrainConfig {
            spec: NetworkSpec::Lstm(spec),
            optimizer: OptimizerSpec::teacher(),
            seed,
        }
    }

    pub fn student(spec: MlpSpec, seed: u64) -> Self {
        TrainConfig {
            spec: NetworkSpec::Mlp(spec),
            optimizer: OptimizerSpec::student(),
            seed,
        }
    }
}

/// Settings for a distilled student. The teacher is borrowed immutably, so a
/// run cannot modify it.
#[derive(Debug, Clone)]
pub struct DistillConfig<'a> {
    pub alpha: f64,
    pub teacher: &'a Weights,
    pub student: MlpSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    /// Predict the teacher once over the training set instead of per batch.
    pub cache_teacher: bool,
}

impl DistillConfig<'_> {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !self.teacher.is_finite() {
            return Err(Error::Config("teacher weights contain non-finite values".into()));
        }
        let student = NetworkSpec::Mlp(self.student.clone());
        student.validate()?;
        let (tw, sw) = (self.teacher.spec().input_width(), student.input_width());
        if tw != sw || self.teacher.spec().output_dim() != student.output_dim() {
            return Err(Error::Config(format!(
                "teacher and student encodings differ: teacher takes {tw} inputs, student {sw}"
            )));
        }
        Ok(())
    }
}

/// Where the distillation targets come from.
#[derive(Debug, Clone)]
pub enum TeacherSignal<'a> {
    None,
    /// Teacher evaluated per batch in inference mode.
    Live(&'a Weights),
    /// Teacher predictions for every training row, in row order.
    Cached(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's batches.
    pub train_loss: f64,
    pub student_loss: f64,
    pub distill_loss: Option<f64>,
    pub val_mse: Option<f64>,
    /// Validation RMSE in m/s.
    pub val_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub alpha: Option<f64>,
    /// Normalized training MSE before the first update.
    pub initial_train_mse: f64,
    pub final_train_mse: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,student_loss,distill_loss,val_mse,val_rmse\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{},{}",
                e.epoch,
                e.train_loss,
                e.student_loss,
                opt(e.distill_loss),
                opt(e.val_mse),
                opt(e.val_rmse)
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub weights: Weights,
    pub log: TrainingLog,
}

/// Normalized MSE of `weights` against `data`.
pub fn evaluate_mse(weights: &Weights, data: &Encoded) -> Result<f64> {
    let pred = weights.predict(data.x.view())?.column(0).to_vec();
    Ok(mse_loss(&pred, &data.y)?.0)
}

/// Mini-batch training with per-epoch shuffling. With a teacher signal the
/// objective is the composite loss at `alpha`; without one it is plain MSE
/// and `alpha` is ignored.
pub fn train_network(
    config: &TrainConfig,
    train: &Encoded,
    validation: Option<&Encoded>,
    teacher: TeacherSignal<'_>,
    alpha: f64,
) -> Result<Trained> {
    config.spec.validate()?;
    config.optimizer.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if train.x.ncols() != config.spec.input_width() {
        return Err(Error::shape(config.spec.input_width(), train.x.ncols()));
    }
    let distilling = !matches!(teacher, TeacherSignal::None);
    if distilling {
        check_alpha(alpha)?;
    }
    if let TeacherSignal::Cached(t) = &teacher {
        if t.len() != train.len() {
            return Err(Error::shape(train.len(), t.len()));
        }
    }

    let mut weights = Weights::init(config.spec.clone(), seed::derive(config.seed, "init"))?;
    let mut opt = Optimizer::new(config.optimizer.clone(), weights.len())?;
    let shuffle_root = seed::derive(config.seed, "shuffle");
    let dropout_root = seed::derive(config.seed, "dropout");
    let batch_size = config.optimizer.batch_size;

    let initial_train_mse = evaluate_mse(&weights, train)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.optimizer.epochs);

    for epoch in 1..=config.optimizer.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_index(shuffle_root, epoch as u64)));
        let (mut sum_total, mut sum_student, mut sum_distill) = (0.0, 0.0, 0.0);

        for (b, idx) in order.chunks(batch_size).enumerate() {
            let batch = b + 1;
            let x = train.x.select(Axis(0), idx);
            let y: Vec<f64> = idx.iter().map(|&i| train.y[i]).collect();
            let mode = Mode::Train {
                dropout_seed: seed::derive_index(dropout_root, ((epoch as u64) << 32) | batch as u64),
            };
            let fwd = weights.forward(x.view(), mode)?;
            let pred: Vec<f64> = fwd.outputs.column(0).to_vec();

            let (total, student, grad) = match &teacher {
                TeacherSignal::None => {
                    let (l, g) = mse_loss(&pred, &y)?;
                    (l, l, g)
                }
                signal => {
                    let t: Vec<f64> = match signal {
                        TeacherSignal::Live(w) => w.predict(x.view())?.column(0).to_vec(),
                        TeacherSignal::Cached(c) => idx.iter().map(|&i| c[i]).collect(),
                        TeacherSignal::None => unreachable!(),
                    };
                    let l = composite_loss(&PredictionTriple::new(&y, &pred, &t)?, alpha)?;
                    sum_distill += l.distill * idx.len() as f64;
                    (l.total, l.student, l.grad)
                }
            };
            if !total.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            sum_total += total * idx.len() as f64;
            sum_student += student * idx.len() as f64;

            let g = Array2::from_shape_vec((grad.len(), 1), grad).map_err(|e| Error::Data(e.to_string()))?;
            let grads = weights.backward(&fwd.cache, g.view())?;
            opt.step(weights.data_mut(), &grads, epoch, batch)?;
        }

        let n = train.len() as f64;
        let val_mse = validation.map(|v| evaluate_mse(&weights, v)).transpose()?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: sum_total / n,
            student_loss: sum_student / n,
            distill_loss: distilling.then_some(sum_distill / n),
            val_mse,
            val_rmse: val_mse.zip(validation).map(|(m, v)| m.sqrt() * v.target_scale),
        });
    }

    let final_train_mse = evaluate_mse(&weights, train)?;
    Ok(Trained {
        weights,
        log: TrainingLog {
            alpha: distilling.then_some(alpha),
            initial_train_mse,
            final_train_mse,
            epochs,
        },
    })
}

pub fn train_teacher(config: &TrainConfig, train: &Encoded, validation: Option<&Encoded>) -> Result<Trained> {
    train_network(config, train, validation, TeacherSignal::None, 1.0)
}

pub fn train_student_plain(config: &TrainConfig, train: &Encoded, validation: Option<&Encoded>) -> Result<Trained> {
    train_network(config, train, validation, TeacherSignal::None, 1.0)
}

pub fn train_kdnn(config: &DistillConfig<'_>, train: &Encoded, validation: Option<&Encoded>) -> Result<Trained> {
    config.validate()?;
    let tc = TrainConfig {
        spec: NetworkSpec::Mlp(config.student.clone()),
        optimizer: config.optimizer.clone(),
        seed: config.seed,
    };
    let signal = if config.cache_teacher {
        TeacherSignal::Cached(config.teacher.predict(train.x.view())?.column(0).to_vec())
    } else {
        TeacherSignal::Live(config.teacher)
    };
    train_network(&tc, train, validation, signal, config.alpha)
}
