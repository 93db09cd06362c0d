use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerSpec {
    pub fn adam(learning_rate: f64, batch_size: usize, epochs: usize) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate,
            batch_size,
            epochs,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Student settings: learning rate 0.01, batch 100, 5 epochs.
    pub fn student() -> Self {
        Self::adam(0.01, 100, 5)
    }

    /// Teacher settings: learning rate 0.0016, batch 161, 10 epochs.
    pub fn teacher() -> Self {
        Self::adam(0.0016, 161, 10)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, n_params: usize) -> Result<Self> {
        spec.validate()?;
        let n = if spec.kind == OptimizerKind::Adam { n_params } else { 0 };
        Ok(Optimizer {
            spec,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    /// Applies one update; `epoch` and `batch` only label a divergence error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], epoch: usize, batch: usize) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(params.len(), grads.len()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, batch });
        }
        let lr = self.spec.learning_rate;
        match self.spec.kind {
            OptimizerKind::Sgd => {
                for (w, g) in params.iter_mut().zip(grads) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::shape(self.m.len(), params.len()));
                }
                self.t += 1;
                let (b1, b2, eps) = (self.spec.beta1, self.spec.beta2, self.spec.eps);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, batch });
        }
        Ok(())
    }
}

/// Mean squared error over the batch and its gradient `2 (p - y) / N`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let n = pred.len() as f64;
    let scale = 2.0 / n;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let d = p - y;
            loss += d * d;
            scale * d
        })
        .collect();
    Ok((loss / n, grad))
}
