//! Dense and stacked-LSTM networks with analytic gradients.
//!
//! Parameters live in one flat `f64` vector described by a layout table.
//! Both architectures take the same input encoding: one row per sample with
//! `steps * channels` values, time-major. The MLP reads the row as a flat
//! vector, the LSTM as a sequence of `steps` channel vectors.

mod lstm;
mod mlp;
mod optim;
mod spec;
mod weights;

use ndarray::{Array2, ArrayView2};

pub use optim::{mse_loss, Optimizer, OptimizerKind, OptimizerSpec};
pub use spec::{Activation, LstmSpec, MlpSpec, NetworkSpec, ParamBlock};
pub use weights::{Weights, WEIGHTS_MAGIC};

use crate::error::{Error, Result};

/// Forward-pass mode. Dropout is only active in `Train`, with masks drawn
/// deterministically from `dropout_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Train { dropout_seed: u64 },
}

/// Activations saved by a forward pass, tied to the weights that produced it.
#[derive(Debug, Clone)]
pub struct Cache {
    fingerprint: u64,
    inner: CacheKind,
}

#[derive(Debug, Clone)]
enum CacheKind {
    Mlp(mlp::MlpCache),
    Lstm(lstm::LstmCache),
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub outputs: Array2<f64>,
    pub cache: Cache,
}

impl Weights {
    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        let width = self.spec().input_width();
        if inputs.ncols() != width {
            return Err(Error::shape(
                format!("(N, {width})"),
                format!("({}, {})", inputs.nrows(), inputs.ncols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: ArrayView2<f64>, mode: Mode) -> Result<Forward> {
        self.check_input(&inputs)?;
        let (outputs, inner) = match self.spec() {
            NetworkSpec::Mlp(spec) => {
                let (out, cache) = mlp::forward(self, spec, inputs);
                (out, CacheKind::Mlp(cache))
            }
            NetworkSpec::Lstm(spec) => {
                let (out, cache) = lstm::forward(self, spec, inputs, mode);
                (out, CacheKind::Lstm(cache))
            }
        };
        Ok(Forward {
            outputs,
            cache: Cache {
                fingerprint: self.fingerprint(),
                inner,
            },
        })
    }

    /// Inference-mode outputs without keeping the cache.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        Ok(match self.spec() {
            NetworkSpec::Mlp(spec) => mlp::forward(self, spec, inputs).0,
            NetworkSpec::Lstm(spec) => lstm::predict(self, spec, inputs),
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the outputs of the cached forward pass.
    pub fn backward(&self, cache: &Cache, loss_grad: ArrayView2<f64>) -> Result<Vec<f64>> {
        if cache.fingerprint != self.fingerprint() {
            return Err(Error::StaleCache);
        }
        let mut grad = vec![0.0; self.len()];
        match (self.spec(), &cache.inner) {
            (NetworkSpec::Mlp(spec), CacheKind::Mlp(c)) => {
                check_grad_shape(&c.outputs_shape(), &loss_grad)?;
                mlp::backward(self, spec, c, loss_grad, &mut grad);
            }
            (NetworkSpec::Lstm(spec), CacheKind::Lstm(c)) => {
                check_grad_shape(&c.outputs_shape(), &loss_grad)?;
                lstm::backward(self, spec, c, loss_grad, &mut grad);
            }
            _ => return Err(Error::StaleCache),
        }
        Ok(grad)
    }
}

fn check_grad_shape(expected: &(usize, usize), got: &ArrayView2<f64>) -> Result<()> {
    if (got.nrows(), got.ncols()) != *expected {
        return Err(Error::shape(
            format!("{expected:?}"),
            format!("({}, {})", got.nrows(), got.ncols()),
        ));
    }
    Ok(())
}
