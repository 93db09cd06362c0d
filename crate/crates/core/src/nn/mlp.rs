use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};

use super::spec::MlpSpec;
use super::weights::{grad_view, Weights};

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    /// Layer outputs, `acts[0]` being the input.
    acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub(crate) fn outputs_shape(&self) -> (usize, usize) {
        self.acts.last().expect("non-empty cache").dim()
    }
}

fn layer_activation(spec: &MlpSpec, layer: usize) -> super::Activation {
    if layer + 1 == spec.hidden.len() + 1 {
        spec.output_activation
    } else {
        spec.hidden_activation
    }
}

pub(crate) fn forward(w: &Weights, spec: &MlpSpec, inputs: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
    let layers = spec.hidden.len() + 1;
    let mut acts = Vec::with_capacity(layers + 1);
    acts.push(inputs.to_owned());
    for l in 0..layers {
        let kernel = w.view(&format!("dense{l}.kernel"));
        let bias = w.view(&format!("dense{l}.bias"));
        let mut z = Array2::zeros((inputs.nrows(), kernel.ncols()));
        z += &bias;
        general_mat_mul(1.0, &acts[l], &kernel, 1.0, &mut z);
        let act = layer_activation(spec, l);
        z.mapv_inplace(|x| act.apply(x));
        acts.push(z);
    }
    (acts.last().cloned().expect("output layer"), MlpCache { acts })
}

pub(crate) fn backward(w: &Weights, spec: &MlpSpec, cache: &MlpCache, loss_grad: ArrayView2<f64>, grad: &mut [f64]) {
    let layers = spec.hidden.len() + 1;
    let out_act = layer_activation(spec, layers - 1);
    let mut delta = loss_grad.to_owned();
    delta.zip_mut_with(&cache.acts[layers], |d, &y| *d *= out_act.grad_from_output(y));
    for l in (0..layers).rev() {
        let a_prev = &cache.acts[l];
        {
            let mut gk = grad_view(w, grad, &format!("dense{l}.kernel"));
            general_mat_mul(1.0, &a_prev.t(), &delta, 1.0, &mut gk);
        }
        {
            let mut gb = grad_view(w, grad, &format!("dense{l}.bias"));
            gb.row_mut(0).scaled_add(1.0, &delta.sum_axis(Axis(0)));
        }
        if l > 0 {
            let kernel = w.view(&format!("dense{l}.kernel"));
            let mut next = delta.dot(&kernel.t());
            let act = layer_activation(spec, l - 1);
            next.zip_mut_with(a_prev, |d, &y| *d *= act.grad_from_output(y));
            delta = next;
        }
    }
}
