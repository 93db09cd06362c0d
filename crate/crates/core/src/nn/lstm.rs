//! Stacked LSTM with gates `[i, f, g, o]`, zero initial state, inverted
//! dropout between layers and a dense head on the last step's top hidden
//! state. Backward is full backpropagation through time.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::spec::{sigmoid, Activation, LstmSpec};
use super::weights::{grad_view, Weights};
use super::Mode;
use crate::seed;

/// Rows per chunk when predicting without a cache.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone)]
struct LayerCache {
    /// Layer input per step, after dropout.
    inputs: Vec<Array2<f64>>,
    /// Dropout multipliers per step (0 or 1/(1-p)).
    masks: Option<Vec<Array2<f64>>>,
    /// Gate activations per step, `N x 4u`.
    gates: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    layers: Vec<LayerCache>,
    projected: Option<Array2<f64>>,
    outputs: Array2<f64>,
}

impl LstmCache {
    pub(crate) fn outputs_shape(&self) -> (usize, usize) {
        self.outputs.dim()
    }
}

fn layer_forward(w: &Weights, layer: usize, inputs: Vec<Array2<f64>>, masks: Option<Vec<Array2<f64>>>) -> LayerCache {
    let kernel = w.view(&format!("lstm{layer}.kernel"));
    let recurrent = w.view(&format!("lstm{layer}.recurrent"));
    let bias = w.view(&format!("lstm{layer}.bias"));
    let n = inputs[0].nrows();
    let u = recurrent.nrows();
    let steps = inputs.len();
    let mut cache = LayerCache {
        masks,
        gates: Vec::with_capacity(steps),
        cells: Vec::with_capacity(steps),
        tanh_cells: Vec::with_capacity(steps),
        hidden: Vec::with_capacity(steps),
        inputs,
    };
    for t in 0..steps {
        let mut z = Array2::zeros((n, 4 * u));
        z += &bias;
        general_mat_mul(1.0, &cache.inputs[t], &kernel, 1.0, &mut z);
        if t > 0 {
            general_mat_mul(1.0, &cache.hidden[t - 1], &recurrent, 1.0, &mut z);
        }
        let mut c = Array2::zeros((n, u));
        let mut tc = Array2::zeros((n, u));
        let mut h = Array2::zeros((n, u));
        {
            let zs = z.as_slice_mut().expect("contiguous");
            let cs = c.as_slice_mut().expect("contiguous");
            let tcs = tc.as_slice_mut().expect("contiguous");
            let hs = h.as_slice_mut().expect("contiguous");
            let prev = if t > 0 { cache.cells[t - 1].as_slice() } else { None };
            for r in 0..n {
                let zr = &mut zs[r * 4 * u..(r + 1) * 4 * u];
                for j in 0..u {
                    let i = sigmoid(zr[j]);
                    let f = sigmoid(zr[u + j]);
                    let g = zr[2 * u + j].tanh();
                    let o = sigmoid(zr[3 * u + j]);
                    zr[j] = i;
                    zr[u + j] = f;
                    zr[2 * u + j] = g;
                    zr[3 * u + j] = o;
                    let cp = prev.map_or(0.0, |p| p[r * u + j]);
                    let cell = f * cp + i * g;
                    let tcell = cell.tanh();
                    cs[r * u + j] = cell;
                    tcs[r * u + j] = tcell;
                    hs[r * u + j] = o * tcell;
                }
            }
        }
        cache.gates.push(z);
        cache.cells.push(c);
        cache.tanh_cells.push(tc);
        cache.hidden.push(h);
    }
    cache
}

fn dropout_masks(rate: f64, n: usize, width: usize, steps: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = seed::rng(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..steps)
        .map(|_| Array2::from_shape_fn((n, width), |_| if rng.random::<f64>() < rate { 0.0 } else { keep }))
        .collect()
}

pub(crate) fn forward(w: &Weights, spec: &LstmSpec, inputs: ArrayView2<f64>, mode: Mode) -> (Array2<f64>, LstmCache) {
    let c = spec.input_channels;
    let n = inputs.nrows();
    let mut layers: Vec<LayerCache> = Vec::with_capacity(spec.layers.len());
    for layer in 0..spec.layers.len() {
        let (layer_in, masks) = if layer == 0 {
            let xs = (0..spec.seq_len)
                .map(|t| inputs.slice(s![.., t * c..(t + 1) * c]).to_owned())
                .collect();
            (xs, None)
        } else {
            let below = &layers[layer - 1].hidden;
            match mode {
                Mode::Train { dropout_seed } if spec.dropout > 0.0 => {
                    let width = spec.layers[layer - 1];
                    let masks = dropout_masks(
                        spec.dropout,
                        n,
                        width,
                        spec.seq_len,
                        seed::derive_index(dropout_seed, layer as u64),
                    );
                    let xs = below.iter().zip(&masks).map(|(h, m)| h * m).collect();
                    (xs, Some(masks))
                }
                _ => (below.clone(), None),
            }
        };
        layers.push(layer_forward(w, layer, layer_in, masks));
    }

    let top = layers.last().expect("at least one layer").hidden.last().expect("at least one step");
    let projected = spec.projection.map(|_| {
        let mut p = Array2::zeros((n, spec.head_inputs()));
        p += &w.view("proj.bias");
        general_mat_mul(1.0, top, &w.view("proj.kernel"), 1.0, &mut p);
        p.mapv_inplace(|x| Activation::Relu.apply(x));
        p
    });
    let head_in = projected.as_ref().unwrap_or(top);
    let mut out = Array2::zeros((n, 1));
    out += &w.view("head.bias");
    general_mat_mul(1.0, head_in, &w.view("head.kernel"), 1.0, &mut out);
    out.mapv_inplace(|x| spec.head_activation.apply(x));
    let cache = LstmCache {
        layers,
        projected,
        outputs: out.clone(),
    };
    (out, cache)
}

pub(crate) fn predict(w: &Weights, spec: &LstmSpec, inputs: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((inputs.nrows(), 1));
    let mut start = 0;
    while start < inputs.nrows() {
        let end = (start + PREDICT_CHUNK).min(inputs.nrows());
        let (chunk, _) = forward(w, spec, inputs.slice(s![start..end, ..]), Mode::Inference);
        out.slice_mut(s![start..end, ..]).assign(&chunk);
        start = end;
    }
    out
}

/// Backpropagates one layer. `dh_in[t]` is the gradient arriving at the
/// layer's hidden output at step `t` from above. Returns the gradient with
/// respect to the layer's (pre-dropout) inputs when `need_dx`.
fn layer_backward(
    w: &Weights,
    layer: usize,
    cache: &LayerCache,
    dh_in: &[Option<Array2<f64>>],
    grad: &mut [f64],
    need_dx: bool,
) -> Vec<Array2<f64>> {
    let kernel = w.view(&format!("lstm{layer}.kernel"));
    let recurrent = w.view(&format!("lstm{layer}.recurrent"));
    let n = cache.hidden[0].nrows();
    let u = recurrent.nrows();
    let steps = cache.hidden.len();
    let mut dh_next = Array2::<f64>::zeros((n, u));
    let mut dc_next = Array2::<f64>::zeros((n, u));
    let mut dxs = vec![Array2::zeros((0, 0)); if need_dx { steps } else { 0 }];

    for t in (0..steps).rev() {
        let mut dh = dh_next;
        if let Some(d) = &dh_in[t] {
            dh += d;
        }
        let mut dz = Array2::<f64>::zeros((n, 4 * u));
        {
            let gs = cache.gates[t].as_slice().expect("contiguous");
            let tcs = cache.tanh_cells[t].as_slice().expect("contiguous");
            let prev = if t > 0 { cache.cells[t - 1].as_slice() } else { None };
            let dhs = dh.as_slice().expect("contiguous");
            let dcn = dc_next.as_slice_mut().expect("contiguous");
            let dzs = dz.as_slice_mut().expect("contiguous");
            for r in 0..n {
                let g_row = &gs[r * 4 * u..(r + 1) * 4 * u];
                let dz_row = &mut dzs[r * 4 * u..(r + 1) * 4 * u];
                for j in 0..u {
                    let k = r * u + j;
                    let (i, f, g, o) = (g_row[j], g_row[u + j], g_row[2 * u + j], g_row[3 * u + j]);
                    let tc = tcs[k];
                    let d_h = dhs[k];
                    let d_o = d_h * tc;
                    let dc = d_h * o * (1.0 - tc * tc) + dcn[k];
                    let cp = prev.map_or(0.0, |p| p[k]);
                    dz_row[j] = dc * g * i * (1.0 - i);
                    dz_row[u + j] = dc * cp * f * (1.0 - f);
                    dz_row[2 * u + j] = dc * i * (1.0 - g * g);
                    dz_row[3 * u + j] = d_o * o * (1.0 - o);
                    dcn[k] = dc * f;
                }
            }
        }
        {
            let mut gk = grad_view(w, grad, &format!("lstm{layer}.kernel"));
            general_mat_mul(1.0, &cache.inputs[t].t(), &dz, 1.0, &mut gk);
        }
        if t > 0 {
            let mut gr = grad_view(w, grad, &format!("lstm{layer}.recurrent"));
            general_mat_mul(1.0, &cache.hidden[t - 1].t(), &dz, 1.0, &mut gr);
        }
        {
            let mut gb = grad_view(w, grad, &format!("lstm{layer}.bias"));
            gb.row_mut(0).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        }
        if need_dx {
            let mut dx = dz.dot(&kernel.t());
            if let Some(masks) = &cache.masks {
                dx *= &masks[t];
            }
            dxs[t] = dx;
        }
        dh_next = dz.dot(&recurrent.t());
    }
    dxs
}

pub(crate) fn backward(w: &Weights, spec: &LstmSpec, cache: &LstmCache, loss_grad: ArrayView2<f64>, grad: &mut [f64]) {
    let top_hidden = cache.layers.last().expect("layers").hidden.last().expect("steps");
    let mut d_out = loss_grad.to_owned();
    d_out.zip_mut_with(&cache.outputs, |d, &y| *d *= spec.head_activation.grad_from_output(y));

    let head_in = cache.projected.as_ref().unwrap_or(top_hidden);
    {
        let mut gk = grad_view(w, grad, "head.kernel");
        general_mat_mul(1.0, &head_in.t(), &d_out, 1.0, &mut gk);
        let mut gb = grad_view(w, grad, "head.bias");
        gb[[0, 0]] += d_out.sum();
    }
    let mut d_top = d_out.dot(&w.view("head.kernel").t());
    if let Some(p) = &cache.projected {
        d_top.zip_mut_with(p, |d, &y| *d *= Activation::Relu.grad_from_output(y));
        {
            let mut gk = grad_view(w, grad, "proj.kernel");
            general_mat_mul(1.0, &top_hidden.t(), &d_top, 1.0, &mut gk);
            let mut gb = grad_view(w, grad, "proj.bias");
            gb.row_mut(0).scaled_add(1.0, &d_top.sum_axis(Axis(0)));
        }
        d_top = d_top.dot(&w.view("proj.kernel").t());
    }

    let mut dh_in: Vec<Option<Array2<f64>>> = vec![None; spec.seq_len];
    dh_in[spec.seq_len - 1] = Some(d_top);
    for layer in (0..spec.layers.len()).rev() {
        let dxs = layer_backward(w, layer, &cache.layers[layer], &dh_in, grad, layer > 0);
        dh_in = dxs.into_iter().map(Some).collect();
    }
}
