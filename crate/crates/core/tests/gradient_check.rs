//! Analytic gradients against central finite differences.

use dcf_core::nn::{mse_loss, Activation, LstmSpec, MlpSpec, Mode, NetworkSpec, Weights};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn loss(w: &Weights, x: &Array2<f64>, y: &[f64], mode: Mode) -> f64 {
    let out = w.forward(x.view(), mode).unwrap().outputs;
    let pred: Vec<f64> = out.column(0).to_vec();
    mse_loss(&pred, y).unwrap().0
}

/// Max relative error between the analytic gradient and central differences.
#[allow(clippy::needless_range_loop)]
fn check(w: &Weights, x: &Array2<f64>, y: &[f64], mode: Mode) -> f64 {
    let fwd = w.forward(x.view(), mode).unwrap();
    let pred: Vec<f64> = fwd.outputs.column(0).to_vec();
    let (_, dl) = mse_loss(&pred, y).unwrap();
    let dl = Array2::from_shape_vec((dl.len(), 1), dl).unwrap();
    let analytic = w.backward(&fwd.cache, dl.view()).unwrap();
    let mut worst = 0.0f64;
    let mut probe = w.clone();
    for i in 0..w.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + H;
        let up = loss(&probe, x, y, mode);
        probe.data_mut()[i] = orig - H;
        let down = loss(&probe, x, y, mode);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// All parameters from [-1, 1]; the zero-bias init can put a ReLU exactly
/// on its kink behind a dead layer.
fn random_point(rng: &mut ChaCha8Rng, spec: NetworkSpec) -> Weights {
    let n = Weights::zeros(spec.clone()).unwrap().len();
    Weights::from_vec(spec, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, width: usize) -> (Array2<f64>, Vec<f64>) {
    let x = Array2::from_shape_fn((n, width), |_| rng.random_range(0.0..1.0));
    let y = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    (x, y)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..25 {
        let depth = rng.random_range(1..=3);
        let spec = NetworkSpec::Mlp(MlpSpec {
            input_dim: rng.random_range(1..=12),
            hidden: (0..depth).map(|_| rng.random_range(1..=8)).collect(),
            hidden_activation: [Activation::Relu, Activation::Sigmoid, Activation::Identity][case % 3],
            output_dim: 1,
            output_activation: Activation::Sigmoid,
        });
        let w = random_point(&mut rng, spec.clone());
        let n = rng.random_range(1..=6);
        let (x, y) = random_batch(&mut rng, n, spec.input_width());
        let err = check(&w, &x, &y, Mode::Inference);
        assert!(err < TOL, "case {case}: {err:e} for {spec:?}");
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..12 {
        let spec = LstmSpec {
            input_channels: 3,
            seq_len: 10,
            layers: vec![rng.random_range(1..=5), rng.random_range(1..=4)],
            dropout: if case % 2 == 0 { 0.3 } else { 0.0 },
            projection: (case % 3 == 0).then(|| rng.random_range(1..=4)),
            head_activation: Activation::Sigmoid,
        };
        let spec = NetworkSpec::Lstm(spec);
        let w = Weights::init(spec.clone(), 100 + case as u64).unwrap();
        let n = rng.random_range(1..=4);
        let (x, y) = random_batch(&mut rng, n, 30);
        let mode = Mode::Train { dropout_seed: case as u64 };
        let err = check(&w, &x, &y, mode);
        assert!(err < TOL, "case {case}: {err:e} for {spec:?}");
    }
}
