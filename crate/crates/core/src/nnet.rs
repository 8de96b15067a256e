//! Step 4: supervised distillation. A dense feedforward net with tanh
//! hidden layers and a linear output is trained with minibatch Adam on the
//! MSE L(θ) = (1/J) Σ_j ||x_j − T(y_j, θ)||². Backprop is hand-written
//! over ndarray GEMMs for this fixed architecture family.

use crate::diffusion::LabeledPairSet;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    /// weights[l] has shape (layer_dims[l], layer_dims[l+1]); z = a·W + b.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_halving_period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-3,
            lr_halving_period: 500,
            epochs: 1000,
            batch_size: 100,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Per-epoch error curves; both are per-element mean squared errors
/// (averaged over batch rows and output dimensions).
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
}

pub fn mlp_init(layer_dims: &[usize], seed: u64) -> Result<MlpModel> {
    if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid("layer_dims needs ≥ 2 positive entries"));
    }
    let mut rng = stream(seed, &[tag::TRAIN, 0]);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut m = Array2::zeros((fan_in, fan_out));
        for v in m.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        weights.push(m);
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let n_layers = self.weights.len();
        let mut a = y.to_owned();
        for l in 0..n_layers {
            let mut z = a.dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        a
    }

    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: y.len(),
            });
        }
        let inp = ArrayView2::from_shape((1, y.len()), y).unwrap();
        Ok(self.forward_batch(inp).row(0).to_vec())
    }

    /// Forward with stored activations, then backprop of the batch-mean
    /// squared-norm loss. Returns (loss, weight grads, bias grads).
    pub fn loss_and_grads(
        &self,
        y: ArrayView2<f64>,
        x: ArrayView2<f64>,
    ) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
        let n_layers = self.weights.len();
        let b = y.nrows() as f64;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(y.to_owned());
        for l in 0..n_layers {
            let mut z = acts[l].dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        let resid = &acts[n_layers] - &x;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / b;
        // dL/d(out) for L = (1/B) Σ ||x − out||²
        let mut delta = resid.mapv(|r| 2.0 * r / b);
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.weights[l].t());
                // tanh′ = 1 − tanh², using the stored activation
                delta.zip_mut_with(&acts[l], |d, a| *d *= 1.0 - a * a);
            }
        }
        (loss, gw, gb)
    }

    /// Mean squared error per output element (mean over both the batch and
    /// the output dimensions), so values are comparable across dimensions.
    fn mse(&self, y: ArrayView2<f64>, x: ArrayView2<f64>) -> f64 {
        let out = self.forward_batch(y);
        let resid = &out - &x;
        resid.iter().map(|r| r * r).sum::<f64>() / (y.nrows() * x.ncols()) as f64
    }
}

struct Adam {
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Adam {
            mw: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            vw: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            mb: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            vb: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, gw: &[Array2<f64>], gb: &[Array1<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for l in 0..model.weights.len() {
            self.mw[l].zip_mut_with(&gw[l], |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            self.vw[l].zip_mut_with(&gw[l], |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            ndarray::Zip::from(&mut model.weights[l])
                .and(&self.mw[l])
                .and(&self.vw[l])
                .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS));
            self.mb[l].zip_mut_with(&gb[l], |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            self.vb[l].zip_mut_with(&gb[l], |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            ndarray::Zip::from(&mut model.biases[l])
                .and(&self.mb[l])
                .and(&self.vb[l])
                .for_each(|b, &m, &v| *b -= lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS));
        }
    }
}

pub fn mlp_train(
    model: &MlpModel,
    pairs: &LabeledPairSet,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let j = pairs.len();
    if j < 2 {
        return Err(Error::invalid("need at least two labeled pairs"));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let d = pairs.dim;
    if model.input_dim() != d || model.output_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: model.input_dim(),
        });
    }
    // shuffled train/validation split
    let mut order: Vec<usize> = (0..j).collect();
    let mut rng = stream(cfg.seed, &[tag::SPLIT]);
    order.shuffle(&mut rng);
    let n_train = ((j as f64 * cfg.train_fraction).floor() as usize).clamp(1, j - 1);
    let gather = |ids: &[usize], src: &[f64]| -> Array2<f64> {
        let mut m = Array2::zeros((ids.len(), d));
        for (r, &i) in ids.iter().enumerate() {
            m.row_mut(r).assign(
                &ArrayView2::from_shape((1, d), &src[i * d..(i + 1) * d])
                    .unwrap()
                    .row(0),
            );
        }
        m
    };
    let train_ids = &order[..n_train];
    let val_ids = &order[n_train..];
    let ty = gather(train_ids, &pairs.ys);
    let tx = gather(train_ids, &pairs.xs);
    let vy = gather(val_ids, &pairs.ys);
    let vx = gather(val_ids, &pairs.xs);
    let batch = cfg.batch_size.clamp(1, n_train);

    let mut net = model.clone();
    let mut adam = Adam::new(&net);
    let mut report = TrainReport {
        train_mse: Vec::with_capacity(cfg.epochs),
        val_mse: Vec::with_capacity(cfg.epochs),
    };
    let mut idx: Vec<usize> = (0..n_train).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.initial_lr * 0.5f64.powi((epoch / cfg.lr_halving_period.max(1)) as i32);
        idx.shuffle(&mut rng);
        for (bi, chunk) in idx.chunks(batch).enumerate() {
            let by = gather_rows(&ty, chunk);
            let bx = gather_rows(&tx, chunk);
            let (loss, gw, gb) = net.loss_and_grads(by.view(), bx.view());
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {bi}"
                )));
            }
            adam.step(&mut net, &gw, &gb, lr);
        }
        report.train_mse.push(net.mse(ty.view(), tx.view()));
        report.val_mse.push(net.mse(vy.view(), vx.view()));
    }
    Ok((net, report))
}

fn gather_rows(src: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    let mut m = Array2::zeros((ids.len(), src.ncols()));
    for (r, &i) in ids.iter().enumerate() {
        m.row_mut(r).assign(&src.row(i));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_pairs(n: usize, d: usize, seed: u64) -> LabeledPairSet {
        let mut rng = stream(seed, &[55]);
        let ys: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        LabeledPairSet {
            dim: d,
            xs: ys.clone(),
            ys,
            component_label: 0,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = mlp_init(&[2, 4, 2], 7).unwrap();
        let b = mlp_init(&[2, 4, 2], 7).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert_eq!(wa, wb);
        }
        for (l, w) in a.weights.iter().enumerate() {
            let bound = (6.0 / (a.layer_dims[l] + a.layer_dims[l + 1]) as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert!(a.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_variance_matches_glorot() {
        let m = mlp_init(&[1000, 1000], 8).unwrap();
        let w = &m.weights[0];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let want = 2.0 / 2000.0; // uniform(−b,b) variance = b²/3 = 2/(fan_in+fan_out)
        assert!((var - want).abs() < 0.2 * want, "var {var} want {want}");
    }

    #[test]
    fn forward_zero_weights_returns_bias() {
        let mut m = mlp_init(&[3, 5, 3], 1).unwrap();
        for w in &mut m.weights {
            w.fill(0.0);
        }
        m.biases[1] = Array1::from(vec![1.0, -2.0, 3.0]);
        let out = m.forward(&[9.0, 9.0, 9.0]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let m = mlp_init(&[2, 2], 2).unwrap();
        let y = [0.7, -1.3];
        let out = m.forward(&y).unwrap();
        for j in 0..2 {
            let want = m.weights[0][(0, j)] * y[0] + m.weights[0][(1, j)] * y[1];
            assert!((out[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let m = mlp_init(&[2, 3, 2], 3).unwrap();
        let y = [0.4, -0.9];
        // independent scalar evaluation
        let mut h = [0.0f64; 3];
        for j in 0..3 {
            let z = m.weights[0][(0, j)] * y[0] + m.weights[0][(1, j)] * y[1] + m.biases[0][j];
            h[j] = z.tanh();
        }
        let mut want = [0.0f64; 2];
        for j in 0..2 {
            want[j] = (0..3).map(|i| m.weights[1][(i, j)] * h[i]).sum::<f64>()
                + m.biases[1][j];
        }
        let got = m.forward(&y).unwrap();
        for j in 0..2 {
            assert!((got[j] - want[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let m = mlp_init(&[3, 5, 3], 4).unwrap();
        let pairs = identity_pairs(10, 3, 5);
        let y = ArrayView2::from_shape((10, 3), &pairs.ys).unwrap();
        let x = ArrayView2::from_shape((10, 3), &pairs.xs).unwrap();
        let (_, gw, gb) = m.loss_and_grads(y, x);
        let h = 1e-6;
        for l in 0..m.weights.len() {
            for idx in 0..m.weights[l].len() {
                let mut mp = m.clone();
                let mut mm = m.clone();
                {
                    let w = mp.weights[l].as_slice_mut().unwrap();
                    w[idx] += h;
                }
                {
                    let w = mm.weights[l].as_slice_mut().unwrap();
                    w[idx] -= h;
                }
                let fd = (mp.loss_and_grads(y, x).0 - mm.loss_and_grads(y, x).0) / (2.0 * h);
                let an = gw[l].as_slice().unwrap()[idx];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    ((fd - an) / denom).abs() < 1e-4,
                    "layer {l} weight {idx}: fd {fd} analytic {an}"
                );
            }
            for idx in 0..m.biases[l].len() {
                let mut mp = m.clone();
                let mut mm = m.clone();
                mp.biases[l][idx] += h;
                mm.biases[l][idx] -= h;
                let fd = (mp.loss_and_grads(y, x).0 - mm.loss_and_grads(y, x).0) / (2.0 * h);
                let an = gb[l][idx];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    ((fd - an) / denom).abs() < 1e-4,
                    "layer {l} bias {idx}: fd {fd} analytic {an}"
                );
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut m = mlp_init(&[2, 3, 2], 6).unwrap();
        let before = m.clone();
        let gw: Vec<Array2<f64>> = m.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        let gb: Vec<Array1<f64>> = m.biases.iter().map(|b| Array1::zeros(b.len())).collect();
        let mut adam = Adam::new(&m);
        adam.step(&mut m, &gw, &gb, 1e-3);
        for (a, b) in m.weights.iter().zip(&before.weights) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn identity_task_trains_below_1e3() {
        let pairs = identity_pairs(2000, 2, 9);
        let model = mlp_init(&[2, 32, 32, 2], 10).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 200,
            seed: 11,
            ..TrainConfig::default()
        };
        let (_, report) = mlp_train(&model, &pairs, &cfg).unwrap();
        let last = *report.val_mse.last().unwrap();
        assert!(last < 1e-3, "validation MSE {last}");
        assert_eq!(report.train_mse.len(), 500);
    }

    #[test]
    fn training_is_deterministic() {
        let pairs = identity_pairs(200, 2, 12);
        let model = mlp_init(&[2, 8, 2], 13).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 50,
            seed: 14,
            ..TrainConfig::default()
        };
        let (ma, ra) = mlp_train(&model, &pairs, &cfg).unwrap();
        let (mb, rb) = mlp_train(&model, &pairs, &cfg).unwrap();
        assert_eq!(ra.train_mse, rb.train_mse);
        for (a, b) in ma.weights.iter().zip(&mb.weights) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lr_schedule_halves() {
        let cfg = TrainConfig::default();
        let lr_at = |epoch: usize| {
            cfg.initial_lr * 0.5f64.powi((epoch / cfg.lr_halving_period) as i32)
        };
        assert_eq!(lr_at(0), 1e-3);
        assert_eq!(lr_at(499), 1e-3);
        assert_eq!(lr_at(500), 5e-4);
        assert_eq!(lr_at(999), 5e-4);
        assert_eq!(lr_at(1000), 2.5e-4);
    }

    #[test]
    fn rejects_tiny_or_mismatched_input() {
        let model = mlp_init(&[2, 4, 2], 1).unwrap();
        let one = identity_pairs(1, 2, 2);
        let cfg = TrainConfig::default();
        assert!(mlp_train(&model, &one, &cfg).is_err());
        let wrong_dim = identity_pairs(10, 3, 3);
        assert!(mlp_train(&model, &wrong_dim, &cfg).is_err());
        assert!(model.forward(&[1.0, 2.0, 3.0]).is_err());
    }
}
