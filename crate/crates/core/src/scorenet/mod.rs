//! Noise-conditioned denoising score network.
//!
//! Two hidden layers with SiLU activations. The noise level enters as one
//! extra input coordinate, standardized with the mean and standard deviation
//! of a uniform law on the training σ range:
//!
//! ```text
//! u  = [y, (σ - c) / s]
//! h1 = silu(W1 u + b1)
//! h2 = silu(W2 h1 + b2)
//! g  = W3 h2 + b3
//! ```
//!
//! Gradients of the denoising loss are computed by hand-written reverse-mode
//! differentiation over the batch.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use optim::{Adam, AdamConfig};
pub use train::{train, SigmaMode, SigmaSource, TrainConfig, TrainReport};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::score::{check_batch, ScoreField};

pub const DEFAULT_HIDDEN: usize = 512;
pub const TOY_HIDDEN: usize = 256;

/// Affine map of σ onto the network's conditioning input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaConditioning {
    pub center: f64,
    pub scale: f64,
}

impl SigmaConditioning {
    /// Zero mean and unit variance for σ uniform on `[lo, hi]`. A degenerate
    /// range (fixed σ) maps every σ near `lo` to ~0.
    pub fn from_range(lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        if width > 0.0 {
            SigmaConditioning {
                center: 0.5 * (lo + hi),
                scale: width / 12f64.sqrt(),
            }
        } else {
            SigmaConditioning { center: lo, scale: 1.0 }
        }
    }

    pub fn apply(&self, sigma: f64) -> f64 {
        (sigma - self.center) / self.scale
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNet {
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
    pub(crate) w3: Array2<f64>,
    pub(crate) b3: Array1<f64>,
    pub(crate) conditioning: SigmaConditioning,
}

/// Parameter-shaped gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl Grads {
    /// Flattened in parameter order `w1, b1, w2, b2, w3, b3`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in [(&self.w1, &self.b1), (&self.w2, &self.b2), (&self.w3, &self.b3)] {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Activations kept for the backward pass.
struct Tape {
    input: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
}

impl ScoreNet {
    /// Hidden layers get LeCun-normal weights, the output layer starts at
    /// zero so a fresh network is the zero score field.
    pub fn new(data_dim: usize, hidden: usize, conditioning: SigmaConditioning, seed: u64) -> Self {
        let mut net = Self::random(data_dim, hidden, conditioning, seed);
        net.w3.fill(0.0);
        net
    }

    /// All layers randomly initialized (no zero output layer).
    pub fn random(data_dim: usize, hidden: usize, conditioning: SigmaConditioning, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut normal = |rows: usize, cols: usize| {
            let std = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
        };
        let w1 = normal(hidden, data_dim + 1);
        let w2 = normal(hidden, hidden);
        let w3 = normal(data_dim, hidden);
        ScoreNet {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(hidden),
            w3,
            b3: Array1::zeros(data_dim),
            conditioning,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.w3.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w2.nrows()
    }

    pub fn conditioning(&self) -> SigmaConditioning {
        self.conditioning
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in [(&self.w1, &self.b1), (&self.w2, &self.b2), (&self.w3, &self.b3)] {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for v in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .chain(self.w3.iter_mut())
            .chain(self.b3.iter_mut())
        {
            *v = it.next().expect("length checked");
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            w3: Array2::zeros(self.w3.raw_dim()),
            b3: Array1::zeros(self.b3.raw_dim()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    fn forward_tape(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> (Array2<f64>, Tape) {
        let (batch, dim) = ys.dim();
        let mut input = Array2::zeros((batch, dim + 1));
        input.slice_mut(ndarray::s![.., ..dim]).assign(&ys);
        for (i, s) in sigmas.iter().enumerate() {
            input[[i, dim]] = self.conditioning.apply(*s);
        }
        let z1 = input.dot(&self.w1.t()) + &self.b1;
        let h1 = z1.mapv(silu);
        let z2 = h1.dot(&self.w2.t()) + &self.b2;
        let h2 = z2.mapv(silu);
        let out = h2.dot(&self.w3.t()) + &self.b3;
        (out, Tape { input, z1, h1, z2, h2 })
    }

    /// Batched forward pass `g(y_i, σ_i)`.
    pub fn forward_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
        check_batch(self.data_dim(), &ys, sigmas)?;
        let (out, _) = self.forward_tape(ys, sigmas);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(out)
    }

    pub fn forward(&self, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.score(y, sigma)
    }

    /// Backpropagates `d_out = ∂loss/∂g` through the recorded tape.
    fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> Grads {
        let w3 = d_out.t().dot(&tape.h2);
        let b3 = d_out.sum_axis(Axis(0));
        let mut dz2 = d_out.dot(&self.w3);
        dz2.zip_mut_with(&tape.z2, |d, z| *d *= silu_grad(*z));
        let w2 = dz2.t().dot(&tape.h1);
        let b2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.w2);
        dz1.zip_mut_with(&tape.z1, |d, z| *d *= silu_grad(*z));
        let w1 = dz1.t().dot(&tape.input);
        let b1 = dz1.sum_axis(Axis(0));
        Grads { w1, b1, w2, b2, w3, b3 }
    }

    /// Denoising loss for a fixed noise draw:
    /// `y_i = x_i + σ_i ε_i`, `loss = mean_i ‖x_i - (y_i + σ_i² g(y_i, σ_i))‖²`.
    pub fn loss_and_grads_with_noise(
        &self,
        clean: ArrayView2<f64>,
        sigmas: &[f64],
        noise: ArrayView2<f64>,
    ) -> Result<(f64, Grads)> {
        if clean.nrows() == 0 {
            return Err(Error::EmptyInput("training batch".into()));
        }
        if noise.dim() != clean.dim() {
            return Err(Error::DimensionMismatch {
                expected: clean.len(),
                found: noise.len(),
            });
        }
        let mut noisy = noise.to_owned();
        for ((mut row, x), s) in noisy.outer_iter_mut().zip(clean.outer_iter()).zip(sigmas) {
            row.zip_mut_with(&x, |e, xi| *e = xi + s * *e);
        }
        check_batch(self.data_dim(), &noisy.view(), sigmas)?;
        let (g, tape) = self.forward_tape(noisy.view(), sigmas);

        let batch = clean.nrows() as f64;
        let mut residual = g;
        let mut loss = 0.0;
        for (((mut r, x), y), s) in residual
            .outer_iter_mut()
            .zip(clean.outer_iter())
            .zip(noisy.outer_iter())
            .zip(sigmas)
        {
            let s2 = s * s;
            for ((ri, xi), yi) in r.iter_mut().zip(x.iter()).zip(y.iter()) {
                // r = x - x̂; store dL/dg = -2σ² r / B in place.
                let res = xi - (yi + s2 * *ri);
                loss += res * res;
                *ri = -2.0 * s2 * res / batch;
            }
        }
        loss /= batch;
        if !loss.is_finite() {
            let worst = tape.h2.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            return Err(Error::NonFinite(format!(
                "loss (max |hidden activation| = {worst:e}, sigma range {:?})",
                sigmas.iter().cloned().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
            )));
        }
        Ok((loss, self.backward(&tape, &residual)))
    }

    /// Draws fresh standard-normal noise and evaluates the denoising loss.
    pub fn loss_and_grads<R: rand::Rng + ?Sized>(
        &self,
        clean: ArrayView2<f64>,
        sigmas: &[f64],
        rng: &mut R,
    ) -> Result<(f64, Grads)> {
        let noise = Array2::from_shape_fn(clean.raw_dim(), |_| StandardNormal.sample(rng));
        self.loss_and_grads_with_noise(clean, sigmas, noise.view())
    }

    /// `x̂ = y + σ² g(y, σ)`.
    pub fn denoise(&self, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
        crate::score::denoise(self, y, sigma)
    }
}

impl ScoreField for ScoreNet {
    fn data_dim(&self) -> usize {
        ScoreNet::data_dim(self)
    }

    fn score_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
        self.forward_batch(ys, sigmas)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn cond() -> SigmaConditioning {
        SigmaConditioning::from_range(0.25, 0.35)
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Central-difference gradient of the fixed-noise loss.
    fn finite_difference(net: &ScoreNet, x: &Array2<f64>, sig: &[f64], noise: &Array2<f64>, eps: f64) -> Vec<f64> {
        let base = net.params();
        let mut probe = net.clone();
        (0..base.len())
            .map(|k| {
                let mut p = base.clone();
                p[k] = base[k] + eps;
                probe.set_params(&p).unwrap();
                let up = probe.loss_and_grads_with_noise(x.view(), sig, noise.view()).unwrap().0;
                p[k] = base[k] - eps;
                probe.set_params(&p).unwrap();
                let down = probe.loss_and_grads_with_noise(x.view(), sig, noise.view()).unwrap().0;
                (up - down) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn zero_output_layer_gives_zero_score() {
        let net = ScoreNet::new(12, 8, cond(), 1);
        let ys = random_batch(5, 12, 2);
        let g = net.forward_batch(ys.view(), &[0.3; 5]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let y = ys.row(0).to_vec();
        assert_eq!(net.denoise(&y, 0.3).unwrap(), y);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = ScoreNet::random(10, 6, cond(), 5);
        let b = ScoreNet::random(10, 6, cond(), 5);
        let y = random_batch(1, 10, 3).row(0).to_vec();
        assert_eq!(a.forward(&y, 0.3).unwrap(), b.forward(&y, 0.3).unwrap());
        assert_eq!(a.forward(&y, 0.3).unwrap().len(), 10);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = ScoreNet::random(4, 3, cond(), 0);
        assert!(net.forward(&[0.0; 3], 0.3).is_err());
        assert!(net.forward(&[0.0, 0.0, f64::NAN, 0.0], 0.3).is_err());
        assert!(net.forward(&[0.0; 4], -0.1).is_err());
    }

    #[test]
    fn antibody_output_shape() {
        let net = ScoreNet::new(6237, 16, SigmaConditioning::from_range(0.4, 0.6), 0);
        assert_eq!(net.forward(&vec![0.0; 6237], 0.5).unwrap().len(), 6237);
    }

    #[test]
    fn small_sigma_denoise_bound() {
        let net = ScoreNet::random(6, 5, cond(), 9);
        let y = random_batch(1, 6, 1).row(0).to_vec();
        let sigma = 1e-6;
        let g = net.forward(&y, sigma).unwrap();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xhat = net.denoise(&y, sigma).unwrap();
        let dist = xhat.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist <= sigma * sigma * gnorm * (1.0 + 1e-12));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let net = ScoreNet::random(7, 4, cond(), seed);
            let x = random_batch(3, 7, 100 + seed);
            let noise = random_batch(3, 7, 200 + seed);
            let sig = [0.3, 0.5, 0.9];
            let (_, grads) = net.loss_and_grads_with_noise(x.view(), &sig, noise.view()).unwrap();
            let fd = finite_difference(&net, &x, &sig, &noise, 1e-4);
            for (k, (a, f)) in grads.to_flat().iter().zip(&fd).enumerate() {
                let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-7);
                assert!(rel <= 1e-4, "seed {seed} param {k}: {a} vs {f}");
            }
        }
    }

    #[test]
    fn zero_net_loss_is_noise_energy() {
        let net = ScoreNet::new(5, 4, cond(), 0);
        let x = random_batch(4, 5, 1);
        let noise = random_batch(4, 5, 2);
        let sig = [0.2, 0.4, 0.6, 0.8];
        let (loss, _) = net.loss_and_grads_with_noise(x.view(), &sig, noise.view()).unwrap();
        let expected: f64 = noise
            .outer_iter()
            .zip(&sig)
            .map(|(e, s)| s * s * e.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / 4.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_contribute_equally() {
        let net = ScoreNet::random(5, 4, cond(), 3);
        let row = random_batch(1, 5, 1);
        let e = random_batch(1, 5, 2);
        let x2 = ndarray::concatenate(Axis(0), &[row.view(), row.view()]).unwrap();
        let e2 = ndarray::concatenate(Axis(0), &[e.view(), e.view()]).unwrap();
        let (l1, g1) = net.loss_and_grads_with_noise(row.view(), &[0.3], e.view()).unwrap();
        let (l2, g2) = net.loss_and_grads_with_noise(x2.view(), &[0.3, 0.3], e2.view()).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn params_roundtrip() {
        let mut net = ScoreNet::random(3, 2, cond(), 1);
        let mut p = net.params();
        p[0] = 42.0;
        net.set_params(&p).unwrap();
        assert_eq!(net.w1[[0, 0]], 42.0);
        assert!(net.set_params(&p[1..]).is_err());
    }

    #[test]
    fn conditioning_standardizes_uniform_range() {
        let c = SigmaConditioning::from_range(0.4, 0.6);
        assert!(c.apply(0.5).abs() < 1e-12);
        assert!((c.apply(0.6) - 3f64.sqrt()).abs() < 1e-12);
        let fixed = SigmaConditioning::from_range(1.0, 1.0);
        assert_eq!(fixed.apply(1.0), 0.0);
    }
}
