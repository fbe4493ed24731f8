//! Noise-conditioned score fields and the empirical-Bayes denoiser.
//!
//! A score field returns `g(y, σ) ≈ ∇_y log f_σ(y)`, the score of the data
//! density smoothed with `N(0, σ²I)`. The least-squares clean estimate is
//! `x̂ = y + σ² g(y, σ)`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub trait ScoreField {
    fn data_dim(&self) -> usize;

    /// Scores for each row of `ys`, row `i` evaluated at noise level `sigmas[i]`.
    fn score_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>>;

    fn score(&self, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, y.len()), y).map_err(|_| Error::DimensionMismatch {
            expected: self.data_dim(),
            found: y.len(),
        })?;
        Ok(self.score_batch(view, &[sigma])?.into_raw_vec_and_offset().0)
    }
}

pub(crate) fn check_batch(dim: usize, ys: &ArrayView2<f64>, sigmas: &[f64]) -> Result<()> {
    if ys.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: ys.ncols(),
        });
    }
    if sigmas.len() != ys.nrows() {
        return Err(Error::DimensionMismatch {
            expected: ys.nrows(),
            found: sigmas.len(),
        });
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score input".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!("sigma must be positive, got {s}")));
    }
    Ok(())
}

/// `x̂ = y + σ² g(y, σ)`.
pub fn denoise<F: ScoreField + ?Sized>(field: &F, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let g = field.score(y, sigma)?;
    Ok(y.iter().zip(&g).map(|(yi, gi)| yi + sigma * sigma * gi).collect())
}

/// Row-wise denoising with per-row noise levels.
pub fn denoise_batch<F: ScoreField + ?Sized>(field: &F, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
    let mut g = field.score_batch(ys, sigmas)?;
    for ((mut row, y), s) in g.outer_iter_mut().zip(ys.outer_iter()).zip(sigmas) {
        let s2 = s * s;
        row.zip_mut_with(&y, |gi, yi| *gi = yi + s2 * *gi);
    }
    Ok(g)
}

/// Closed-form score fields for reference densities.
pub mod analytic {
    use super::*;

    /// The zero field: Langevin dynamics reduce to pure diffusion.
    #[derive(Clone, Debug)]
    pub struct ZeroScore {
        pub dim: usize,
    }

    impl ScoreField for ZeroScore {
        fn data_dim(&self) -> usize {
            self.dim
        }

        fn score_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
            check_batch(self.dim, &ys, sigmas)?;
            Ok(Array2::zeros(ys.raw_dim()))
        }
    }

    /// Data `~ N(μ, τ²I)`: smoothed density is `N(μ, (τ²+σ²)I)`, so
    /// `g(y, σ) = (μ - y) / (τ² + σ²)`.
    #[derive(Clone, Debug)]
    pub struct GaussianScore {
        pub mean: Vec<f64>,
        pub variance: f64,
    }

    impl ScoreField for GaussianScore {
        fn data_dim(&self) -> usize {
            self.mean.len()
        }

        fn score_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
            check_batch(self.mean.len(), &ys, sigmas)?;
            let mut out = ys.to_owned();
            for (mut row, s) in out.outer_iter_mut().zip(sigmas) {
                let v = self.variance + s * s;
                for (y, m) in row.iter_mut().zip(&self.mean) {
                    *y = (m - *y) / v;
                }
            }
            Ok(out)
        }
    }

    /// One-dimensional Gaussian mixture; each component is widened by `σ²`.
    #[derive(Clone, Debug)]
    pub struct MixtureScore1d {
        pub weights: Vec<f64>,
        pub means: Vec<f64>,
        pub variances: Vec<f64>,
    }

    impl MixtureScore1d {
        fn score_at(&self, y: f64, sigma: f64) -> f64 {
            // Responsibilities in log space for stability far from the modes.
            let logs: Vec<f64> = self
                .weights
                .iter()
                .zip(&self.means)
                .zip(&self.variances)
                .map(|((w, m), v)| {
                    let var = v + sigma * sigma;
                    w.ln() - 0.5 * var.ln() - (y - m) * (y - m) / (2.0 * var)
                })
                .collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let resp: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = resp.iter().sum();
            resp.iter()
                .zip(&self.means)
                .zip(&self.variances)
                .map(|((r, m), v)| r / total * (m - y) / (v + sigma * sigma))
                .sum()
        }
    }

    impl ScoreField for MixtureScore1d {
        fn data_dim(&self) -> usize {
            1
        }

        fn score_batch(&self, ys: ArrayView2<f64>, sigmas: &[f64]) -> Result<Array2<f64>> {
            check_batch(1, &ys, sigmas)?;
            let mut out = ys.to_owned();
            for (mut row, s) in out.outer_iter_mut().zip(sigmas) {
                row[0] = self.score_at(row[0], *s);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::analytic::*;
    use super::*;

    #[test]
    fn zero_field_denoise_is_identity() {
        let f = ZeroScore { dim: 3 };
        assert_eq!(denoise(&f, &[1.0, -2.0, 0.5], 0.7).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn gaussian_posterior_mean() {
        let (mu, tau2, sigma) = (2.0, 1.5, 0.6);
        let f = GaussianScore {
            mean: vec![mu],
            variance: tau2,
        };
        for y in [-1.0, 0.3, 2.0, 4.4] {
            let xhat = denoise(&f, &[y], sigma).unwrap()[0];
            let expected = (tau2 * y + sigma * sigma * mu) / (tau2 + sigma * sigma);
            assert!((xhat - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_score_matches_finite_difference_of_log_density() {
        let m = MixtureScore1d {
            weights: vec![0.3, 0.7],
            means: vec![-2.0, 2.0],
            variances: vec![0.64, 0.64],
        };
        let sigma = 0.6;
        let logf = |y: f64| {
            let v: f64 = 0.64 + sigma * sigma;
            (0.3 * (-(y + 2.0) * (y + 2.0) / (2.0 * v)).exp() + 0.7 * (-(y - 2.0) * (y - 2.0) / (2.0 * v)).exp()).ln()
        };
        for y in [-3.0, -0.5, 0.0, 1.0, 2.5] {
            let fd = (logf(y + 1e-5) - logf(y - 1e-5)) / 2e-5;
            let g = m.score(&[y], sigma).unwrap()[0];
            assert!((g - fd).abs() < 1e-6, "{y}: {g} vs {fd}");
        }
    }

    #[test]
    fn batch_checks() {
        let f = ZeroScore { dim: 2 };
        assert!(f.score(&[0.0], 0.1).is_err());
        assert!(f.score(&[0.0, f64::INFINITY], 0.1).is_err());
        assert!(f.score(&[0.0, 0.0], 0.0).is_err());
    }
}
