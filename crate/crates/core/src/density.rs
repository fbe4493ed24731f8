//! Gaussian kernel density estimation, exact and via random Fourier features.
//!
//! Exact estimate at `q` for points `x_1..x_N` in `R^d` with bandwidth `h`:
//!
//! ```text
//! p(q) = (2π)^(-d/2) / (N h^d) · Σ_i exp(-‖q - x_i‖² / (2h²))
//! ```
//!
//! The random-feature map `z(x) = sqrt(2/D) cos(Wx + b)`, with rows of `W`
//! drawn from `N(0, I/h²)` and `b ~ U[0, 2π)`, satisfies
//! `E[z(q)ᵀ z(x)] = exp(-‖q - x‖² / (2h²))`. Averaging `z` over the data once
//! gives `p(q) ≈ (2π)^(-d/2) / h^d · z(q)ᵀ z̄` at `O(D·d)` per query.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const MAGIC: &[u8; 8] = b"DDSDENS\0";
const VERSION: u32 = 1;

fn check_points(points: &ArrayView2<f64>, bandwidth: f64) -> Result<()> {
    if points.nrows() == 0 || points.ncols() == 0 {
        return Err(Error::EmptyInput("density estimation needs at least one point".into()));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density points".into()));
    }
    Ok(())
}

fn check_query(query: &[f64], dim: usize) -> Result<()> {
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: query.len(),
        });
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density query".into()));
    }
    Ok(())
}

/// Log of the Gaussian normalizer `(2π)^(-d/2) h^(-d)`.
fn log_normalizer(dim: usize, bandwidth: f64) -> f64 {
    -(dim as f64) * (0.5 * (2.0 * PI).ln() + bandwidth.ln())
}

/// Scott's rule on standardized data: `h = N^(-1/(d+4))`.
pub fn select_bandwidth(n_points: usize, dim: usize) -> Result<f64> {
    if n_points < 2 {
        return Err(Error::EmptyInput(format!(
            "bandwidth selection needs at least 2 points, got {n_points}"
        )));
    }
    Ok((n_points as f64).powf(-1.0 / (dim as f64 + 4.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Scott,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, n_points: usize, dim: usize) -> Result<f64> {
        match self {
            Bandwidth::Scott => select_bandwidth(n_points, dim),
            Bandwidth::Fixed(h) if h.is_finite() && h > 0.0 => Ok(h),
            Bandwidth::Fixed(h) => Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    points: Array2<f64>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn fit(points: Array2<f64>, bandwidth: f64) -> Result<Self> {
        check_points(&points.view(), bandwidth)?;
        Ok(KdeModel { points, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    /// Log density, evaluated with log-sum-exp so high-dimensional
    /// one-hot spaces do not underflow.
    pub fn log_density(&self, query: &[f64]) -> Result<f64> {
        check_query(query, self.dim())?;
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let exponents: Vec<f64> = self
            .points
            .outer_iter()
            .map(|x| {
                let d2: f64 = x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2 * inv
            })
            .collect();
        let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + exponents.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
        Ok(log_normalizer(self.dim(), self.bandwidth) - (self.n_points() as f64).ln() + lse)
    }

    pub fn density(&self, query: &[f64]) -> Result<f64> {
        Ok(self.log_density(query)?.exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RffModel {
    frequencies: Array2<f64>,
    phases: Array1<f64>,
    mean_feature: Array1<f64>,
    bandwidth: f64,
    n_points: usize,
    seed: u64,
}

impl RffModel {
    pub fn fit(points: ArrayView2<f64>, bandwidth: f64, n_features: usize, seed: u64) -> Result<Self> {
        check_points(&points, bandwidth)?;
        if n_features == 0 {
            return Err(Error::invalid("random feature count must be at least 1"));
        }
        let dim = points.ncols();
        let mut rng = rng_from_seed(seed);
        let frequencies = Array2::from_shape_fn((n_features, dim), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / bandwidth
        });
        let phases = Array1::from_shape_fn(n_features, |_| rng.random_range(0.0..2.0 * PI));
        let mut model = RffModel {
            frequencies,
            phases,
            mean_feature: Array1::zeros(n_features),
            bandwidth,
            n_points: points.nrows(),
            seed,
        };
        let feats = model.features_batch(points);
        model.mean_feature = feats.mean_axis(Axis(0)).expect("nonempty");
        if model.mean_feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("random feature mean".into()));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean_feature(&self) -> ArrayView1<'_, f64> {
        self.mean_feature.view()
    }

    fn features_batch(&self, xs: ArrayView2<f64>) -> Array2<f64> {
        let scale = (2.0 / self.n_features() as f64).sqrt();
        let mut proj = xs.dot(&self.frequencies.t());
        for mut row in proj.outer_iter_mut() {
            row.zip_mut_with(&self.phases, |p, b| *p = scale * (*p + b).cos());
        }
        proj
    }

    /// `z(x) = sqrt(2/D) cos(Wx + b)`.
    pub fn features(&self, x: &[f64]) -> Result<Array1<f64>> {
        check_query(x, self.dim())?;
        let xv = ArrayView1::from(x);
        let scale = (2.0 / self.n_features() as f64).sqrt();
        let mut proj = self.frequencies.dot(&xv);
        proj.zip_mut_with(&self.phases, |p, b| *p = scale * (*p + b).cos());
        Ok(proj)
    }

    /// Kernel-average estimate, clamped at zero.
    pub fn density(&self, query: &[f64]) -> Result<f64> {
        let z = self.features(query)?;
        let k = z.dot(&self.mean_feature);
        Ok((log_normalizer(self.dim(), self.bandwidth).exp() * k).max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityModel {
    Exact(KdeModel),
    Rff(RffModel),
}

impl DensityModel {
    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Exact(m) => m.dim(),
            DensityModel::Rff(m) => m.dim(),
        }
    }

    pub fn bandwidth(&self) -> f64 {
        match self {
            DensityModel::Exact(m) => m.bandwidth(),
            DensityModel::Rff(m) => m.bandwidth(),
        }
    }

    pub fn eval_density(&self, query: &[f64]) -> Result<f64> {
        match self {
            DensityModel::Exact(m) => m.density(query),
            DensityModel::Rff(m) => m.density(query),
        }
    }

    /// Densities for every row of `queries`.
    pub fn eval_many(&self, queries: ArrayView2<f64>) -> Result<Vec<f64>> {
        queries
            .outer_iter()
            .map(|q| self.eval_density(q.as_slice().expect("standard layout")))
            .collect()
    }

    /// Log densities where available; the RFF estimate is logged directly
    /// and can be `-inf` after clamping.
    pub fn eval_log_many(&self, queries: ArrayView2<f64>) -> Result<Vec<f64>> {
        queries
            .outer_iter()
            .map(|q| {
                let q = q.as_slice().expect("standard layout");
                match self {
                    DensityModel::Exact(m) => m.log_density(q),
                    DensityModel::Rff(m) => m.density(q).map(f64::ln),
                }
            })
            .collect()
    }

    /// Binary layout after the common frame:
    /// `kind u8 (0 exact, 1 rff) | d u64 | N u64 | D u64 | h f64 | seed u64 | body`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        match self {
            DensityModel::Exact(m) => {
                w.u8(0);
                w.u64(m.dim() as u64);
                w.u64(m.n_points() as u64);
                w.u64(0);
                w.f64(m.bandwidth);
                w.u64(0);
                w.f64s(m.points.iter());
            }
            DensityModel::Rff(m) => {
                w.u8(1);
                w.u64(m.dim() as u64);
                w.u64(m.n_points as u64);
                w.u64(m.n_features() as u64);
                w.f64(m.bandwidth);
                w.u64(m.seed);
                w.f64s(m.frequencies.iter());
                w.f64s(m.phases.iter());
                w.f64s(m.mean_feature.iter());
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let kind = r.u8()?;
        let dim = r.usize()?;
        let n_points = r.usize()?;
        let n_features = r.usize()?;
        let bandwidth = r.f64()?;
        let seed = r.u64()?;
        let shape_err = |_| Error::Corrupt("inconsistent array shape".into());
        let model = match kind {
            0 => {
                let points = Array2::from_shape_vec((n_points, dim), r.f64s(n_points * dim)?).map_err(shape_err)?;
                DensityModel::Exact(KdeModel::fit(points, bandwidth)?)
            }
            1 => {
                let frequencies =
                    Array2::from_shape_vec((n_features, dim), r.f64s(n_features * dim)?).map_err(shape_err)?;
                let phases = Array1::from(r.f64s(n_features)?);
                let mean_feature = Array1::from(r.f64s(n_features)?);
                DensityModel::Rff(RffModel {
                    frequencies,
                    phases,
                    mean_feature,
                    bandwidth,
                    n_points,
                    seed,
                })
            }
            other => return Err(Error::Corrupt(format!("unknown density model kind {other}"))),
        };
        r.finish()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
