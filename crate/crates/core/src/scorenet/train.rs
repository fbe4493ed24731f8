use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, ScoreNet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::smoothing::{SigmaAssignment, SigmaDistribution};

/// How training noise levels are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaMode {
    /// Per-sample σ from a density-based assignment.
    Dds,
    /// One global σ for every sample.
    Fixed(f64),
    /// One σ per sample drawn uniformly from `[lo, hi]`, kept for all epochs.
    Uniform { lo: f64, hi: f64 },
}

impl FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid sigma mode `{s}`; expected dds, fixed:<v> or uniform:<lo>,<hi>"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let s = s.trim();
        if s == "dds" {
            return Ok(SigmaMode::Dds);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let v = num(v)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(bad());
            }
            return Ok(SigmaMode::Fixed(v));
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(bad());
            }
            return Ok(SigmaMode::Uniform { lo, hi });
        }
        Err(bad())
    }
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaMode::Dds => write!(f, "dds"),
            SigmaMode::Fixed(v) => write!(f, "fixed:{v}"),
            SigmaMode::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

impl Serialize for SigmaMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SigmaMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Resolved per-sample training noise levels plus the inference law.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSource {
    pub mode: SigmaMode,
    pub per_sample: Vec<f64>,
    pub range: (f64, f64),
    pub distribution: SigmaDistribution,
}

impl SigmaSource {
    /// `assignment` is required for [`SigmaMode::Dds`] and must match the
    /// dataset order; `seed` only affects the uniform mode.
    pub fn resolve(mode: &SigmaMode, n: usize, assignment: Option<&SigmaAssignment>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("training set".into()));
        }
        let (per_sample, range, distribution) = match mode {
            SigmaMode::Dds => {
                let a = assignment.ok_or_else(|| Error::Config("sigma mode `dds` needs a sigma assignment".into()))?;
                if a.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: a.len(),
                    });
                }
                let r = a.range();
                (a.sigmas().to_vec(), (r.min(), r.max()), a.distribution())
            }
            SigmaMode::Fixed(v) => (vec![*v; n], (*v, *v), SigmaDistribution::Fixed(*v)),
            SigmaMode::Uniform { lo, hi } => {
                let mut rng = rng_from_seed(derive_seed(seed, "uniform-sigma"));
                let s: Vec<f64> = (0..n).map(|_| rng.random_range(*lo..=*hi)).collect();
                (s.clone(), (*lo, *hi), SigmaDistribution::Empirical(s))
            }
        };
        Ok(SigmaSource {
            mode: mode.clone(),
            per_sample,
            range,
            distribution,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", o.lr)));
        }
        if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch.
    pub loss_history: Vec<f64>,
    pub epochs_completed: usize,
}

/// Minibatch training of the denoising objective with fresh noise per epoch.
///
/// On a non-finite loss or parameter the network is restored to its state
/// at the start of the failing epoch and a divergence error is returned.
pub fn train(net: &mut ScoreNet, data: ArrayView2<f64>, sigmas: &SigmaSource, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("training set".into()));
    }
    if data.ncols() != net.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.data_dim(),
            found: data.ncols(),
        });
    }
    if sigmas.per_sample.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sigmas.per_sample.len(),
        });
    }

    let mut rng = rng_from_seed(derive_seed(config.seed, "train"));
    let mut opt = Adam::new(config.optimizer, net.n_params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let snapshot = net.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Array2<f64> = data.select(Axis(0), chunk);
            let batch_sigmas: Vec<f64> = chunk.iter().map(|&i| sigmas.per_sample[i]).collect();
            let (loss, grads) = match net.loss_and_grads(batch.view(), &batch_sigmas, &mut rng) {
                Ok(v) => v,
                Err(e) => {
                    *net = snapshot;
                    return Err(Error::TrainingDivergence {
                        epoch,
                        detail: e.to_string(),
                    });
                }
            };
            opt.step(net, &grads);
            total += loss * chunk.len() as f64;
        }
        if !net.all_finite() {
            *net = snapshot;
            return Err(Error::TrainingDivergence {
                epoch,
                detail: "non-finite parameters after update".into(),
            });
        }
        history.push(total / n as f64);
    }
    Ok(TrainReport {
        epochs_completed: history.len(),
        loss_history: history,
    })
}
