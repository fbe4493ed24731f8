//! Walk–jump sampling.
//!
//! Each chain draws its own σ, starts from `y₀ ~ N(0, σ²I)`, runs `T`
//! unadjusted Langevin steps on the smoothed density
//!
//! ```text
//! y_{t+1} = y_t + δ g(y_t, σ) + sqrt(2δ) ε_t
//! ```
//!
//! and then jumps to `x̂ = y_T + σ² g(y_T, σ)`, decoded by argmax. Chains use
//! independent random streams split from the sampler seed, so a chain's
//! output depends only on its own seed.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed, Rng};
use crate::score::{denoise, ScoreField};
use crate::seqcore::{decode_argmax, Sequence};
use crate::smoothing::SigmaDistribution;

pub const TOY_STEPS: usize = 100;
pub const SEQUENCE_STEPS: usize = 200;

/// Chains advanced together per batched score evaluation.
const CHAIN_BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Step size relative to σ²: `δ = delta_scale · σ²`.
    pub delta_scale: f64,
    /// Absolute step size; overrides `delta_scale` when set.
    pub delta: Option<f64>,
    pub steps: usize,
    pub seed: u64,
    /// Keep every intermediate state (memory heavy).
    pub snapshots: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            delta_scale: 0.5,
            delta: None,
            steps: SEQUENCE_STEPS,
            seed: 0,
            snapshots: false,
        }
    }
}

impl SamplerConfig {
    pub fn step_size(&self, sigma: f64) -> f64 {
        self.delta.unwrap_or(self.delta_scale * sigma * sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        let ok = match self.delta {
            Some(d) => d.is_finite() && d > 0.0,
            None => self.delta_scale.is_finite() && self.delta_scale > 0.0,
        };
        if !ok {
            return Err(Error::Config("sampler step size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub chain_id: usize,
    pub sigma: f64,
    pub y0: Vec<f64>,
    pub y_final: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub chain_id: usize,
    pub sigma: f64,
    pub sequence: Sequence,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be positive, got {sigma}")))
    }
}

/// Runs a block of chains in lockstep; row `i` uses `rngs[i]` and `sigmas[i]`.
fn walk_block<F: ScoreField + ?Sized>(
    field: &F,
    sigmas: &[f64],
    rngs: &mut [Rng],
    config: &SamplerConfig,
) -> Result<(Array2<f64>, Array2<f64>, Vec<Vec<Vec<f64>>>)> {
    let dim = field.data_dim();
    let n = sigmas.len();
    let mut y = Array2::zeros((n, dim));
    for ((mut row, rng), s) in y.outer_iter_mut().zip(rngs.iter_mut()).zip(sigmas) {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = s * z;
        }
    }
    let y0 = y.clone();
    let deltas: Vec<f64> = sigmas.iter().map(|s| config.step_size(*s)).collect();
    let mut snaps = vec![Vec::new(); if config.snapshots { n } else { 0 }];
    for step in 1..=config.steps {
        let g = field.score_batch(y.view(), sigmas).map_err(|e| Error::SamplerDivergence {
            step,
            detail: e.to_string(),
        })?;
        for (((mut row, grow), rng), d) in y.outer_iter_mut().zip(g.outer_iter()).zip(rngs.iter_mut()).zip(&deltas) {
            let noise = (2.0 * d).sqrt();
            for (v, gi) in row.iter_mut().zip(grow.iter()) {
                let e: f64 = StandardNormal.sample(rng);
                *v += d * gi + noise * e;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SamplerDivergence {
                step,
                detail: "non-finite Langevin state".into(),
            });
        }
        if config.snapshots {
            for (i, row) in y.outer_iter().enumerate() {
                snaps[i].push(row.to_vec());
            }
        }
    }
    Ok((y0, y, snaps))
}

/// Langevin walk for one chain at noise level `sigma`; returns `y_T`.
pub fn walk<F: ScoreField + ?Sized>(field: &F, sigma: f64, config: &SamplerConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    config.validate()?;
    check_sigma(sigma)?;
    let mut rngs = [rng.clone()];
    let (_, y, _) = walk_block(field, &[sigma], &mut rngs, config)?;
    *rng = rngs[0].clone();
    Ok(y.row(0).to_vec())
}

/// Empirical-Bayes jump followed by argmax decoding.
pub fn jump<F: ScoreField + ?Sized>(field: &F, y: &[f64], sigma: f64) -> Result<Sequence> {
    check_sigma(sigma)?;
    decode_argmax(&denoise(field, y, sigma)?)
}

/// Runs one chain per seed. The chain's σ is drawn first from its own stream.
pub fn trajectories_with_seeds<F: ScoreField + ?Sized>(
    field: &F,
    sigmas: &SigmaDistribution,
    seeds: &[u64],
    config: &SamplerConfig,
) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let mut out = Vec::with_capacity(seeds.len());
    for (block_idx, block) in seeds.chunks(CHAIN_BLOCK).enumerate() {
        let mut rngs: Vec<Rng> = block.iter().map(|s| rng_from_seed(*s)).collect();
        let chain_sigmas = rngs
            .iter_mut()
            .map(|r| sigmas.sample(r).and_then(|s| check_sigma(s).map(|_| s)))
            .collect::<Result<Vec<f64>>>()?;
        let (y0, y, mut snaps) = walk_block(field, &chain_sigmas, &mut rngs, config)?;
        for (i, ((a, b), s)) in y0.axis_iter(Axis(0)).zip(y.axis_iter(Axis(0))).zip(&chain_sigmas).enumerate() {
            out.push(Trajectory {
                chain_id: block_idx * CHAIN_BLOCK + i,
                sigma: *s,
                y0: a.to_vec(),
                y_final: b.to_vec(),
                snapshots: if config.snapshots { std::mem::take(&mut snaps[i]) } else { Vec::new() },
            });
        }
    }
    Ok(out)
}

pub fn chain_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| child_seed(seed, i)).collect()
}

/// Generates `n` sequences; chain `i` uses stream `child_seed(seed, i)`.
pub fn sample_batch<F: ScoreField + ?Sized>(
    field: &F,
    sigmas: &SigmaDistribution,
    n: usize,
    config: &SamplerConfig,
) -> Result<Vec<GeneratedSample>> {
    let seeds = chain_seeds(config.seed, n);
    decode_trajectories(field, &trajectories_with_seeds(field, sigmas, &seeds, config)?)
}

pub fn decode_trajectories<F: ScoreField + ?Sized>(field: &F, trajectories: &[Trajectory]) -> Result<Vec<GeneratedSample>> {
    trajectories
        .iter()
        .map(|t| {
            Ok(GeneratedSample {
                chain_id: t.chain_id,
                sigma: t.sigma,
                sequence: jump(field, &t.y_final, t.sigma)?,
            })
        })
        .collect()
}

/// CSV with columns `sequence, sigma, chain_id`.
pub fn write_samples_csv(path: &Path, samples: &[GeneratedSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sequence", "sigma", "chain_id"])?;
    for s in samples {
        w.write_record([s.sequence.to_string(), s.sigma.to_string(), s.chain_id.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::analytic::ZeroScore;
    use crate::seqcore::encode_onehot;

    #[test]
    fn zero_field_walk_is_a_gaussian_sum() {
        let field = ZeroScore { dim: 1 };
        let cfg = SamplerConfig {
            delta: Some(0.01),
            steps: 100,
            seed: 11,
            ..SamplerConfig::default()
        };
        let sigma = 0.5;
        let seeds = chain_seeds(cfg.seed, 4000);
        let t = trajectories_with_seeds(&field, &SigmaDistribution::Fixed(sigma), &seeds, &cfg).unwrap();
        let ys: Vec<f64> = t.iter().map(|t| t.y_final[0]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        let expected = sigma * sigma + 2.0;
        assert!(mean.abs() < 0.1);
        assert!((var - expected).abs() / expected < 0.08, "{var}");
    }

    #[test]
    fn single_step_matches_hand_update() {
        let field = ZeroScore { dim: 3 };
        let cfg = SamplerConfig {
            delta: Some(0.2),
            steps: 1,
            ..SamplerConfig::default()
        };
        let mut rng = rng_from_seed(5);
        let y = walk(&field, 0.5, &cfg, &mut rng).unwrap();
        let mut r = rng_from_seed(5);
        let mut draw = || -> f64 { StandardNormal.sample(&mut r) };
        let y0: Vec<f64> = (0..3).map(|_| 0.5 * draw()).collect();
        let expected: Vec<f64> = y0.iter().map(|v| v + 0.4f64.sqrt() * draw()).collect();
        assert_eq!(y, expected);
        let zero = SamplerConfig { steps: 0, ..cfg };
        assert!(walk(&field, 0.5, &zero, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn deterministic_and_exchangeable() {
        let field = ZeroScore { dim: 21 * 3 };
        let dist = SigmaDistribution::Empirical(vec![0.4, 0.5, 0.6]);
        let cfg = SamplerConfig {
            steps: 5,
            ..SamplerConfig::default()
        };
        let seeds = chain_seeds(3, 6);
        let a = trajectories_with_seeds(&field, &dist, &seeds, &cfg).unwrap();
        let b = trajectories_with_seeds(&field, &dist, &seeds, &cfg).unwrap();
        assert_eq!(a, b);
        let mut rev = seeds.clone();
        rev.reverse();
        let c = trajectories_with_seeds(&field, &dist, &rev, &cfg).unwrap();
        for (x, y) in a.iter().zip(c.iter().rev()) {
            assert_eq!(x.y_final, y.y_final);
            assert_eq!(x.sigma, y.sigma);
        }
        assert!(a.iter().all(|t| [0.4, 0.5, 0.6].contains(&t.sigma)));
    }

    #[test]
    fn zero_field_jump_is_plain_argmax() {
        let field = ZeroScore { dim: 21 * 4 };
        let s: Sequence = "ACD-".parse().unwrap();
        let y = encode_onehot(&s).into_values();
        assert_eq!(jump(&field, &y, 0.3).unwrap(), s);
        let out = sample_batch(&field, &SigmaDistribution::Fixed(0.3), 7, &SamplerConfig::default()).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|g| g.sequence.len() == 4 && g.sigma == 0.3));
    }

    #[test]
    fn divergence_reports_step() {
        struct Exploding;
        impl ScoreField for Exploding {
            fn data_dim(&self) -> usize {
                1
            }
            fn score_batch(&self, ys: ndarray::ArrayView2<f64>, _: &[f64]) -> Result<Array2<f64>> {
                Ok(ys.mapv(|v| v * 1e200))
            }
        }
        let cfg = SamplerConfig {
            delta: Some(1.0),
            steps: 50,
            ..SamplerConfig::default()
        };
        match walk(&Exploding, 1.0, &cfg, &mut rng_from_seed(0)) {
            Err(Error::SamplerDivergence { step, .. }) => assert!(step >= 1),
            other => panic!("{other:?}"),
        }
    }
}
