//! End-to-end experiment on the toy landscape: σ assignment in one-hot
//! space, training, walk–jump sampling, and mode bookkeeping as a function
//! of the sample budget.

use serde::{Deserialize, Serialize};

use crate::bench::{enumerate_valid, gen_landscape, split_modes, ModeSets, ToyLandscape};
use crate::density::{Bandwidth, KdeModel};
use crate::error::{Error, Result};
use crate::metrics::{l1_to_uniform, mode_coverage, ModeCounts};
use crate::rng::derive_seed;
use crate::sampler::{sample_batch, SamplerConfig, TOY_STEPS};
use crate::scorenet::{train, ScoreNet, SigmaConditioning, SigmaMode, SigmaSource, TrainConfig, TOY_HIDDEN};
use crate::seqcore::{encode_batch, Sequence};
use crate::smoothing::{assign_sigma, SigmaAssignment, SigmaRange};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub landscape_seed: u64,
    pub target_modes: usize,
    pub train_fraction: f64,
    /// Filled from the run's `[sigma]` section.
    #[serde(skip)]
    pub sigma_mode: SigmaMode,
    #[serde(skip)]
    pub sigma_range: (f64, f64),
    pub bandwidth: Option<f64>,
    /// Filled from the run's `[model]` section.
    #[serde(skip)]
    pub hidden: usize,
    /// Filled from the run's `[train]` section.
    #[serde(skip)]
    pub train: TrainConfig,
    /// Filled from the run's `[sample]` section.
    #[serde(skip)]
    pub sampler: SamplerConfig,
    /// Sample budgets; each is a prefix of the largest one.
    pub budgets: Vec<usize>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            landscape_seed: 1,
            target_modes: crate::bench::DEFAULT_TARGET_MODES,
            train_fraction: crate::bench::DEFAULT_TRAIN_FRACTION,
            sigma_mode: SigmaMode::Dds,
            sigma_range: (SigmaRange::TOY.min(), SigmaRange::TOY.max()),
            bandwidth: None,
            hidden: TOY_HIDDEN,
            train: TrainConfig {
                batch_size: 16,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig {
                steps: TOY_STEPS,
                ..SamplerConfig::default()
            },
            budgets: vec![100, 250, 500, 1000, 2000],
        }
    }
}

impl ToyConfig {
    /// Derives the training and sampling seeds from one run seed.
    pub fn seeded(&self, seed: u64) -> ToyConfig {
        let mut c = self.clone();
        c.train.seed = derive_seed(seed, "train");
        c.sampler.seed = derive_seed(seed, "sample");
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: usize,
    pub l1: f64,
    pub counts: ModeCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRun {
    pub train_seed: u64,
    pub sample_seed: u64,
    pub sigma_mode: String,
    pub n_valid: usize,
    pub n_train: usize,
    pub n_heldout: usize,
    pub tau: f64,
    pub final_loss: f64,
    pub curve: Vec<BudgetPoint>,
    /// Decoded samples of the largest budget, in chain order.
    #[serde(skip)]
    pub samples: Vec<Sequence>,
}

/// Landscape and mode split shared by every seed of a sweep.
pub struct ToySetup {
    pub landscape: ToyLandscape,
    pub valid: Vec<Sequence>,
    pub modes: ModeSets,
}

impl ToySetup {
    pub fn new(config: &ToyConfig) -> Result<Self> {
        let landscape = gen_landscape(config.landscape_seed, config.target_modes)?;
        let valid = enumerate_valid(&landscape);
        let modes = split_modes(&valid, config.train_fraction, config.landscape_seed)?;
        Ok(ToySetup { landscape, valid, modes })
    }
}

/// Exact KDE on the one-hot training modes, mapped into `range`.
pub fn toy_sigma_assignment(train: &[Sequence], range: SigmaRange, bandwidth: Option<f64>) -> Result<SigmaAssignment> {
    let x = encode_batch(train)?;
    let bw = match bandwidth {
        Some(h) => Bandwidth::Fixed(h),
        None => Bandwidth::Scott,
    }
    .resolve(x.nrows(), x.ncols())?;
    let kde = KdeModel::fit(x.clone(), bw)?;
    // Log densities keep 84-d values well away from underflow; the map only
    // needs their order and relative spacing, so exponentiate after shifting.
    let logs = x
        .outer_iter()
        .map(|r| kde.log_density(r.as_slice().expect("contiguous")))
        .collect::<Result<Vec<f64>>>()?;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    assign_sigma(&dens, range)
}

/// One training run and sample sweep. The network initialization, the
/// uniform-mode σ draw and training use `config.train.seed`; sampling uses
/// `config.sampler.seed`.
pub fn run_toy(setup: &ToySetup, config: &ToyConfig) -> Result<ToyRun> {
    if config.budgets.is_empty() {
        return Err(Error::Config("at least one sample budget is required".into()));
    }
    let range = SigmaRange::new(config.sigma_range.0, config.sigma_range.1)?;
    let train_seqs = &setup.modes.train;
    let x = encode_batch(train_seqs)?;

    let assignment = match config.sigma_mode {
        SigmaMode::Dds => Some(toy_sigma_assignment(train_seqs, range, config.bandwidth)?),
        _ => None,
    };
    let source = SigmaSource::resolve(
        &config.sigma_mode,
        x.nrows(),
        assignment.as_ref(),
        derive_seed(config.train.seed, "sigma"),
    )?;
    let cond = SigmaConditioning::from_range(source.range.0, source.range.1);
    let mut net = ScoreNet::new(x.ncols(), config.hidden, cond, derive_seed(config.train.seed, "init"));
    let report = train(&mut net, x.view(), &source, &config.train)?;

    let max_budget = *config.budgets.iter().max().expect("nonempty");
    let samples = sample_batch(&net, &source.distribution, max_budget, &config.sampler)?;
    let seqs: Vec<Sequence> = samples.into_iter().map(|s| s.sequence).collect();

    let lookup = setup.modes.lookup();
    let mut budgets = config.budgets.clone();
    budgets.sort_unstable();
    let curve = budgets
        .iter()
        .map(|&b| {
            let prefix = &seqs[..b];
            Ok(BudgetPoint {
                budget: b,
                l1: l1_to_uniform(prefix, &setup.valid)?,
                counts: mode_coverage(prefix, &lookup, &setup.landscape)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ToyRun {
        train_seed: config.train.seed,
        sample_seed: config.sampler.seed,
        sigma_mode: config.sigma_mode.to_string(),
        n_valid: setup.valid.len(),
        n_train: setup.modes.train.len(),
        n_heldout: setup.modes.heldout.len(),
        tau: setup.landscape.tau,
        final_loss: *report.loss_history.last().expect("at least one epoch"),
        curve,
        samples: seqs,
    })
}
