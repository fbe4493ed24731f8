//! Four-position toy landscape with an exhaustive validity oracle.
//!
//! Every symbol `v` of the 21-letter alphabet gets a score `h(v) ~ U[-4, 4]`.
//! A sequence `x` of length 4 is valid when `H(x) = Σ h(x_i) ≥ τ`. With
//! `21⁴ = 194481` states the valid set is found by brute force. `τ` is set
//! to the `target`-th largest `H`, so the valid set has `target` members up
//! to ties.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::seqcore::{Sequence, ALPHABET_SIZE};

pub const TOY_LENGTH: usize = 4;
pub const TOY_STATES: usize = ALPHABET_SIZE * ALPHABET_SIZE * ALPHABET_SIZE * ALPHABET_SIZE;
pub const DEFAULT_TARGET_MODES: usize = 120;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyLandscape {
    pub hydro: Vec<f64>,
    pub tau: f64,
    pub seed: u64,
}

/// Tokens of the state with lexicographic index `i`.
fn state_tokens(mut i: usize) -> [u8; TOY_LENGTH] {
    let mut t = [0u8; TOY_LENGTH];
    for slot in t.iter_mut().rev() {
        *slot = (i % ALPHABET_SIZE) as u8;
        i /= ALPHABET_SIZE;
    }
    t
}

impl ToyLandscape {
    pub fn new(hydro: Vec<f64>, tau: f64, seed: u64) -> Result<Self> {
        if hydro.len() != ALPHABET_SIZE {
            return Err(Error::DimensionMismatch {
                expected: ALPHABET_SIZE,
                found: hydro.len(),
            });
        }
        if hydro.iter().any(|v| !v.is_finite()) || tau.is_nan() {
            return Err(Error::NonFinite("landscape".into()));
        }
        Ok(ToyLandscape { hydro, tau, seed })
    }

    pub fn score_tokens(&self, tokens: &[u8]) -> f64 {
        tokens.iter().map(|&t| self.hydro[t as usize]).sum()
    }

    pub fn score(&self, x: &Sequence) -> Result<f64> {
        if x.len() != TOY_LENGTH {
            return Err(Error::DimensionMismatch {
                expected: TOY_LENGTH,
                found: x.len(),
            });
        }
        Ok(self.score_tokens(x.tokens()))
    }

    pub fn is_valid(&self, x: &Sequence) -> Result<bool> {
        Ok(self.score(x)? >= self.tau)
    }

    /// `H` for all states in lexicographic order.
    pub fn all_scores(&self) -> Vec<f64> {
        (0..TOY_STATES).map(|i| self.score_tokens(&state_tokens(i))).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let l: ToyLandscape = serde_json::from_slice(&std::fs::read(path)?)?;
        ToyLandscape::new(l.hydro, l.tau, l.seed)
    }
}

/// Draws `h` from `U[-4, 4]` and sets `τ` to the `target_valid`-th largest `H`.
pub fn gen_landscape(seed: u64, target_valid: usize) -> Result<ToyLandscape> {
    if target_valid == 0 || target_valid > TOY_STATES {
        return Err(Error::invalid(format!(
            "target valid count must be in 1..={TOY_STATES}, got {target_valid}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "landscape"));
    let hydro: Vec<f64> = (0..ALPHABET_SIZE).map(|_| rng.random_range(-4.0..=4.0)).collect();
    let mut land = ToyLandscape { hydro, tau: 0.0, seed };
    let mut scores = land.all_scores();
    scores.sort_by(|a, b| b.total_cmp(a));
    land.tau = scores[target_valid - 1];
    Ok(land)
}

/// All valid states in lexicographic token order.
pub fn enumerate_valid(land: &ToyLandscape) -> Vec<Sequence> {
    (0..TOY_STATES)
        .map(state_tokens)
        .filter(|t| land.score_tokens(t) >= land.tau)
        .map(|t| Sequence::new(t.to_vec()).expect("tokens in range"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSets {
    pub train: Vec<Sequence>,
    pub heldout: Vec<Sequence>,
}

impl ModeSets {
    pub fn all(&self) -> impl Iterator<Item = &Sequence> {
        self.train.iter().chain(&self.heldout)
    }

    pub fn lookup(&self) -> ModeLookup {
        ModeLookup {
            train: self.train.iter().cloned().collect(),
            heldout: self.heldout.iter().cloned().collect(),
        }
    }
}

/// Seeded shuffle; the first `⌈fraction · n⌉` modes train.
pub fn split_modes(valid: &[Sequence], fraction: f64, seed: u64) -> Result<ModeSets> {
    if valid.is_empty() {
        return Err(Error::EmptyInput("no valid modes to split".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("train fraction must be in [0, 1], got {fraction}")));
    }
    let mut shuffled = valid.to_vec();
    shuffled.shuffle(&mut rng_from_seed(derive_seed(seed, "split")));
    // Guard against 0.8·n landing a hair above an integer.
    let n_train = ((fraction * valid.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let heldout = shuffled.split_off(n_train.min(valid.len()));
    Ok(ModeSets {
        train: shuffled,
        heldout,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    TrueMode,
    NewMode,
    FalseMode,
}

/// Hash sets over the two mode lists for fast classification.
#[derive(Clone, Debug)]
pub struct ModeLookup {
    train: HashSet<Sequence>,
    heldout: HashSet<Sequence>,
}

impl ModeLookup {
    pub fn classify(&self, land: &ToyLandscape, x: &Sequence) -> Result<ModeLabel> {
        // Length check first so malformed samples are errors, not false modes.
        land.score(x)?;
        Ok(if self.train.contains(x) {
            ModeLabel::TrueMode
        } else if self.heldout.contains(x) {
            ModeLabel::NewMode
        } else {
            ModeLabel::FalseMode
        })
    }
}

pub fn classify_sample(land: &ToyLandscape, modes: &ModeSets, x: &Sequence) -> Result<ModeLabel> {
    modes.lookup().classify(land, x)
}

pub fn write_sequences_csv(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sequence"])?;
    for s in seqs {
        w.write_record([s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
