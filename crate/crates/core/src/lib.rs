//! Density-dependent smoothing for discrete sequence generation.
//!
//! The pipeline featurizes sequences, estimates local density in feature
//! space, maps density inversely to a per-sample noise level, trains a
//! noise-conditioned denoising score network, and generates new sequences
//! by walk–jump Langevin sampling. A fully enumerable four-position toy
//! landscape and the usual sequence-generation metrics are included.

pub mod bench;
mod binio;
pub mod density;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod scorenet;
pub mod seqcore;
pub mod smoothing;
pub mod toy;
pub mod util;

pub use error::{Error, Result};
