//! Density-to-noise mapping.
//!
//! Densities are min-max normalized, `p_norm = (p - min p) / (max p - min p)`,
//! and mapped inversely onto the noise range:
//! `σ = σ_min + (1 - p_norm)(σ_max - σ_min)`. The densest sample gets `σ_min`,
//! the sparsest `σ_max`. If all densities are equal every sample gets the
//! midpoint of the range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRange {
    min: f64,
    max: f64,
}

impl SigmaRange {
    /// Range used for the synthetic four-position benchmark.
    pub const TOY: SigmaRange = SigmaRange { min: 0.25, max: 0.35 };
    /// Range used for real sequence tasks.
    pub const SEQUENCES: SigmaRange = SigmaRange { min: 0.4, max: 0.6 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min > 0.0 && max > min) {
            return Err(Error::invalid(format!(
                "sigma range needs 0 < min < max, got ({min}, {max})"
            )));
        }
        Ok(SigmaRange { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.min && sigma <= self.max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaAssignment {
    sigmas: Vec<f64>,
    densities: Vec<f64>,
    range: SigmaRange,
}

impl SigmaAssignment {
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn range(&self) -> SigmaRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn distribution(&self) -> SigmaDistribution {
        SigmaDistribution::Empirical(self.sigmas.clone())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_from(&self.sigmas, rng)
    }
}

pub fn assign_sigma(densities: &[f64], range: SigmaRange) -> Result<SigmaAssignment> {
    if densities.is_empty() {
        return Err(Error::EmptyInput("sigma assignment needs at least one density".into()));
    }
    if let Some(bad) = densities.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(if bad.is_finite() {
            Error::invalid(format!("density must be nonnegative, got {bad}"))
        } else {
            Error::NonFinite("densities".into())
        });
    }
    let lo = densities.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Convex-combination form hits both endpoints exactly in floating point.
    let sigmas = densities
        .iter()
        .map(|&p| {
            let norm = if hi > lo { (p - lo) / (hi - lo) } else { 0.5 };
            ((1.0 - norm) * range.max + norm * range.min).clamp(range.min, range.max)
        })
        .collect();
    Ok(SigmaAssignment {
        sigmas,
        densities: densities.to_vec(),
        range,
    })
}

fn sample_from<R: rand::Rng + ?Sized>(values: &[f64], rng: &mut R) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot sample from an empty sigma set".into()));
    }
    Ok(values[rng.random_range(0..values.len())])
}

/// Noise levels available to the sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaDistribution {
    Fixed(f64),
    /// Multiset of training noise levels, resampled uniformly.
    Empirical(Vec<f64>),
}

impl SigmaDistribution {
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            SigmaDistribution::Fixed(s) => Ok(*s),
            SigmaDistribution::Empirical(v) => sample_from(v, rng),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            SigmaDistribution::Fixed(s) => (*s, *s),
            SigmaDistribution::Empirical(v) => (
                v.iter().cloned().fold(f64::INFINITY, f64::min),
                v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }
}

/// Samples `σ` for one draw from an assignment.
pub fn sample_sigma<R: rand::Rng + ?Sized>(assignment: &SigmaAssignment, rng: &mut R) -> Result<f64> {
    assignment.sample(rng)
}

/// Reads a density CSV (`density` column) as written by `fit-density`.
pub fn read_density_csv(path: &std::path::Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "density")
        .ok_or_else(|| Error::Parse {
            source_name: path.display().to_string(),
            record: "header".into(),
            message: "missing `density` column".into(),
        })?;
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            r.get(col).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                record: format!("row {}", i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_sigma_csv(path: &std::path::Path, assignment: &SigmaAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "density", "sigma"])?;
    for (i, (d, s)) in assignment.densities.iter().zip(&assignment.sigmas).enumerate() {
        w.write_record([i.to_string(), format!("{d:e}"), format!("{s}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sigma CSV back into an assignment, checking every σ against `range`.
pub fn read_sigma_assignment(path: &std::path::Path, range: SigmaRange) -> Result<SigmaAssignment> {
    let densities = read_density_csv(path)?;
    let sigmas = read_sigma_csv(path)?;
    if sigmas.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no rows", path.display())));
    }
    if let Some(s) = sigmas.iter().find(|s| !range.contains(**s)) {
        return Err(Error::invalid(format!(
            "sigma {s} in {} lies outside [{}, {}]",
            path.display(),
            range.min,
            range.max
        )));
    }
    Ok(SigmaAssignment {
        sigmas,
        densities,
        range,
    })
}

pub fn read_sigma_csv(path: &std::path::Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "sigma")
        .ok_or_else(|| Error::Parse {
            source_name: path.display().to_string(),
            record: "header".into(),
            message: "missing `sigma` column".into(),
        })?;
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            r.get(col).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                record: format!("row {}", i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        let a = assign_sigma(&[0.1, 5.0, 2.0], SigmaRange::SEQUENCES).unwrap();
        assert_eq!(a.sigmas()[1], 0.4);
        assert_eq!(a.sigmas()[0], 0.6);
        assert!((a.sigmas()[2] - (0.4 + (1.0 - 1.9 / 4.9) * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn default_ranges() {
        assert_eq!((SigmaRange::TOY.min(), SigmaRange::TOY.max()), (0.25, 0.35));
        assert_eq!((SigmaRange::SEQUENCES.min(), SigmaRange::SEQUENCES.max()), (0.4, 0.6));
        assert!(SigmaRange::new(0.5, 0.5).is_err());
        assert!(SigmaRange::new(0.0, 0.5).is_err());
    }

    #[test]
    fn uniform_densities_map_to_midpoint() {
        let a = assign_sigma(&[3.0, 3.0], SigmaRange::SEQUENCES).unwrap();
        assert!(a.sigmas().iter().all(|&s| (s - 0.5).abs() < 1e-15));
    }

    #[test]
    fn errors() {
        assert!(assign_sigma(&[], SigmaRange::TOY).is_err());
        assert!(matches!(assign_sigma(&[1.0, f64::NAN], SigmaRange::TOY), Err(Error::NonFinite(_))));
        assert!(assign_sigma(&[1.0, -1.0], SigmaRange::TOY).is_err());
        let empty = SigmaDistribution::Empirical(vec![]);
        assert!(empty.sample(&mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn single_sample_always_returned() {
        let a = assign_sigma(&[0.7], SigmaRange::TOY).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(sample_sigma(&a, &mut rng).unwrap(), a.sigmas()[0]);
        }
    }

    #[test]
    fn two_value_frequencies() {
        let a = assign_sigma(&[1.0, 0.0], SigmaRange::SEQUENCES).unwrap();
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let low = (0..n).filter(|_| a.sample(&mut rng).unwrap() == 0.4).count();
        let f = low as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    proptest! {
        #[test]
        fn invariants(dens in proptest::collection::vec(0.0f64..100.0, 1..60), scale in 0.01f64..1e3, seed in 0u64..1000) {
            let range = SigmaRange::TOY;
            let a = assign_sigma(&dens, range).unwrap();
            prop_assert!(a.sigmas().iter().all(|&s| range.contains(s)));
            for i in 0..dens.len() {
                for j in 0..dens.len() {
                    if dens[i] > dens[j] {
                        prop_assert!(a.sigmas()[i] <= a.sigmas()[j]);
                    }
                }
            }
            let scaled: Vec<f64> = dens.iter().map(|d| d * scale).collect();
            let b = assign_sigma(&scaled, range).unwrap();
            for (x, y) in a.sigmas().iter().zip(b.sigmas()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let lo = dens.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                let smin = a.sigmas().iter().cloned().fold(f64::INFINITY, f64::min);
                let smax = a.sigmas().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(smin, range.min());
                prop_assert_eq!(smax, range.max());
            }
            let mut rng = rng_from_seed(seed);
            let s = a.sample(&mut rng).unwrap();
            prop_assert!(a.sigmas().contains(&s));
        }
    }
}
