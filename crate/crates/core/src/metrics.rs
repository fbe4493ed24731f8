//! Evaluation metrics for generated sequence sets.
//!
//! String metrics act on byte strings. The evaluation layer passes
//! gap-stripped residue strings for real sequences and raw token strings
//! for the toy landscape.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{ModeLabel, ModeLookup, ToyLandscape};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM, FEATURE_NAMES};
use crate::seqcore::Sequence;

/// Unit-cost edit distance (insert, delete, substitute).
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    if a.len() < b.len() {
        return levenshtein(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Fraction of distinct items.
pub fn uniqueness<T: AsRef<[u8]>>(set: &[T]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("uniqueness of an empty set".into()));
    }
    let distinct: HashSet<&[u8]> = set.iter().map(|s| s.as_ref()).collect();
    Ok(distinct.len() as f64 / set.len() as f64)
}

/// Mean Levenshtein distance over ordered pairs `i ≠ j`.
pub fn intra_diversity<T: AsRef<[u8]>>(set: &[T]) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::EmptyInput(format!("intra-diversity needs at least 2 sequences, got {n}")));
    }
    let mut total = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += levenshtein(set[i].as_ref(), set[j].as_ref());
        }
    }
    Ok(2.0 * total as f64 / (n * (n - 1)) as f64)
}

/// Distance from one sequence to its nearest neighbour in `reference`.
pub fn nearest_distance<T: AsRef<[u8]>>(x: &[u8], reference: &[T]) -> usize {
    reference
        .iter()
        .map(|s| levenshtein(x, s.as_ref()))
        .min()
        .unwrap_or(usize::MAX)
}

/// Mean nearest-neighbour distance from `generated` to `reference`.
pub fn edit_distance_novelty<T: AsRef<[u8]>, U: AsRef<[u8]>>(generated: &[T], reference: &[U]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("edit-distance novelty needs two nonempty sets".into()));
    }
    let total: usize = generated.iter().map(|x| nearest_distance(x.as_ref(), reference)).sum();
    Ok(total as f64 / generated.len() as f64)
}

/// Novelty divided by a reference length (60 for antimicrobial peptides).
pub fn normalized_edit_distance_novelty<T: AsRef<[u8]>, U: AsRef<[u8]>>(
    generated: &[T],
    reference: &[U],
    length: usize,
) -> Result<f64> {
    if length == 0 {
        return Err(Error::invalid("normalization length must be positive"));
    }
    Ok(edit_distance_novelty(generated, reference)? / length as f64)
}

fn check_histogram(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("{what} histogram has negative or non-finite mass")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} histogram sums to {total}, not 1")));
    }
    Ok(())
}

/// `Σ_x |p(x) − q(x)|` over a shared finite state set.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    check_histogram(p, "generated")?;
    check_histogram(q, "reference")?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// L1 between the empirical law of `samples` and the uniform law on `support`.
/// States outside the support contribute their full sample mass.
pub fn l1_to_uniform(samples: &[Sequence], support: &[Sequence]) -> Result<f64> {
    if samples.is_empty() || support.is_empty() {
        return Err(Error::EmptyInput("L1 needs samples and a nonempty support".into()));
    }
    let mut counts: HashMap<&Sequence, usize> = HashMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    let u = 1.0 / support.len() as f64;
    let support_set: HashSet<&Sequence> = support.iter().collect();
    if support_set.len() != support.len() {
        return Err(Error::invalid("support contains duplicates"));
    }
    let on_support: f64 = support
        .iter()
        .map(|x| (counts.get(x).copied().unwrap_or(0) as f64 / n - u).abs())
        .sum();
    let off_support: f64 = counts
        .iter()
        .filter(|(x, _)| !support_set.contains(*x))
        .map(|(_, c)| *c as f64 / n)
        .sum();
    Ok(on_support + off_support)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub true_modes: usize,
    pub false_modes: usize,
    pub new_modes: usize,
}

/// Counts distinct sampled sequences per label.
pub fn mode_coverage(samples: &[Sequence], modes: &ModeLookup, land: &ToyLandscape) -> Result<ModeCounts> {
    let distinct: HashSet<&Sequence> = samples.iter().collect();
    let mut c = ModeCounts::default();
    for x in distinct {
        match modes.classify(land, x)? {
            ModeLabel::TrueMode => c.true_modes += 1,
            ModeLabel::NewMode => c.new_modes += 1,
            ModeLabel::FalseMode => c.false_modes += 1,
        }
    }
    Ok(c)
}

fn sorted(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("{what} sample is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} sample")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Visits the merged breakpoints of two sorted samples, calling
/// `f(x, F_a(x), F_b(x), next_x)` with right-continuous ECDF values.
fn sweep_ecdfs(a: &[f64], b: &[f64], mut f: impl FnMut(f64, f64, f64, Option<f64>)) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => Some(u.min(v)),
            (Some(&u), None) => Some(u),
            (None, Some(&v)) => Some(v),
            (None, None) => None,
        };
        f(x, i as f64 / na, j as f64 / nb, next);
    }
}

/// 1-d Wasserstein-1 distance `∫ |F_a(x) − F_b(x)| dx`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a, "first")?, sorted(b, "second")?);
    let mut total = 0.0;
    sweep_ecdfs(&a, &b, |x, fa, fb, next| {
        if let Some(nx) = next {
            total += (fa - fb).abs() * (nx - x);
        }
    });
    Ok(total)
}

/// Two-sample Kolmogorov–Smirnov statistic `max_x |F_a(x) − F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a, "first")?, sorted(b, "second")?);
    let mut best = 0.0f64;
    sweep_ecdfs(&a, &b, |_, fa, fb, _| best = best.max((fa - fb).abs()));
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyDistances {
    pub wd: [f64; FEATURE_DIM],
    pub wd_mean: f64,
    pub ks: [f64; FEATURE_DIM],
}

/// Per-property W₁ and KS between generated and reference feature sets.
pub fn property_distances(generated: &[FeatureVector], reference: &[FeatureVector]) -> Result<PropertyDistances> {
    let column = |set: &[FeatureVector], j: usize| set.iter().map(|f| f.to_array()[j]).collect::<Vec<f64>>();
    let mut wd = [0.0; FEATURE_DIM];
    let mut ks = [0.0; FEATURE_DIM];
    for j in 0..FEATURE_DIM {
        let (g, r) = (column(generated, j), column(reference, j));
        wd[j] = wasserstein_1d(&g, &r)?;
        ks[j] = ks_statistic(&g, &r)?;
    }
    Ok(PropertyDistances {
        wd_mean: wd.iter().sum::<f64>() / FEATURE_DIM as f64,
        wd,
        ks,
    })
}

/// `2qd / (q + d)`, zero when both are zero.
pub fn harmonic_mean(quality: f64, diversity: f64) -> Result<f64> {
    for (name, v) in [("quality", quality), ("diversity", diversity)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} score must be in [0, 1], got {v}")));
        }
    }
    let s = quality + diversity;
    Ok(if s == 0.0 { 0.0 } else { 2.0 * quality * diversity / s })
}

pub trait QualityScorer {
    /// Score in `[0, 1]`.
    fn score(&self, seq: &Sequence) -> Result<f64>;
}

/// Toy oracle: 1 for valid states, 0 otherwise.
pub struct ToyQuality<'a>(pub &'a ToyLandscape);

impl QualityScorer for ToyQuality<'_> {
    fn score(&self, seq: &Sequence) -> Result<f64> {
        Ok(if self.0.is_valid(seq)? { 1.0 } else { 0.0 })
    }
}

/// External scores joined by sequence string (`sequence,score` CSV).
#[derive(Clone, Debug, Default)]
pub struct TableQuality {
    scores: HashMap<String, f64>,
}

impl TableQuality {
    pub fn from_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |n: &str| {
            headers.iter().position(|h| h == n).ok_or_else(|| Error::Parse {
                source_name: name.clone(),
                record: "header".into(),
                message: format!("missing `{n}` column"),
            })
        };
        let (sc, qc) = (col("sequence")?, col("score")?);
        let mut scores = HashMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec.get(qc).unwrap_or("").trim().parse().map_err(|_| Error::Parse {
                source_name: name.clone(),
                record: format!("row {}", i + 2),
                message: "bad score".into(),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    source_name: name.clone(),
                    record: format!("row {}", i + 2),
                    message: format!("score {v} outside [0, 1]"),
                });
            }
            scores.insert(rec.get(sc).unwrap_or("").trim().replace('-', ""), v);
        }
        Ok(TableQuality { scores })
    }
}

impl QualityScorer for TableQuality {
    fn score(&self, seq: &Sequence) -> Result<f64> {
        let key = String::from_utf8(seq.residues()).expect("ascii residues");
        self.scores
            .get(&key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no quality score for sequence {key}")))
    }
}

/// Indices of the `k` highest scores, best first; ties keep input order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("mean of an empty list".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MeanSd { mean, sd })
    }
}

/// Per-sequence harmonic mean of quality and length-normalized novelty,
/// summarized over the set. Strings are compared as given.
pub fn harmonic_mean_scores<T: AsRef<[u8]>, U: AsRef<[u8]>>(
    generated: &[T],
    quality: &[f64],
    reference: &[U],
    length: usize,
) -> Result<MeanSd> {
    if generated.len() != quality.len() {
        return Err(Error::DimensionMismatch {
            expected: generated.len(),
            found: quality.len(),
        });
    }
    if reference.is_empty() || length == 0 {
        return Err(Error::invalid("harmonic mean needs a reference set and a positive length"));
    }
    let per: Vec<f64> = generated
        .iter()
        .zip(quality)
        .map(|(s, &q)| {
            let d = (nearest_distance(s.as_ref(), reference) as f64 / length as f64).min(1.0);
            harmonic_mean(q, d)
        })
        .collect::<Result<_>>()?;
    MeanSd::of(&per)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_generated: usize,
    pub uniqueness: f64,
    pub intra_diversity: f64,
    pub edit_distance_novelty: f64,
    /// Whether ID and ED are divided by the reference length.
    pub normalized: bool,
    pub wd: Option<[f64; FEATURE_DIM]>,
    pub wd_mean: Option<f64>,
    pub ks: Option<[f64; FEATURE_DIM]>,
    pub l1: Option<f64>,
    pub mode_counts: Option<ModeCounts>,
    pub hm: Option<MeanSd>,
    pub quality_mean: Option<f64>,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![self.uniqueness, self.intra_diversity, self.edit_distance_novelty];
        vals.extend(self.wd.iter().flatten());
        vals.extend(self.ks.iter().flatten());
        vals.extend(self.l1);
        vals.extend(self.wd_mean);
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric report".into()));
        }
        if !(0.0..=1.0).contains(&self.uniqueness) {
            return Err(Error::invalid("uniqueness outside [0, 1]"));
        }
        Ok(())
    }

    /// Flat `(column, value)` pairs; absent metrics are empty strings.
    pub fn csv_fields(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = vec![
            ("n".to_string(), self.n_generated.to_string()),
            ("U".into(), self.uniqueness.to_string()),
            ("ID".into(), self.intra_diversity.to_string()),
            ("ED".into(), self.edit_distance_novelty.to_string()),
            ("WD".into(), opt(self.wd_mean)),
        ];
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            out.push((format!("wd_{name}"), opt(self.wd.map(|w| w[j]))));
        }
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            out.push((format!("ks_{name}"), opt(self.ks.map(|w| w[j]))));
        }
        out.push(("L1".into(), opt(self.l1)));
        let mc = self.mode_counts;
        out.push(("true_modes".into(), mc.map(|m| m.true_modes.to_string()).unwrap_or_default()));
        out.push(("false_modes".into(), mc.map(|m| m.false_modes.to_string()).unwrap_or_default()));
        out.push(("new_modes".into(), mc.map(|m| m.new_modes.to_string()).unwrap_or_default()));
        out.push(("HM".into(), opt(self.hm.map(|h| h.mean))));
        out.push(("HM_sd".into(), opt(self.hm.map(|h| h.sd))));
        out.push(("quality".into(), opt(self.quality_mean)));
        out.push(("DCS".into(), String::new()));
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fields = self.csv_fields();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(fields.iter().map(|(k, _)| k))?;
        w.write_record(fields.iter().map(|(_, v)| v))?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{enumerate_valid, gen_landscape, split_modes};
    use proptest::prelude::*;

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(b"ABC", b"ABC"), 0);
        assert_eq!(levenshtein(b"A", b""), 1);
        assert_eq!(levenshtein(b"KITTEN", b"SITTING"), 3);
        assert_eq!(levenshtein(b"", b""), 0);
    }

    #[test]
    fn set_metrics() {
        assert_eq!(uniqueness(&["AB", "CD"]).unwrap(), 1.0);
        assert_eq!(uniqueness(&["AA"; 4]).unwrap(), 0.25);
        assert!(uniqueness::<&str>(&[]).is_err());
        assert_eq!(intra_diversity(&["AA", "AA"]).unwrap(), 0.0);
        assert_eq!(intra_diversity(&["A", "B"]).unwrap(), 1.0);
        assert!((intra_diversity(&["AA", "AB", "BB"]).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!(intra_diversity(&["A"]).is_err());
        assert_eq!(edit_distance_novelty(&["AB"], &["AB", "CD"]).unwrap(), 0.0);
        assert_eq!(edit_distance_novelty(&["AAAA"], &["AAAB", "BBBB"]).unwrap(), 1.0);
        assert_eq!(normalized_edit_distance_novelty(&["AAAA"], &["BBBB"], 60).unwrap(), 4.0 / 60.0);
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(l1_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(l1_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(l1_distance(&[0.5, 0.4], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn l1_to_uniform_matches_dense_histogram() {
        let s = |x: &str| x.parse::<Sequence>().unwrap();
        let support = vec![s("AAAA"), s("CCCC")];
        let samples = vec![s("AAAA"), s("AAAA"), s("DDDD"), s("CCCC")];
        // Dense over {AAAA, CCCC, DDDD}: p = (.5, .25, .25), q = (.5, .5, 0).
        let dense = l1_distance(&[0.5, 0.25, 0.25], &[0.5, 0.5, 0.0]).unwrap();
        assert!((l1_to_uniform(&samples, &support).unwrap() - dense).abs() < 1e-12);
    }

    #[test]
    fn mode_coverage_counts_distinct() {
        let land = gen_landscape(4, 40).unwrap();
        let valid = enumerate_valid(&land);
        let modes = split_modes(&valid, 0.8, 1).unwrap();
        let look = modes.lookup();
        let c = mode_coverage(&modes.train, &look, &land).unwrap();
        assert_eq!(c, ModeCounts { true_modes: modes.train.len(), false_modes: 0, new_modes: 0 });
        let mut dup = modes.train.clone();
        dup.extend(modes.train.iter().cloned());
        assert_eq!(mode_coverage(&dup, &look, &land).unwrap(), c);
        let bad = crate::bench::ToyLandscape::new(land.hydro.clone(), land.tau, 0).unwrap();
        let low = (0..crate::bench::TOY_STATES)
            .map(|i| {
                let t = [(i / 9261 % 21) as u8, (i / 441 % 21) as u8, (i / 21 % 21) as u8, (i % 21) as u8];
                Sequence::new(t.to_vec()).unwrap()
            })
            .find(|x| bad.score(x).unwrap() < bad.tau)
            .unwrap();
        assert_eq!(mode_coverage(&[low], &look, &land).unwrap().false_modes, 1);
    }

    #[test]
    fn distribution_distances() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
        assert!(ks_statistic(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn harmonic_mean_examples() {
        assert_eq!(harmonic_mean(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(harmonic_mean(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0).unwrap(), 0.0);
        assert!(harmonic_mean(1.2, 0.3).is_err());
    }

    #[test]
    fn top_k_is_stable() {
        assert_eq!(top_k(&[0.2, 0.9, 0.9, 0.1], 3), vec![1, 2, 0]);
        assert_eq!(top_k(&[0.5], 10), vec![0]);
    }

    #[test]
    fn per_sequence_harmonic_mean() {
        let s = |x: &str| x.parse::<Sequence>().unwrap();
        let generated = vec![s("AAAA--").residues(), s("CCCC--").residues()];
        let reference = vec![b"AAAA".to_vec()];
        let hm = harmonic_mean_scores(&generated, &[1.0, 0.5], &reference, 4).unwrap();
        // Per-sequence: (q=1, d=0) -> 0 and (q=.5, d=1) -> 2/3.
        assert!((hm.mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_csv_has_table_columns() {
        let r = MetricReport::default();
        let cols: Vec<String> = r.csv_fields().into_iter().map(|(k, _)| k).collect();
        for c in ["U", "ID", "ED", "WD", "L1", "HM"] {
            assert!(cols.contains(&c.to_string()));
        }
    }

    fn short_string() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(prop_oneof![Just(b'A'), Just(b'C'), Just(b'D'), Just(b'E')], 0..12)
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(a in short_string(), b in short_string(), c in short_string()) {
            prop_assert_eq!(levenshtein(&a, &a), 0);
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
            prop_assert!(levenshtein(&a, &b) <= a.len().max(b.len()));
        }

        #[test]
        fn distances_symmetric_and_bounded(a in proptest::collection::vec(-10.0f64..10.0, 1..30), b in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
            let w = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((w - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(w >= 0.0);
            let k = ks_statistic(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&k));
            prop_assert_eq!(k, ks_statistic(&b, &a).unwrap());
        }

        #[test]
        fn intra_diversity_permutation_invariant(mut set in proptest::collection::vec(short_string(), 2..8), rot in 0usize..8) {
            let before = intra_diversity(&set).unwrap();
            let r = rot % set.len();
            set.rotate_left(r);
            prop_assert!((intra_diversity(&set).unwrap() - before).abs() < 1e-12);
        }
    }
}
