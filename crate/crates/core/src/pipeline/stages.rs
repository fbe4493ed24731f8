//! File-to-file stage bodies shared by the pipeline runner and the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DataConfig, DensityConfig, DensityMethod, EvalConfig};
use crate::bench::{write_sequences_csv, ModeSets, ToyLandscape, TOY_LENGTH};
use crate::density::{Bandwidth, DensityModel, KdeModel, RffModel};
use crate::error::{Error, Result};
use crate::features::{featurize, featurize_all, read_feature_csv, write_feature_csv, FeatureStandardizer, FeatureVector};
use crate::metrics::{
    edit_distance_novelty, harmonic_mean_scores, intra_diversity, property_distances, top_k, uniqueness,
    MetricReport, QualityScorer, TableQuality,
};
use crate::rng::derive_seed;
use crate::sampler::{sample_batch, write_samples_csv, GeneratedSample, SamplerConfig};
use crate::scorenet::{
    load_checkpoint, save_checkpoint, train, Checkpoint, CheckpointMeta, ScoreNet, SigmaConditioning, SigmaMode,
    SigmaSource, TrainConfig, TrainReport,
};
use crate::seqcore::{load_dataset, InputFormat, LoadOptions, Sequence, SequenceDataset};
use crate::smoothing::{assign_sigma, read_density_csv, read_sigma_assignment, write_sigma_csv, SigmaAssignment, SigmaRange};
use crate::toy::{ToyConfig, ToySetup};
use crate::util::write_atomic;

pub fn load_training_data(path: &Path, data: &DataConfig) -> Result<SequenceDataset> {
    let ds = load_dataset(path, data.format_for(path)?, &data.load_options())?;
    if ds.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no sequences", path.display())));
    }
    Ok(ds)
}

/// Reads generated sequences (`sequence` column) at the layout's full length.
pub fn load_generated(path: &Path, fixed_length: usize) -> Result<Vec<Sequence>> {
    let ds = load_dataset(path, InputFormat::Csv, &LoadOptions::single(fixed_length))?;
    Ok(ds.sequences)
}

pub fn featurize_stage(input: &Path, data: &DataConfig, out: &Path) -> Result<Vec<FeatureVector>> {
    let ds = load_training_data(input, data)?;
    let feats = featurize_all(&ds.sequences)?;
    write_feature_csv(out, &ds.sequences, &feats)?;
    Ok(feats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFit {
    pub standardizer: FeatureStandardizer,
    pub bandwidth: f64,
    pub method: DensityMethod,
}

/// Standardizes features, fits the density and evaluates it at every
/// training point. Writes the model, `index,density` CSV and the fit summary.
pub fn fit_density_stage(
    features_csv: &Path,
    cfg: &DensityConfig,
    seed: u64,
    model_out: &Path,
    densities_out: &Path,
    fit_out: &Path,
) -> Result<Vec<f64>> {
    let feats = read_feature_csv(features_csv)?;
    let standardizer = FeatureStandardizer::fit(&feats)?;
    let x = standardizer.apply_all(&feats);
    let h = match cfg.bandwidth {
        Some(h) => Bandwidth::Fixed(h),
        None => Bandwidth::Scott,
    }
    .resolve(x.nrows(), x.ncols())?;
    let model = match cfg.method {
        DensityMethod::Exact => DensityModel::Exact(KdeModel::fit(x.clone(), h)?),
        DensityMethod::Rff => DensityModel::Rff(RffModel::fit(x.view(), h, cfg.rff_features, seed)?),
    };
    let dens = model.eval_many(x.view())?;
    model.save(model_out)?;
    write_density_csv(densities_out, &dens)?;
    let fit = DensityFit {
        standardizer,
        bandwidth: h,
        method: cfg.method,
    };
    write_atomic(fit_out, serde_json::to_string_pretty(&fit)?.as_bytes())?;
    Ok(dens)
}

pub fn write_density_csv(path: &Path, densities: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "density"])?;
    for (i, d) in densities.iter().enumerate() {
        w.write_record([i.to_string(), format!("{d:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn assign_sigma_stage(densities_csv: &Path, range: SigmaRange, out: &Path) -> Result<SigmaAssignment> {
    let a = assign_sigma(&read_density_csv(densities_csv)?, range)?;
    write_sigma_csv(out, &a)?;
    Ok(a)
}

pub struct TrainInputs<'a> {
    pub data: &'a Path,
    pub data_cfg: &'a DataConfig,
    /// Required for the `dds` sigma mode.
    pub sigma_csv: Option<&'a Path>,
    pub mode: &'a SigmaMode,
    pub range: (f64, f64),
    pub hidden: usize,
    pub train: &'a TrainConfig,
}

/// Trains on the one-hot data and writes the checkpoint and an
/// `epoch,loss` log.
pub fn train_stage(inp: &TrainInputs<'_>, ckpt_out: &Path, log_out: &Path) -> Result<TrainReport> {
    let ds = load_training_data(inp.data, inp.data_cfg)?;
    let x = ds.embeddings()?;
    let assignment = match inp.mode {
        SigmaMode::Dds => {
            let path = inp
                .sigma_csv
                .ok_or_else(|| Error::Config("sigma mode `dds` needs a sigma CSV".into()))?;
            Some(read_sigma_assignment(path, SigmaRange::new(inp.range.0, inp.range.1)?)?)
        }
        _ => None,
    };
    let source = SigmaSource::resolve(inp.mode, x.nrows(), assignment.as_ref(), inp.train.seed)?;
    let cond = SigmaConditioning::from_range(source.range.0, source.range.1);
    let mut net = ScoreNet::new(x.ncols(), inp.hidden, cond, derive_seed(inp.train.seed, "init"));
    let report = train(&mut net, x.view(), &source, inp.train)?;
    let ckpt = Checkpoint {
        net,
        meta: CheckpointMeta {
            seed: inp.train.seed,
            epochs: report.epochs_completed,
            sigma_range: source.range,
            sigma_mode: source.mode.to_string(),
            sigma_distribution: source.distribution,
            loss_history: report.loss_history.clone(),
        },
    };
    save_checkpoint(&ckpt, ckpt_out)?;
    let mut w = csv::Writer::from_path(log_out)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in report.loss_history.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(report)
}

pub fn sample_stage(ckpt: &Path, n: usize, sampler: &SamplerConfig, out: &Path) -> Result<Vec<GeneratedSample>> {
    sampler.validate()?;
    let c = load_checkpoint(ckpt)?;
    let samples = sample_batch(&c.net, &c.meta.sigma_distribution, n, sampler)?;
    write_samples_csv(out, &samples)?;
    Ok(samples)
}

/// Metrics of generated sequences against a reference set. String metrics
/// use gap-stripped residues.
pub fn evaluate_sequences(generated: &[Sequence], reference: &[Sequence], eval: &EvalConfig) -> Result<MetricReport> {
    if generated.is_empty() {
        return Err(Error::EmptyInput("no generated sequences".into()));
    }
    let (kept, quality) = match &eval.quality {
        Some(path) => {
            let table = TableQuality::from_csv(path)?;
            let q = generated.iter().map(|s| table.score(s)).collect::<Result<Vec<f64>>>()?;
            match eval.top_k {
                Some(k) => {
                    let idx = top_k(&q, k);
                    (
                        idx.iter().map(|&i| generated[i].clone()).collect::<Vec<_>>(),
                        Some(idx.iter().map(|&i| q[i]).collect::<Vec<_>>()),
                    )
                }
                None => (generated.to_vec(), Some(q)),
            }
        }
        None if eval.top_k.is_some() => {
            return Err(Error::Config("eval.top_k needs eval.quality scores".into()));
        }
        None => (generated.to_vec(), None),
    };
    let gen_res: Vec<Vec<u8>> = kept.iter().map(Sequence::residues).collect();
    let ref_res: Vec<Vec<u8>> = reference.iter().map(Sequence::residues).collect();
    let scale = if eval.normalized { eval.norm_length as f64 } else { 1.0 };

    // Property distances need at least one residue per sequence.
    let gen_feats = kept
        .iter()
        .filter(|s| !s.residues().is_empty())
        .map(featurize)
        .collect::<Result<Vec<_>>>()?;
    let ref_feats = featurize_all(reference)?;
    let props = if gen_feats.is_empty() {
        None
    } else {
        Some(property_distances(&gen_feats, &ref_feats)?)
    };

    let hm = match &quality {
        Some(q) => Some(harmonic_mean_scores(&gen_res, q, &ref_res, eval.norm_length)?),
        None => None,
    };
    let report = MetricReport {
        n_generated: kept.len(),
        uniqueness: uniqueness(&gen_res)?,
        intra_diversity: if gen_res.len() > 1 { intra_diversity(&gen_res)? / scale } else { 0.0 },
        edit_distance_novelty: edit_distance_novelty(&gen_res, &ref_res)? / scale,
        normalized: eval.normalized,
        wd: props.as_ref().map(|p| p.wd),
        wd_mean: props.as_ref().map(|p| p.wd_mean),
        ks: props.as_ref().map(|p| p.ks),
        l1: None,
        mode_counts: None,
        hm,
        quality_mean: quality.map(|q| q.iter().sum::<f64>() / q.len() as f64),
    };
    report.validate()?;
    Ok(report)
}

pub fn evaluate_stage(
    samples_csv: &Path,
    reference: &Path,
    data: &DataConfig,
    eval: &EvalConfig,
    json_out: &Path,
    csv_out: &Path,
) -> Result<MetricReport> {
    let reference = load_training_data(reference, data)?;
    let generated = load_generated(samples_csv, reference.fixed_length)?;
    let report = evaluate_sequences(&generated, &reference.sequences, eval)?;
    report.write_json(json_out)?;
    report.write_csv(csv_out)?;
    Ok(report)
}

/// Writes `landscape.json`, `toy_train.csv` and `toy_heldout.csv` under `dir`.
pub fn gen_toy_stage(cfg: &ToyConfig, dir: &Path) -> Result<ToySetup> {
    let setup = ToySetup::new(cfg)?;
    setup.landscape.save(&dir.join(TOY_LANDSCAPE))?;
    write_sequences_csv(&dir.join(TOY_TRAIN), &setup.modes.train)?;
    write_sequences_csv(&dir.join(TOY_HELDOUT), &setup.modes.heldout)?;
    Ok(setup)
}

pub const TOY_LANDSCAPE: &str = "landscape.json";
pub const TOY_TRAIN: &str = "toy_train.csv";
pub const TOY_HELDOUT: &str = "toy_heldout.csv";

/// Rebuilds a toy setup from the files written by [`gen_toy_stage`].
pub fn load_toy_setup(dir: &Path) -> Result<ToySetup> {
    let landscape = ToyLandscape::load(&dir.join(TOY_LANDSCAPE))?;
    let read = |name: &str| -> Result<Vec<Sequence>> {
        Ok(load_dataset(&dir.join(name), InputFormat::Csv, &LoadOptions::single(TOY_LENGTH))?.sequences)
    };
    let modes = ModeSets {
        train: read(TOY_TRAIN)?,
        heldout: read(TOY_HELDOUT)?,
    };
    let valid = crate::bench::enumerate_valid(&landscape);
    let lookup = modes.lookup();
    for x in modes.all() {
        if !landscape.is_valid(x)? {
            return Err(Error::Corrupt(format!("mode {x} is below the landscape threshold")));
        }
    }
    if modes.train.len() + modes.heldout.len() != valid.len()
        || valid.iter().any(|x| lookup.classify(&landscape, x).map(|l| l == crate::bench::ModeLabel::FalseMode).unwrap_or(true))
    {
        return Err(Error::Corrupt("mode files do not partition the valid set".into()));
    }
    Ok(ToySetup { landscape, valid, modes })
}
