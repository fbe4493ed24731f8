//! Staged experiment runner.
//!
//! Each stage reads files from the run directory and writes new ones. A
//! stage's cache key hashes its name, its parameters and the checksums of
//! its inputs; when the previous manifest holds the same key and every
//! recorded output is still present with its checksum, the stage is skipped.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{
    edit_distance_novelty, harmonic_mean_scores, intra_diversity, l1_to_uniform, mode_coverage, uniqueness, MetricReport,
    QualityScorer, ToyQuality,
};
use crate::seqcore::Sequence;
use crate::toy::{run_toy, ToyRun, ToySetup};
use crate::util::{file_sha256, write_atomic};
use config::{RunConfig, Task};
use manifest::{outputs_intact, stage_key, ExperimentManifest, RunStatus, StageRecord, TOOL_VERSION};
use stages::*;

pub const CONFIG_FILE: &str = "config.toml";
pub const FEATURES_FILE: &str = "features.csv";
pub const DENSITY_MODEL_FILE: &str = "density.bin";
pub const DENSITIES_FILE: &str = "densities.csv";
pub const DENSITY_FIT_FILE: &str = "density_fit.json";
pub const SIGMA_FILE: &str = "sigma.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const TOY_RUN_FILE: &str = "toy_run.json";
pub const TOY_CURVE_FILE: &str = "toy_curve.csv";

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
}

impl RunOutcome {
    pub fn cached_stages(&self) -> Vec<&str> {
        self.manifest
            .stages
            .iter()
            .filter(|s| s.cached)
            .map(|s| s.name.as_str())
            .collect()
    }
}

struct Runner<'a> {
    dir: &'a Path,
    previous: Option<ExperimentManifest>,
    manifest: ExperimentManifest,
}

impl Runner<'_> {
    /// Runs `body` unless a cached result is valid. `inputs` are absolute or
    /// run-relative paths; `outputs` are file names inside the run directory.
    fn stage(
        &mut self,
        name: &str,
        params: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[&str],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let mut sums = BTreeMap::new();
        for p in inputs {
            let sum = file_sha256(p).map_err(|e| match e {
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(p.clone()),
                other => other,
            });
            sums.insert(p.display().to_string(), sum.map_err(|e| e.in_stage(name))?);
        }
        let key = stage_key(name, &params, &sums);
        if let Some(prev) = self.previous.as_ref().and_then(|m| m.stage(name)) {
            let same_outputs = outputs.iter().all(|o| prev.outputs.contains_key(*o));
            if prev.key == key && same_outputs && outputs_intact(self.dir, prev) {
                let mut rec = prev.clone();
                rec.cached = true;
                self.push(rec)?;
                return Ok(());
            }
        }
        let t0 = Instant::now();
        body().map_err(|e| e.in_stage(name))?;
        let mut out_sums = BTreeMap::new();
        for o in outputs {
            out_sums.insert(o.to_string(), file_sha256(&self.dir.join(o)).map_err(|e| e.in_stage(name))?);
        }
        self.push(StageRecord {
            name: name.to_string(),
            key,
            inputs: sums,
            outputs: out_sums,
            seconds: t0.elapsed().as_secs_f64(),
            cached: false,
        })
    }

    fn push(&mut self, rec: StageRecord) -> Result<()> {
        self.manifest.stages.retain(|s| s.name != rec.name);
        self.manifest.stages.push(rec);
        self.manifest.save(self.dir)
    }
}

/// Runs every stage of `cfg` inside its run directory under `output_root`.
/// With `force`, cached stages are recomputed.
pub fn run_experiment(cfg: &RunConfig, output_root: &Path, force: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.run_dir(output_root);
    std::fs::create_dir_all(&dir)?;
    let started = Instant::now();
    let seeds = cfg.stage_seeds();
    let manifest = ExperimentManifest {
        tool_version: TOOL_VERSION.to_string(),
        config: serde_json::to_value(cfg)?,
        seeds: seeds.clone(),
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_seconds: 0.0,
        status: RunStatus::Running,
        error: None,
        stages: Vec::new(),
    };
    let mut runner = Runner {
        dir: &dir,
        previous: if force { None } else { ExperimentManifest::load(&dir) },
        manifest,
    };
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_toml_string()?.as_bytes())?;
    runner.manifest.save(&dir)?;

    let result = match cfg.task {
        Task::Sequences => run_sequences(cfg, &mut runner),
        Task::Toy => run_toy_task(cfg, &mut runner),
    };
    let mut manifest = runner.manifest;
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    match &result {
        Ok(()) => manifest.status = RunStatus::Complete,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
        }
    }
    manifest.save(&dir)?;
    result.map(|()| RunOutcome { dir, manifest })
}

fn run_sequences(cfg: &RunConfig, r: &mut Runner<'_>) -> Result<()> {
    let dir = r.dir.to_path_buf();
    let at = |f: &str| dir.join(f);
    let seeds = cfg.stage_seeds();
    let train_path = cfg.data.train.clone().ok_or_else(|| Error::Config("data.train is required".into()))?;
    let reference = cfg.data.validation.clone().unwrap_or_else(|| train_path.clone());
    let data_params = serde_json::to_value(&cfg.data)?;

    r.stage("featurize", data_params.clone(), &[train_path.clone()], &[FEATURES_FILE], || {
        featurize_stage(&train_path, &cfg.data, &at(FEATURES_FILE)).map(|_| ())
    })?;

    let dds = matches!(cfg.sigma.mode, crate::scorenet::SigmaMode::Dds);
    if dds {
        r.stage(
            "fit-density",
            json!({"density": cfg.density, "seed": seeds.density}),
            &[at(FEATURES_FILE)],
            &[DENSITY_MODEL_FILE, DENSITIES_FILE, DENSITY_FIT_FILE],
            || {
                fit_density_stage(
                    &at(FEATURES_FILE),
                    &cfg.density,
                    seeds.density,
                    &at(DENSITY_MODEL_FILE),
                    &at(DENSITIES_FILE),
                    &at(DENSITY_FIT_FILE),
                )
                .map(|_| ())
            },
        )?;
        let range = crate::smoothing::SigmaRange::new(cfg.sigma.min, cfg.sigma.max)?;
        r.stage(
            "assign-sigma",
            json!({"min": cfg.sigma.min, "max": cfg.sigma.max}),
            &[at(DENSITIES_FILE)],
            &[SIGMA_FILE],
            || assign_sigma_stage(&at(DENSITIES_FILE), range, &at(SIGMA_FILE)).map(|_| ()),
        )?;
    }

    let train_cfg = crate::scorenet::TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };
    let mut train_inputs = vec![train_path.clone()];
    if dds {
        train_inputs.push(at(SIGMA_FILE));
    }
    let sigma_path = at(SIGMA_FILE);
    r.stage(
        "train",
        json!({"data": data_params, "sigma": cfg.sigma, "model": cfg.model, "train": train_cfg}),
        &train_inputs,
        &[CHECKPOINT_FILE, TRAIN_LOG_FILE],
        || {
            let inp = TrainInputs {
                data: &train_path,
                data_cfg: &cfg.data,
                sigma_csv: dds.then_some(sigma_path.as_path()),
                mode: &cfg.sigma.mode,
                range: (cfg.sigma.min, cfg.sigma.max),
                hidden: cfg.model.hidden,
                train: &train_cfg,
            };
            train_stage(&inp, &at(CHECKPOINT_FILE), &at(TRAIN_LOG_FILE)).map(|_| ())
        },
    )?;

    let sampler = cfg.sample.sampler(seeds.sample);
    r.stage(
        "sample",
        json!({"n": cfg.sample.n, "sampler": sampler}),
        &[at(CHECKPOINT_FILE)],
        &[SAMPLES_FILE],
        || sample_stage(&at(CHECKPOINT_FILE), cfg.sample.n, &sampler, &at(SAMPLES_FILE)).map(|_| ()),
    )?;

    let mut eval_inputs = vec![at(SAMPLES_FILE), reference.clone()];
    if let Some(q) = &cfg.eval.quality {
        eval_inputs.push(q.clone());
    }
    r.stage(
        "evaluate",
        json!({"data": data_params, "eval": cfg.eval}),
        &eval_inputs,
        &[METRICS_JSON, METRICS_CSV],
        || {
            evaluate_stage(&at(SAMPLES_FILE), &reference, &cfg.data, &cfg.eval, &at(METRICS_JSON), &at(METRICS_CSV))
                .map(|_| ())
        },
    )
}

fn run_toy_task(cfg: &RunConfig, r: &mut Runner<'_>) -> Result<()> {
    let dir = r.dir.to_path_buf();
    let at = |f: &str| dir.join(f);
    let toy = cfg.resolved_toy();
    r.stage(
        "gen-toy",
        json!({"landscape_seed": toy.landscape_seed, "target_modes": toy.target_modes, "train_fraction": toy.train_fraction}),
        &[],
        &[TOY_LANDSCAPE, TOY_TRAIN, TOY_HELDOUT],
        || gen_toy_stage(&toy, &dir).map(|_| ()),
    )?;
    let params = json!({
        "sigma_mode": toy.sigma_mode,
        "sigma_range": toy.sigma_range,
        "bandwidth": toy.bandwidth,
        "hidden": toy.hidden,
        "train": toy.train,
        "sampler": toy.sampler,
        "budgets": toy.budgets,
    });
    r.stage(
        "toy-run",
        params,
        &[at(TOY_LANDSCAPE), at(TOY_TRAIN), at(TOY_HELDOUT)],
        &[TOY_RUN_FILE, TOY_CURVE_FILE, SAMPLES_FILE, METRICS_JSON, METRICS_CSV],
        || {
            let setup = load_toy_setup(&dir)?;
            let run = run_toy(&setup, &toy)?;
            write_toy_outputs(&dir, &setup, &run)
        },
    )
}

/// Writes the run summary, the budget curve, the samples and the metric
/// report at the largest budget.
pub fn write_toy_outputs(dir: &Path, setup: &ToySetup, run: &ToyRun) -> Result<()> {
    write_atomic(&dir.join(TOY_RUN_FILE), serde_json::to_string_pretty(run)?.as_bytes())?;
    write_toy_curve(&dir.join(TOY_CURVE_FILE), run)?;
    crate::bench::write_sequences_csv(&dir.join(SAMPLES_FILE), &run.samples)?;
    let report = toy_metric_report(setup, &run.samples)?;
    report.write_json(&dir.join(METRICS_JSON))?;
    report.write_csv(&dir.join(METRICS_CSV))
}

pub fn write_toy_curve(path: &Path, run: &ToyRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["budget", "l1", "true_modes", "false_modes", "new_modes"])?;
    for p in &run.curve {
        w.write_record([
            p.budget.to_string(),
            p.l1.to_string(),
            p.counts.true_modes.to_string(),
            p.counts.false_modes.to_string(),
            p.counts.new_modes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Toy metrics over raw token strings: novelty against the training modes,
/// quality as validity under the landscape, L1 and mode counts over `samples`.
pub fn toy_metric_report(setup: &ToySetup, samples: &[Sequence]) -> Result<MetricReport> {
    let land = &setup.landscape;
    let gen: Vec<&[u8]> = samples.iter().map(|s| s.tokens()).collect();
    let reference: Vec<&[u8]> = setup.modes.train.iter().map(|s| s.tokens()).collect();
    let scorer = ToyQuality(land);
    let quality = samples.iter().map(|s| scorer.score(s)).collect::<Result<Vec<f64>>>()?;
    let report = MetricReport {
        n_generated: gen.len(),
        uniqueness: uniqueness(&gen)?,
        intra_diversity: if gen.len() > 1 { intra_diversity(&gen)? } else { 0.0 },
        edit_distance_novelty: edit_distance_novelty(&gen, &reference)?,
        normalized: false,
        wd: None,
        wd_mean: None,
        ks: None,
        l1: Some(l1_to_uniform(samples, &setup.valid)?),
        mode_counts: Some(mode_coverage(samples, &setup.modes.lookup(), land)?),
        hm: Some(harmonic_mean_scores(&gen, &quality, &reference, crate::bench::TOY_LENGTH)?),
        quality_mean: Some(quality.iter().sum::<f64>() / quality.len() as f64),
    };
    report.validate()?;
    Ok(report)
}
