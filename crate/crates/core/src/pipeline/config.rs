use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sampler::{SamplerConfig, SEQUENCE_STEPS, TOY_STEPS};
use crate::scorenet::{SigmaMode, TrainConfig, DEFAULT_HIDDEN, TOY_HIDDEN};
use crate::seqcore::{InputFormat, LoadOptions, SequenceLayout, HEAVY_CHAIN_LENGTH, LIGHT_CHAIN_LENGTH};
use crate::smoothing::SigmaRange;
use crate::toy::ToyConfig;

pub const OUTPUT_ROOT_ENV: &str = "DDS_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Toy,
    Sequences,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Single,
    Paired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    /// Reference set for novelty and property distances; defaults to `train`.
    pub validation: Option<PathBuf>,
    pub format: Option<String>,
    pub layout: Layout,
    pub length: usize,
    pub heavy_length: usize,
    pub light_length: usize,
    pub dedup: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            validation: None,
            format: None,
            layout: Layout::Single,
            length: 60,
            heavy_length: HEAVY_CHAIN_LENGTH,
            light_length: LIGHT_CHAIN_LENGTH,
            dedup: false,
        }
    }
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        let mut o = match self.layout {
            Layout::Single => LoadOptions::single(self.length),
            Layout::Paired => LoadOptions::paired(self.heavy_length, self.light_length),
        };
        o.dedup = self.dedup;
        o
    }

    pub fn layout(&self) -> SequenceLayout {
        self.load_options().layout
    }

    pub fn format_for(&self, path: &Path) -> Result<InputFormat> {
        match &self.format {
            Some(f) => f.parse(),
            None => InputFormat::from_path(path)
                .ok_or_else(|| Error::Config(format!("cannot infer format of {}; set data.format", path.display()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaConfig {
    pub mode: SigmaMode,
    pub min: f64,
    pub max: f64,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            mode: SigmaMode::Dds,
            min: SigmaRange::SEQUENCES.min(),
            max: SigmaRange::SEQUENCES.max(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    Exact,
    Rff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub method: DensityMethod,
    /// Fixed bandwidth; Scott's rule when absent.
    pub bandwidth: Option<f64>,
    pub rff_features: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            method: DensityMethod::Exact,
            bandwidth: None,
            rff_features: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: DEFAULT_HIDDEN }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n: usize,
    pub delta_scale: f64,
    pub delta: Option<f64>,
    pub steps: usize,
    pub snapshots: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        SampleConfig {
            n: 500,
            delta_scale: s.delta_scale,
            delta: s.delta,
            steps: s.steps,
            snapshots: s.snapshots,
        }
    }
}

impl SampleConfig {
    pub fn sampler(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            delta_scale: self.delta_scale,
            delta: self.delta,
            steps: self.steps,
            seed,
            snapshots: self.snapshots,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Divide ID and ED by `norm_length`.
    pub normalized: bool,
    pub norm_length: usize,
    /// `sequence,score` CSV for quality and harmonic mean.
    pub quality: Option<PathBuf>,
    /// Keep only the best `top_k` generated sequences by quality.
    pub top_k: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            normalized: false,
            norm_length: 60,
            quality: None,
            top_k: None,
        }
    }
}

/// Optional per-stage seed overrides; unset stages derive from the master seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub density: Option<u64>,
    pub train: Option<u64>,
    pub sample: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub density: u64,
    pub train: u64,
    pub sample: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    /// Run directory; relative paths resolve against the output root.
    pub output: Option<PathBuf>,
    pub data: DataConfig,
    pub sigma: SigmaConfig,
    pub density: DensityConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
    pub seeds: SeedConfig,
    pub toy: ToyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Sequences,
            seed: 0,
            output: None,
            data: DataConfig::default(),
            sigma: SigmaConfig::default(),
            density: DensityConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            eval: EvalConfig::default(),
            seeds: SeedConfig::default(),
            toy: ToyConfig::default(),
        }
    }
}

impl RunConfig {
    /// Toy benchmark: one-hot KDE, σ ∈ [0.25, 0.35], 500 epochs, T = 100.
    pub fn toy_preset() -> Self {
        RunConfig {
            task: Task::Toy,
            sigma: SigmaConfig {
                mode: SigmaMode::Dds,
                min: SigmaRange::TOY.min(),
                max: SigmaRange::TOY.max(),
            },
            sample: SampleConfig {
                n: 2000,
                steps: TOY_STEPS,
                ..SampleConfig::default()
            },
            model: ModelConfig { hidden: TOY_HIDDEN },
            train: TrainConfig {
                batch_size: 16,
                ..TrainConfig::default()
            },
            ..RunConfig::default()
        }
    }

    /// Real sequences: six-feature KDE, σ ∈ [0.4, 0.6], T = 200.
    pub fn sequences_preset() -> Self {
        let mut c = RunConfig::default();
        c.sample.steps = SEQUENCE_STEPS;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy_preset()),
            "sequences" => Ok(Self::sequences_preset()),
            other => Err(Error::Config(format!("unknown preset `{other}`; expected toy or sequences"))),
        }
    }

    /// Parses TOML on top of the preset selected by its `task` key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = match value.get("task").and_then(|t| t.as_str()) {
            Some("toy") => Self::toy_preset(),
            _ => Self::sequences_preset(),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, value);
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.task == Task::Sequences && self.data.train.is_none() {
            return Err(Error::Config("data.train is required for the sequences task".into()));
        }
        if !matches!(self.sigma.mode, SigmaMode::Fixed(_)) {
            SigmaRange::new(self.sigma.min, self.sigma.max).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.train.validate()?;
        self.sample.sampler(0).validate()?;
        if self.sample.n == 0 {
            return Err(Error::Config("sample.n must be at least 1".into()));
        }
        if self.model.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if self.density.rff_features == 0 {
            return Err(Error::Config("density.rff_features must be at least 1".into()));
        }
        if let Some(h) = self.density.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("density.bandwidth must be positive, got {h}")));
            }
        }
        if self.eval.norm_length == 0 {
            return Err(Error::Config("eval.norm_length must be positive".into()));
        }
        if let Some(f) = &self.data.format {
            f.parse::<InputFormat>().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            master: self.seed,
            density: self.seeds.density.unwrap_or_else(|| derive_seed(self.seed, "density")),
            train: self.seeds.train.unwrap_or_else(|| derive_seed(self.seed, "train")),
            sample: self.seeds.sample.unwrap_or_else(|| derive_seed(self.seed, "sample")),
        }
    }

    /// The toy configuration with the shared sections folded in.
    pub fn resolved_toy(&self) -> ToyConfig {
        let seeds = self.stage_seeds();
        let mut t = self.toy.clone();
        t.hidden = self.model.hidden;
        t.train = TrainConfig {
            seed: seeds.train,
            ..self.train.clone()
        };
        t.sigma_mode = self.sigma.mode.clone();
        t.sigma_range = (self.sigma.min, self.sigma.max);
        t.sampler = self.sample.sampler(seeds.sample);
        if !t.budgets.contains(&self.sample.n) && t.budgets.iter().all(|&b| b < self.sample.n) {
            t.budgets.push(self.sample.n);
        }
        t.budgets.retain(|&b| b <= self.sample.n);
        t
    }

    /// Run directory: explicit `output`, else `<root>/<task>-<sigma>-seed<seed>`.
    pub fn run_dir(&self, output_root: &Path) -> PathBuf {
        match &self.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => output_root.join(p),
            None => output_root.join(self.default_run_name()),
        }
    }

    pub fn default_run_name(&self) -> String {
        let task = match self.task {
            Task::Toy => "toy",
            Task::Sequences => "sequences",
        };
        let sigma: String = self
            .sigma
            .mode
            .to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
            .collect();
        format!("{task}-{sigma}-seed{}", self.seed)
    }
}

/// Default output root from the environment, else `./runs`.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Recursive overlay: tables merge key by key, other values replace.
pub fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        let toy = RunConfig::toy_preset();
        toy.validate().unwrap();
        assert_eq!((toy.sigma.min, toy.sigma.max), (0.25, 0.35));
        assert_eq!(toy.sample.steps, 100);
        let seq = RunConfig::sequences_preset();
        assert_eq!((seq.sigma.min, seq.sigma.max), (0.4, 0.6));
        assert_eq!(seq.sample.steps, 200);
        assert!(seq.validate().is_err(), "sequences need data.train");
    }

    #[test]
    fn toml_overlay_and_unknown_keys() {
        let cfg = RunConfig::from_toml_str("task = \"toy\"\nseed = 3\n[train]\nepochs = 7\n[sigma]\nmode = \"fixed:1.0\"\n").unwrap();
        assert_eq!(cfg.task, Task::Toy);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.sigma.mode, SigmaMode::Fixed(1.0));
        assert_eq!(cfg.sample.n, 2000, "preset value survives");

        let err = RunConfig::from_toml_str("task = \"toy\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_toml_str("task = \"toy\"\n[train]\nepoch = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_toml_str("task = \"toy\"\n[sigma]\nmode = \"sometimes\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn roundtrip_through_toml() {
        let cfg = RunConfig::toy_preset();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn run_names_separate_modes() {
        let mut c = RunConfig::toy_preset();
        c.seed = 4;
        assert_eq!(c.default_run_name(), "toy-dds-seed4");
        c.sigma.mode = SigmaMode::Fixed(0.1);
        assert_eq!(c.default_run_name(), "toy-fixed_0.1-seed4");
        let root = Path::new("/tmp/out");
        assert_eq!(c.run_dir(root), root.join("toy-fixed_0.1-seed4"));
        c.output = Some("x".into());
        assert_eq!(c.run_dir(root), root.join("x"));
    }

    #[test]
    fn stage_seeds_are_independent() {
        let mut a = RunConfig::toy_preset();
        let before = a.stage_seeds();
        a.seeds.sample = Some(99);
        let after = a.stage_seeds();
        assert_eq!(before.train, after.train);
        assert_eq!(before.density, after.density);
        assert_eq!(after.sample, 99);
    }
}
