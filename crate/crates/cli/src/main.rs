//! `dds`: command-line front end for the density-dependent smoothing pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dds::pipeline::config::{
    default_output_root, DataConfig, DensityConfig, DensityMethod, EvalConfig, Layout, RunConfig, OUTPUT_ROOT_ENV,
};
use dds::pipeline::stages::{
    assign_sigma_stage, evaluate_stage, featurize_stage, fit_density_stage, gen_toy_stage, load_generated,
    load_toy_setup, sample_stage, train_stage, TrainInputs,
};
use dds::pipeline::{report::emit_report, run_experiment, toy_metric_report};
use dds::sampler::SamplerConfig;
use dds::scorenet::{AdamConfig, SigmaMode, TrainConfig, DEFAULT_HIDDEN};
use dds::seqcore::{write_fasta, InputFormat};
use dds::smoothing::SigmaRange;
use dds::toy::ToyConfig;

#[derive(Parser)]
#[command(name = "dds", version, about = "Density-dependent smoothing for discrete sequence generation")]
struct Cli {
    /// Root for run directories and reports.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy landscape and its train/held-out mode files.
    GenToy(GenToyArgs),
    /// Compute the six biophysical features per sequence.
    Featurize(FeaturizeArgs),
    /// Fit a Gaussian KDE (exact or random Fourier features) on features.
    FitDensity(FitDensityArgs),
    /// Map densities to per-sample noise levels.
    AssignSigma(AssignSigmaArgs),
    /// Train the noise-conditioned score network.
    Train(TrainArgs),
    /// Generate sequences by walk–jump sampling.
    Sample(SampleArgs),
    /// Score generated sequences against a reference set.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a config file or preset.
    Run(RunArgs),
    /// Aggregate finished runs into tables and plots.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// `single` (one chain) or `paired` (heavy + light chains).
    #[arg(long, value_enum, default_value = "single")]
    layout: LayoutArg,
    /// Padded length for single-chain data.
    #[arg(long, default_value_t = 60)]
    length: usize,
    #[arg(long, default_value_t = dds::seqcore::HEAVY_CHAIN_LENGTH)]
    heavy_length: usize,
    #[arg(long, default_value_t = dds::seqcore::LIGHT_CHAIN_LENGTH)]
    light_length: usize,
    /// Drop repeated sequences, keeping the first.
    #[arg(long)]
    dedup: bool,
}

impl DataArgs {
    fn config(&self) -> DataConfig {
        DataConfig {
            format: self.format.map(|f| f.as_str().to_string()),
            layout: match self.layout {
                LayoutArg::Single => Layout::Single,
                LayoutArg::Paired => Layout::Paired,
            },
            length: self.length,
            heavy_length: self.heavy_length,
            light_length: self.light_length,
            dedup: self.dedup,
            ..DataConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Fasta,
}

impl FormatArg {
    fn as_str(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Fasta => "fasta",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Single,
    Paired,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Rff,
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Target size of the valid set (ties may add a few).
    #[arg(long, default_value_t = dds::bench::DEFAULT_TARGET_MODES)]
    target: usize,
    #[arg(long, default_value_t = dds::bench::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitDensityArgs {
    /// Feature CSV written by `featurize`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Fixed bandwidth; Scott's rule when omitted.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    rff_features: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Density model file.
    #[arg(long)]
    out: PathBuf,
    /// Per-row density CSV; defaults to `<out>.densities.csv`.
    #[arg(long)]
    densities: Option<PathBuf>,
}

#[derive(Args)]
struct AssignSigmaArgs {
    #[arg(long)]
    densities: PathBuf,
    #[arg(long, default_value_t = SigmaRange::SEQUENCES.min())]
    sigma_min: f64,
    #[arg(long, default_value_t = SigmaRange::SEQUENCES.max())]
    sigma_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training sequences (CSV or FASTA).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    data_opts: DataArgs,
    /// σ CSV from `assign-sigma`; required for `--sigma-mode dds`.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// dds, fixed:<v> or uniform:<lo>,<hi>.
    #[arg(long, default_value = "dds")]
    sigma_mode: SigmaMode,
    #[arg(long, default_value_t = SigmaRange::SEQUENCES.min())]
    sigma_min: f64,
    #[arg(long, default_value_t = SigmaRange::SEQUENCES.max())]
    sigma_max: f64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint file.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Absolute step size; overrides `--delta-scale`.
    #[arg(long)]
    delta: Option<f64>,
    /// Step size as a multiple of σ².
    #[arg(long, default_value_t = 0.5)]
    delta_scale: f64,
    #[arg(long, default_value_t = dds::sampler::SEQUENCE_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.csv` (sequence, sigma, chain_id) or `.fasta`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Generated sequences (`sequence` column).
    #[arg(long)]
    samples: PathBuf,
    /// Validation or training set for novelty and property distances.
    #[arg(long, required_unless_present = "toy")]
    reference: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Toy directory from `gen-toy`; switches to toy metrics.
    #[arg(long, conflicts_with = "reference")]
    toy: Option<PathBuf>,
    /// Divide ID and ED by `--norm-length`.
    #[arg(long)]
    normalized: bool,
    #[arg(long, default_value_t = 60)]
    norm_length: usize,
    /// `sequence,score` CSV with scores in [0, 1].
    #[arg(long)]
    quality: Option<PathBuf>,
    /// Keep the best k sequences by quality before scoring.
    #[arg(long, requires = "quality")]
    top_k: Option<usize>,
    /// Metric report JSON.
    #[arg(long)]
    out: PathBuf,
    /// One-row CSV; defaults to the JSON path with a `.csv` extension.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; unset keys fall back to the preset named by its `task`.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// `toy` or `sequences`.
    #[arg(long)]
    preset: Option<String>,
    /// Run once per seed, e.g. `--seeds 1,2,3,4,5`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Repeat to sweep noise modes: `--sigma-mode dds --sigma-mode fixed:1.0`.
    #[arg(long)]
    sigma_mode: Vec<SigmaMode>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    validation_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Padded length for single-chain data.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum)]
    density: Option<MethodArg>,
    /// Run directory (relative to the output root); a seed suffix is added for sweeps.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Recompute every stage even when cached outputs are valid.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, or parents of run directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output directory; defaults to `<output-root>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors that map to exit code 2.
fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<dds::Error>(),
            Some(dds::Error::Config(_)) | Some(dds::Error::InvalidParameter(_))
        )
    }) && !e.chain().any(|c| matches!(c.downcast_ref::<dds::Error>(), Some(dds::Error::Stage { .. })))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 3 })
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dispatch(cli: Cli) -> Result<()> {
    let root = cli.output_root.clone().unwrap_or_else(default_output_root);
    match cli.command {
        Command::GenToy(a) => {
            std::fs::create_dir_all(&a.out)?;
            let cfg = ToyConfig {
                landscape_seed: a.seed,
                target_modes: a.target,
                train_fraction: a.train_fraction,
                ..ToyConfig::default()
            };
            let setup = gen_toy_stage(&cfg, &a.out)?;
            println!(
                "tau {:.4}: {} valid modes ({} train, {} held out) in {}",
                setup.landscape.tau,
                setup.valid.len(),
                setup.modes.train.len(),
                setup.modes.heldout.len(),
                a.out.display()
            );
        }
        Command::Featurize(a) => {
            let feats = featurize_stage(&a.input, &a.data.config(), &a.out)?;
            println!("{} sequences featurized into {}", feats.len(), a.out.display());
        }
        Command::FitDensity(a) => {
            let cfg = DensityConfig {
                method: match a.method {
                    MethodArg::Exact => DensityMethod::Exact,
                    MethodArg::Rff => DensityMethod::Rff,
                },
                bandwidth: a.bandwidth,
                rff_features: a.rff_features,
            };
            let dens_path = a.densities.clone().unwrap_or_else(|| sibling(&a.out, ".densities.csv"));
            let fit_path = sibling(&a.out, ".fit.json");
            let dens = fit_density_stage(&a.features, &cfg, a.seed, &a.out, &dens_path, &fit_path)?;
            println!("{} densities written to {}", dens.len(), dens_path.display());
        }
        Command::AssignSigma(a) => {
            let range = SigmaRange::new(a.sigma_min, a.sigma_max)?;
            let s = assign_sigma_stage(&a.densities, range, &a.out)?;
            println!("{} sigmas in [{}, {}] written to {}", s.len(), range.min(), range.max(), a.out.display());
        }
        Command::Train(a) => {
            let train = TrainConfig {
                epochs: a.epochs,
                batch_size: a.batch,
                seed: a.seed,
                optimizer: AdamConfig {
                    lr: a.lr,
                    weight_decay: a.weight_decay,
                    ..AdamConfig::default()
                },
            };
            let data_cfg = a.data_opts.config();
            let inp = TrainInputs {
                data: &a.data,
                data_cfg: &data_cfg,
                sigma_csv: a.sigma.as_deref(),
                mode: &a.sigma_mode,
                range: (a.sigma_min, a.sigma_max),
                hidden: a.hidden,
                train: &train,
            };
            let log = a.log.clone().unwrap_or_else(|| sibling(&a.out, ".loss.csv"));
            let report = train_stage(&inp, &a.out, &log)?;
            println!(
                "trained {} epochs, final loss {:.6}; checkpoint {}",
                report.epochs_completed,
                report.loss_history.last().copied().unwrap_or(f64::NAN),
                a.out.display()
            );
        }
        Command::Sample(a) => {
            let cfg = SamplerConfig {
                delta_scale: a.delta_scale,
                delta: a.delta,
                steps: a.steps,
                seed: a.seed,
                snapshots: false,
            };
            let fasta = matches!(InputFormat::from_path(&a.out), Some(InputFormat::Fasta));
            let csv_out = if fasta { sibling(&a.out, ".csv") } else { a.out.clone() };
            let samples = sample_stage(&a.checkpoint, a.n, &cfg, &csv_out)?;
            if fasta {
                let seqs: Vec<_> = samples.iter().map(|s| s.sequence.clone()).collect();
                write_fasta(&a.out, &seqs)?;
            }
            println!("{} sequences written to {}", samples.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let csv_out = a.csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
            let report = if let Some(toy) = &a.toy {
                let setup = load_toy_setup(toy)?;
                let samples = load_generated(&a.samples, dds::bench::TOY_LENGTH)?;
                let r = toy_metric_report(&setup, &samples)?;
                r.write_json(&a.out)?;
                r.write_csv(&csv_out)?;
                r
            } else {
                let eval = EvalConfig {
                    normalized: a.normalized,
                    norm_length: a.norm_length,
                    quality: a.quality.clone(),
                    top_k: a.top_k,
                };
                let reference = a.reference.as_ref().expect("clap enforces --reference");
                evaluate_stage(&a.samples, reference, &a.data.config(), &eval, &a.out, &csv_out)?
            };
            for (k, v) in report.csv_fields().into_iter().filter(|(_, v)| !v.is_empty()) {
                println!("{k:>24} {v}");
            }
        }
        Command::Run(a) => run(a, &root)?,
        Command::Report(a) => {
            let out = a.out.unwrap_or_else(|| root.join("report"));
            for f in emit_report(&a.runs, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn run(a: RunArgs, root: &Path) -> Result<()> {
    let mut base = match (&a.config, &a.preset) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(dds::Error::Config("run needs --config or --preset".into()).into()),
    };
    // Flags override the file, which overrides the preset defaults.
    if let Some(v) = a.sigma_min {
        base.sigma.min = v;
    }
    if let Some(v) = a.sigma_max {
        base.sigma.max = v;
    }
    if let Some(p) = &a.train_data {
        base.data.train = Some(p.clone());
    }
    if let Some(p) = &a.validation_data {
        base.data.validation = Some(p.clone());
    }
    if let Some(l) = a.layout {
        base.data.layout = match l {
            LayoutArg::Single => Layout::Single,
            LayoutArg::Paired => Layout::Paired,
        };
    }
    if let Some(v) = a.length {
        base.data.length = v;
    }
    if let Some(v) = a.epochs {
        base.train.epochs = v;
    }
    if let Some(v) = a.batch {
        base.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        base.train.optimizer.lr = v;
    }
    if let Some(v) = a.hidden {
        base.model.hidden = v;
    }
    if let Some(v) = a.n {
        base.sample.n = v;
    }
    if let Some(v) = a.steps {
        base.sample.steps = v;
    }
    if a.delta.is_some() {
        base.sample.delta = a.delta;
    }
    if let Some(m) = a.density {
        base.density.method = match m {
            MethodArg::Exact => DensityMethod::Exact,
            MethodArg::Rff => DensityMethod::Rff,
        };
    }
    if let Some(o) = &a.output {
        base.output = Some(o.clone());
    }
    let seeds = if a.seeds.is_empty() { vec![base.seed] } else { a.seeds.clone() };
    let modes = if a.sigma_mode.is_empty() { vec![base.sigma.mode.clone()] } else { a.sigma_mode.clone() };
    let sweep = seeds.len() * modes.len() > 1;
    for mode in &modes {
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.sigma.mode = mode.clone();
            if sweep {
                if let Some(o) = &base.output {
                    cfg.output = Some(o.join(cfg.default_run_name()));
                }
            }
            cfg.validate()?;
            let out = run_experiment(&cfg, root, a.force).with_context(|| format!("run with seed {seed} and sigma mode {mode}"))?;
            let cached = out.cached_stages();
            println!(
                "{} ({:.1}s{})",
                out.dir.display(),
                out.manifest.wall_seconds,
                if cached.is_empty() { String::new() } else { format!(", cached: {}", cached.join(" ")) }
            );
        }
    }
    Ok(())
}
