//! The `dsvb` command-line tool.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cells::CellType;
use crate::dat::{AdversarialScale, BceScope};
use crate::data::{ActuationPattern, ContactMode};
use crate::error::DsvbError;
use crate::trainer::TrainConfig;

pub use commands::run;
pub use manifest::{sha256_file, DatasetHash, RunManifest, MANIFEST_VERSION};

/// Exit status for usage and input errors.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for numerical divergence.
pub const EXIT_DIVERGED: u8 = 3;

pub fn exit_code(err: &DsvbError) -> u8 {
    if err.is_divergence() {
        EXIT_DIVERGED
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "dsvb", version, about = "Sequential variational state estimation with domain-adversarial transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a finger configuration and write train/test CSVs.
    Synth(SynthArgs),
    /// Train DSVB or a recurrent baseline for one or more seeds.
    Train(TrainArgs),
    /// Score checkpoints on labelled test CSVs and write the RMSE table.
    Eval(EvalArgs),
    /// Estimate states (and their std) for a measurement CSV.
    Infer(InferArgs),
    /// Write posterior-mean latent trajectories of two datasets.
    ExportLatents(ExportArgs),
    /// Run a full transfer scenario for all four methods.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Tip,
    Surface,
}

impl From<ModeArg> for ContactMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tip => ContactMode::Tip,
            ModeArg::Surface => ContactMode::Surface,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActuationArg {
    Osc,
    Rand,
}

impl From<ActuationArg> for ActuationPattern {
    fn from(a: ActuationArg) -> Self {
        match a {
            ActuationArg::Osc => ActuationPattern::Oscillatory,
            ActuationArg::Rand => ActuationPattern::Random,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Gru,
    Lstm,
}

impl From<CellArg> for CellType {
    fn from(c: CellArg) -> Self {
        match c {
            CellArg::Gru => CellType::Gru,
            CellArg::Lstm => CellType::Lstm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Dsvb,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    LatentPath,
    EncoderOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Window,
    StepDim,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "osc")]
    pub actuation: ActuationArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub train_len: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_len: usize,
    #[arg(long)]
    pub noise_std: Option<f64>,
}

/// Optimisation settings shared by `train` and `experiment`.
#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Number of seeds; seeds are `seed, seed + 1, …`.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kld_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ss_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 1)]
    pub particles: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden_size: usize,
    /// Use this width for every layer instead of the standard architecture.
    #[arg(long)]
    pub layer_width: Option<usize>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long, value_enum, default_value = "latent-path")]
    pub bce_scope: ScopeArg,
    #[arg(long, value_enum, default_value = "step-dim")]
    pub adversarial_scale: ScaleArg,
}

impl TrainingArgs {
    pub fn config(&self, cell: CellType) -> TrainConfig {
        TrainConfig {
            seq_len: self.seq_len,
            stride: self.stride,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            epochs: self.epochs,
            n_particles: self.particles,
            lambda: self.lambda,
            kld_weight: self.kld_weight,
            ss_weight: self.ss_weight,
            warmup_fraction: self.warmup,
            bce_scope: match self.bce_scope {
                ScopeArg::LatentPath => BceScope::LatentPath,
                ScopeArg::EncoderOnly => BceScope::EncoderOnly,
            },
            adversarial_scale: match self.adversarial_scale {
                ScaleArg::Window => AdversarialScale::Window,
                ScaleArg::StepDim => AdversarialScale::StepDim,
            },
            seeds: (0..self.seeds as u64).map(|i| self.seed + i).collect(),
            cell,
            hidden_size: self.hidden_size,
            layer_width: self.layer_width,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled source-domain training CSV.
    #[arg(long)]
    pub source: PathBuf,
    /// Target-domain training CSV; labels in it are ignored.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gru")]
    pub cell: CellArg,
    #[arg(long, value_enum, default_value = "dsvb")]
    pub method: MethodArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint files or directories searched for `checkpoint.bin`.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub test_source: PathBuf,
    #[arg(long)]
    pub test_target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation chunk length; defaults to the training window length 100.
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
    /// Write latents in the model's normalised units instead of state units.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulator seed for synthetic data.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub train_len: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_len: usize,
    /// Use CSV data instead of the simulator (all four paths required).
    #[arg(long, requires_all = ["source_test", "target_train", "target_test"])]
    pub source_train: Option<PathBuf>,
    #[arg(long)]
    pub source_test: Option<PathBuf>,
    #[arg(long)]
    pub target_train: Option<PathBuf>,
    #[arg(long)]
    pub target_test: Option<PathBuf>,
    /// Methods to run, e.g. `gru,dsvb-gru`. Defaults to all four.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub training: TrainingArgs,
}
