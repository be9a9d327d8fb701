use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "timecatcher", version, about = "Volatility-aware variational forecaster")]
pub struct Cli {
    /// Log progress (-v) or debug detail (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model; writes checkpoint, history and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write per-step prediction traces.
    Eval(EvalArgs),
    /// Train and evaluate all six branch combinations.
    Ablate(AblateArgs),
    /// Time forward+backward passes over a range of lookback lengths.
    Bench(BenchArgs),
    /// Write posterior means and samples of the latent vector per window.
    ExportLatent(ExportArgs),
    /// Write a synthetic series with level shifts as CSV.
    Synth(SynthArgs),
}

/// Flags that override configuration values.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelOverrides {
    /// Configuration or manifest (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seeds initialisation, shuffling and sampling.
    #[arg(long, env = "TIMECATCHER_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// KL weight.
    #[arg(long)]
    pub beta_kl: Option<f64>,
    /// Dynamic threshold fraction of the volatility mask.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Sliding window of the volatility mask.
    #[arg(long)]
    pub window: Option<usize>,
    /// EMA smoothing factor for both input and latent decomposition.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub disable_trend: bool,
    #[arg(long)]
    pub disable_latent: bool,
    #[arg(long)]
    pub disable_volatility: bool,
}

impl ModelOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        }
        let m = &mut cfg.model;
        let t = &mut cfg.train;
        if let Some(v) = self.lookback {
            m.lookback = v;
        }
        if let Some(v) = self.horizon {
            m.horizon = v;
        }
        if let Some(v) = self.seed {
            m.seed = v;
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.beta_kl {
            t.kl_weight = v;
        }
        if let Some(v) = self.tau {
            m.tau = v;
        }
        if let Some(v) = self.window {
            m.window = v;
        }
        if let Some(v) = self.alpha {
            m.alpha_x = v;
            m.alpha_z = v;
        }
        if self.disable_trend {
            m.enable_trend = false;
        }
        if self.disable_latent {
            m.enable_latent = false;
        }
        if self.disable_volatility {
            m.enable_volatility = false;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Evaluation worker threads; results are identical for any count.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Supplies the split fractions (and dataset path) of the training run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Must match the checkpoint's horizon if given.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub run: RunArgs,
    /// Independent runs per case, seeded seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Horizons to average over; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "96,192,384,768")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Channels of the random input when no dataset is given.
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Seed of the sampled latent column.
    #[arg(long, env = "TIMECATCHER_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Export z = mu instead of a sample.
    #[arg(long)]
    pub no_sample: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4000)]
    pub length: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 12)]
    pub jumps: usize,
    #[arg(long, default_value_t = 3.0)]
    pub jump_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, env = "TIMECATCHER_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Series CSV; jump metadata goes next to it as `<stem>.jumps.csv`.
    #[arg(long)]
    pub out: PathBuf,
}
