use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ckan", about = "Train, profile, count and sweep convolutional KAN models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trains one model and optionally saves a checkpoint.
    Train(TrainArgs),
    /// Runs the ablation grid and writes CSV/JSON reports.
    Sweep(SweepArgs),
    /// Measures inference latency.
    Profile(ProfileArgs),
    /// Prints analytic parameter and MAC counts.
    Count(CountArgs),
    /// Prunes a checkpoint channel-wise and fine-tunes it.
    Prune(PruneArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// lenet, lenet-kan, alexnet, alexnet-kan, tabular-cnn or tabular-ckan.
    #[arg(long, default_value = "lenet-kan")]
    pub model: String,
    /// Basis family of KAN layers: bspline or rbf.
    #[arg(long, default_value = "bspline")]
    pub basis: String,
    /// Number of spline intervals (RBF: number of centers).
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 1.0)]
    pub width_mult: f64,
    /// on or off.
    #[arg(long, default_value = "on")]
    pub relu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tabular input features.
    #[arg(long, default_value_t = 100)]
    pub features: usize,
    /// Tabular output labels.
    #[arg(long, default_value_t = 20)]
    pub labels: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Early-stopping patience in epochs; 0 disables.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// MNIST directory, tabular directory (features.csv, targets.csv) or
    /// `synthetic` for generated tabular data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Stratified training subset size.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Output directory for the checkpoint and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep config file, or `default`.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "sweep-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Profile a saved checkpoint instead of a freshly initialized model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub finetune_epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub subset: Option<usize>,
    /// Output checkpoint directory; defaults to `<checkpoint>-pruned`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
