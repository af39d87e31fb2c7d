use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nattr_core::Rule;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "nattr", version, about = "Neuron attribution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Train the reference convolutional network on MNIST.
    Train(TrainArgs),
    /// Write per-neuron scores for test images.
    Attribute(AttributeArgs),
    /// Clamp top neurons and compare the output change with the scores.
    Ablate(AblateArgs),
    /// Time the methods across step counts.
    Bench(BenchArgs),
    /// Run the self-check suites on generated networks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    Right,
    Trapezoid,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Right => Rule::RightRiemann,
            RuleArg::Trapezoid => Rule::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetArg {
    /// Top logit minus the mean logit.
    TopMinusMean,
    /// Every logit separately.
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TestSetArgs {
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of test images to use.
    #[arg(long, default_value_t = 1)]
    pub examples: usize,
    /// Index of the first test image.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "learning-rate", default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long = "batch-size", default_value_t = 32)]
    pub batch_size: usize,
    /// Upper bound on the L2 norm of each batch-mean gradient.
    #[arg(long = "max-grad-norm", default_value_t = 5.0)]
    pub max_grad_norm: f64,
    /// Learning rate at the last batch, as a fraction of the initial one.
    #[arg(long = "final-lr-fraction", default_value_t = 0.1)]
    pub final_lr_fraction: f64,
    /// Training images taken from the start of the training split.
    #[arg(long = "train-count", default_value_t = 5000)]
    pub train_count: usize,
    /// Held-out images taken from the start of the test split.
    #[arg(long = "test-count", default_value_t = 1000)]
    pub test_count: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AttributeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: TestSetArgs,
    #[arg(long, default_value = "conv2")]
    pub layer: String,
    /// Comma-separated method names, or `all`.
    #[arg(long, default_value = "nig", value_delimiter = ',')]
    pub method: Vec<String>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long, value_enum, default_value_t = RuleArg::Right)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = TargetArg::TopMinusMean)]
    pub target: TargetArg,
    /// Input-dimension cap for the conductance oracle.
    #[arg(long = "size-cap", default_value_t = nattr_core::attribution::DEFAULT_SIZE_CAP)]
    pub size_cap: usize,
    /// Process examples concurrently instead of one at a time.
    #[arg(long = "parallel-examples")]
    pub parallel_examples: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: TestSetArgs,
    /// Comma-separated layer names.
    #[arg(long, default_value = "conv1,conv2", value_delimiter = ',')]
    pub layer: Vec<String>,
    /// Comma-separated method names, or `all` (every hidden-layer method).
    #[arg(long, default_value = "all", value_delimiter = ',')]
    pub method: Vec<String>,
    /// Comma-separated step counts for path methods.
    #[arg(long, default_value = "10,100", value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Vec<u64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Right)]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0.10)]
    pub fraction: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Model file; an untrained reference network is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// MNIST directory; random images are used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub examples: usize,
    /// Timed runs per configuration; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value = "conv2")]
    pub layer: String,
    #[arg(
        long,
        default_value = "nig,deeplift-default,deeplift-rescale,gradxdiff",
        value_delimiter = ','
    )]
    pub method: Vec<String>,
    #[arg(long, default_value = "10,20,50,100", value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Vec<u64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Right)]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "parallel-examples")]
    pub parallel_examples: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 20)]
    pub networks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long = "size-cap", default_value_t = nattr_core::attribution::DEFAULT_SIZE_CAP)]
    pub size_cap: usize,
    /// Skip the activation differencing in hidden-layer IG; the suites
    /// should then fail.
    #[arg(long = "inject-fault")]
    pub inject_fault: bool,
    #[command(flatten)]
    pub out: OutArgs,
}
