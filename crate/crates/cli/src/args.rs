use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frqi_core::data::{ResizeFilter, Split};
use frqi_core::model::{FeatureMode, HeadConfig, ModelConfig, PairingStrategy, Variant};
use frqi_core::train::{GradientMode, OptimizerConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "frqi", version, about = "FRQI image encoding and FRQI-Pairs quantum recurrent classifier")]
pub struct Cli {
    /// Worker threads for batch-parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode an image as an FRQI state; dump amplitudes and the retrieved image.
    Encode(EncodeArgs),
    /// Measure an FRQI state repeatedly and reconstruct the image from counts.
    Sample(SampleArgs),
    /// Train a classifier on MNIST.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an MNIST split.
    Eval(EvalArgs),
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Preprocess a split into an FQP1 angle cache.
    Cache(CacheArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Bilinear,
    Area,
}

impl From<FilterArg> for ResizeFilter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Bilinear => ResizeFilter::Bilinear,
            FilterArg::Area => ResizeFilter::Area,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MnistArgs {
    /// Directory holding the IDX files (plain or .gz).
    #[arg(long, env = "MNIST_DIR")]
    pub mnist_dir: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "bilinear")]
    pub resize_filter: FilterArg,
}

/// Image source: a PGM file, or a sample of the MNIST distribution.
#[derive(Debug, Clone, Args)]
pub struct ImageSource {
    /// Input PGM (P2 or P5).
    #[arg(required_unless_present = "mnist_index", conflicts_with = "mnist_index")]
    pub image: Option<PathBuf>,

    /// Use this sample index of an MNIST split instead of a file.
    #[arg(long)]
    pub mnist_index: Option<usize>,

    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,

    /// Side exponent; the image is resized to 2^n × 2^n.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
    pub n: Option<u32>,

    /// Zero-pad to the enclosing power-of-two square when --n is not given.
    #[arg(long)]
    pub pad: bool,

    #[command(flatten)]
    pub mnist: MnistArgs,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub source: ImageSource,

    #[arg(long, default_value = "encode-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: ImageSource,

    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub shots: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "sample-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    FrqiPairs,
    SingleCell,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Cross,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    /// 2^memory basis-state probabilities.
    Basis,
    /// ⟨Z⟩ of each memory qubit.
    Z,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "frqi-pairs")]
    pub variant: VariantArg,

    #[arg(long, value_enum, default_value = "cross")]
    pub pairing: PairingArg,

    /// Cell repetitions for the naive variant.
    #[arg(long, default_value_t = 2)]
    pub repetitions: usize,

    #[arg(long, default_value_t = 4)]
    pub memory_qubits: usize,

    #[arg(long, default_value_t = 1)]
    pub layers: usize,

    #[arg(long, default_value_t = 3)]
    pub n: u32,

    /// Classify digits 0..classes-1.
    #[arg(long, default_value_t = 10, conflicts_with = "digits")]
    pub classes: usize,

    /// Explicit digit list, e.g. `0,1`; model classes follow this order.
    #[arg(long, value_delimiter = ',')]
    pub digits: Option<Vec<u8>>,

    #[arg(long, value_enum, default_value = "basis")]
    pub feature_mode: FeatureArg,

    /// Add a bias per class to the softmax head.
    #[arg(long)]
    pub bias: bool,
}

impl ModelArgs {
    pub fn digits(&self) -> Vec<u8> {
        self.digits
            .clone()
            .unwrap_or_else(|| (0..self.classes.min(10) as u8).collect())
    }

    pub fn config(&self) -> ModelConfig {
        let variant = match self.variant {
            VariantArg::FrqiPairs => Variant::FrqiPairs {
                pairing: match self.pairing {
                    PairingArg::Cross => PairingStrategy::CrossProduct,
                    PairingArg::Triangular => PairingStrategy::TriangularUnordered,
                },
            },
            VariantArg::SingleCell => Variant::SingleCell,
            VariantArg::Naive => Variant::Naive {
                repetitions: self.repetitions,
            },
        };
        ModelConfig {
            variant,
            memory_qubits: self.memory_qubits,
            deep_layers: self.layers,
            n: self.n,
            num_classes: self.digits.as_ref().map_or(self.classes, Vec::len),
            head: HeadConfig {
                feature_mode: match self.feature_mode {
                    FeatureArg::Basis => FeatureMode::BasisProbabilities,
                    FeatureArg::Z => FeatureMode::PerQubitZ,
                },
                bias: self.bias,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradientArg {
    /// Parameter-shift rules.
    Shift,
    /// Central finite differences.
    Fd,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    /// Separate learning rate for the softmax head (default: --lr).
    #[arg(long)]
    pub head_lr: Option<f64>,

    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,

    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 10)]
    pub epochs: usize,

    #[arg(long, value_enum, default_value = "shift")]
    pub gradient: GradientArg,

    /// Step for --gradient fd.
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,

    /// Keep the training order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
}

impl OptimArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: match self.optimizer {
                OptimizerArg::Adam => OptimizerConfig::Adam {
                    lr: self.lr,
                    beta1: self.beta1,
                    beta2: self.beta2,
                    eps: self.eps,
                },
                OptimizerArg::Sgd => OptimizerConfig::Sgd { lr: self.lr },
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            gradient_mode: match self.gradient {
                GradientArg::Shift => GradientMode::ParameterShift,
                GradientArg::Fd => GradientMode::FiniteDifference { h: self.fd_step },
            },
            shuffle: !self.no_shuffle,
            head_lr: self.head_lr,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Balanced training subset size per class (default: whole split).
    #[arg(long)]
    pub subset_per_class: Option<usize>,

    /// Balanced test subset size per class (default: whole split).
    #[arg(long)]
    pub test_per_class: Option<usize>,

    /// Seed for subset selection.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub optim: OptimArgs,

    #[command(flatten)]
    pub selection: SelectionArgs,

    #[command(flatten)]
    pub mnist: MnistArgs,

    /// Preprocessed training samples (FQP1); replaces MNIST loading for the train split.
    #[arg(long)]
    pub train_cache: Option<PathBuf>,

    /// Preprocessed test samples (FQP1).
    #[arg(long)]
    pub test_cache: Option<PathBuf>,

    /// Seed for initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Independent runs with seeds seed, seed+1, …; metrics are averaged.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,

    #[arg(long, default_value = "runs/latest")]
    pub out_dir: PathBuf,

    /// Print the parameter report and write the initialized checkpoint without training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,

    /// Digit for each model class (default: 0..classes-1).
    #[arg(long, value_delimiter = ',')]
    pub digits: Option<Vec<u8>>,

    /// Balanced subset size per class (default: whole split).
    #[arg(long)]
    pub per_class: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    #[command(flatten)]
    pub mnist: MnistArgs,

    /// Preprocessed samples (FQP1) instead of MNIST.
    #[arg(long)]
    pub cache: Option<PathBuf>,

    /// Confusion-matrix CSV output.
    #[arg(long, default_value = "confusion.csv")]
    pub confusion: PathBuf,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,

    #[arg(long, default_value_t = 3)]
    pub n: u32,

    #[arg(long, value_delimiter = ',')]
    pub digits: Option<Vec<u8>>,

    #[arg(long)]
    pub per_class: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    #[command(flatten)]
    pub mnist: MnistArgs,

    #[arg(long)]
    pub out: PathBuf,
}
