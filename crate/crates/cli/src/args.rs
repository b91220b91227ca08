use std::path::PathBuf;

use apot::{Scheme, SteMode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value, output would overwrite an input)
  3  configuration error (bit width, threshold, scheme combination)
  4  input error (unreadable or malformed input data)
  5  I/O error
  6  arithmetic overflow or training divergence

On success a run manifest is written next to the primary output as
<out>.manifest.json, or to stderr when output goes to stdout. On failure no
output files are written and a JSON error object is printed to stderr.";

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "apot", version, about = "Additive powers-of-two quantization toolkit", after_help = EXIT_CODES)]
pub struct Cli {
    /// Output format for tables and reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Global seed for every random draw.
    #[arg(long, global = true, env = "APOT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Uniform,
    Pot,
    Apot,
}

impl SchemeName {
    pub fn resolve(self, base: u32) -> Scheme {
        match self {
            SchemeName::Uniform => Scheme::Uniform,
            SchemeName::Pot => Scheme::PoT,
            SchemeName::Apot => Scheme::APoT { base_bits: base },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ste {
    Full,
    Clipped,
}

impl From<Ste> for SteMode {
    fn from(s: Ste) -> Self {
        match s {
            Ste::Full => SteMode::Full,
            Ste::Clipped => SteMode::Clipped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Synthetic {
    Clusters,
    Moons,
    Blobs,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Command {
    /// List a level set with per-level powers-of-two decompositions.
    Levels(LevelsArgs),
    /// Fake-quantize a tensor.f32 file.
    Quantize(QuantizeArgs),
    /// Finite-difference checks of the threshold and normalization gradients.
    Gradcheck(GradcheckArgs),
    /// Quantization error analysis of a tensor.f32 file.
    Analyze(AnalyzeArgs),
    /// FixOPS, model size and shift-add counts for a layer table.
    Cost(CostArgs),
    /// Train a small quantized classifier.
    Train(TrainArgs),
    /// Shift-add inference of a checkpoint against its real-valued forward.
    Simulate(SimulateArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeName::Apot)]
    pub scheme: SchemeName,
    /// Bits per additive term (APoT only).
    #[arg(long, default_value_t = 2)]
    pub base: u32,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LevelsArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub bits: u32,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub signed: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct QuantizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub bits: u32,
    #[arg(long)]
    pub alpha: f64,
    /// Signed weight path (the default).
    #[arg(long, conflicts_with = "activations")]
    pub weights: bool,
    /// Unsigned activation path.
    #[arg(long)]
    pub activations: bool,
    /// Normalize weights to zero mean and unit variance before quantizing.
    #[arg(long, conflicts_with = "activations")]
    pub weight_norm: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub bits: u32,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Qem,
    Lloyd,
    Clipcurve,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub bits: u32,
    /// Threshold search minimizing clipping plus projection error (the default).
    #[arg(long, group = "mode")]
    pub qem: bool,
    /// Lloyd-Max levels with as many levels as the signed level set.
    #[arg(long, group = "mode")]
    pub lloyd: bool,
    /// Clipping ratio against the threshold.
    #[arg(long, group = "mode")]
    pub clipcurve: bool,
    /// Normalize the tensor before analysis.
    #[arg(long)]
    pub weight_norm: bool,
    /// Threshold grid size.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl AnalyzeArgs {
    pub fn mode(&self) -> Analysis {
        if self.lloyd {
            Analysis::Lloyd
        } else if self.clipcurve {
            Analysis::Clipcurve
        } else {
            Analysis::Qem
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CostArgs {
    /// Layer table file, or the name of a built-in table (resnet18, resnet34, resnet50).
    #[arg(long)]
    pub net: String,
    #[arg(long)]
    pub wbits: u32,
    #[arg(long)]
    pub abits: u32,
    #[arg(long, value_enum, default_value_t = SchemeName::Apot)]
    pub scheme: SchemeName,
    #[arg(long, default_value_t = 2)]
    pub base: u32,
    /// Bit width of layers tagged first or last; 0 treats them like the rest.
    #[arg(long, default_value_t = 8)]
    pub edge_bits: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// CSV file of `label,f1,...,fn` rows; replaces the synthetic set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Synthetic::Clusters)]
    pub dataset: Synthetic,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Noise standard deviation of the synthetic set.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Feature count (blobs only).
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Class count (blobs only).
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Weight bits; 32 or more trains in full precision.
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    /// Activation bits, defaults to `--bits`.
    #[arg(long)]
    pub abits: Option<u32>,
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr_alpha_w: f64,
    #[arg(long, default_value_t = 0.03)]
    pub lr_alpha_x: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 3.0)]
    pub alpha_w: f64,
    #[arg(long, default_value_t = 8.0)]
    pub alpha_x: f64,
    #[arg(long)]
    pub no_weight_norm: bool,
    #[arg(long, value_enum, default_value_t = Ste::Clipped)]
    pub ste: Ste,
    /// Per-epoch log; stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint path for the trained model.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}
