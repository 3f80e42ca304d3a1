use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use minvol_nmf::divergences::Beta;
use minvol_nmf::solver::{Lambda, SolverConfig, Variant};
use minvol_nmf::stft::{WindowKind, WindowSpec};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "minvol", version, about = "Minimum-volume NMF for single-channel source separation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Separate a WAV mixture into rank-one sources.
    Separate(SeparateArgs),
    /// Factorise a synthetic identifiable instance and report recovery.
    SynthDemo(SynthArgs),
    /// BSS metrics of estimated against reference WAV files.
    Eval(EvalArgs),
    /// Per-variant wall time on random data.
    Bench(BenchArgs),
    /// Re-run a recorded manifest and compare its CSV artifacts byte for byte.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Minvol,
    Baseline,
    Sparse,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Minvol => Variant::MinVol,
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Sparse => Variant::Sparse,
        }
    }
}

fn parse_lambda(s: &str) -> Result<Lambda, String> {
    s.parse::<Lambda>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Factorisation rank K.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub rank: u32,
    /// 1 for Kullback-Leibler, 0 for Itakura-Saito.
    #[arg(long, default_value = "1", value_parser = ["0", "1"])]
    pub beta: String,
    /// Volume weight: `auto` or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_lambda)]
    pub lambda: Lambda,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Minvol)]
    pub variant: VariantArg,
    /// ℓ1 weight of the sparse variant.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig, CliError> {
        let beta = if self.beta == "0" { Beta::ITAKURA_SAITO } else { Beta::KULLBACK_LEIBLER };
        let cfg = SolverConfig::new(self.rank as usize)
            .with_beta(beta)
            .with_lambda(self.lambda)
            .with_delta(self.delta)
            .with_max_iters(self.iters)
            .with_seed(self.seed)
            .with_variant(self.variant.into())
            .with_sparse_weight(self.mu);
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SeparateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Hamming window length in samples.
    #[arg(long, default_value_t = 1024)]
    pub window: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl SeparateArgs {
    pub fn window_spec(&self) -> Result<WindowSpec, CliError> {
        WindowSpec::new(self.window, self.hop, WindowKind::Hamming).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Rows of the synthetic matrix.
    #[arg(long, default_value_t = 40)]
    pub f: usize,
    /// Columns of the synthetic matrix.
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    /// Rank of the generating factors.
    #[arg(long)]
    pub true_rank: Option<usize>,
    /// Relative level of additive nonnegative noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub estimates: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub references: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// `FxNxK`, e.g. `257x294x3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSize {
    pub f: usize,
    pub n: usize,
    pub k: usize,
}

fn parse_size(s: &str) -> Result<BenchSize, String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [f, n, k] if f > 0 && n > 0 && k > 0 => Ok(BenchSize { f, n, k }),
        _ => Err(format!("`{s}`: expected FxNxK with positive entries")),
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Comma-separated list of FxNxK.
    #[arg(long, value_delimiter = ',', default_value = "257x294x3", value_parser = parse_size)]
    pub sizes: Vec<BenchSize>,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto", value_parser = parse_lambda)]
    pub lambda: Lambda,
    /// ℓ1 weight used for the sparse variant.
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where the replayed artifacts go; defaults to `replay/` next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
