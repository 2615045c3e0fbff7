use std::path::PathBuf;

use cems::basis::Mode;
use cems::chart::{Order, Ridge};
use cems::experiment::Curve;
use cems::neighbors::Selection;
use cems::sampler::IntrinsicDim;
use cems::synthetic::SyntheticKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "cems",
    version,
    about = "Curvature-enhanced manifold sampling for tabular regression data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate new samples from a CSV dataset.
    Augment(AugmentArgs),
    /// Estimate the intrinsic dimension of a CSV dataset with TwoNN.
    EstimateDim(EstimateArgs),
    /// Write a synthetic dataset and a metadata sidecar.
    Synth(SynthArgs),
    /// Approximation error against sampling radius on an analytic curve.
    BenchOrder(BenchOrderArgs),
    /// First/second-order error ratio against hypersphere curvature.
    BenchCurvature(BenchCurvatureArgs),
}

#[derive(Debug, Args, Default)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated target column names (default: last column).
    #[arg(long)]
    pub targets: Option<String>,
    /// Tangent noise scale, in normalized units.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Neighborhood size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Intrinsic dimension, or `auto` for TwoNN.
    #[arg(long)]
    pub dim: Option<IntrinsicDim>,
    /// `point` or `batch`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// `knn`, `knnp` or `random`.
    #[arg(long)]
    pub select: Option<Selection>,
    /// Chart order, `1` or `2`.
    #[arg(long)]
    pub order: Option<Order>,
    /// Ridge weight, or `auto`.
    #[arg(long)]
    pub ridge: Option<Ridge>,
    /// FOMA normal scaling in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `cems` or `foma`.
    #[arg(long)]
    pub method: Option<String>,
    /// Number of generated rows (default: input row count).
    #[arg(long)]
    pub n_gen: Option<usize>,
    /// Write the original rows before the generated ones.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub append: Option<bool>,
    /// Map rows back to original units before writing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub denormalize: Option<bool>,
    /// Min-max scale features as well as targets (default: true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scale_features: Option<bool>,
    /// Add source/anchor/member/residual columns.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub provenance: Option<bool>,
    /// Fraction of generation attempts allowed to fail on degenerate neighborhoods.
    #[arg(long)]
    pub failure_budget: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scale_features: Option<bool>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    /// `sine`, `hypersphere`, `quadratic` or `plane`.
    #[arg(long)]
    pub kind: Option<SyntheticKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub curvature: Option<f64>,
    #[arg(long)]
    pub intrinsic_d: Option<usize>,
    #[arg(long)]
    pub ambient_d: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct BenchOrderArgs {
    /// `sine`, `circle[:radius]` or `parabola[:curvature]`.
    #[arg(long)]
    pub curve: Option<Curve>,
    /// Comma-separated sampling radii.
    #[arg(long)]
    pub scales: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Anchors per seed.
    #[arg(long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct BenchCurvatureArgs {
    /// Comma-separated curvatures.
    #[arg(long)]
    pub curvatures: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub intrinsic_d: Option<usize>,
    #[arg(long)]
    pub ambient_d: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub ridge: Option<Ridge>,
    #[arg(long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
