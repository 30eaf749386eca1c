//! clap argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Learning-free image deconvolution: classical TV baselines and deep
/// image-and-kernel-prior energy minimization.
#[derive(Parser, Debug)]
#[command(name = "deconv", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Blur an image with a generated kernel and add Gaussian noise.
    Degrade(DegradeArgs),
    /// Restore one degraded image with a chosen solver.
    Solve(SolveArgs),
    /// Run the image x kernel x method grid and emit the PSNR tables.
    Table(TableArgs),
    /// Gradient histograms and KL divergences of three image sets.
    Gradhist(GradhistArgs),
    /// Energy-convergence curves on natural images vs noise controls.
    Curves(CurvesArgs),
    /// Write the six synthetic stand-in test images.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// RNG seed (degradation or solver, depending on the command).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default ".").
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value config file; explicit flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input PGM/PPM image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Kernel kind: gaussian | defocus | motion.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Noise standard deviation (default 0.01).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Motion amplitude override.
    #[arg(long)]
    pub kernel_u: Option<f64>,
    /// Defocus radius override.
    #[arg(long)]
    pub kernel_r: Option<f64>,
    /// Gaussian width overrides.
    #[arg(long)]
    pub kernel_s1: Option<f64>,
    #[arg(long)]
    pub kernel_s2: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// tv | blind-tv | dikp | blind-dikp.
    #[arg(long)]
    pub method: Option<String>,
    /// Degraded input image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Kernel CSV (required by the kernel-known methods).
    #[arg(long)]
    pub kernel_csv: Option<PathBuf>,
    /// Ground truth for PSNR reporting (optional).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Center-crop inputs to this size before solving.
    #[arg(long)]
    pub crop: Option<usize>,
    /// TV weight (baselines).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// L1 kernel weight (blind baseline).
    #[arg(long)]
    pub beta: Option<f64>,
    /// DIKP iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hourglass filter count per depth.
    #[arg(long)]
    pub filters: Option<usize>,
    /// Noise input channels.
    #[arg(long)]
    pub input_channels: Option<usize>,
    /// Input perturbation std.
    #[arg(long)]
    pub perturb_sigma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Working crop size (default 64).
    #[arg(long)]
    pub size: Option<usize>,
    /// Comma-separated methods (default "tv,dikp").
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated kernels (default all three).
    #[arg(long)]
    pub kernels: Option<String>,
    /// Comma-separated seeds for stochastic methods (default "1,2,3").
    #[arg(long)]
    pub seeds: Option<String>,
    /// Noise std (default 0.01).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// DIKP iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Hourglass filter count.
    #[arg(long)]
    pub filters: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GradhistArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory of ground-truth images.
    #[arg(long = "std")]
    pub std_dir: Option<PathBuf>,
    /// Directory of baseline outputs.
    #[arg(long = "reg")]
    pub reg_dir: Option<PathBuf>,
    /// Directory of DIKP outputs.
    #[arg(long = "dikp")]
    pub dikp_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated kernels (default all three).
    #[arg(long)]
    pub kernels: Option<String>,
    /// Working crop size (default 64).
    #[arg(long)]
    pub size: Option<usize>,
    /// Iterations per curve (default 300).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Hourglass filter count.
    #[arg(long)]
    pub filters: Option<usize>,
    /// Noise std (default 0.01).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Also export the window [zoom-start, zoom-end).
    #[arg(long)]
    pub zoom_start: Option<usize>,
    #[arg(long)]
    pub zoom_end: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Image size (default 64).
    #[arg(long)]
    pub size: Option<usize>,
}
