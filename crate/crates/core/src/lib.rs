//! Learning-free image deconvolution at desk scale.
//!
//! Two solver families over the degradation model `B = X * K + E`:
//! classical energy minimization with total-variation / L1 priors
//! ([`baseline`]), and re-parameterization of the image (and, in the
//! blind setting, the kernel) as the output of an untrained hourglass
//! ConvNet trained per-observation ([`dikp`]). Everything runs on the
//! CPU in f64 with a from-scratch reverse-mode autograd engine
//! ([`autograd`]) and a deterministic counter-based RNG ([`rng`]).

pub mod adam;
pub mod autograd;
pub mod baseline;
pub mod conv;
pub mod csvio;
pub mod degrade;
pub mod dikp;
pub mod error;
pub mod image;
pub mod kernel;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synth;

pub use adam::AdamState;
pub use autograd::Tensor;
pub use baseline::{blind_tv_l1, tv_deconv, BaselineConfig, SolverTrace};
pub use conv::{adjoint_convolve, convolve};
pub use degrade::{degrade, DegradationSpec};
pub use dikp::{dikp_blind, dikp_deconv, DikpConfig, DikpResult};
pub use error::{DeconvError, Result};
pub use image::Image;
pub use kernel::{defocus_kernel, gaussian_kernel, motion_kernel, Kernel, KernelSpec};
pub use metrics::{mse, psnr, GradientHistogram};
pub use nn::{build_hourglass, HourglassConfig, Network, OutputActivation};
pub use rng::Rng;
