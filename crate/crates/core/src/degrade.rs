//! Observed-data generation: blur by a kernel, then add Gaussian
//! noise. The noise is sampled once from the seeded stream and never
//! re-drawn, and the result is deliberately left unclamped so the
//! solvers see the raw observation model.

use crate::conv::convolve;
use crate::error::Result;
use crate::image::Image;
use crate::kernel::KernelSpec;
use crate::rng::{gaussian_noise, Rng};

/// Full description of one degradation: kernel, noise level, seed.
#[derive(Debug, Clone)]
pub struct DegradationSpec {
    pub kernel: KernelSpec,
    /// Noise standard deviation in intensity units. Default 0.01.
    pub sigma: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kernel: KernelSpec, sigma: f64, seed: u64) -> DegradationSpec {
        DegradationSpec { kernel, sigma, seed }
    }
}

/// `B = X * K + E`; convolution strictly precedes the noise draw.
pub fn degrade(img: &Image, spec: &DegradationSpec) -> Result<Image> {
    let kernel = spec.kernel.build()?;
    let blurred = convolve(img, &kernel)?;
    let mut rng = Rng::new(spec.seed);
    let noise = gaussian_noise(&mut rng, img.shape(), spec.sigma);
    Image::new(blurred.data() + &noise)
}
