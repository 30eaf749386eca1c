//! Shared fixtures for the criterion benchmarks.

use deconv_core::image::Image;
use deconv_core::kernel::{Kernel, KernelKind, KernelSpec};
use deconv_core::rng::Rng;
use ndarray::Array3;

pub fn bench_image(d: usize, size: usize) -> Image {
    let mut rng = Rng::new(0xbe7c);
    let mut data = Array3::zeros((d, size, size));
    rng.fill_uniform(data.as_slice_mut().unwrap(), 0.0, 1.0);
    Image::new(data).unwrap()
}

pub fn bench_kernel(kind: KernelKind) -> Kernel {
    KernelSpec::new(kind).build().unwrap()
}
