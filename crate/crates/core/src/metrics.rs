//! Quality metrics and image-gradient statistics: MSE, PSNR, discrete
//! gradients, TV and L1 norms, 64-bin gradient histograms, and KL
//! divergence between histograms.

use ndarray::{Array2, ArrayView2};

use crate::error::{DeconvError, Result};
use crate::image::Image;

/// Number of histogram bins over the gradient range [-1, 1].
pub const HIST_BINS: usize = 64;

/// Floor applied to the reference distribution in [`kl_divergence`] so
/// empty bins do not blow up the sum.
pub const KL_EPSILON: f64 = 1e-12;

/// Mean squared error `(1/(d*m*n)) * ||a - b||_2^2`.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(DeconvError::ShapeMismatch(format!(
            "mse: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.data().len() as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// Peak signal-to-noise ratio `10 * log10(R^2 / mse)` in dB, with
/// `R = 1` for unit-interval doubles. Equal images give `+inf`.
pub fn psnr(x: &Image, reference: &Image, peak: f64) -> Result<f64> {
    let e = mse(x, reference)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Horizontal forward difference with Neumann boundary: zero in the
/// last column.
pub fn grad_h(x: ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = x.dim();
    let mut g = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n.saturating_sub(1) {
            g[[i, j]] = x[[i, j + 1]] - x[[i, j]];
        }
    }
    g
}

/// Vertical forward difference with Neumann boundary: zero in the
/// last row.
pub fn grad_v(x: ArrayView2<f64>) -> Array2<f64> {
    let (m, n) = x.dim();
    let mut g = Array2::zeros((m, n));
    for i in 0..m.saturating_sub(1) {
        for j in 0..n {
            g[[i, j]] = x[[i + 1, j]] - x[[i, j]];
        }
    }
    g
}

/// Isotropic total variation: sum over pixels of the gradient
/// magnitude, summed across channels for color images.
pub fn tv_norm(img: &Image) -> f64 {
    let mut total = 0.0;
    for c in 0..img.channels() {
        let ch = img.data().index_axis(ndarray::Axis(0), c);
        let gh = grad_h(ch);
        let gv = grad_v(ch);
        total += gh
            .iter()
            .zip(gv.iter())
            .map(|(a, b)| (a * a + b * b).sqrt())
            .sum::<f64>();
    }
    total
}

/// Entry-wise absolute sum of a matrix.
pub fn l1_norm(x: ArrayView2<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// 64-bin frequency distribution of image gradient values over [-1, 1].
/// A value exactly on an interior bin edge belongs to the bin on its
/// right; 1.0 itself stays in the top bin.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientHistogram {
    bin_edges: Vec<f64>,
    probs: Vec<f64>,
}

impl GradientHistogram {
    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..HIST_BINS)
            .map(|i| 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]))
            .collect()
    }

    /// Rebuilds a histogram from stored probabilities (CSV read-back).
    pub fn from_probs(probs: Vec<f64>) -> Result<GradientHistogram> {
        if probs.len() != HIST_BINS {
            return Err(DeconvError::Invalid(format!(
                "expected {HIST_BINS} bins, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(DeconvError::Invalid("negative bin probability".into()));
        }
        Ok(GradientHistogram {
            bin_edges: edges(),
            probs,
        })
    }
}

fn edges() -> Vec<f64> {
    (0..=HIST_BINS)
        .map(|i| -1.0 + 2.0 * i as f64 / HIST_BINS as f64)
        .collect()
}

/// Pools horizontal and vertical gradients of every image and channel
/// into the shared 64-bin histogram and normalizes to probabilities.
pub fn gradient_histogram(images: &[Image]) -> Result<GradientHistogram> {
    if images.is_empty() {
        return Err(DeconvError::Invalid(
            "gradient_histogram needs at least one image".into(),
        ));
    }
    let mut counts = vec![0u64; HIST_BINS];
    let width = 2.0 / HIST_BINS as f64;
    let mut push = |v: f64| {
        let idx = (((v + 1.0) / width).floor() as i64).clamp(0, HIST_BINS as i64 - 1);
        counts[idx as usize] += 1;
    };
    for img in images {
        for c in 0..img.channels() {
            let ch = img.data().index_axis(ndarray::Axis(0), c);
            for v in grad_h(ch).iter().chain(grad_v(ch).iter()) {
                push(*v);
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let probs = counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    Ok(GradientHistogram {
        bin_edges: edges(),
        probs,
    })
}

/// `sum_b p(b) * ln(p(b) / q(b))` over bins with `p(b) > 0`, with the
/// reference floored at [`KL_EPSILON`]. Natural logarithm.
pub fn kl_divergence(p: &GradientHistogram, q: &GradientHistogram) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(DeconvError::ShapeMismatch(
            "histograms use different binnings".into(),
        ));
    }
    let mut kl = 0.0;
    for (pi, qi) in p.probs.iter().zip(q.probs.iter()) {
        if *pi > 0.0 {
            kl += pi * (pi / qi.max(KL_EPSILON)).ln();
        }
    }
    Ok(kl)
}
