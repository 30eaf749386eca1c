//! Degradation kernels: container type and the Gaussian / defocus /
//! motion-blur generators.

use ndarray::Array2;

use crate::error::{DeconvError, Result};

/// Tolerance on the sum-to-one invariant.
pub const KERNEL_SUM_TOL: f64 = 1e-12;

/// A small nonnegative 2-D point-spread function summing to 1, with an
/// explicit center cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    data: Array2<f64>,
    center: (usize, usize),
}

impl Kernel {
    /// Validating constructor: entries finite and >= 0, sum within
    /// [`KERNEL_SUM_TOL`] of 1, center inside the support.
    pub fn new(data: Array2<f64>, center: (usize, usize)) -> Result<Kernel> {
        let (h, w) = data.dim();
        if center.0 >= h || center.1 >= w {
            return Err(DeconvError::Invalid(format!(
                "center {center:?} outside {h}x{w} kernel"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::Invalid("kernel has non-finite entries".into()));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(DeconvError::Invalid("kernel has negative entries".into()));
        }
        let sum: f64 = data.sum();
        if (sum - 1.0).abs() > KERNEL_SUM_TOL {
            return Err(DeconvError::Invalid(format!(
                "kernel sums to {sum}, not 1"
            )));
        }
        Ok(Kernel { data, center })
    }

    /// Scales nonnegative weights to sum 1, then validates.
    pub fn normalize(data: Array2<f64>, center: (usize, usize)) -> Result<Kernel> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::Invalid("kernel has non-finite entries".into()));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(DeconvError::Invalid("kernel has negative entries".into()));
        }
        let sum: f64 = data.sum();
        if sum <= 0.0 {
            return Err(DeconvError::Invalid("kernel sums to zero".into()));
        }
        Kernel::new(data.mapv(|v| v / sum), center)
    }

    /// The identity element of convolution: 1 at the center.
    pub fn delta(h: usize, w: usize, center: (usize, usize)) -> Result<Kernel> {
        let mut data = Array2::zeros((h, w));
        if center.0 >= h || center.1 >= w {
            return Err(DeconvError::Invalid(format!(
                "center {center:?} outside {h}x{w} kernel"
            )));
        }
        data[[center.0, center.1]] = 1.0;
        Kernel::new(data, center)
    }

    /// Uniform weight over the whole support.
    pub fn uniform(h: usize, w: usize, center: (usize, usize)) -> Result<Kernel> {
        Kernel::normalize(Array2::ones((h, w)), center)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

/// Kind of blur a [`KernelSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    Defocus,
    Motion,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Defocus => "defocus",
            KernelKind::Motion => "motion",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = DeconvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "defocus" => Ok(KernelKind::Defocus),
            "motion" => Ok(KernelKind::Motion),
            other => Err(DeconvError::Parse(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// Generator parameters for the three blur families.
///
/// Defaults are the 9x9 setup used throughout: center (4, 4), Gaussian
/// widths 2.0, defocus radius floor(min(h, w) / 2) = 4, motion
/// amplitude sqrt(2) * 4 at angle 3*pi/4.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub h: usize,
    pub w: usize,
    pub c1: usize,
    pub c2: usize,
    /// Gaussian width along rows.
    pub s1: f64,
    /// Gaussian width along columns.
    pub s2: f64,
    /// Defocus radius in pixels.
    pub r: f64,
    /// Motion amplitude in pixels.
    pub u: f64,
    /// Motion shift angle in radians.
    pub angle: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> KernelSpec {
        let (h, w) = (9usize, 9usize);
        let half = (h.min(w) as f64 / 2.0).floor();
        KernelSpec {
            kind,
            h,
            w,
            c1: 4,
            c2: 4,
            s1: 2.0,
            s2: 2.0,
            r: half,
            u: std::f64::consts::SQRT_2 * half,
            angle: 3.0 * std::f64::consts::FRAC_PI_4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Err(DeconvError::Invalid("kernel dimensions must be >= 1".into()));
        }
        if self.c1 >= self.h || self.c2 >= self.w {
            return Err(DeconvError::Invalid(format!(
                "center ({}, {}) outside {}x{} kernel",
                self.c1, self.c2, self.h, self.w
            )));
        }
        Ok(())
    }

    /// Builds the kernel this spec describes.
    pub fn build(&self) -> Result<Kernel> {
        match self.kind {
            KernelKind::Gaussian => gaussian_kernel(self),
            KernelKind::Defocus => defocus_kernel(self),
            KernelKind::Motion => motion_kernel(self),
        }
    }
}

/// Unnormalized entries exp(-((i-c1)/s1)^2/2 - ((j-c2)/s2)^2/2),
/// scaled to sum 1.
pub fn gaussian_kernel(spec: &KernelSpec) -> Result<Kernel> {
    spec.validate()?;
    if spec.s1 <= 0.0 || spec.s2 <= 0.0 {
        return Err(DeconvError::Invalid(format!(
            "gaussian widths must be positive, got ({}, {})",
            spec.s1, spec.s2
        )));
    }
    let mut data = Array2::zeros((spec.h, spec.w));
    for i in 0..spec.h {
        for j in 0..spec.w {
            let di = (i as f64 - spec.c1 as f64) / spec.s1;
            let dj = (j as f64 - spec.c2 as f64) / spec.s2;
            data[[i, j]] = (-0.5 * di * di - 0.5 * dj * dj).exp();
        }
    }
    Kernel::normalize(data, (spec.c1, spec.c2))
}

/// Flat disk: cells with (i-c1)^2 + (j-c2)^2 <= r^2 share the mass
/// equally after normalization.
pub fn defocus_kernel(spec: &KernelSpec) -> Result<Kernel> {
    spec.validate()?;
    if spec.r <= 0.0 {
        return Err(DeconvError::Invalid(format!(
            "defocus radius must be positive, got {}",
            spec.r
        )));
    }
    let r2 = spec.r * spec.r;
    let raw = 1.0 / (std::f64::consts::PI * r2);
    let mut data = Array2::zeros((spec.h, spec.w));
    for i in 0..spec.h {
        for j in 0..spec.w {
            let di = i as f64 - spec.c1 as f64;
            let dj = j as f64 - spec.c2 as f64;
            if di * di + dj * dj <= r2 {
                data[[i, j]] = raw;
            }
        }
    }
    Kernel::normalize(data, (spec.c1, spec.c2))
}

/// Straight-line blur: the segment of half-length `u` at `angle`
/// through the center is rasterized by rounding the offsets
/// (k*cos(angle), k*sin(angle)) for integer k in [-floor(u), floor(u)]
/// to the nearest lattice cell. Every cell the segment touches (and
/// that lies inside the support) gets equal weight. With the 9x9
/// defaults this is the anti-diagonal with nine entries of 1/9.
pub fn motion_kernel(spec: &KernelSpec) -> Result<Kernel> {
    spec.validate()?;
    if spec.u < 0.0 {
        return Err(DeconvError::Invalid(format!(
            "motion amplitude must be nonnegative, got {}",
            spec.u
        )));
    }
    let reach = spec.u.floor() as i64;
    let (cos_a, sin_a) = (spec.angle.cos(), spec.angle.sin());
    let mut hit = Array2::from_elem((spec.h, spec.w), false);
    for k in -reach..=reach {
        let di = (k as f64 * cos_a).round() as i64;
        let dj = (k as f64 * sin_a).round() as i64;
        let i = spec.c1 as i64 + di;
        let j = spec.c2 as i64 + dj;
        if i >= 0 && i < spec.h as i64 && j >= 0 && j < spec.w as i64 {
            hit[[i as usize, j as usize]] = true;
        }
    }
    let data = hit.mapv(|b| if b { 1.0 } else { 0.0 });
    Kernel::normalize(data, (spec.c1, spec.c2))
}
