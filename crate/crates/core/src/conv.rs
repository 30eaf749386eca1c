//! 2-D convolution with reflexive boundary handling, and its exact
//! adjoint.
//!
//! Orientation is correlation-style: the kernel is indexed relative to
//! its center without flipping, so `out[i][j] = sum_{a,b} K[a][b] *
//! X[i + a - c1][j + b - c2]`. Out-of-range image indices reflect with
//! the half-sample ("reflect including edge") convention: -1 -> 0,
//! -2 -> 1, m -> m-1, m+1 -> m-2. Color images share one kernel across
//! channels. The per-pixel summation order is fixed (kernel rows, then
//! columns), so results are bit-reproducible.

use ndarray::{Array2, ArrayView2};

use crate::error::{DeconvError, Result};
use crate::image::Image;
use crate::kernel::Kernel;

/// Half-sample symmetric reflection of `i` into [0, n).
#[inline]
pub fn reflect_index(mut i: i64, n: i64) -> i64 {
    debug_assert!(n > 0);
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i;
        }
    }
}

/// Convolves one channel; shared by the image pipeline and the
/// differentiable op so both produce bit-identical values.
pub(crate) fn convolve_channel(
    x: ArrayView2<f64>,
    k: ArrayView2<f64>,
    center: (usize, usize),
) -> Array2<f64> {
    let (m, n) = x.dim();
    let (h, w) = k.dim();
    let (c1, c2) = (center.0 as i64, center.1 as i64);
    let mut out = Array2::zeros((m, n));
    for i in 0..m as i64 {
        for j in 0..n as i64 {
            let mut acc = 0.0;
            for a in 0..h as i64 {
                let si = reflect_index(i + a - c1, m as i64) as usize;
                for b in 0..w as i64 {
                    let sj = reflect_index(j + b - c2, n as i64) as usize;
                    acc += k[[a as usize, b as usize]] * x[[si, sj]];
                }
            }
            out[[i as usize, j as usize]] = acc;
        }
    }
    out
}

/// Adjoint of [`convolve_channel`]: scatters each output-pixel
/// contribution back to the source pixel it read.
pub(crate) fn adjoint_convolve_channel(
    y: ArrayView2<f64>,
    k: ArrayView2<f64>,
    center: (usize, usize),
) -> Array2<f64> {
    let (m, n) = y.dim();
    let (h, w) = k.dim();
    let (c1, c2) = (center.0 as i64, center.1 as i64);
    let mut out = Array2::zeros((m, n));
    for i in 0..m as i64 {
        for j in 0..n as i64 {
            let yij = y[[i as usize, j as usize]];
            for a in 0..h as i64 {
                let si = reflect_index(i + a - c1, m as i64) as usize;
                for b in 0..w as i64 {
                    let sj = reflect_index(j + b - c2, n as i64) as usize;
                    out[[si, sj]] += k[[a as usize, b as usize]] * yij;
                }
            }
        }
    }
    out
}

/// Gradient of a convolution output with respect to the kernel, one
/// channel: `out[a][b] = sum_{i,j} g[i,j] * x[refl(i+a-c1)][refl(j+b-c2)]`.
pub(crate) fn kernel_grad_channel(
    x: ArrayView2<f64>,
    g: ArrayView2<f64>,
    h: usize,
    w: usize,
    center: (usize, usize),
) -> Array2<f64> {
    let (m, n) = x.dim();
    let (c1, c2) = (center.0 as i64, center.1 as i64);
    let mut out = Array2::zeros((h, w));
    for a in 0..h as i64 {
        for b in 0..w as i64 {
            let mut acc = 0.0;
            for i in 0..m as i64 {
                let si = reflect_index(i + a - c1, m as i64) as usize;
                for j in 0..n as i64 {
                    let sj = reflect_index(j + b - c2, n as i64) as usize;
                    acc += g[[i as usize, j as usize]] * x[[si, sj]];
                }
            }
            out[[a as usize, b as usize]] = acc;
        }
    }
    out
}

fn check_fits(img: &Image, k: &Kernel) -> Result<()> {
    let (_, m, n) = img.shape();
    if k.height() > m || k.width() > n {
        return Err(DeconvError::ShapeMismatch(format!(
            "{}x{} kernel larger than {m}x{n} image",
            k.height(),
            k.width()
        )));
    }
    Ok(())
}

/// `X * K` with reflexive boundary; output shape equals input shape.
pub fn convolve(img: &Image, k: &Kernel) -> Result<Image> {
    check_fits(img, k)?;
    let (d, m, n) = img.shape();
    let mut out = ndarray::Array3::zeros((d, m, n));
    for c in 0..d {
        let ch = convolve_channel(img.data().index_axis(ndarray::Axis(0), c), k.data().view(), k.center());
        out.index_axis_mut(ndarray::Axis(0), c).assign(&ch);
    }
    Image::new(out)
}

/// The exact adjoint of `X -> X * K` under the reflexive boundary,
/// satisfying `<convolve(x, k), y> = <x, adjoint_convolve(y, k)>`.
pub fn adjoint_convolve(img: &Image, k: &Kernel) -> Result<Image> {
    check_fits(img, k)?;
    let (d, m, n) = img.shape();
    let mut out = ndarray::Array3::zeros((d, m, n));
    for c in 0..d {
        let ch = adjoint_convolve_channel(
            img.data().index_axis(ndarray::Axis(0), c),
            k.data().view(),
            k.center(),
        );
        out.index_axis_mut(ndarray::Axis(0), c).assign(&ch);
    }
    Image::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelKind, KernelSpec};
    use crate::rng::Rng;
    use ndarray::Array3;

    fn random_image(rng: &mut Rng, d: usize, m: usize, n: usize) -> Image {
        let mut data = Array3::zeros((d, m, n));
        rng.fill_uniform(data.as_slice_mut().unwrap(), 0.0, 1.0);
        Image::new(data).unwrap()
    }

    fn random_kernel(rng: &mut Rng, h: usize, w: usize) -> Kernel {
        let mut data = ndarray::Array2::zeros((h, w));
        rng.fill_uniform(data.as_slice_mut().unwrap(), 0.0, 1.0);
        let center = (
            (rng.next_u64() as usize) % h,
            (rng.next_u64() as usize) % w,
        );
        Kernel::normalize(data, center).unwrap()
    }

    /// Brute-force oracle: direct quadruple loop with its own reflect
    /// arithmetic, independent of the implementation above.
    fn brute_force(img: &Image, k: &Kernel) -> Array3<f64> {
        let (d, m, n) = img.shape();
        let (h, w) = (k.height() as i64, k.width() as i64);
        let (c1, c2) = (k.center().0 as i64, k.center().1 as i64);
        let refl = |mut t: i64, len: i64| -> usize {
            while t < 0 || t >= len {
                if t < 0 {
                    t = -t - 1;
                }
                if t >= len {
                    t = 2 * len - 1 - t;
                }
            }
            t as usize
        };
        let mut out = Array3::zeros((d, m, n));
        for c in 0..d {
            for i in 0..m as i64 {
                for j in 0..n as i64 {
                    let mut acc = 0.0;
                    for a in 0..h {
                        for b in 0..w {
                            let si = refl(i + a - c1, m as i64);
                            let sj = refl(j + b - c2, n as i64);
                            acc += k.data()[[a as usize, b as usize]]
                                * img.data()[[c, si, sj]];
                        }
                    }
                    out[[c, i as usize, j as usize]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = Rng::new(2);
        let img = random_image(&mut rng, 3, 7, 6);
        let k = Kernel::delta(3, 3, (1, 1)).unwrap();
        let out = convolve(&img, &k).unwrap();
        for (a, b) in img.data().iter().zip(out.data().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_image_preserved_exactly() {
        let img = Image::new(Array3::from_elem((1, 10, 12), 0.37)).unwrap();
        let k = KernelSpec::new(KernelKind::Gaussian).build().unwrap();
        let out = convolve(&img, &k).unwrap();
        let mean = out.data().sum() / out.data().len() as f64;
        assert!((mean - 0.37).abs() < 1e-13);
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-13);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        // Randomized sweep over all sizes <= 8x8 with kernels <= 5x5.
        let mut rng = Rng::new(31);
        let mut instances = 0;
        'outer: for m in 1..=8usize {
            for n in 1..=8usize {
                for h in 1..=m.min(5) {
                    for w in 1..=n.min(5) {
                        let d = if (m + n + h + w) % 2 == 0 { 1 } else { 3 };
                        let img = random_image(&mut rng, d, m, n);
                        let k = random_kernel(&mut rng, h, w);
                        let got = convolve(&img, &k).unwrap();
                        let want = brute_force(&img, &k);
                        for (a, b) in got.data().iter().zip(want.iter()) {
                            assert!((a - b).abs() <= 1e-12, "mismatch at {m}x{n} k {h}x{w}");
                        }
                        instances += 1;
                        if instances >= 200 {
                            break 'outer;
                        }
                    }
                }
            }
        }
        assert!(instances >= 200);
    }

    #[test]
    fn specific_random_small_instance_matches_oracle() {
        let mut rng = Rng::new(77);
        let img = random_image(&mut rng, 1, 5, 5);
        let k = random_kernel(&mut rng, 3, 3);
        let got = convolve(&img, &k).unwrap();
        let want = brute_force(&img, &k);
        for (a, b) in got.data().iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn linearity() {
        let mut rng = Rng::new(5);
        for _ in 0..10 {
            let x = random_image(&mut rng, 1, 6, 7);
            let y = random_image(&mut rng, 1, 6, 7);
            let k = random_kernel(&mut rng, 3, 5);
            let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            let mixed = Image::new(a * x.data() + b * y.data()).unwrap();
            let lhs = convolve(&mixed, &k).unwrap();
            let rhs = a * convolve(&x, &k).unwrap().data() + b * convolve(&y, &k).unwrap().data();
            for (p, q) in lhs.data().iter().zip(rhs.iter()) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = Rng::new(13);
        let specs = [
            KernelSpec::new(KernelKind::Gaussian),
            KernelSpec::new(KernelKind::Defocus),
            KernelSpec::new(KernelKind::Motion),
        ];
        for s in &specs {
            for &(m, n) in &[(9usize, 9usize), (12, 10), (16, 16)] {
                let k = s.build().unwrap();
                let x = random_image(&mut rng, 1, m, n);
                let y = random_image(&mut rng, 1, m, n);
                let ax = convolve(&x, &k).unwrap();
                let aty = adjoint_convolve(&y, &k).unwrap();
                let lhs: f64 = ax.data().iter().zip(y.data().iter()).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.data().iter().zip(aty.data().iter()).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-10, "{} {m}x{n}", s.kind.name());
            }
        }
    }

    #[test]
    fn adjoint_of_delta_is_identity() {
        let mut rng = Rng::new(19);
        let img = random_image(&mut rng, 1, 6, 6);
        let k = Kernel::delta(3, 3, (1, 1)).unwrap();
        let out = adjoint_convolve(&img, &k).unwrap();
        for (a, b) in img.data().iter().zip(out.data().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_kernel_self_adjoint_in_interior() {
        // Away from the boundary the reflexive extension never fires,
        // so a centro-symmetric kernel acts as its own adjoint there.
        let k = KernelSpec::new(KernelKind::Gaussian).build().unwrap();
        let mut data = Array3::zeros((1, 32, 32));
        data[[0, 16, 16]] = 1.0; // interior-supported test function
        let img = Image::new(data).unwrap();
        let fwd = convolve(&img, &k).unwrap();
        let adj = adjoint_convolve(&img, &k).unwrap();
        for i in 8..24 {
            for j in 8..24 {
                assert!((fwd.data()[[0, i, j]] - adj.data()[[0, i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_larger_than_image_rejected() {
        let img = Image::new(Array3::zeros((1, 4, 4))).unwrap();
        let k = Kernel::uniform(5, 5, (2, 2)).unwrap();
        assert!(convolve(&img, &k).is_err());
        assert!(adjoint_convolve(&img, &k).is_err());
    }

    #[test]
    fn reflect_convention() {
        assert_eq!(reflect_index(-1, 5), 0);
        assert_eq!(reflect_index(-2, 5), 1);
        assert_eq!(reflect_index(5, 5), 4);
        assert_eq!(reflect_index(6, 5), 3);
        assert_eq!(reflect_index(3, 5), 3);
    }
}
