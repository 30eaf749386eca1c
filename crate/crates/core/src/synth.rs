//! Deterministic synthetic test scenes.
//!
//! The six standard benchmark photographs are not redistributable, so
//! the harness and the test suite fall back to generated stand-ins
//! with the canonical names. Scenes mix smooth shading, sharp-edged
//! shapes, thin lines and mild texture so that blurring measurably
//! hurts them and their gradient statistics are heavy-tailed like
//! natural images. Any user-supplied PGM/PPM set can replace them on
//! the command line.

use ndarray::Array3;

use crate::error::Result;
use crate::image::Image;
use crate::rng::Rng;

/// The canonical data-set names: four greyscale, two color.
pub const STANDARD_NAMES: [(&str, usize); 6] = [
    ("cameraman", 1),
    ("house", 1),
    ("lena", 1),
    ("boat", 1),
    ("house_c", 3),
    ("peppers", 3),
];

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Generates a `channels x size x size` scene, deterministic in
/// (name, channels, size, seed).
pub fn synth_image(name: &str, channels: usize, size: usize, seed: u64) -> Result<Image> {
    let mut rng = Rng::new(seed ^ name_hash(name));
    let m = size;
    let n = size;
    let mut base = ndarray::Array2::<f64>::zeros((m, n));

    // smooth background: ramp plus a broad radial blob
    let (ga, gb) = (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    let g0 = rng.uniform(0.3, 0.6);
    let (bx, by) = (rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
    let bw = rng.uniform(0.2, 0.5);
    let bamp = rng.uniform(-0.25, 0.25);
    for i in 0..m {
        for j in 0..n {
            let (fi, fj) = (i as f64 / m as f64, j as f64 / n as f64);
            let r2 = (fi - by) * (fi - by) + (fj - bx) * (fj - bx);
            base[[i, j]] = g0 + ga * fi + gb * fj + bamp * (-r2 / (bw * bw)).exp();
        }
    }

    // sharp-edged rectangles and discs: piecewise-constant structure
    // with strong contrast, the content blurring hurts most and a
    // generative prior recovers best
    let n_shapes = 7 + (rng.next_u64() % 4) as usize;
    for _ in 0..n_shapes {
        let v = rng.uniform(0.05, 0.95);
        if rng.next_f64() < 0.5 {
            let h = m / 8 + (rng.next_u64() as usize) % (m / 2);
            let w = n / 8 + (rng.next_u64() as usize) % (n / 2);
            let i0 = (rng.next_u64() as usize) % (m - h.min(m - 1));
            let j0 = (rng.next_u64() as usize) % (n - w.min(n - 1));
            for i in i0..(i0 + h).min(m) {
                for j in j0..(j0 + w).min(n) {
                    base[[i, j]] = v;
                }
            }
        } else {
            let r = m as f64 / 12.0 + rng.uniform(0.0, m as f64 / 5.0);
            let ci = rng.uniform(0.0, m as f64);
            let cj = rng.uniform(0.0, n as f64);
            for i in 0..m {
                for j in 0..n {
                    let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    if d2 <= r * r {
                        base[[i, j]] = v;
                    }
                }
            }
        }
    }

    // a couple of thin high-contrast lines
    for _ in 0..2 {
        let v = if rng.next_f64() < 0.5 { 0.03 } else { 0.97 };
        let angle = rng.uniform(0.0, std::f64::consts::PI);
        let (ci, cj) = (rng.uniform(0.2, 0.8) * m as f64, rng.uniform(0.2, 0.8) * n as f64);
        let (di, dj) = (angle.sin(), angle.cos());
        let half = m as f64;
        let mut t = -half;
        while t < half {
            let i = (ci + t * di).round() as i64;
            let j = (cj + t * dj).round() as i64;
            if i >= 0 && i < m as i64 && j >= 0 && j < n as i64 {
                base[[i as usize, j as usize]] = v;
            }
            t += 0.5;
        }
    }

    // mild mid-frequency texture over a subregion (high frequencies
    // would be unrecoverable under the benchmark blurs)
    let (fi, fj) = (rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6));
    let phase = rng.uniform(0.0, std::f64::consts::TAU);
    let i0 = (rng.next_u64() as usize) % (m / 2);
    let j0 = (rng.next_u64() as usize) % (n / 2);
    for i in i0..(i0 + m / 2) {
        for j in j0..(j0 + n / 2) {
            base[[i, j]] += 0.04 * (fi * i as f64 + fj * j as f64 + phase).sin();
        }
    }

    let mut data = Array3::zeros((channels, m, n));
    if channels == 1 {
        for i in 0..m {
            for j in 0..n {
                data[[0, i, j]] = base[[i, j]].clamp(0.02, 0.98);
            }
        }
    } else {
        // correlated channels: shared luminance, per-channel tint
        let tints: Vec<(f64, f64)> = (0..channels)
            .map(|_| (rng.uniform(0.75, 1.25), rng.uniform(-0.08, 0.08)))
            .collect();
        for (c, &(gain, off)) in tints.iter().enumerate() {
            for i in 0..m {
                for j in 0..n {
                    data[[c, i, j]] = (base[[i, j]] * gain + off).clamp(0.02, 0.98);
                }
            }
        }
    }
    Image::new(data)
}

/// The six canonical stand-ins at the given size, fixed seed.
pub fn standard_set(size: usize) -> Vec<(String, Image)> {
    STANDARD_NAMES
        .iter()
        .map(|&(name, d)| {
            (
                name.to_string(),
                synth_image(name, d, size, 0).expect("synthetic image"),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_name() {
        let a = synth_image("house", 1, 32, 0).unwrap();
        let b = synth_image("house", 1, 32, 0).unwrap();
        let c = synth_image("boat", 1, 32, 0).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn standard_set_shapes() {
        let set = standard_set(32);
        assert_eq!(set.len(), 6);
        assert_eq!(set[0].1.shape(), (1, 32, 32));
        assert_eq!(set[4].1.shape(), (3, 32, 32));
        for (_, img) in &set {
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn scenes_have_structure() {
        // Not flat: blurring must cost a measurable amount of signal.
        for (name, img) in standard_set(64) {
            let tv = crate::metrics::tv_norm(&img);
            assert!(tv > 10.0, "{name} too flat: tv = {tv}");
        }
    }
}
