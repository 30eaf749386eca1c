//! Deterministic counter-based random number generation.
//!
//! The generator is SplitMix64 in counter form: draw `i` of a stream
//! with seed `s` is `mix64(s + (i + 1) * GAMMA)` where `GAMMA` is the
//! 64-bit golden-ratio increment and `mix64` is the variant-13
//! finalizer. The state is just `(seed, counter)`, so identical seeds
//! give identical streams on every platform, and independent streams
//! for parallel work come from [`Rng::split`] / [`Rng::derive`]
//! without coordination.
//!
//! Gaussian samples use the Marsaglia polar form of the Box-Muller
//! transform, which consumes uniforms from the same stream. Its only
//! transcendental is `ln`, so streams are reproducible wherever the
//! platform libm rounds `ln` identically (all mainstream targets do).

use ndarray::{Array2, Array3, Array4};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based pseudo-random generator. Single-owner by design:
/// share streams by splitting, not by locking.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    counter: u64,
    /// Second output of the polar transform, held for the next call.
    spare_gaussian: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            counter: 0,
            spare_gaussian: None,
        }
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in [0, 1), using the top 53 bits of a draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via the polar Box-Muller transform.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let r = (-2.0 * s.ln() / s).sqrt();
                self.spare_gaussian = Some(v * r);
                return u * r;
            }
        }
    }

    /// Derives an independent child stream. The child's seed is a
    /// fresh draw from this stream, so parent and child do not overlap.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// Derives the stream for a labelled unit of work (grid cell,
    /// experiment seed) without consuming parent state.
    pub fn derive(&self, label: u64) -> Rng {
        Rng::new(mix64(mix64(self.seed ^ GAMMA).wrapping_add(label)))
    }

    pub fn fill_uniform(&mut self, out: &mut [f64], lo: f64, hi: f64) {
        for x in out.iter_mut() {
            *x = self.uniform(lo, hi);
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], sigma: f64) {
        for x in out.iter_mut() {
            *x = sigma * self.gaussian();
        }
    }

    pub fn uniform_array2(&mut self, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
        let mut a = Array2::zeros(shape);
        self.fill_uniform(a.as_slice_mut().unwrap(), lo, hi);
        a
    }

    pub fn uniform_array4(
        &mut self,
        shape: (usize, usize, usize, usize),
        lo: f64,
        hi: f64,
    ) -> Array4<f64> {
        let mut a = Array4::zeros(shape);
        self.fill_uniform(a.as_slice_mut().unwrap(), lo, hi);
        a
    }

    pub fn gaussian_array4(&mut self, shape: (usize, usize, usize, usize), sigma: f64) -> Array4<f64> {
        let mut a = Array4::zeros(shape);
        self.fill_gaussian(a.as_slice_mut().unwrap(), sigma);
        a
    }
}

/// I.i.d. N(0, sigma^2) noise with the given shape, row-major fill
/// order. `sigma = 0` short-circuits to exact zeros.
pub fn gaussian_noise(rng: &mut Rng, shape: (usize, usize, usize), sigma: f64) -> Array3<f64> {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    let mut a = Array3::zeros(shape);
    if sigma > 0.0 {
        rng.fill_gaussian(a.as_slice_mut().unwrap(), sigma);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn stream_is_frozen() {
        // Golden values pin the counter-based SplitMix64 stream; a
        // change here is a reproducibility break, not a refactor.
        let mut r = Rng::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn uniform_in_range() {
        let mut r = Rng::new(7);
        for _ in 0..10_000 {
            let x = r.uniform(-2.0, 3.0);
            assert!((-2.0..3.0).contains(&x));
        }
    }

    #[test]
    fn gaussian_noise_sigma_zero_is_zero() {
        let mut r = Rng::new(1);
        let a = gaussian_noise(&mut r, (1, 4, 4), 0.0);
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gaussian_noise_sample_std() {
        // Law-of-large-numbers check on 10^6 samples.
        let mut r = Rng::new(123);
        let a = gaussian_noise(&mut r, (1, 1000, 1000), 0.01);
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let var = a.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.0099..=0.0101).contains(&std), "std = {std}");
    }

    #[test]
    fn gaussian_noise_deterministic() {
        let a = gaussian_noise(&mut Rng::new(5), (2, 8, 8), 0.5);
        let b = gaussian_noise(&mut Rng::new(5), (2, 8, 8), 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn split_streams_differ() {
        let mut parent = Rng::new(9);
        let mut c1 = parent.split();
        let mut c2 = parent.split();
        let s1: Vec<u64> = (0..8).map(|_| c1.next_u64()).collect();
        let s2: Vec<u64> = (0..8).map(|_| c2.next_u64()).collect();
        assert_ne!(s1, s2);
    }

    #[test]
    fn derive_is_stable_and_label_sensitive() {
        let r = Rng::new(11);
        let mut a = r.derive(3);
        let mut b = r.derive(3);
        let mut c = r.derive(4);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(a.next_u64(), c.next_u64());
    }
}
