//! Seeded random number generation.
//!
//! The stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed from the 64-bit seed
//! via `seed_from_u64`; Gaussian draws use the ziggurat sampler of
//! `rand_distr::StandardNormal`. Both are pure integer/IEEE arithmetic, so a
//! seed produces the same values on every platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{Real, C};
use crate::tensor::CTensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream identified by `tags`, e.g. `(split, index)`.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut s = splitmix64(seed);
        for &t in tags {
            s = splitmix64(s ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        Self::new(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.inner);
    }

    /// Circular complex Gaussian tensor: real and imaginary parts are
    /// independent `N(0, 1/2)`, so `E|z|^2 = 1`.
    pub fn randn_complex<T: Real>(&mut self, dims: &[usize]) -> Result<CTensor<T>> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("randn_complex needs positive dims, got {dims:?}")));
        }
        let mut t = CTensor::zeros(dims)?;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for z in t.data_mut() {
            let re = self.normal() * s;
            let im = self.normal() * s;
            *z = C::new(T::of(re), T::of(im));
        }
        Ok(t)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
