use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::error::{Error, Result};

/// Seeded random stream: ChaCha8 keyed by `seed_from_u64`, so every stream is fixed by its
/// 64-bit seed and portable across platforms.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, deterministic in (parent seed, `stream`).
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::seed_from(
            self.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
                ^ 0x5851_F42D_4C95_7F2D,
        )
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// `n × dims` matrix of i.i.d. normal draws with per-column `mean` and common `stddev`.
pub fn sample_gaussian(
    rng: &mut Rng,
    n: usize,
    dims: usize,
    mean: &[f64],
    stddev: f64,
) -> Result<Matrix> {
    if !(stddev > 0.0 && stddev.is_finite()) {
        return Err(Error::invalid(format!(
            "stddev must be positive, got {stddev}"
        )));
    }
    if dims == 0 || mean.len() != dims {
        return Err(Error::invalid(format!(
            "mean has {} entries for {dims} dimensions",
            mean.len()
        )));
    }
    let mut data = Vec::with_capacity(n * dims);
    for _ in 0..n {
        for m in mean {
            data.push(m + stddev * rng.normal());
        }
    }
    Ok(Matrix::from_raw(n, dims, data))
}
