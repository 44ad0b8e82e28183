//! Benchmark fixtures shared by the criterion targets.

use entangle_core::mlp::{MlpSpec, Params};
use entangle_core::numkernel::sample_gaussian;
use entangle_core::{LabeledBatch, Rng};

/// `n` standard-normal points in `d` dimensions with labels cycling over `classes`.
pub fn gaussian_batch(seed: u64, n: usize, d: usize, classes: usize) -> LabeledBatch {
    let x = sample_gaussian(&mut Rng::seed_from(seed), n, d, &vec![0.0; d], 1.0)
        .expect("valid sampling parameters");
    LabeledBatch::new(x, (0..n).map(|i| i % classes).collect()).expect("matching lengths")
}

/// Uniform `[0, 1]` inputs, as pixels would be.
pub fn pixel_batch(seed: u64, n: usize, d: usize, classes: usize) -> LabeledBatch {
    let mut rng = Rng::seed_from(seed);
    let x = entangle_core::Matrix::from_fn(n, d, |_, _| rng.uniform());
    LabeledBatch::new(x, (0..n).map(|i| i % classes).collect()).expect("matching lengths")
}

pub fn mnist_mlp(seed: u64) -> Params {
    let spec = MlpSpec::new(vec![784, 256, 128, 10]).expect("valid widths");
    Params::init(&spec, &mut Rng::seed_from(seed))
}
