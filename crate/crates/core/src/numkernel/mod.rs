//! Dense matrices, pairwise distance kernels, stable reductions and seeded sampling.
//!
//! Everything is `f64` and every reduction runs in index order, so repeated runs agree
//! bit for bit.

mod distance;
mod matrix;
mod reduce;
mod rng;

pub(crate) use distance::{cosine_from_units, row_norms, sq_dist, unit_rows};
pub use distance::{pairwise_cosine_distance, pairwise_sq_euclidean, DistanceMatrix, Metric};
pub use matrix::Matrix;
pub use reduce::logsumexp;
pub(crate) use reduce::logsumexp_by;
pub use rng::{sample_gaussian, Rng};
