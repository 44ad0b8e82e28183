//! Soft nearest neighbor loss toolkit.
//!
//! Measures how entangled class manifolds are in a representation space, optimizes toy
//! embeddings against it, regularizes small classifiers with it, and evaluates
//! nearest-neighbor credibility under adversarial and out-of-distribution inputs.

pub mod attacks;
pub mod dataio;
pub mod dknn;
pub mod error;
pub mod mlp;
pub mod numkernel;
pub mod pointlab;
pub mod snn;

pub use dataio::Dataset;
pub use error::{Error, Result};
pub use mlp::{MlpSpec, Params};
pub use numkernel::{Matrix, Metric, Rng};
pub use snn::{LabeledBatch, SnnResult, Temperature};
