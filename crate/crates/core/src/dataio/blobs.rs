use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Rng};
use crate::snn::LabeledBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Label = class of the generating component.
    ByCluster,
    /// Labels drawn uniformly at random, independent of position.
    Random,
}

/// Samples `n` points from `classes * modes_per_class` isotropic Gaussian components.
///
/// Component `c * modes_per_class + m` (class `c`, mode `m`) is centered on a circle in the
/// first two coordinates at angle `2π (m * classes + c) / K`, so modes of one class sit
/// opposite each other with the other classes interleaved. The radius puts adjacent centers
/// `4 * stddev` apart. With a single component the center is the origin. Points are
/// assigned to components round-robin.
pub fn gen_gaussian_blobs(
    rng: &mut Rng,
    n: usize,
    classes: usize,
    modes_per_class: usize,
    dims: usize,
    stddev: f64,
    label_mode: LabelMode,
) -> Result<LabeledBatch> {
    if classes == 0 || modes_per_class == 0 || dims == 0 {
        return Err(Error::invalid(
            "classes, modes_per_class and dims must be >= 1",
        ));
    }
    if n < classes {
        return Err(Error::invalid(format!(
            "n = {n} is smaller than classes = {classes}"
        )));
    }
    if !(stddev > 0.0 && stddev.is_finite()) {
        return Err(Error::invalid(format!(
            "stddev must be positive, got {stddev}"
        )));
    }
    let components = classes * modes_per_class;
    let centers: Vec<Vec<f64>> = (0..components)
        .map(|k| {
            let mut c = vec![0.0; dims];
            if components > 1 {
                let (class, mode) = (k / modes_per_class, k % modes_per_class);
                let slot = (mode * classes + class) as f64;
                let angle = std::f64::consts::TAU * slot / components as f64;
                let radius = 2.0 * stddev / (std::f64::consts::PI / components as f64).sin();
                c[0] = radius * angle.cos();
                if dims > 1 {
                    c[1] = radius * angle.sin();
                }
            }
            c
        })
        .collect();
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % components;
        for c in &centers[k] {
            data.push(c + stddev * rng.normal());
        }
        labels.push(match label_mode {
            LabelMode::ByCluster => k / modes_per_class,
            LabelMode::Random => rng.below(classes),
        });
    }
    LabeledBatch::new(Matrix::new(n, dims, data)?, labels)
}
