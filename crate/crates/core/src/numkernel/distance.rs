use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Pairwise dissimilarity used inside the soft nearest neighbor kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Squared euclidean distance.
    #[default]
    Euclidean,
    /// `1 - cos(x, y)`.
    Cosine,
}

impl Metric {
    pub fn pairwise(self, x: &Matrix) -> Result<DistanceMatrix> {
        match self {
            Metric::Euclidean => pairwise_sq_euclidean(x),
            Metric::Cosine => pairwise_cosine_distance(x),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::invalid(format!("unknown metric '{other}'"))),
        }
    }
}

/// Square, symmetric matrix of pairwise distances with an exactly-zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Matrix);

impl DistanceMatrix {
    #[inline]
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

fn check_finite(x: &Matrix) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("distance input contains non-finite values"))
    }
}

/// `D[i][j] = Σ_d (x_i[d] - x_j[d])²`, evaluated pairwise from coordinate differences
/// (no Gram-matrix expansion), upper triangle mirrored.
pub fn pairwise_sq_euclidean(x: &Matrix) -> Result<DistanceMatrix> {
    check_finite(x)?;
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    const TILE: usize = 32;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                let xi = x.row(i);
                let (lo, hi) = (bj.max(i + 1), (bj + TILE).min(n));
                for (j, v) in (lo..hi).zip(&mut d.row_mut(i)[lo..hi]) {
                    *v = sq_dist(xi, x.row(j));
                }
            }
        }
    }
    mirror_upper(&mut d);
    Ok(DistanceMatrix(d))
}

/// Copies the strict upper triangle onto the lower one.
fn mirror_upper(d: &mut Matrix) {
    let n = d.rows();
    for i in 1..n {
        for j in 0..i {
            let v = d.get(j, i);
            d.set(i, j, v);
        }
    }
}

/// Accumulates in four interleaved lanes so the loop vectorizes; the summation order is
/// fixed, so results are deterministic and symmetric in the arguments.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    let mut acc = [0.0; 4];
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            let d = p[k] - q[k];
            acc[k] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `D[i][j] = 1 - x_i·x_j / (|x_i| |x_j|)`, clamped into `[0, 2]`, zero diagonal.
pub fn pairwise_cosine_distance(x: &Matrix) -> Result<DistanceMatrix> {
    check_finite(x)?;
    let units = unit_rows(x)?;
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = cosine_from_units(units.row(i), units.row(j));
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    Ok(DistanceMatrix(d))
}

#[inline]
pub(crate) fn cosine_from_units(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    (1.0 - dot).clamp(0.0, 2.0)
}

/// Row norms, failing on a zero-norm row.
pub(crate) fn row_norms(x: &Matrix) -> Result<Vec<f64>> {
    x.row_iter()
        .enumerate()
        .map(|(i, r)| {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroVector { row: i })
            }
        })
        .collect()
}

pub(crate) fn unit_rows(x: &Matrix) -> Result<Matrix> {
    let norms = row_norms(x)?;
    Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        x.get(i, j) / norms[i]
    }))
}
