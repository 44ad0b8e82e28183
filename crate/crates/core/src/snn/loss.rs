//! The soft nearest neighbor loss and its analytic gradients.
//!
//! For point `i` with logits `a_ij = -d_ij / T` the per-point term is
//! `logsumexp_{k≠i} a_ik - logsumexp_{j≠i, y_j = y_i} a_ij`, and the loss is the mean over
//! points that have at least one same-class partner.

use super::{LabeledBatch, Temperature};
use crate::error::{Error, Result};
use crate::numkernel::{logsumexp_by, row_norms, DistanceMatrix, Matrix, Metric};

#[derive(Debug, Clone, PartialEq)]
pub struct SnnResult {
    pub loss: f64,
    /// Per-point `-log` ratio; `None` for points without a same-class partner.
    pub per_point: Vec<Option<f64>>,
    pub skipped: usize,
    pub temperature_used: f64,
}

#[derive(Debug, Clone)]
pub struct SnnGradient {
    /// `∂loss/∂points`, shaped like the batch points.
    pub point_grads: Matrix,
    pub d_loss_d_temperature: f64,
    /// `∂loss/∂β` with `β = 1/T`.
    pub d_loss_d_inverse: f64,
    pub result: SnnResult,
}

pub fn snn_loss(batch: &LabeledBatch, t: Temperature, metric: Metric) -> Result<SnnResult> {
    batch.require_pairs()?;
    let dist = metric.pairwise(batch.points())?;
    Ok(Kernel::evaluate(&dist, batch.labels(), t)?.result)
}

pub fn snn_loss_grad(batch: &LabeledBatch, t: Temperature, metric: Metric) -> Result<SnnGradient> {
    Ok(snn_loss_grad_with_distances(batch, t, metric)?.0)
}

/// [`snn_loss_grad`] that also hands back the distance matrix it used.
pub(crate) fn snn_loss_grad_with_distances(
    batch: &LabeledBatch,
    t: Temperature,
    metric: Metric,
) -> Result<(SnnGradient, DistanceMatrix)> {
    batch.require_pairs()?;
    let points = batch.points();
    let dist = metric.pairwise(points)?;
    let kernel = Kernel::evaluate(&dist, batch.labels(), t)?;
    let (w, d_beta) = kernel.distance_weights(&dist);
    let point_grads = match metric {
        Metric::Euclidean => euclidean_point_grads(points, &w),
        Metric::Cosine => cosine_point_grads(points, &w, &dist)?,
    };
    let beta = t.inverse();
    let grad = SnnGradient {
        point_grads,
        d_loss_d_temperature: -beta * beta * d_beta,
        d_loss_d_inverse: d_beta,
        result: kernel.result,
    };
    Ok((grad, dist))
}

/// Loss value from precomputed distances.
pub(crate) fn snn_loss_from_distances(
    dist: &DistanceMatrix,
    labels: &[usize],
    t: Temperature,
) -> Result<f64> {
    Ok(Kernel::evaluate(dist, labels, t)?.result.loss)
}

/// Loss value and `∂loss/∂β` only; used by the temperature search.
pub(crate) fn snn_loss_and_inverse_grad(
    dist: &DistanceMatrix,
    labels: &[usize],
    t: Temperature,
) -> Result<(SnnResult, f64)> {
    let kernel = Kernel::evaluate(dist, labels, t)?;
    let (_, d_beta) = kernel.distance_weights(dist);
    Ok((kernel.result, d_beta))
}

/// Per-point log-normalizers of one loss evaluation.
struct Kernel<'a> {
    labels: &'a [usize],
    beta: f64,
    /// (logsumexp over all k≠i, logsumexp over same-class j≠i) for valid points.
    norms: Vec<Option<(f64, f64)>>,
    valid: usize,
    result: SnnResult,
}

impl<'a> Kernel<'a> {
    fn evaluate(dist: &DistanceMatrix, labels: &'a [usize], t: Temperature) -> Result<Self> {
        let n = dist.size();
        let beta = t.inverse();
        let mut norms = Vec::with_capacity(n);
        let mut per_point = Vec::with_capacity(n);
        let mut sum = 0.0;
        let mut valid = 0usize;
        for i in 0..n {
            let row = dist.row(i);
            let yi = labels[i];
            let same = logsumexp_by(n, |j| (j != i && labels[j] == yi).then(|| -beta * row[j]));
            match same {
                Ok(log_same) => {
                    let log_all = logsumexp_by(n, |k| (k != i).then(|| -beta * row[k]))?;
                    let term = (log_all - log_same).max(0.0);
                    sum += term;
                    valid += 1;
                    norms.push(Some((log_all, log_same)));
                    per_point.push(Some(term));
                }
                Err(Error::EmptyReduction) => {
                    norms.push(None);
                    per_point.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        if valid == 0 {
            return Err(Error::NoPositivePairs { layer: None });
        }
        Ok(Kernel {
            labels,
            beta,
            norms,
            valid,
            result: SnnResult {
                loss: sum / valid as f64,
                per_point,
                skipped: n - valid,
                temperature_used: t.value(),
            },
        })
    }

    /// Symmetrised `∂loss/∂d_ij` (as an n×n matrix) and `∂loss/∂β`.
    fn distance_weights(&self, dist: &DistanceMatrix) -> (Matrix, f64) {
        let n = dist.size();
        let m = self.valid as f64;
        let mut g = Matrix::zeros(n, n);
        let mut d_beta = 0.0;
        for i in 0..n {
            let Some((log_all, log_same)) = self.norms[i] else {
                continue;
            };
            let row = dist.row(i);
            let yi = self.labels[i];
            let grow = g.row_mut(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let a = -self.beta * row[j];
                let p = (a - log_all).exp();
                let q = if self.labels[j] == yi {
                    (a - log_same).exp()
                } else {
                    0.0
                };
                grow[j] = self.beta * (q - p) / m;
                d_beta += (q - p) * row[j];
            }
        }
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w.set(i, j, g.get(i, j) + g.get(j, i));
            }
        }
        (w, d_beta / m)
    }
}

/// `grad_i = 2 Σ_j w_ij (x_i - x_j)`.
fn euclidean_point_grads(x: &Matrix, w: &Matrix) -> Matrix {
    let wx = w.matmul(x);
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let s: f64 = w.row(i).iter().sum();
        let xi = x.row(i);
        let wxi = wx.row(i);
        for (o, (xv, wv)) in out.row_mut(i).iter_mut().zip(xi.iter().zip(wxi)) {
            *o = 2.0 * (s * xv - wv);
        }
    }
    out
}

/// `grad_i = -(1/|x_i|) Σ_j w_ij (u_j - c_ij u_i)` with `u` the unit rows and
/// `c_ij = u_i·u_j`.
fn cosine_point_grads(x: &Matrix, w: &Matrix, dist: &DistanceMatrix) -> Result<Matrix> {
    let norms = row_norms(x)?;
    let units = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) / norms[i]);
    let wu = w.matmul(&units);
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (i, &norm) in norms.iter().enumerate() {
        let wc: f64 = w
            .row(i)
            .iter()
            .zip(dist.row(i))
            .map(|(wv, d)| wv * (1.0 - d))
            .sum();
        let ui = units.row(i);
        let wui = wu.row(i);
        let inv = 1.0 / norm;
        for (o, (u, wuv)) in out.row_mut(i).iter_mut().zip(ui.iter().zip(wui)) {
            *o = -inv * (wuv - wc * u);
        }
    }
    Ok(out)
}
