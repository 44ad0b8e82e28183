//! Sampled triplet loss with a hinge: `mean_i max(0, |a-p|² - |a-n|² + margin)`.

use super::LabeledBatch;
use crate::error::{Error, Result};
use crate::numkernel::{sq_dist, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletConfig {
    pub margin: f64,
    pub seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub triplets: Vec<Triplet>,
}

/// Draws one positive and one negative per anchor, anchors in index order.
pub fn sample_triplets(batch: &LabeledBatch, cfg: &TripletConfig) -> Result<Vec<Triplet>> {
    if !(cfg.margin >= 0.0 && cfg.margin.is_finite()) {
        return Err(Error::invalid(format!(
            "margin must be >= 0, got {}",
            cfg.margin
        )));
    }
    batch.require_pairs()?;
    let labels = batch.labels();
    let mut rng = Rng::seed_from(cfg.seed);
    let mut out = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        let positives: Vec<usize> = (0..labels.len())
            .filter(|&j| j != i && labels[j] == y)
            .collect();
        let negatives: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != y).collect();
        if positives.is_empty() {
            return Err(Error::InvalidSampling(format!(
                "class {y} has a single member (point {i})"
            )));
        }
        if negatives.is_empty() {
            return Err(Error::InvalidSampling(
                "batch contains a single class".into(),
            ));
        }
        let positive = positives[rng.below(positives.len())];
        let negative = negatives[rng.below(negatives.len())];
        out.push(Triplet {
            anchor: i,
            positive,
            negative,
        });
    }
    Ok(out)
}

fn hinge_arg(x: &Matrix, t: &Triplet, margin: f64) -> f64 {
    sq_dist(x.row(t.anchor), x.row(t.positive)) - sq_dist(x.row(t.anchor), x.row(t.negative))
        + margin
}

pub fn triplet_loss(batch: &LabeledBatch, cfg: &TripletConfig) -> Result<TripletLoss> {
    let triplets = sample_triplets(batch, cfg)?;
    let loss = triplet_loss_for(batch.points(), &triplets, cfg.margin);
    Ok(TripletLoss { loss, triplets })
}

/// Loss over a fixed set of triplets.
pub fn triplet_loss_for(x: &Matrix, triplets: &[Triplet], margin: f64) -> f64 {
    let sum: f64 = triplets
        .iter()
        .map(|t| hinge_arg(x, t, margin).max(0.0))
        .sum();
    sum / triplets.len() as f64
}

/// Gradient of the sampled-triplet loss. A hinge exactly at zero contributes nothing.
pub fn triplet_grad(batch: &LabeledBatch, cfg: &TripletConfig) -> Result<Matrix> {
    let triplets = sample_triplets(batch, cfg)?;
    Ok(triplet_grad_for(batch.points(), &triplets, cfg.margin))
}

pub fn triplet_grad_for(x: &Matrix, triplets: &[Triplet], margin: f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let scale = 2.0 / triplets.len() as f64;
    for t in triplets {
        if hinge_arg(x, t, margin) <= 0.0 {
            continue;
        }
        for d in 0..x.cols() {
            let a = x.get(t.anchor, d);
            let p = x.get(t.positive, d);
            let n = x.get(t.negative, d);
            // ∂/∂a = 2(n - p), ∂/∂p = -2(a - p), ∂/∂n = 2(a - n)
            let ga = g.get(t.anchor, d) + scale * (n - p);
            g.set(t.anchor, d, ga);
            let gp = g.get(t.positive, d) - scale * (a - p);
            g.set(t.positive, d, gp);
            let gn = g.get(t.negative, d) + scale * (a - n);
            g.set(t.negative, d, gn);
        }
    }
    g
}
