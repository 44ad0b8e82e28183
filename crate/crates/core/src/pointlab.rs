//! Gradient descent directly on point coordinates, plus the summary statistics used to
//! judge the toy runs (nearest-neighbor label accuracy, spread, per-class modes).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{sq_dist, Matrix, Metric};
use crate::snn::{
    optimized_snn_loss, sample_triplets, snn_loss_grad, triplet_grad_for, triplet_loss_for,
    LabeledBatch, Temperature, TripletConfig, DEFAULT_TEMPERATURE_STEP_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LossKind {
    Snn { metric: Metric },
    Triplet { margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy")]
pub enum TemperaturePolicy {
    Fixed {
        t: f64,
    },
    /// Re-run the temperature search from the previous optimum before every step.
    Optimized {
        t_init: f64,
        steps_per_update: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointOptConfig {
    pub loss: LossKind,
    pub direction: Direction,
    pub steps: usize,
    pub step_size: f64,
    pub temperature: TemperaturePolicy,
    /// Seeds triplet sampling; step `s` samples with `seed + s`.
    pub seed: u64,
    /// Snapshot interval. Step 0 and the final step are always recorded.
    pub record_every: usize,
}

impl Default for PointOptConfig {
    fn default() -> Self {
        PointOptConfig {
            loss: LossKind::Snn {
                metric: Metric::Euclidean,
            },
            direction: Direction::Minimize,
            steps: 500,
            step_size: 1.0,
            temperature: TemperaturePolicy::Fixed { t: 1.0 },
            seed: 0,
            record_every: 100,
        }
    }
}

impl PointOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be >= 1"));
        }
        match self.temperature {
            TemperaturePolicy::Fixed { t } | TemperaturePolicy::Optimized { t_init: t, .. } => {
                Temperature::new(t)?;
            }
        }
        if let LossKind::Triplet { margin } = self.loss {
            if margin.is_nan() || margin < 0.0 {
                return Err(Error::invalid("triplet margin must be >= 0"));
            }
        }
        Ok(())
    }

    /// Number of snapshots `optimize_points` will record.
    pub fn snapshot_count(&self) -> usize {
        let interior = (self.steps - 1) / self.record_every;
        1 + interior + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub points: Matrix,
    pub loss: f64,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub labels: Vec<usize>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn first(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory has at least two snapshots")
    }

    pub fn final_batch(&self) -> LabeledBatch {
        LabeledBatch::new(self.last().points.clone(), self.labels.clone())
            .expect("snapshot shapes match labels")
    }
}

struct Evaluation {
    loss: f64,
    grad: Matrix,
    temperature: Option<Temperature>,
}

fn evaluate(
    batch: &LabeledBatch,
    cfg: &PointOptConfig,
    step: usize,
    t: Temperature,
) -> Result<Evaluation> {
    match cfg.loss {
        LossKind::Snn { metric } => {
            let t = match cfg.temperature {
                TemperaturePolicy::Fixed { .. } => t,
                TemperaturePolicy::Optimized {
                    steps_per_update, ..
                } => {
                    optimized_snn_loss(
                        batch,
                        t,
                        steps_per_update,
                        DEFAULT_TEMPERATURE_STEP_SIZE,
                        metric,
                    )?
                    .temperature
                }
            };
            let g = snn_loss_grad(batch, t, metric)?;
            Ok(Evaluation {
                loss: g.result.loss,
                grad: g.point_grads,
                temperature: Some(t),
            })
        }
        LossKind::Triplet { margin } => {
            let tc = TripletConfig {
                margin,
                seed: cfg.seed.wrapping_add(step as u64),
            };
            let triplets = sample_triplets(batch, &tc)?;
            Ok(Evaluation {
                loss: triplet_loss_for(batch.points(), &triplets, margin),
                grad: triplet_grad_for(batch.points(), &triplets, margin),
                temperature: None,
            })
        }
    }
}

/// Plain gradient descent (ascent for [`Direction::Maximize`]) on the point coordinates.
///
/// Snapshot losses are evaluated on the recorded points; for triplet losses that uses the
/// triplets sampled for that step.
pub fn optimize_points(batch: &LabeledBatch, cfg: &PointOptConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut t = match cfg.temperature {
        TemperaturePolicy::Fixed { t } | TemperaturePolicy::Optimized { t_init: t, .. } => {
            Temperature::new(t)?
        }
    };
    let sign = match cfg.direction {
        Direction::Minimize => -1.0,
        Direction::Maximize => 1.0,
    };
    let mut current = batch.clone();
    let mut snapshots = Vec::with_capacity(cfg.snapshot_count());
    for step in 0..=cfg.steps {
        let eval = evaluate(&current, cfg, step, t)?;
        if !eval.loss.is_finite() {
            return Err(Error::invalid(format!("loss diverged at step {step}")));
        }
        if let Some(nt) = eval.temperature {
            t = nt;
        }
        if step == 0 || step == cfg.steps || step % cfg.record_every == 0 {
            snapshots.push(Snapshot {
                step,
                points: current.points().clone(),
                loss: eval.loss,
                temperature: eval.temperature.map(Temperature::value),
            });
        }
        if step == cfg.steps {
            break;
        }
        let mut pts = current.points().clone();
        for (p, g) in pts.data_mut().iter_mut().zip(eval.grad.data()) {
            *p += sign * cfg.step_size * g;
        }
        if !pts.is_finite() {
            return Err(Error::invalid(format!("points diverged at step {step}")));
        }
        current = current.with_points(pts)?;
    }
    Ok(Trajectory {
        labels: batch.labels().to_vec(),
        snapshots,
    })
}

/// Indices of the `k` nearest rows to row `i` (euclidean, self excluded, ties to the lower
/// index).
fn nearest_excluding_self(x: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(x.row(i), x.row(j)), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, j)| j).collect()
}

/// Majority label among `labels`, ties to the lower class id.
pub(crate) fn majority(labels: impl IntoIterator<Item = usize>, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for y in labels {
        counts[y] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Fraction of points whose `k` nearest neighbors (self excluded) vote for their own label.
pub fn knn_label_accuracy(batch: &LabeledBatch, k: usize) -> Result<f64> {
    let n = batch.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k must be in 1..{n}, got {k}")));
    }
    let classes = batch.class_count();
    let x = batch.points();
    let y = batch.labels();
    let hits = (0..n)
        .filter(|&i| {
            let nn = nearest_excluding_self(x, i, k);
            majority(nn.into_iter().map(|j| y[j]), classes) == y[i]
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// Mean euclidean distance over all unordered pairs.
pub fn spread(points: &Matrix) -> Result<f64> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::invalid("spread needs at least two points"));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += sq_dist(points.row(i), points.row(j)).sqrt();
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Deterministic 2-means: seeds at the point farthest from the mean and the point farthest
/// from that, then Lloyd iterations until assignments settle.
pub fn two_means(points: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::invalid("2-means needs at least two points"));
    }
    let d = points.cols();
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|i| points.get(i, c)).sum::<f64>() / n as f64)
        .collect();
    let farthest_from = |c: &[f64]| {
        (0..n)
            .max_by(|&a, &b| {
                sq_dist(points.row(a), c)
                    .total_cmp(&sq_dist(points.row(b), c))
                    .then(b.cmp(&a))
            })
            .unwrap()
    };
    let a = farthest_from(&mean);
    let b = farthest_from(points.row(a));
    let mut centroids = [points.row(a).to_vec(), points.row(b).to_vec()];
    let mut assign = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let c = usize::from(
                sq_dist(points.row(i), &centroids[1]) < sq_dist(points.row(i), &centroids[0]),
            );
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == k).collect();
            if members.is_empty() {
                continue;
            }
            for (c, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|&i| points.get(i, c)).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let [c0, c1] = centroids;
    Ok((c0, c1))
}

/// Distance between the two 2-means centroids of each class's points, indexed by class.
pub fn class_mode_separation(batch: &LabeledBatch) -> Result<Vec<f64>> {
    (0..batch.class_count())
        .map(|c| {
            let idx: Vec<usize> = (0..batch.len())
                .filter(|&i| batch.labels()[i] == c)
                .collect();
            let (a, b) = two_means(&batch.points().select_rows(&idx))?;
            Ok(sq_dist(&a, &b).sqrt())
        })
        .collect()
}
