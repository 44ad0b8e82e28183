use super::loss::{snn_loss, snn_loss_and_inverse_grad, SnnResult};
use super::temperature::{STEP_GROWTH, STEP_SHRINK};
use super::{LabeledBatch, Temperature};
use crate::error::{Error, Result};
use crate::numkernel::{DistanceMatrix, Matrix, Metric};

/// Standalone defaults for the temperature search.
pub const DEFAULT_TEMPERATURE_STEPS: usize = 25;
pub const DEFAULT_TEMPERATURE_STEP_SIZE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedSnn {
    /// Lowest loss seen along the descent trajectory.
    pub result: SnnResult,
    /// Temperature at which `result` was observed.
    pub temperature: Temperature,
}

/// Starting points of the second descent: half-decades over `[1e-4, 1e6]`.
const SCAN_DECADES: (i32, i32) = (-4, 6);

/// Approximates the minimum of the loss over temperatures by gradient descent on `β = 1/T`.
///
/// The first descent starts at `t_init`. The loss can have several basins in `T` (a
/// finite-temperature minimum and the large-`T` plateau are common), so when `steps > 0` a
/// second descent starts from the best half-decade temperature in `[1e-4, 1e6]`. The lowest
/// loss seen on either trajectory wins; ties keep the first. With `steps = 0` the result is
/// the loss at `t_init`.
///
/// The step size adapts: an accepted step (loss did not increase) grows it by 1.5x, a
/// rejected step is discarded and halves it. `steps` counts attempted steps per descent.
pub fn optimized_snn_loss(
    batch: &LabeledBatch,
    t_init: Temperature,
    steps: usize,
    step_size: f64,
    metric: Metric,
) -> Result<OptimizedSnn> {
    if !(step_size >= 0.0 && step_size.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be >= 0, got {step_size}"
        )));
    }
    batch.require_pairs()?;
    let dist = metric.pairwise(batch.points())?;
    let labels = batch.labels();
    let mut best = descend(&dist, labels, t_init, steps, step_size)?;
    if steps == 0 {
        return Ok(best);
    }
    let mut scan_best: Option<(f64, Temperature)> = None;
    for half in 2 * SCAN_DECADES.0..=2 * SCAN_DECADES.1 {
        let t = Temperature::new(10f64.powf(half as f64 / 2.0))?;
        let loss = snn_loss_and_inverse_grad(&dist, labels, t)?.0.loss;
        if scan_best.is_none_or(|(l, _)| loss < l) {
            scan_best = Some((loss, t));
        }
    }
    let (_, start) = scan_best.expect("scan is non-empty");
    let second = descend(&dist, labels, start, steps, step_size)?;
    if second.result.loss < best.result.loss {
        best = second;
    }
    Ok(best)
}

fn descend(
    dist: &DistanceMatrix,
    labels: &[usize],
    t_init: Temperature,
    steps: usize,
    step_size: f64,
) -> Result<OptimizedSnn> {
    let mut t = t_init;
    let (mut current, mut d_beta) = snn_loss_and_inverse_grad(dist, labels, t)?;
    let mut step = step_size;
    for _ in 0..steps {
        let next = Temperature::from_inverse_clamped(t.inverse() - step * d_beta);
        if next == t {
            break;
        }
        let (result, grad) = snn_loss_and_inverse_grad(dist, labels, next)?;
        if result.loss <= current.loss {
            t = next;
            current = result;
            d_beta = grad;
            step *= STEP_GROWTH;
        } else {
            step *= STEP_SHRINK;
        }
    }
    Ok(OptimizedSnn {
        result: current,
        temperature: t,
    })
}

/// Entanglement between two point sets: `set_a` is labeled 0, `set_b` labeled 1.
pub fn cross_set_entanglement(
    set_a: &Matrix,
    set_b: &Matrix,
    t: Temperature,
    metric: Metric,
) -> Result<SnnResult> {
    if set_a.rows() == 0 || set_b.rows() == 0 {
        return Err(Error::invalid(
            "cross-set entanglement needs two non-empty sets",
        ));
    }
    let points = set_a.vstack(set_b)?;
    let labels = std::iter::repeat_n(0, set_a.rows())
        .chain(std::iter::repeat_n(1, set_b.rows()))
        .collect();
    snn_loss(&LabeledBatch::new(points, labels)?, t, metric)
}
