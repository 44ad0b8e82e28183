//! White-box gradient attacks on a trained classifier: FGSM and the basic iterative
//! method, both inside an L∞ ball and the `[0, 1]` pixel range.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{fmt_f64, write_csv};
use crate::error::{Error, Result};
use crate::mlp::{backprop, forward, softmax_ce_grad, Params};
use crate::numkernel::Matrix;

pub const CLIP_MIN: f64 = 0.0;
pub const CLIP_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// L∞ budget in input units.
    pub epsilon: f64,
    /// Per-iteration step for BIM.
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Class to move every input toward; untargeted when absent.
    #[serde(default)]
    pub targeted: Option<usize>,
}

fn default_step() -> f64 {
    0.01
}

fn default_steps() -> usize {
    100
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            step_size: epsilon.max(f64::MIN_POSITIVE),
            steps: 1,
            targeted: None,
        }
    }

    pub fn bim(epsilon: f64, step_size: f64, steps: usize) -> Self {
        AttackConfig {
            epsilon,
            step_size,
            steps,
            targeted: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        Ok(())
    }
}

fn check_inputs(params: &Params, x: &Matrix, y: &[usize]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} inputs",
            y.len(),
            x.rows()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= params.spec().classes()) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    if x.data().iter().any(|v| !(CLIP_MIN..=CLIP_MAX).contains(v)) {
        return Err(Error::invalid("attack inputs must lie in [0, 1]"));
    }
    Ok(())
}

/// Row `i` is `∂ CE(f(x_i), y_i) / ∂ x_i`, the gradient of each example's own loss.
pub fn input_gradient(params: &Params, x: &Matrix, y: &[usize]) -> Result<Matrix> {
    let trace = forward(params, x)?;
    if y.len() != x.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} inputs",
            y.len(),
            x.rows()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= params.spec().classes()) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    let d_out = softmax_ce_grad(&trace.probs, y, 1.0);
    let (_, g) = backprop(params, x, &trace, d_out, &[], true);
    Ok(g.expect("input gradient requested"))
}

/// `+1`, `-1`, or `0` for a zero gradient.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signed ascent direction: up the true-label loss, or down the target-class loss.
fn direction(
    params: &Params,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
) -> Result<(Matrix, f64)> {
    Ok(match cfg.targeted {
        None => (input_gradient(params, x, y)?, 1.0),
        Some(t) => (input_gradient(params, x, &vec![t; x.rows()])?, -1.0),
    })
}

/// One signed step of size `epsilon`, clipped to `[0, 1]`.
pub fn fgsm(params: &Params, x: &Matrix, y: &[usize], cfg: &AttackConfig) -> Result<Matrix> {
    cfg.validate()?;
    check_inputs(params, x, y)?;
    let (g, s) = direction(params, x, y, cfg)?;
    let mut out = x.clone();
    for (v, gv) in out.data_mut().iter_mut().zip(g.data()) {
        *v = (*v + s * cfg.epsilon * sign(*gv)).clamp(CLIP_MIN, CLIP_MAX);
    }
    Ok(out)
}

/// Basic iterative method; see [`bim_observed`].
pub fn bim(params: &Params, x: &Matrix, y: &[usize], cfg: &AttackConfig) -> Result<Matrix> {
    bim_observed(params, x, y, cfg, |_, _| {})
}

/// `x_{t+1} = clamp(x_t ± step·sign(g), [x−ε, x+ε] ∩ [0, 1])`; `observe(t, x_t)` sees
/// every iterate after projection, `t = 1..=steps`.
pub fn bim_observed(
    params: &Params,
    x: &Matrix,
    y: &[usize],
    cfg: &AttackConfig,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<Matrix> {
    cfg.validate()?;
    check_inputs(params, x, y)?;
    let lo: Vec<f64> = x
        .data()
        .iter()
        .map(|v| (v - cfg.epsilon).max(CLIP_MIN))
        .collect();
    let hi: Vec<f64> = x
        .data()
        .iter()
        .map(|v| (v + cfg.epsilon).min(CLIP_MAX))
        .collect();
    let mut cur = x.clone();
    for t in 1..=cfg.steps {
        let (g, s) = direction(params, &cur, y, cfg)?;
        for (i, (v, gv)) in cur.data_mut().iter_mut().zip(g.data()).enumerate() {
            *v = (*v + s * cfg.step_size * sign(*gv)).clamp(lo[i], hi[i]);
        }
        observe(t, &cur);
    }
    Ok(cur)
}

/// `input_id, label, g_0, …, g_{d-1}`: one row per input gradient.
pub fn write_gradients_csv(
    path: &Path,
    comments: &[String],
    gradients: &Matrix,
    labels: &[usize],
) -> Result<()> {
    if labels.len() != gradients.rows() {
        return Err(Error::invalid("one label per gradient row required"));
    }
    let mut header = vec!["input_id".to_string(), "label".to_string()];
    header.extend((0..gradients.cols()).map(|j| format!("g_{j}")));
    let rows = (0..gradients.rows()).map(|i| {
        let mut row = vec![i.to_string(), labels[i].to_string()];
        row.extend(gradients.row(i).iter().map(|&v| fmt_f64(v)));
        row
    });
    write_csv(path, comments, &header, rows)
}
