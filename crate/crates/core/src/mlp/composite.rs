//! Cross-entropy on the logits plus `alpha` times the soft nearest neighbor loss of
//! selected hidden layers. Negative `alpha` pushes hidden layers toward entanglement.

use serde::{Deserialize, Serialize};

use super::model::{backprop, cross_entropy, softmax_ce_grad, ForwardTrace, Gradients, Params};
use crate::error::{Error, Result};
use crate::numkernel::{DistanceMatrix, Matrix, Metric};
use crate::snn::{
    snn_loss_from_distances, snn_loss_grad_with_distances, LabeledBatch, Temperature,
    TemperatureState,
};

/// Widths above this use the cosine metric under [`MetricPolicy::Auto`].
pub const COSINE_WIDTH_THRESHOLD: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy", content = "metrics")]
#[derive(Default)]
pub enum MetricPolicy {
    /// Cosine for layers wider than [`COSINE_WIDTH_THRESHOLD`], euclidean otherwise.
    #[default]
    Auto,
    /// One metric for every layer.
    Uniform(Metric),
    /// Explicit metric per layer (hidden layers, then logits where applicable).
    PerLayer(Vec<Metric>),
}


impl MetricPolicy {
    pub fn metric_for(&self, layer: usize, width: usize) -> Metric {
        match self {
            MetricPolicy::Auto => {
                if width > COSINE_WIDTH_THRESHOLD {
                    Metric::Cosine
                } else {
                    Metric::Euclidean
                }
            }
            MetricPolicy::Uniform(m) => *m,
            MetricPolicy::PerLayer(ms) => ms.get(layer).copied().unwrap_or_default(),
        }
    }
}

/// One regularized hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnTerm {
    pub layer: usize,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLossConfig {
    pub alpha: f64,
    pub terms: Vec<SnnTerm>,
    /// One learned temperature per hidden layer; only regularized layers are updated.
    pub temperatures: Vec<TemperatureState>,
}

impl CompositeLossConfig {
    /// Plain cross-entropy.
    pub fn baseline(hidden_layers: usize, t_init: Temperature, temp_step: f64) -> Self {
        CompositeLossConfig {
            alpha: 0.0,
            terms: Vec::new(),
            temperatures: vec![TemperatureState::new(t_init, temp_step); hidden_layers],
        }
    }

    /// Regularizes `layers` (all hidden layers when `None`).
    pub fn new(
        alpha: f64,
        hidden_widths: &[usize],
        layers: Option<&[usize]>,
        metrics: &MetricPolicy,
        t_init: Temperature,
        temp_step: f64,
    ) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        let all: Vec<usize> = (0..hidden_widths.len()).collect();
        let selected = layers.unwrap_or(&all);
        let mut terms = Vec::with_capacity(selected.len());
        for &l in selected {
            if l >= hidden_widths.len() {
                return Err(Error::invalid(format!(
                    "layer {l} is not a hidden layer (network has {})",
                    hidden_widths.len()
                )));
            }
            if terms.iter().any(|t: &SnnTerm| t.layer == l) {
                return Err(Error::invalid(format!("layer {l} selected twice")));
            }
            terms.push(SnnTerm {
                layer: l,
                metric: metrics.metric_for(l, hidden_widths[l]),
            });
        }
        Ok(CompositeLossConfig {
            alpha,
            terms,
            temperatures: vec![TemperatureState::new(t_init, temp_step); hidden_widths.len()],
        })
    }

    fn active(&self) -> bool {
        self.alpha != 0.0 && !self.terms.is_empty()
    }

    pub fn temperature_values(&self) -> Vec<f64> {
        self.temperatures
            .iter()
            .map(|s| s.temperature.value())
            .collect()
    }

    /// One accept/reject step on each regularized layer's `β`, judged on the batch that
    /// produced `loss`.
    pub fn step_temperatures(&mut self, loss: &CompositeLoss) -> Result<()> {
        for (term, dist) in loss.snn.iter().zip(&loss.distances) {
            self.temperatures[term.layer].step(term.loss, term.d_loss_d_inverse, |t| {
                snn_loss_from_distances(dist, &loss.labels, t)
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnn {
    pub layer: usize,
    pub loss: f64,
    pub temperature: f64,
    pub d_loss_d_inverse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub total: f64,
    pub cross_entropy: f64,
    pub snn: Vec<LayerSnn>,
    /// Distances behind each `snn` entry, reused by the temperature update.
    distances: Vec<DistanceMatrix>,
    labels: Vec<usize>,
}

fn with_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::NoPositivePairs { .. } => Error::NoPositivePairs { layer: Some(layer) },
        other => other,
    }
}

/// Evaluates the objective and the SNN point gradients (scaled by `alpha`) at the current
/// temperatures.
fn evaluate(
    trace: &ForwardTrace,
    labels: &[usize],
    cfg: &CompositeLossConfig,
) -> Result<(CompositeLoss, Vec<Option<Matrix>>)> {
    let ce = cross_entropy(trace.logits(), labels)?;
    let mut extra = vec![None; trace.hidden_count()];
    if !cfg.active() {
        return Ok((
            CompositeLoss {
                total: ce,
                cross_entropy: ce,
                snn: Vec::new(),
                distances: Vec::new(),
                labels: Vec::new(),
            },
            extra,
        ));
    }
    let mut snn = Vec::with_capacity(cfg.terms.len());
    let mut distances = Vec::with_capacity(cfg.terms.len());
    let mut sum = 0.0;
    for term in &cfg.terms {
        let t = cfg.temperatures[term.layer].temperature;
        let batch = LabeledBatch::new(trace.hidden(term.layer).clone(), labels.to_vec())?;
        let (g, dist) = snn_loss_grad_with_distances(&batch, t, term.metric)
            .map_err(|e| with_layer(e, term.layer))?;
        distances.push(dist);
        sum += g.result.loss;
        snn.push(LayerSnn {
            layer: term.layer,
            loss: g.result.loss,
            temperature: t.value(),
            d_loss_d_inverse: g.d_loss_d_inverse,
        });
        extra[term.layer] = Some(g.point_grads.scale(cfg.alpha));
    }
    Ok((
        CompositeLoss {
            total: ce + cfg.alpha * sum,
            cross_entropy: ce,
            snn,
            distances,
            labels: labels.to_vec(),
        },
        extra,
    ))
}

/// Value of the objective at the current temperatures; afterwards every regularized
/// layer's temperature takes one accept/reject step.
pub fn composite_loss(
    trace: &ForwardTrace,
    labels: &[usize],
    cfg: &mut CompositeLossConfig,
) -> Result<CompositeLoss> {
    let (loss, _) = evaluate(trace, labels, cfg)?;
    cfg.step_temperatures(&loss)?;
    Ok(loss)
}

/// Exact gradient of the objective (at the current temperatures) w.r.t. every weight and
/// bias. Temperatures are not updated; see [`CompositeLossConfig::step_temperatures`].
pub fn backward(
    params: &Params,
    x: &Matrix,
    trace: &ForwardTrace,
    labels: &[usize],
    cfg: &CompositeLossConfig,
) -> Result<(CompositeLoss, Gradients)> {
    let (loss, extra) = evaluate(trace, labels, cfg)?;
    let d_out = softmax_ce_grad(&trace.probs, labels, 1.0 / labels.len() as f64);
    let (grads, _) = backprop(params, x, trace, d_out, &extra, false);
    Ok((loss, grads))
}
