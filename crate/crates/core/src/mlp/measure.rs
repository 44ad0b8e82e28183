use serde::{Deserialize, Serialize};

use super::composite::MetricPolicy;
use super::model::{forward, Params};
use crate::error::{Error, Result};
use crate::numkernel::Metric;
use crate::snn::{
    optimized_snn_loss, snn_loss, LabeledBatch, Temperature, DEFAULT_TEMPERATURE_STEP_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum MeasureMode {
    Fixed { t: f64 },
    Optimized { t_init: f64, steps: usize },
}

impl Default for MeasureMode {
    fn default() -> Self {
        MeasureMode::Fixed { t: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntanglement {
    /// Weight-layer index; the last one is the logit layer.
    pub layer: usize,
    pub metric: Metric,
    pub loss: f64,
    pub temperature: f64,
}

/// Soft nearest neighbor loss of every hidden layer and the logit layer for `batch`.
pub fn measure_layer_entanglement(
    params: &Params,
    batch: &LabeledBatch,
    mode: MeasureMode,
    metrics: &MetricPolicy,
) -> Result<Vec<LayerEntanglement>> {
    let trace = forward(params, batch.points())?;
    let spec = params.spec();
    trace
        .layers
        .iter()
        .enumerate()
        .map(|(l, reps)| {
            let metric = metrics.metric_for(l, spec.layer_width(l));
            let layer_batch = LabeledBatch::new(reps.clone(), batch.labels().to_vec())?;
            let tag = |e: Error| match e {
                Error::NoPositivePairs { .. } => Error::NoPositivePairs { layer: Some(l) },
                other => other,
            };
            let (loss, temperature) = match mode {
                MeasureMode::Fixed { t } => {
                    let r = snn_loss(&layer_batch, Temperature::new(t)?, metric).map_err(tag)?;
                    (r.loss, r.temperature_used)
                }
                MeasureMode::Optimized { t_init, steps } => {
                    let o = optimized_snn_loss(
                        &layer_batch,
                        Temperature::new(t_init)?,
                        steps,
                        DEFAULT_TEMPERATURE_STEP_SIZE,
                        metric,
                    )
                    .map_err(tag)?;
                    (o.result.loss, o.temperature.value())
                }
            };
            Ok(LayerEntanglement {
                layer: l,
                metric,
                loss,
                temperature,
            })
        })
        .collect()
}
