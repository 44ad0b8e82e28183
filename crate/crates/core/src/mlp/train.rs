use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::composite::{backward, CompositeLossConfig, MetricPolicy};
use super::measure::{measure_layer_entanglement, MeasureMode};
use super::model::{accuracy, cross_entropy, forward, MlpSpec, Params};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::Rng;
use crate::snn::{LabeledBatch, Temperature};

/// What the network minimizes. `alpha = 0` is the cross-entropy baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(default)]
    pub alpha: f64,
    /// Hidden layers to regularize; all of them when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default)]
    pub metric: MetricPolicy,
    #[serde(default = "default_t_init")]
    pub t_init: f64,
    #[serde(default = "default_temp_step")]
    pub temp_step: f64,
}

fn default_t_init() -> f64 {
    100.0
}

fn default_temp_step() -> f64 {
    0.1
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            alpha: 0.0,
            layers: None,
            metric: MetricPolicy::Auto,
            t_init: default_t_init(),
            temp_step: default_temp_step(),
        }
    }
}

impl ObjectiveSpec {
    pub fn entangled(alpha: f64) -> Self {
        ObjectiveSpec {
            alpha,
            ..Default::default()
        }
    }

    pub fn build(&self, spec: &MlpSpec) -> Result<CompositeLossConfig> {
        let hidden: Vec<usize> = (0..spec.hidden_count())
            .map(|l| spec.layer_width(l))
            .collect();
        CompositeLossConfig::new(
            self.alpha,
            &hidden,
            self.layers.as_deref(),
            &self.metric,
            Temperature::new(self.t_init)?,
            self.temp_step,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Overwritten by the experiment seed when run from a config.
    #[serde(default)]
    pub seed: u64,
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Metrics are logged at step 0, every `eval_every` steps, and at the end.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Train-split rows used for train metrics (all when absent).
    #[serde(default)]
    pub train_eval_rows: Option<usize>,
    #[serde(default = "default_measure_batch")]
    pub measure_batch: usize,
    #[serde(default)]
    pub measure_mode: MeasureMode,
}

fn default_batch() -> usize {
    256
}

fn default_lr() -> f64 {
    1e-4
}

fn default_eval_every() -> usize {
    500
}

fn default_measure_batch() -> usize {
    128
}

impl Schedule {
    pub fn new(seed: u64, steps: usize) -> Self {
        Schedule {
            seed,
            steps,
            batch_size: default_batch(),
            lr: default_lr(),
            eval_every: default_eval_every(),
            train_eval_rows: None,
            measure_batch: default_measure_batch(),
            measure_mode: MeasureMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub train_ce: f64,
    pub test_ce: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Hidden layers then logits.
    pub entanglement: Vec<f64>,
    /// Learned temperature of each hidden layer.
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    /// Weight layers (hidden + logit).
    pub layer_count: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["step", "train_ce", "test_ce", "train_acc", "test_acc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=self.layer_count).map(|i| format!("ent_layer_{i}")));
        h.extend((1..self.layer_count).map(|i| format!("temp_layer_{i}")));
        h
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Cross-entropy and accuracy of `params` on `data`.
pub fn evaluate(params: &Params, data: &LabeledBatch) -> Result<(f64, f64)> {
    let trace = forward(params, data.points())?;
    let ce = cross_entropy(trace.logits(), data.labels())?;
    Ok((ce, accuracy(&trace.predictions(), data.labels())))
}

fn prefix(data: &LabeledBatch, rows: Option<usize>) -> LabeledBatch {
    match rows {
        Some(n) if n < data.len() => data.select(&(0..n).collect::<Vec<_>>()),
        _ => data.clone(),
    }
}

/// Mini-batch Adam on the composite objective.
///
/// Parameters are initialized from `Rng::seed_from(seed).fork(0)`, epochs are shuffled
/// with `fork(1)`, and the entanglement measurement batch is drawn with `fork(2)`. A
/// partial batch at the end of an epoch is dropped.
pub fn train(
    dataset: &Dataset,
    spec: &MlpSpec,
    objective: &ObjectiveSpec,
    schedule: &Schedule,
) -> Result<(Params, MetricsLog)> {
    let train = &dataset.train;
    if train.dims() != spec.input_width() {
        return Err(Error::invalid(format!(
            "data has {} features, network expects {}",
            train.dims(),
            spec.input_width()
        )));
    }
    if schedule.batch_size < 2 || schedule.batch_size > train.len() {
        return Err(Error::invalid(format!(
            "batch size {} must be in 2..={}",
            schedule.batch_size,
            train.len()
        )));
    }
    if dataset.test.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    if schedule.eval_every == 0 {
        return Err(Error::invalid("eval_every must be >= 1"));
    }
    let root = Rng::seed_from(schedule.seed);
    let mut params = Params::init(spec, &mut root.fork(0));
    let mut order_rng = root.fork(1);
    let measure_idx: Vec<usize> = {
        let mut perm = root.fork(2).permutation(train.len());
        perm.truncate(schedule.measure_batch.min(train.len()));
        perm
    };
    let measure_set = train.select(&measure_idx);
    let train_eval = prefix(train, schedule.train_eval_rows);
    let mut cfg = objective.build(spec)?;
    let mut adam = AdamState::new(&params, schedule.lr);
    let mut log = MetricsLog {
        layer_count: spec.layer_count(),
        rows: Vec::new(),
    };

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 0..=schedule.steps {
        if step % schedule.eval_every == 0 || step == schedule.steps {
            let (train_ce, train_acc) = evaluate(&params, &train_eval)?;
            let (test_ce, test_acc) = evaluate(&params, &dataset.test)?;
            let ent = measure_layer_entanglement(
                &params,
                &measure_set,
                schedule.measure_mode,
                &objective.metric,
            )?;
            log.rows.push(MetricsRow {
                step,
                train_ce,
                test_ce,
                train_acc,
                test_acc,
                entanglement: ent.iter().map(|e| e.loss).collect(),
                temperatures: cfg.temperature_values(),
            });
        }
        if step == schedule.steps {
            break;
        }
        if cursor + schedule.batch_size > order.len() {
            order = order_rng.permutation(train.len());
            cursor = 0;
        }
        let batch = train.select(&order[cursor..cursor + schedule.batch_size]);
        cursor += schedule.batch_size;
        let trace = forward(&params, batch.points())?;
        let (loss, grads) = backward(&params, batch.points(), &trace, batch.labels(), &cfg)?;
        if !loss.total.is_finite() {
            return Err(Error::invalid(format!("objective diverged at step {step}")));
        }
        cfg.step_temperatures(&loss)?;
        adam.apply(&mut params, &grads)?;
    }
    Ok((params, log))
}
