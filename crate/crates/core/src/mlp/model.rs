use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Rng};

/// Layer widths `input → hidden… → classes`. Hidden layers use ReLU, the output softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::invalid(format!(
                "need input, at least one hidden layer, and output widths; got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::invalid(format!(
                "layer widths must be >= 1: {widths:?}"
            )));
        }
        Ok(MlpSpec { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Weight layers, hidden plus logit.
    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn hidden_count(&self) -> usize {
        self.widths.len() - 2
    }

    /// Output width of weight layer `l`.
    pub fn layer_width(&self, l: usize) -> usize {
        self.widths[l + 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`; activations are `h W + b`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }
}

/// Weights and biases of every layer. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    spec: MlpSpec,
    pub layers: Vec<Layer>,
}

pub type Gradients = Params;

impl Params {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Params {
            spec: spec.clone(),
            layers,
        }
    }

    /// Uniform in `±sqrt(6 / fan_in)` for weights, zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Self {
        let mut p = Params::zeros(spec);
        for layer in &mut p.layers {
            let limit = (6.0 / layer.weights.rows() as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        p
    }

    pub fn from_layers(spec: &MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != spec.layer_count() {
            return Err(Error::invalid(format!(
                "{} layers for a spec with {}",
                layers.len(),
                spec.layer_count()
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.weights.shape() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::invalid(format!(
                    "layer {l} shape does not match spec"
                )));
            }
        }
        Ok(Params {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Flat view over every parameter (weights then bias, layer by layer).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.data_mut().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Outputs of every weight layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Hidden post-activations `f^1..f^{k-1}` followed by the logits `f^k`.
    pub layers: Vec<Matrix>,
    pub probs: Matrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        self.layers.last().unwrap()
    }

    pub fn hidden(&self, i: usize) -> &Matrix {
        &self.layers[i]
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.probs.row_iter().map(argmax).collect()
    }
}

/// Index of the largest value, ties to the lower index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn affine(h: &Matrix, layer: &Layer) -> Matrix {
    let mut z = h.matmul(&layer.weights);
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    p
}

pub fn forward(params: &Params, x: &Matrix) -> Result<ForwardTrace> {
    if x.cols() != params.spec.input_width() {
        return Err(Error::invalid(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            params.spec.input_width()
        )));
    }
    let last = params.layers.len() - 1;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { x } else { &layers[l - 1] };
        let mut z = affine(input, layer);
        if l != last {
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        layers.push(z);
    }
    let probs = softmax(layers.last().unwrap());
    Ok(ForwardTrace { layers, probs })
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invalid(format!(
            "{} labels for {rows} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} >= class count {classes}"
        )));
    }
    Ok(())
}

/// Mean of `-log softmax(logits)[y]`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(labels, logits.rows(), logits.cols())?;
    if labels.is_empty() {
        return Err(Error::invalid("cross-entropy of an empty batch"));
    }
    let mut sum = 0.0;
    for (row, &y) in logits.row_iter().zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        sum += lse - row[y];
    }
    Ok(sum / labels.len() as f64)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Backpropagates `d_out` (gradient w.r.t. the logits) plus optional extra gradients on
/// hidden post-activations. Returns parameter gradients and the gradient w.r.t. the input.
pub(crate) fn backprop(
    params: &Params,
    x: &Matrix,
    trace: &ForwardTrace,
    d_out: Matrix,
    hidden_extra: &[Option<Matrix>],
    want_input_grad: bool,
) -> (Gradients, Option<Matrix>) {
    let mut grads = Params::zeros(&params.spec);
    let mut delta = d_out;
    let n_layers = params.layers.len();
    let mut input_grad = None;
    for l in (0..n_layers).rev() {
        let input = if l == 0 { x } else { &trace.layers[l - 1] };
        grads.layers[l].weights = input.t_matmul(&delta);
        let bias = &mut grads.layers[l].bias;
        for row in delta.row_iter() {
            for (b, d) in bias.iter_mut().zip(row) {
                *b += d;
            }
        }
        if l == 0 {
            if want_input_grad {
                input_grad = Some(delta.matmul_t(&params.layers[0].weights));
            }
            break;
        }
        let mut prev = delta.matmul_t(&params.layers[l].weights);
        if let Some(Some(extra)) = hidden_extra.get(l - 1) {
            for (p, e) in prev.data_mut().iter_mut().zip(extra.data()) {
                *p += e;
            }
        }
        let h = &trace.layers[l - 1];
        for (p, &hv) in prev.data_mut().iter_mut().zip(h.data()) {
            if hv <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    (grads, input_grad)
}

/// `(softmax - onehot) * scale`.
pub(crate) fn softmax_ce_grad(probs: &Matrix, labels: &[usize], scale: f64) -> Matrix {
    let mut d = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let v = d.get(i, y);
        d.set(i, y, v - 1.0);
    }
    d.data_mut().iter_mut().for_each(|v| *v *= scale);
    d
}
