//! Deep k-nearest-neighbor credibility: exact neighbor search in each selected layer's
//! representation space, disagreement counts as nonconformity, and conformal p-values
//! calibrated on a held-out set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{argmax, forward, MetricPolicy, Params};
use crate::numkernel::{cosine_from_units, sq_dist, unit_rows, Matrix, Metric};
use crate::snn::LabeledBatch;

pub const DEFAULT_K: usize = 10;

/// Query rows processed per distance block.
const QUERY_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DknnConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Weight layers to index (hidden layers then logits); all of them when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "euclidean_policy")]
    pub metric: MetricPolicy,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn euclidean_policy() -> MetricPolicy {
    MetricPolicy::Uniform(Metric::Euclidean)
}

impl Default for DknnConfig {
    fn default() -> Self {
        DknnConfig {
            k: DEFAULT_K,
            layers: None,
            metric: euclidean_policy(),
        }
    }
}

#[derive(Debug, Clone)]
struct IndexedLayer {
    layer: usize,
    metric: Metric,
    /// Unit rows under the cosine metric.
    reps: Matrix,
    sq_norms: Vec<f64>,
}

impl IndexedLayer {
    fn new(layer: usize, metric: Metric, reps: Matrix) -> Result<Self> {
        let reps = match metric {
            Metric::Euclidean => reps,
            Metric::Cosine => unit_rows(&reps)?,
        };
        let sq_norms = reps
            .row_iter()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect();
        Ok(IndexedLayer {
            layer,
            metric,
            reps,
            sq_norms,
        })
    }

    fn exact(&self, q: &[f64], j: usize) -> f64 {
        match self.metric {
            Metric::Euclidean => sq_dist(q, self.reps.row(j)),
            Metric::Cosine => cosine_from_units(q, self.reps.row(j)),
        }
    }

    /// `k` nearest training rows of every query row, ties to the lower index.
    ///
    /// Distances come from one matrix product per block; every candidate within rounding
    /// slack of the k-th approximate distance is then re-scored exactly, so the result
    /// equals a brute-force loop.
    fn search(&self, queries: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
        if queries.cols() != self.reps.cols() {
            return Err(Error::invalid(format!(
                "layer {} queries have {} columns, index has {}",
                self.layer,
                queries.cols(),
                self.reps.cols()
            )));
        }
        let queries = match self.metric {
            Metric::Euclidean => queries.clone(),
            Metric::Cosine => unit_rows(queries)?,
        };
        let max_norm = self.sq_norms.iter().copied().fold(0.0, f64::max);
        let n = self.reps.rows();
        let mut out = Vec::with_capacity(queries.rows());
        let mut approx = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for start in (0..queries.rows()).step_by(QUERY_BLOCK) {
            let idx: Vec<usize> = (start..(start + QUERY_BLOCK).min(queries.rows())).collect();
            let block = queries.select_rows(&idx);
            let dots = block.matmul_t(&self.reps);
            for (b, q) in block.row_iter().enumerate() {
                let qn: f64 = q.iter().map(|v| v * v).sum();
                for (j, a) in approx.iter_mut().enumerate() {
                    let dot = dots.get(b, j);
                    *a = match self.metric {
                        Metric::Euclidean => qn + self.sq_norms[j] - 2.0 * dot,
                        Metric::Cosine => 1.0 - dot,
                    };
                }
                scratch.copy_from_slice(&approx);
                let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
                let slack = 1e-9 * (qn + max_norm) + 1e-12;
                let bound = *kth + slack;
                let mut cands: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| approx[j] <= bound)
                    .map(|j| (self.exact(q, j), j))
                    .collect();
                cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                out.push(cands.into_iter().take(k).map(|(_, j)| j).collect());
            }
        }
        Ok(out)
    }
}

/// Neighbor indices and labels in each indexed layer for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    pub indices: Vec<Vec<usize>>,
    pub labels: Vec<Vec<usize>>,
}

/// Training representations of the selected layers, searched exactly.
#[derive(Debug, Clone)]
pub struct DknnIndex {
    params: Option<Params>,
    layers: Vec<IndexedLayer>,
    labels: Vec<usize>,
    classes: usize,
    k: usize,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must be in 1..{n} for {n} training points, got {k}"
        )));
    }
    Ok(())
}

/// Indexes `train` through `params`. Layers are weight-layer indices, hidden first and the
/// logit layer last.
pub fn build_index(
    params: &Params,
    train: &LabeledBatch,
    layers: &[usize],
    k: usize,
    metrics: &MetricPolicy,
) -> Result<DknnIndex> {
    let spec = params.spec();
    if layers.is_empty() {
        return Err(Error::invalid("DkNN needs at least one layer"));
    }
    if let Some(&bad) = layers.iter().find(|&&l| l >= spec.layer_count()) {
        return Err(Error::invalid(format!(
            "layer {bad} out of range (network has {})",
            spec.layer_count()
        )));
    }
    check_k(k, train.len())?;
    if let Some(&bad) = train.labels().iter().find(|&&y| y >= spec.classes()) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    let trace = forward(params, train.points())?;
    let indexed = layers
        .iter()
        .map(|&l| {
            let metric = metrics.metric_for(l, spec.layer_width(l));
            IndexedLayer::new(l, metric, trace.layers[l].clone())
        })
        .collect::<Result<_>>()?;
    Ok(DknnIndex {
        params: Some(params.clone()),
        layers: indexed,
        labels: train.labels().to_vec(),
        classes: spec.classes(),
        k,
    })
}

/// Every weight layer: hidden layers then logits.
pub fn all_layers(params: &Params) -> Vec<usize> {
    (0..params.spec().layer_count()).collect()
}

impl DknnIndex {
    /// Index over precomputed representations (one matrix per layer, same rows).
    pub fn from_representations(
        reps: Vec<(Matrix, Metric)>,
        labels: Vec<usize>,
        classes: usize,
        k: usize,
    ) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::invalid("DkNN needs at least one layer"));
        }
        if reps.iter().any(|(m, _)| m.rows() != labels.len()) {
            return Err(Error::invalid(
                "every layer must cover the same training points",
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::invalid(format!(
                "label {bad} >= class count {classes}"
            )));
        }
        check_k(k, labels.len())?;
        let layers = reps
            .into_iter()
            .enumerate()
            .map(|(l, (m, metric))| IndexedLayer::new(l, metric, m))
            .collect::<Result<_>>()?;
        Ok(DknnIndex {
            params: None,
            layers,
            labels,
            classes,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.layer).collect()
    }

    pub fn train_size(&self) -> usize {
        self.labels.len()
    }

    /// Representations of `x` for each indexed layer.
    pub fn represent(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let params = self
            .params
            .as_ref()
            .ok_or_else(|| Error::invalid("index was built without a model"))?;
        let mut trace = forward(params, x)?;
        Ok(self
            .layers
            .iter()
            .map(|l| std::mem::replace(&mut trace.layers[l.layer], Matrix::zeros(0, 1)))
            .collect())
    }

    pub fn neighbors_of_representations(&self, reps: &[Matrix]) -> Result<Vec<Neighbors>> {
        if reps.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "{} representation layers for an index over {}",
                reps.len(),
                self.layers.len()
            )));
        }
        let rows = reps[0].rows();
        if reps.iter().any(|r| r.rows() != rows) {
            return Err(Error::invalid(
                "representation layers disagree on row count",
            ));
        }
        let per_layer = self
            .layers
            .iter()
            .zip(reps)
            .map(|(l, r)| l.search(r, self.k))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..rows)
            .map(|i| {
                let indices: Vec<Vec<usize>> = per_layer.iter().map(|l| l[i].clone()).collect();
                let labels = indices
                    .iter()
                    .map(|nn| nn.iter().map(|&j| self.labels[j]).collect())
                    .collect();
                Neighbors { indices, labels }
            })
            .collect())
    }

    pub fn neighbors(&self, x: &Matrix) -> Result<Vec<Neighbors>> {
        self.neighbors_of_representations(&self.represent(x)?)
    }
}

/// Number of neighbors, summed over layers, whose label differs from `candidate`.
pub fn nonconformity(neighbors: &Neighbors, candidate: usize) -> usize {
    neighbors
        .labels
        .iter()
        .map(|l| l.iter().filter(|&&y| y != candidate).count())
        .sum()
}

/// Sorted holdout nonconformity scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    scores: Vec<usize>,
}

impl Calibration {
    pub fn from_scores(mut scores: Vec<usize>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid(
                "calibration needs at least one holdout point",
            ));
        }
        scores.sort_unstable();
        Ok(Calibration { scores })
    }

    pub fn scores(&self) -> &[usize] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Fraction of calibration scores `>= alpha`.
    pub fn p_value(&self, alpha: usize) -> f64 {
        let below = self.scores.partition_point(|&s| s < alpha);
        (self.scores.len() - below) as f64 / self.scores.len() as f64
    }
}

pub fn calibrate_neighbors(neighbors: &[Neighbors], labels: &[usize]) -> Result<Calibration> {
    if neighbors.len() != labels.len() {
        return Err(Error::invalid("one label per holdout point required"));
    }
    Calibration::from_scores(
        neighbors
            .iter()
            .zip(labels)
            .map(|(nb, &y)| nonconformity(nb, y))
            .collect(),
    )
}

/// Scores each holdout point against its true label.
pub fn calibrate(index: &DknnIndex, holdout: &LabeledBatch) -> Result<Calibration> {
    if holdout.is_empty() {
        return Err(Error::invalid(
            "calibration needs at least one holdout point",
        ));
    }
    calibrate_neighbors(&index.neighbors(holdout.points())?, holdout.labels())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityResult {
    pub predicted: usize,
    pub credibility: f64,
    pub confidence: f64,
    pub p_values: Vec<f64>,
    /// Nonconformity of every candidate class.
    pub nonconformity: Vec<usize>,
    pub neighbor_labels: Vec<Vec<usize>>,
}

pub fn credibility_from_neighbors(
    neighbors: &Neighbors,
    classes: usize,
    calibration: &Calibration,
) -> CredibilityResult {
    let nonconf: Vec<usize> = (0..classes).map(|c| nonconformity(neighbors, c)).collect();
    let p: Vec<f64> = nonconf.iter().map(|&a| calibration.p_value(a)).collect();
    let predicted = argmax(&p);
    let second = p
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != predicted)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    CredibilityResult {
        predicted,
        credibility: p[predicted],
        confidence: 1.0 - second,
        p_values: p,
        nonconformity: nonconf,
        neighbor_labels: neighbors.labels.clone(),
    }
}

pub fn credibility(
    index: &DknnIndex,
    calibration: &Calibration,
    x: &Matrix,
) -> Result<Vec<CredibilityResult>> {
    Ok(index
        .neighbors(x)?
        .iter()
        .map(|nb| credibility_from_neighbors(nb, index.classes, calibration))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grouping<'a> {
    /// Explicit group id per result (e.g. the attack strength index).
    Groups(&'a [usize]),
    /// Equal-width credibility bins over `[0, 1]`.
    Bins(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub group: usize,
    pub mean_credibility: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    /// Non-empty groups in ascending group order.
    pub points: Vec<CurvePoint>,
    /// Pearson correlation of mean credibility with accuracy across points; `None` when
    /// either has zero variance.
    pub correlation: Option<f64>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn calibration_curve(
    results: &[CredibilityResult],
    correct: &[bool],
    grouping: Grouping<'_>,
) -> Result<CalibrationCurve> {
    if results.is_empty() {
        return Err(Error::invalid("calibration curve of no results"));
    }
    if correct.len() != results.len() {
        return Err(Error::invalid("one correctness flag per result required"));
    }
    let groups: Vec<usize> = match grouping {
        Grouping::Groups(g) => {
            if g.len() != results.len() {
                return Err(Error::invalid("one group id per result required"));
            }
            g.to_vec()
        }
        Grouping::Bins(0) => return Err(Error::invalid("need at least one bin")),
        Grouping::Bins(b) => results
            .iter()
            .map(|r| ((r.credibility * b as f64) as usize).min(b - 1))
            .collect(),
    };
    let mut ids: Vec<usize> = groups.clone();
    ids.sort_unstable();
    ids.dedup();
    let points: Vec<CurvePoint> = ids
        .into_iter()
        .map(|g| {
            let members: Vec<usize> = (0..results.len()).filter(|&i| groups[i] == g).collect();
            let count = members.len();
            let cred = members.iter().map(|&i| results[i].credibility).sum::<f64>() / count as f64;
            let hits = members.iter().filter(|&&i| correct[i]).count();
            CurvePoint {
                group: g,
                mean_credibility: cred,
                accuracy: hits as f64 / count as f64,
                count,
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.mean_credibility).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.accuracy).collect();
    Ok(CalibrationCurve {
        correlation: pearson(&xs, &ys),
        points,
    })
}
