//! Subcommand bodies. Each writes its outputs under the run directory, every file carrying
//! `# config_hash=<sha256>` and `# command=<name>` header lines.

use std::fs;
use std::path::{Path, PathBuf};

use entangle_core::attacks::{bim, fgsm, input_gradient, write_gradients_csv};
use entangle_core::dataio::{
    fmt_f64, gen_gaussian_blobs, image_side, read_csv, read_idx_images, read_idx_labels,
    shuffle_pixels, write_csv, write_idx_images_f64, write_idx_labels, write_metrics_csv,
    write_points_csv, Dataset,
};
use entangle_core::dknn::{
    build_index, calibrate, calibration_curve, credibility_from_neighbors, CalibrationCurve,
    CredibilityResult, DknnIndex, Grouping,
};
use entangle_core::mlp::{
    accuracy, evaluate, forward, load_checkpoint, measure_layer_entanglement, save_checkpoint,
    train, LayerEntanglement, MetricsLog, MlpSpec, ObjectiveSpec, Params, Schedule,
};
use entangle_core::pointlab::{class_mode_separation, knn_label_accuracy, optimize_points, spread};
use entangle_core::{LabeledBatch, Matrix, Rng};

use crate::config::{ExperimentConfig, Split};
use crate::data::load_dataset;
use crate::error::{CliError, CliResult};

/// Resolved configuration plus where outputs go.
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    hash: String,
    command: &'static str,
}

impl Run {
    pub fn new(config: ExperimentConfig, out: PathBuf, command: &'static str) -> CliResult<Self> {
        fs::create_dir_all(&out)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            hash: config.hash(),
            config,
            out,
            command,
        })
    }

    pub fn header(&self) -> Vec<String> {
        vec![
            format!("config_hash={}", self.hash),
            format!("command={}", self.command),
        ]
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        write_csv(&self.path(name), &self.header(), &header, rows)?;
        Ok(())
    }

    /// Dataset, or a configuration error if the section is missing.
    pub fn dataset(&self) -> CliResult<Dataset> {
        load_dataset(
            ExperimentConfig::require(&self.config.dataset, "dataset")?,
            self.config.seed,
        )
    }
}

fn load_model(path: &Path) -> CliResult<Params> {
    if !path.exists() {
        return Err(CliError::Config(format!(
            "checkpoint {} not found",
            path.display()
        )));
    }
    Ok(load_checkpoint(path)?)
}

fn check_model_fits(params: &Params, data: &Dataset) -> CliResult<()> {
    let spec = params.spec();
    if spec.input_width() != data.train.dims() || spec.classes() < data.classes {
        return Err(CliError::Config(format!(
            "checkpoint expects {} inputs and {} classes; data has {} and {}",
            spec.input_width(),
            spec.classes(),
            data.train.dims(),
            data.classes
        )));
    }
    Ok(())
}

fn leading(batch: &LabeledBatch, n: usize) -> LabeledBatch {
    batch.select(&(0..n.min(batch.len())).collect::<Vec<_>>())
}

// ---------------------------------------------------------------- toy

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRunSummary {
    pub name: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_knn_accuracy: f64,
    pub final_knn_accuracy: f64,
    pub initial_spread: f64,
    pub final_spread: f64,
    /// Mean over classes of the 2-means centroid separation.
    pub initial_mode_separation: f64,
    pub final_mode_separation: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cmd_toy(run: &Run) -> CliResult<Vec<ToyRunSummary>> {
    let toy = ExperimentConfig::require(&run.config.toy, "toy")?;
    if toy.runs.is_empty() {
        return Err(CliError::Config("toy.runs is empty".into()));
    }
    let d = &toy.data;
    let points = gen_gaussian_blobs(
        &mut Rng::seed_from(run.config.seed),
        d.n,
        d.classes,
        d.modes_per_class,
        d.dims,
        d.stddev,
        d.label_mode,
    )?;
    let mut out = Vec::with_capacity(toy.runs.len());
    for r in &toy.runs {
        if r.name.is_empty()
            || !r
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(CliError::Config(format!(
                "run name {:?} must be [A-Za-z0-9_-]+",
                r.name
            )));
        }
        r.optimizer
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let tr = optimize_points(&points, &r.optimizer)?;
        if d.dims == 2 {
            write_points_csv(
                &run.path(&format!("trajectory_{}.csv", r.name)),
                &run.header(),
                &tr,
            )?;
        }
        let last = tr.final_batch();
        out.push(ToyRunSummary {
            name: r.name.clone(),
            initial_loss: tr.first().loss,
            final_loss: tr.last().loss,
            initial_knn_accuracy: knn_label_accuracy(&points, toy.knn_k)?,
            final_knn_accuracy: knn_label_accuracy(&last, toy.knn_k)?,
            initial_spread: spread(points.points())?,
            final_spread: spread(last.points())?,
            initial_mode_separation: mean(&class_mode_separation(&points)?),
            final_mode_separation: mean(&class_mode_separation(&last)?),
        });
    }
    let rows = out
        .iter()
        .map(|s| {
            vec![
                s.name.clone(),
                fmt_f64(s.initial_loss),
                fmt_f64(s.final_loss),
                fmt_f64(s.initial_knn_accuracy),
                fmt_f64(s.final_knn_accuracy),
                fmt_f64(s.initial_spread),
                fmt_f64(s.final_spread),
                fmt_f64(s.initial_mode_separation),
                fmt_f64(s.final_mode_separation),
            ]
        })
        .collect();
    run.write(
        "summary.csv",
        &[
            "run",
            "initial_loss",
            "final_loss",
            "initial_knn_accuracy",
            "final_knn_accuracy",
            "initial_spread",
            "final_spread",
            "initial_mode_separation",
            "final_mode_separation",
        ],
        rows,
    )?;
    Ok(out)
}

// ---------------------------------------------------------------- train

pub fn model_spec(run: &Run, data: &Dataset) -> CliResult<MlpSpec> {
    let model = ExperimentConfig::require(&run.config.model, "model")?;
    let mut widths = vec![data.train.dims()];
    widths.extend(&model.hidden);
    widths.push(data.classes);
    MlpSpec::new(widths).map_err(|e| CliError::Config(e.to_string()))
}

fn schedule(run: &Run) -> CliResult<Schedule> {
    let mut s = ExperimentConfig::require(&run.config.schedule, "schedule")?.clone();
    s.seed = run.config.seed;
    Ok(s)
}

pub struct TrainOutcome {
    pub params: Params,
    pub log: MetricsLog,
    pub holdout_accuracy: f64,
}

/// Trains one model on `data`. Configuration problems surface as exit-code-2 errors.
pub fn train_model(
    data: &Dataset,
    spec: &MlpSpec,
    objective: &ObjectiveSpec,
    schedule: &Schedule,
) -> CliResult<TrainOutcome> {
    objective
        .build(spec)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (params, log) = train(data, spec, objective, schedule)?;
    let holdout_accuracy = if data.holdout.is_empty() {
        f64::NAN
    } else {
        evaluate(&params, &data.holdout)?.1
    };
    Ok(TrainOutcome {
        params,
        log,
        holdout_accuracy,
    })
}

pub fn cmd_train(run: &Run) -> CliResult<TrainOutcome> {
    let data = run.dataset()?;
    let spec = model_spec(run, &data)?;
    let objective = run.config.objective.clone().unwrap_or_default();
    let outcome = train_model(&data, &spec, &objective, &schedule(run)?)?;
    save_checkpoint(&outcome.params, &run.path("model.ckpt"))?;
    write_metrics_csv(&run.path("metrics.csv"), &run.header(), &outcome.log)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub holdout_accuracy: f64,
    pub test_accuracy: f64,
    pub train_ce: f64,
    pub test_ce: f64,
}

/// Negative alpha with the best holdout accuracy (first on ties).
pub fn best_negative_alpha(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.alpha < 0.0)
        .fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.holdout_accuracy >= p.holdout_accuracy => Some(b),
            _ => Some(p),
        })
        .map(|p| p.alpha)
}

pub fn cmd_sweep(run: &Run) -> CliResult<Vec<SweepPoint>> {
    let sweep = ExperimentConfig::require(&run.config.sweep, "sweep")?;
    if sweep.alphas.is_empty() {
        return Err(CliError::Config("sweep.alphas is empty".into()));
    }
    let data = run.dataset()?;
    let spec = model_spec(run, &data)?;
    let base = run.config.objective.clone().unwrap_or_default();
    let mut sched = schedule(run)?;
    if let Some(steps) = sweep.steps {
        sched.steps = steps;
    }
    let mut points = Vec::with_capacity(sweep.alphas.len());
    for &alpha in &sweep.alphas {
        let objective = ObjectiveSpec {
            alpha,
            ..base.clone()
        };
        let o = train_model(&data, &spec, &objective, &sched)?;
        let last = o.log.last().expect("training logs the final step");
        points.push(SweepPoint {
            alpha,
            holdout_accuracy: o.holdout_accuracy,
            test_accuracy: last.test_acc,
            train_ce: last.train_ce,
            test_ce: last.test_ce,
        });
    }
    let rows = points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.alpha),
                fmt_f64(p.holdout_accuracy),
                fmt_f64(p.test_accuracy),
                fmt_f64(p.train_ce),
                fmt_f64(p.test_ce),
            ]
        })
        .collect();
    run.write(
        "sweep.csv",
        &["alpha", "holdout_acc", "test_acc", "train_ce", "test_ce"],
        rows,
    )?;
    Ok(points)
}

// ---------------------------------------------------------------- measure

fn split_of(data: &Dataset, split: Split) -> &LabeledBatch {
    match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
        Split::Holdout => &data.holdout,
    }
}

pub fn cmd_measure(run: &Run, checkpoint: &Path) -> CliResult<Vec<LayerEntanglement>> {
    let params = load_model(checkpoint)?;
    let cfg = run
        .config
        .measure
        .clone()
        .ok_or_else(|| CliError::Config("config has no `measure` section".into()))?;
    let data = run.dataset()?;
    check_model_fits(&params, &data)?;
    let batch = leading(split_of(&data, cfg.split), cfg.batch);
    if batch.len() < 2 {
        return Err(CliError::Config(
            "measurement batch needs at least two points".into(),
        ));
    }
    let layers = measure_layer_entanglement(&params, &batch, cfg.mode, &cfg.metric)?;
    let rows = layers
        .iter()
        .map(|l| {
            vec![
                (l.layer + 1).to_string(),
                format!("{:?}", l.metric).to_lowercase(),
                fmt_f64(l.loss),
                fmt_f64(l.temperature),
            ]
        })
        .collect();
    run.write(
        "entanglement.csv",
        &["layer", "metric", "loss", "temperature"],
        rows,
    )?;
    Ok(layers)
}

// ---------------------------------------------------------------- attack

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub epsilon: f64,
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Accuracy of the evaluated model on the adversarial inputs.
    pub accuracy: f64,
    /// Accuracy of the model that generated them.
    pub source_accuracy: f64,
}

pub fn cmd_attack(
    run: &Run,
    checkpoint: &Path,
    source: Option<&Path>,
) -> CliResult<Vec<AttackOutcome>> {
    let target = load_model(checkpoint)?;
    let source_model = match source {
        Some(p) => load_model(p)?,
        None => target.clone(),
    };
    let section = ExperimentConfig::require(&run.config.attack, "attack")?;
    if section.epsilons.is_empty() {
        return Err(CliError::Config("attack.epsilons is empty".into()));
    }
    for &eps in &section.epsilons {
        section
            .config_for(eps)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let data = run.dataset()?;
    check_model_fits(&target, &data)?;
    check_model_fits(&source_model, &data)?;
    let clean = leading(&data.test, section.points);
    let x = clean.points();
    let y = clean.labels();
    let side = image_side(x.cols());

    let grad_labels = match section.targeted {
        Some(t) => vec![t; y.len()],
        None => y.to_vec(),
    };
    let grads = input_gradient(&source_model, x, &grad_labels)?;
    write_gradients_csv(&run.path("gradients.csv"), &run.header(), &grads, y)?;

    let mut outcomes = Vec::with_capacity(section.epsilons.len());
    for (i, &eps) in section.epsilons.iter().enumerate() {
        let cfg = section.config_for(eps);
        let adv = match section.method {
            crate::config::AttackMethod::Fgsm => fgsm(&source_model, x, y, &cfg)?,
            crate::config::AttackMethod::Bim => bim(&source_model, x, y, &cfg)?,
        };
        let images = run.path(&format!("adv_{i}_images.idx"));
        let labels = run.path(&format!("adv_{i}_labels.idx"));
        write_idx_images_f64(&images, &adv, side)?;
        write_idx_labels(&labels, y)?;
        let acc =
            |m: &Params| -> CliResult<f64> { Ok(accuracy(&forward(m, &adv)?.predictions(), y)) };
        outcomes.push(AttackOutcome {
            epsilon: eps,
            accuracy: acc(&target)?,
            source_accuracy: acc(&source_model)?,
            images,
            labels,
        });
    }
    let rows = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            vec![
                i.to_string(),
                fmt_f64(o.epsilon),
                file_name(&o.images),
                file_name(&o.labels),
                fmt_f64(o.accuracy),
                fmt_f64(o.source_accuracy),
            ]
        })
        .collect();
    run.write(
        "attack.csv",
        &[
            "index",
            "epsilon",
            "images",
            "labels",
            "accuracy",
            "source_accuracy",
        ],
        rows,
    )?;
    Ok(outcomes)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `(epsilon, batch)` pairs listed in an attack run's `attack.csv`.
pub fn read_attack_sets(dir: &Path) -> CliResult<Vec<(f64, LabeledBatch)>> {
    let manifest = dir.join("attack.csv");
    if !manifest.exists() {
        return Err(CliError::Config(format!(
            "{} not found",
            manifest.display()
        )));
    }
    let table = read_csv(&manifest)?;
    let eps = table.floats("epsilon")?;
    let (ci, cl) = match (table.column("images"), table.column("labels")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Config(
                "attack.csv lacks images/labels columns".into(),
            ))
        }
    };
    table
        .rows
        .iter()
        .zip(eps)
        .map(|(row, e)| {
            let x = read_idx_images(&dir.join(&row[ci]))?;
            let y = read_idx_labels(&dir.join(&row[cl]))?;
            Ok((e, LabeledBatch::new(x, y)?))
        })
        .collect()
}

// ---------------------------------------------------------------- dknn

/// Credibility of every point in a scored set.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub epsilon: f64,
    pub labels: Vec<usize>,
    pub results: Vec<CredibilityResult>,
}

impl ScoredSet {
    pub fn correct(&self) -> Vec<bool> {
        self.results
            .iter()
            .zip(&self.labels)
            .map(|(r, &y)| r.predicted == y)
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let c = self.correct();
        c.iter().filter(|&&b| b).count() as f64 / c.len() as f64
    }

    pub fn mean_credibility(&self) -> f64 {
        self.results.iter().map(|r| r.credibility).sum::<f64>() / self.results.len() as f64
    }
}

/// A calibrated DkNN over one model and dataset.
pub struct Dknn {
    pub index: DknnIndex,
    pub calibration: entangle_core::dknn::Calibration,
}

impl Dknn {
    pub fn fit(
        params: &Params,
        data: &Dataset,
        cfg: &entangle_core::dknn::DknnConfig,
    ) -> CliResult<Self> {
        let layers = match &cfg.layers {
            Some(l) => l.clone(),
            None => (0..params.spec().layer_count()).collect(),
        };
        if data.holdout.is_empty() {
            return Err(CliError::Config(
                "DkNN calibration needs a non-empty holdout".into(),
            ));
        }
        let index =
            build_index(params, &data.train, &layers, cfg.k, &cfg.metric).map_err(|e| match e {
                entangle_core::Error::InvalidInput(m) => CliError::Config(m),
                other => other.into(),
            })?;
        let calibration = calibrate(&index, &data.holdout)?;
        Ok(Dknn { index, calibration })
    }

    pub fn score(&self, x: &Matrix) -> CliResult<Vec<CredibilityResult>> {
        Ok(self
            .index
            .neighbors(x)?
            .iter()
            .map(|nb| credibility_from_neighbors(nb, self.index.classes(), &self.calibration))
            .collect())
    }

    pub fn score_set(&self, epsilon: f64, batch: &LabeledBatch) -> CliResult<ScoredSet> {
        Ok(ScoredSet {
            epsilon,
            labels: batch.labels().to_vec(),
            results: self.score(batch.points())?,
        })
    }
}

/// One curve point per set, in the order given.
pub fn epsilon_curve(sets: &[ScoredSet]) -> CliResult<CalibrationCurve> {
    let mut results = Vec::new();
    let mut correct = Vec::new();
    let mut groups = Vec::new();
    for (g, s) in sets.iter().enumerate() {
        results.extend(s.results.iter().cloned());
        correct.extend(s.correct());
        groups.extend(std::iter::repeat_n(g, s.results.len()));
    }
    Ok(calibration_curve(
        &results,
        &correct,
        Grouping::Groups(&groups),
    )?)
}

pub struct DknnOutcome {
    pub sets: Vec<ScoredSet>,
    pub curve: CalibrationCurve,
    pub ood: Option<ScoredSet>,
}

/// Logits of each named set, for embedding them externally (e.g. t-SNE).
fn write_logits(run: &Run, params: &Params, sets: &[(&str, &LabeledBatch)]) -> CliResult<()> {
    let classes = params.spec().classes();
    let mut header = vec!["set".to_string(), "input_id".into(), "label".into()];
    header.extend((0..classes).map(|j| format!("logit_{j}")));
    let mut rows = Vec::new();
    for (name, batch) in sets {
        let trace = forward(params, batch.points())?;
        for (i, (z, &y)) in trace.logits().row_iter().zip(batch.labels()).enumerate() {
            let mut row = vec![name.to_string(), i.to_string(), y.to_string()];
            row.extend(z.iter().map(|&v| fmt_f64(v)));
            rows.push(row);
        }
    }
    write_csv(&run.path("logits.csv"), &run.header(), &header, rows)?;
    Ok(())
}

pub fn cmd_dknn(run: &Run, checkpoint: &Path, inputs: Option<&Path>) -> CliResult<DknnOutcome> {
    let params = load_model(checkpoint)?;
    let section = run
        .config
        .dknn
        .clone()
        .ok_or_else(|| CliError::Config("config has no `dknn` section".into()))?;
    let data = run.dataset()?;
    check_model_fits(&params, &data)?;
    let clean = leading(&data.test, section.points);
    if clean.is_empty() {
        return Err(CliError::Config("no test points to score".into()));
    }
    let dknn = Dknn::fit(&params, &data, &section.index)?;
    let mut sets = vec![dknn.score_set(0.0, &clean)?];
    if let Some(dir) = inputs {
        for (eps, batch) in read_attack_sets(dir)? {
            if batch.dims() != params.spec().input_width() {
                return Err(CliError::Config(
                    "adversarial inputs do not fit the model".into(),
                ));
            }
            sets.push(dknn.score_set(eps, &batch)?);
        }
    }
    let ood = if section.ood {
        let shuffled = shuffle_pixels(&clean, &mut Rng::seed_from(run.config.seed).fork(20));
        write_logits(run, &params, &[("in", &clean), ("ood", &shuffled)])?;
        Some(dknn.score_set(f64::NAN, &shuffled)?)
    } else {
        None
    };

    let cred_header = [
        "input_id",
        "true_label",
        "predicted",
        "credibility",
        "confidence",
        "nonconformity",
        "attack_epsilon",
    ];
    let rows_of = |s: &ScoredSet| -> Vec<Vec<String>> {
        s.results
            .iter()
            .zip(&s.labels)
            .enumerate()
            .map(|(i, (r, &y))| {
                vec![
                    i.to_string(),
                    y.to_string(),
                    r.predicted.to_string(),
                    fmt_f64(r.credibility),
                    fmt_f64(r.confidence),
                    r.nonconformity[r.predicted].to_string(),
                    fmt_f64(s.epsilon),
                ]
            })
            .collect()
    };
    run.write(
        "credibility.csv",
        &cred_header,
        sets.iter().flat_map(rows_of).collect(),
    )?;

    let curve = epsilon_curve(&sets)?;
    let rows = curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(sets[p.group].epsilon),
                fmt_f64(p.mean_credibility),
                fmt_f64(p.accuracy),
                p.count.to_string(),
            ]
        })
        .collect();
    run.write(
        "curve.csv",
        &["attack_epsilon", "mean_credibility", "accuracy", "count"],
        rows,
    )?;

    let all: Vec<CredibilityResult> = sets
        .iter()
        .flat_map(|s| s.results.iter().cloned())
        .collect();
    let correct: Vec<bool> = sets.iter().flat_map(|s| s.correct()).collect();
    let binned = calibration_curve(&all, &correct, Grouping::Bins(section.bins.max(1)))?;
    let rows = binned
        .points
        .iter()
        .map(|p| {
            vec![
                p.group.to_string(),
                fmt_f64(p.mean_credibility),
                fmt_f64(p.accuracy),
                p.count.to_string(),
            ]
        })
        .collect();
    run.write(
        "curve_bins.csv",
        &["bin", "mean_credibility", "accuracy", "count"],
        rows,
    )?;

    let mut summary = vec![
        vec![
            "correlation".to_string(),
            curve.correlation.map_or("nan".into(), fmt_f64),
        ],
        vec![
            "clean_mean_credibility".into(),
            fmt_f64(sets[0].mean_credibility()),
        ],
        vec!["clean_accuracy".into(), fmt_f64(sets[0].accuracy())],
    ];
    if let Some(o) = &ood {
        run.write("ood_credibility.csv", &cred_header, rows_of(o))?;
        summary.push(vec![
            "ood_mean_credibility".into(),
            fmt_f64(o.mean_credibility()),
        ]);
    }
    run.write("summary.csv", &["key", "value"], summary)?;
    Ok(DknnOutcome { sets, curve, ood })
}
