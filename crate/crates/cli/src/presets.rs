//! Named configurations, one per reproduced experiment.

use entangle_core::dataio::LabelMode;
use entangle_core::dknn::DknnConfig;
use entangle_core::mlp::{MeasureMode, MetricPolicy, ObjectiveSpec, Schedule};
use entangle_core::pointlab::{Direction, LossKind, PointOptConfig, TemperaturePolicy};
use entangle_core::Metric;

use crate::config::*;

pub const TOY_PRESETS: [&str; 4] = ["fig1", "fig7", "fig2", "triplet-compare"];
pub const TRAIN_PRESETS: [&str; 3] = ["baseline", "entangled", "sweep-alpha"];
pub const MEASURE_PRESETS: [&str; 2] = ["fixed-t100", "optimized"];
pub const ATTACK_PRESETS: [&str; 2] = ["fgsm-sweep", "bim-sweep"];
pub const DKNN_PRESETS: [&str; 2] = ["credibility", "ood"];

/// Alpha grid for `sweep-alpha`.
pub const ALPHA_GRID: [f64; 7] = [-10.0, -3.0, -1.0, -0.3, -0.1, 0.1, 1.0];
/// FGSM budgets of the credibility sweep.
pub const EPSILONS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];

fn empty(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        output_dir: None,
        toy: None,
        dataset: None,
        model: None,
        objective: None,
        schedule: None,
        sweep: None,
        measure: None,
        attack: None,
        dknn: None,
    }
}

pub const TOY_STEP_SIZE: f64 = 1.0;
pub const TOY_TEMPERATURE: f64 = 1.0;

fn snn_run(name: &str, direction: Direction, seed: u64) -> ToyRun {
    ToyRun {
        name: name.into(),
        optimizer: PointOptConfig {
            loss: LossKind::Snn {
                metric: Metric::Euclidean,
            },
            direction,
            steps: 500,
            step_size: TOY_STEP_SIZE,
            temperature: TemperaturePolicy::Fixed { t: TOY_TEMPERATURE },
            seed,
            record_every: 50,
        },
    }
}

fn toy(seed: u64, data: BlobConfig, runs: Vec<ToyRun>) -> ExperimentConfig {
    ExperimentConfig {
        toy: Some(ToyConfig {
            data,
            runs,
            knn_k: 1,
        }),
        ..empty(seed)
    }
}

fn random_blob() -> BlobConfig {
    BlobConfig {
        n: 200,
        classes: 4,
        modes_per_class: 1,
        dims: 2,
        stddev: 1.0,
        label_mode: LabelMode::Random,
    }
}

/// Shared data, model, and schedule of the network experiments.
pub fn digits_base(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: Some(DatasetConfig {
            source: DataSource::SyntheticDigits {
                n_train: 10_000,
                n_test: 2_000,
            },
            holdout_fraction: 0.1,
        }),
        model: Some(ModelConfig {
            hidden: vec![256, 128],
        }),
        objective: Some(ObjectiveSpec::default()),
        schedule: Some(Schedule {
            eval_every: 500,
            train_eval_rows: Some(2_000),
            ..Schedule::new(seed, 5_000)
        }),
        ..empty(seed)
    }
}

pub fn preset(name: &str, seed: u64) -> Option<ExperimentConfig> {
    let cfg = match name {
        "fig1" => toy(
            seed,
            random_blob(),
            vec![snn_run("snn_min", Direction::Minimize, seed)],
        ),
        "fig7" => toy(
            seed,
            BlobConfig {
                n: 200,
                classes: 2,
                modes_per_class: 2,
                dims: 2,
                stddev: 1.0,
                label_mode: LabelMode::ByCluster,
            },
            vec![snn_run("snn_min", Direction::Minimize, seed)],
        ),
        "fig2" => toy(
            seed,
            random_blob(),
            vec![snn_run("snn_max", Direction::Maximize, seed)],
        ),
        "triplet-compare" => {
            let snn = snn_run("snn_max", Direction::Maximize, seed);
            let triplet = ToyRun {
                name: "triplet_max".into(),
                optimizer: PointOptConfig {
                    loss: LossKind::Triplet { margin: 1.0 },
                    ..snn.optimizer.clone()
                },
            };
            toy(seed, random_blob(), vec![snn, triplet])
        }
        "baseline" => digits_base(seed),
        "entangled" => ExperimentConfig {
            objective: Some(ObjectiveSpec::entangled(-1.0)),
            ..digits_base(seed)
        },
        "sweep-alpha" => ExperimentConfig {
            sweep: Some(SweepConfig {
                alphas: ALPHA_GRID.to_vec(),
                steps: Some(2_000),
            }),
            ..digits_base(seed)
        },
        "fixed-t100" => ExperimentConfig {
            measure: Some(MeasureConfig {
                mode: MeasureMode::Fixed { t: 100.0 },
                batch: 128,
                split: Split::Test,
                metric: MetricPolicy::Auto,
            }),
            ..digits_base(seed)
        },
        "optimized" => ExperimentConfig {
            measure: Some(MeasureConfig {
                mode: MeasureMode::Optimized {
                    t_init: 100.0,
                    steps: 25,
                },
                batch: 128,
                split: Split::Test,
                metric: MetricPolicy::Auto,
            }),
            ..digits_base(seed)
        },
        "fgsm-sweep" => ExperimentConfig {
            attack: Some(AttackSection {
                method: AttackMethod::Fgsm,
                epsilons: EPSILONS.to_vec(),
                step_size: 0.01,
                steps: 1,
                targeted: None,
                points: 1000,
            }),
            ..digits_base(seed)
        },
        "bim-sweep" => ExperimentConfig {
            attack: Some(AttackSection {
                method: AttackMethod::Bim,
                epsilons: EPSILONS.to_vec(),
                step_size: 0.01,
                steps: 100,
                targeted: None,
                points: 1000,
            }),
            ..digits_base(seed)
        },
        "credibility" | "ood" => ExperimentConfig {
            dknn: Some(DknnSection {
                index: DknnConfig::default(),
                points: 1000,
                ood: name == "ood",
                bins: 10,
            }),
            ..digits_base(seed)
        },
        _ => return None,
    };
    Some(cfg)
}
