//! Dataset construction from a [`DatasetConfig`].

use std::path::Path;

use entangle_core::dataio::{gen_synthetic_digits, load_idx, Dataset, Provenance};
use entangle_core::{LabeledBatch, Rng};

use crate::config::{DataSource, DatasetConfig};
use crate::error::{CliError, CliResult};

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn subset(batch: LabeledBatch, n: Option<usize>, rng: &mut Rng) -> CliResult<LabeledBatch> {
    match n {
        None => Ok(batch),
        Some(n) if n > batch.len() => Err(CliError::Config(format!(
            "requested {n} points but the file holds {}",
            batch.len()
        ))),
        Some(n) => {
            let mut idx = rng.permutation(batch.len());
            idx.truncate(n);
            Ok(batch.select(&idx))
        }
    }
}

/// Builds train / test / holdout splits. The holdout is the last `holdout_fraction` of the
/// train split and is never used for weight updates.
pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> CliResult<Dataset> {
    let root = Rng::seed_from(seed).fork(10);
    let (train, test, provenance) = match &cfg.source {
        DataSource::SyntheticDigits { n_train, n_test } => {
            if *n_train < 2 || *n_test == 0 {
                return Err(CliError::Config(
                    "synthetic digits need n_train >= 2 and n_test >= 1".into(),
                ));
            }
            let train = gen_synthetic_digits(&mut root.fork(0), *n_train)?;
            let test = gen_synthetic_digits(&mut root.fork(1), *n_test)?;
            let prov = Provenance {
                source: "synthetic-digits".into(),
                seed,
                normalization: "/255".into(),
            };
            (train, test, prov)
        }
        DataSource::Idx {
            dir,
            n_train,
            n_test,
        } => {
            let path = |i: usize| dir.join(MNIST_FILES[i]);
            for i in 0..4 {
                if !Path::new(&path(i)).exists() {
                    return Err(CliError::Config(format!("missing {}", path(i).display())));
                }
            }
            let train = subset(load_idx(&path(0), &path(1))?, *n_train, &mut root.fork(0))?;
            let test = subset(load_idx(&path(2), &path(3))?, *n_test, &mut root.fork(1))?;
            let prov = Provenance {
                source: format!("idx:{}", dir.display()),
                seed,
                normalization: "/255".into(),
            };
            (train, test, prov)
        }
    };
    if test.is_empty() {
        return Err(CliError::Config("test split is empty".into()));
    }
    let classes = train.class_count().max(test.class_count());
    let empty = LabeledBatch::new(entangle_core::Matrix::new(0, train.dims(), vec![])?, vec![])?;
    let mut data = Dataset {
        train,
        test,
        holdout: empty,
        classes,
        provenance,
    };
    data.carve_holdout_from_train(cfg.holdout_fraction)?;
    Ok(data)
}
