use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Rng;
use crate::snn::LabeledBatch;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    pub normalization: String,
}

/// Disjoint train / test / holdout splits of one labeled pool.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: LabeledBatch,
    pub test: LabeledBatch,
    pub holdout: LabeledBatch,
    pub classes: usize,
    pub provenance: Provenance,
}

/// Split fractions `(train, test, holdout)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub test: f64,
    pub holdout: f64,
}

impl SplitFractions {
    pub fn new(train: f64, test: f64, holdout: f64) -> Result<Self> {
        let f = SplitFractions {
            train,
            test,
            holdout,
        };
        let all = [train, test, holdout];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "split fractions must be >= 0: {all:?}"
            )));
        }
        if ((train + test + holdout) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions must sum to 1: {all:?}"
            )));
        }
        Ok(f)
    }
}

/// Seeded shuffle, then contiguous train / test / holdout blocks. Block sizes are
/// `round(f * n)` for train and test; holdout takes the remainder.
pub fn split(
    batch: &LabeledBatch,
    fractions: SplitFractions,
    rng: &mut Rng,
    provenance: Provenance,
) -> Result<Dataset> {
    let n = batch.len();
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_test = ((fractions.test * n as f64).round() as usize).min(n - n_train);
    let perm = rng.permutation(n);
    let (train_idx, rest) = perm.split_at(n_train);
    let (test_idx, holdout_idx) = rest.split_at(n_test);
    Ok(Dataset {
        train: batch.select(train_idx),
        test: batch.select(test_idx),
        holdout: batch.select(holdout_idx),
        classes: batch.class_count(),
        provenance,
    })
}

impl Dataset {
    /// Moves the last `fraction` of the train split into the holdout split (appended).
    pub fn carve_holdout_from_train(&mut self, fraction: f64) -> Result<()> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "holdout fraction must be in [0, 1): {fraction}"
            )));
        }
        let n = self.train.len();
        let keep = n - (fraction * n as f64).round() as usize;
        let train_idx: Vec<usize> = (0..keep).collect();
        let moved_idx: Vec<usize> = (keep..n).collect();
        let moved = self.train.select(&moved_idx);
        let (hp, hl) = (
            self.holdout.points().clone(),
            self.holdout.labels().to_vec(),
        );
        let points = if hl.is_empty() {
            moved.points().clone()
        } else {
            hp.vstack(moved.points())?
        };
        let labels = hl
            .into_iter()
            .chain(moved.labels().iter().copied())
            .collect();
        self.holdout = LabeledBatch::new(points, labels)?;
        self.train = self.train.select(&train_idx);
        Ok(())
    }
}
