use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Points (or hidden representations) paired with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    points: Matrix,
    labels: Vec<usize>,
}

impl LabeledBatch {
    /// Pairs points with labels. Empty batches are allowed here (dataset splits may be
    /// empty); every loss rejects batches with fewer than two points.
    pub fn new(points: Matrix, labels: Vec<usize>) -> Result<Self> {
        if points.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.rows(),
                labels.len()
            )));
        }
        Ok(LabeledBatch { points, labels })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.points.cols()
    }

    /// One past the largest label, or 0 for an empty batch.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn with_points(&self, points: Matrix) -> Result<Self> {
        LabeledBatch::new(points, self.labels.clone())
    }

    pub fn select(&self, indices: &[usize]) -> LabeledBatch {
        LabeledBatch {
            points: self.points.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn into_parts(self) -> (Matrix, Vec<usize>) {
        (self.points, self.labels)
    }

    pub(crate) fn require_pairs(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::invalid(format!(
                "batch needs at least 2 points, has {}",
                self.len()
            )));
        }
        Ok(())
    }
}
