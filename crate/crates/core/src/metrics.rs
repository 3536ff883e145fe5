//! Classification accuracy and confusion counts.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        check_dim(truth.len(), predicted.len())?;
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::input("labels must be 0 or 1")),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `(TP + TN) / (TP + TN + FP + FN)`.
    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[u8], truth: &[u8]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::input("cannot score an empty prediction"));
    }
    Ok(Confusion::from_labels(predicted, truth)?.accuracy())
}
