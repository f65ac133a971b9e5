//! Classifier evaluation: confusion matrix, accuracy, Cohen's kappa.

use crate::error::{Error, Result};

/// Square contingency table of predictions against ground truth.
/// `counts[p][a]` is the number of samples predicted as class p+1 whose
/// actual class is a+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    /// Tallies (predicted, actual) pairs of 1-based class ids.
    pub fn from_pairs(predicted: &[usize], actual: &[usize], n_classes: usize) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} actual labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(n_classes);
        for (&p, &a) in predicted.iter().zip(actual) {
            if p == 0 || p > n_classes || a == 0 || a > n_classes {
                return Err(Error::InvalidArgument(format!(
                    "class id out of range: predicted {p}, actual {a}, n_classes {n_classes}"
                )));
            }
            cm.counts[p - 1][a - 1] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.counts.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Fraction of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Cohen's kappa: agreement corrected for chance,
/// K = (N·Σ C_ii − Σ C_i·C_·i) / (N² − Σ C_i·C_·i).
///
/// When the denominator vanishes (all mass in a single row/column pair) the
/// statistic is undefined; perfect agreement still reports 1.0, anything
/// else is an error.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let marginal: u64 = rows.iter().zip(&cols).map(|(r, c)| r * c).sum();
    let denom = n * n - marginal;
    if denom == 0 {
        if cm.trace() == n {
            return Ok(1.0);
        }
        return Err(Error::Numeric(
            "kappa undefined: marginals are concentrated in one class".into(),
        ));
    }
    let num = (n * cm.trace()) as f64 - marginal as f64;
    Ok(num / denom as f64)
}
