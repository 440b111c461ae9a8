//! Feature matrices paired with retrieval labels and downstream outcomes.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TabularError};

/// Whether the stored answers without and with retrieval were correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub correct_without: bool,
    pub correct_with: bool,
}

impl Outcome {
    pub fn new(correct_without: bool, correct_with: bool) -> Self {
        Self {
            correct_without,
            correct_with,
        }
    }

    /// 1 when retrieval turns a wrong answer into a right one.
    pub fn need_retrieval(&self) -> u8 {
        u8::from(!self.correct_without && self.correct_with)
    }

    /// Correctness of the answer the gate would pick.
    pub fn correct_given(&self, retrieve: bool) -> bool {
        if retrieve {
            self.correct_with
        } else {
            self.correct_without
        }
    }
}

/// Mean correctness when retrieving exactly where `probas[i] >= threshold`.
pub fn in_accuracy(probas: &[f64], outcomes: &[Outcome], threshold: f64) -> f64 {
    assert_eq!(probas.len(), outcomes.len());
    if outcomes.is_empty() {
        return 0.0;
    }
    let correct = probas
        .iter()
        .zip(outcomes)
        .filter(|(p, o)| o.correct_given(**p >= threshold))
        .count();
    correct as f64 / outcomes.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Present when the rows come from QA records; required by the
    /// In-Accuracy selection metric.
    pub outcomes: Option<Vec<Outcome>>,
}

impl TabularDataset {
    pub fn new(x: Array2<f64>, y: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(TabularError::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() != feature_names.len() {
            return Err(TabularError::DimensionMismatch {
                expected: x.ncols(),
                got: feature_names.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / x.ncols().max(1), pos % x.ncols().max(1));
            return Err(TabularError::DegenerateData(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(TabularError::DegenerateData(format!("label {bad} is not 0/1")));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            outcomes: None,
        })
    }

    /// Labels are derived from the outcomes via [`Outcome::need_retrieval`].
    pub fn from_outcomes(
        x: Array2<f64>,
        outcomes: Vec<Outcome>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let y = outcomes.iter().map(Outcome::need_retrieval).collect();
        let mut ds = Self::new(x, y, feature_names)?;
        ds.outcomes = Some(outcomes);
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.y.len()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            outcomes: self
                .outcomes
                .as_ref()
                .map(|o| indices.iter().map(|&i| o[i]).collect()),
        }
    }

    pub fn with_x(&self, x: Array2<f64>) -> Self {
        assert_eq!(x.dim(), self.x.dim());
        Self {
            x,
            y: self.y.clone(),
            feature_names: self.feature_names.clone(),
            outcomes: self.outcomes.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn label_rule() {
        assert_eq!(Outcome::new(false, true).need_retrieval(), 1);
        assert_eq!(Outcome::new(true, true).need_retrieval(), 0);
        assert_eq!(Outcome::new(false, false).need_retrieval(), 0);
        assert_eq!(Outcome::new(true, false).need_retrieval(), 0);
    }

    #[test]
    fn rejects_non_finite() {
        let x = array![[1.0, f64::NAN]];
        let err = TabularDataset::new(x, vec![0], vec!["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, TabularError::DegenerateData(_)));
    }

    #[test]
    fn rejects_length_mismatch() {
        let x = array![[1.0], [2.0]];
        assert!(TabularDataset::new(x, vec![0], vec!["a".into()]).is_err());
    }

    #[test]
    fn in_accuracy_uses_threshold_inclusively() {
        let outcomes = [Outcome::new(false, true), Outcome::new(true, false)];
        assert_eq!(in_accuracy(&[0.5, 0.49], &outcomes, 0.5), 1.0);
        assert_eq!(in_accuracy(&[0.49, 0.5], &outcomes, 0.5), 0.0);
    }
}
