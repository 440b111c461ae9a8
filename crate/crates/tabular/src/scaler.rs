//! Per-column standard scaling.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

/// Columns whose standard deviation falls below this (relative to the mean's
/// magnitude) are treated as constant and always map to 0.
const ZERO_VARIANCE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 marks a constant column.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s <= ZERO_VARIANCE_RTOL * m.abs().max(1.0) {
                0.0
            } else {
                s
            });
        }
        Self { mean, std }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.n_features());
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| if s == 0.0 { 0.0 } else { (v - m) / s });
        }
        out
    }

    pub fn transform_row(&self, row: ArrayView1<'_, f64>) -> Vec<f64> {
        assert_eq!(row.len(), self.n_features());
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                let s = self.std[j];
                if s == 0.0 {
                    0.0
                } else {
                    (v - self.mean[j]) / s
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn column_123() {
        let x = array![[1.0], [2.0], [3.0]];
        let s = Scaler::fit(&x);
        assert_eq!(s.mean, vec![2.0]);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let t = s.transform(&x);
        assert!(t.column(0).sum().abs() < 1e-12);
        let var = t.column(0).iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let s = Scaler::fit(&x);
        assert_eq!(s.std[0], 0.0);
        let t = s.transform(&x);
        assert!(t.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(s.transform_row(array![7.0, 2.0].view())[0], 0.0);
        let x = array![[0.1], [0.1], [0.1]];
        assert_eq!(Scaler::fit(&x).std[0], 0.0);
    }

    #[test]
    fn unseen_row_uses_training_statistics() {
        // mean = (2, 10), population std = (1, 4)
        let x = array![[1.0, 6.0], [3.0, 14.0]];
        let s = Scaler::fit(&x);
        let r = s.transform_row(array![4.0, 4.0].view());
        assert_eq!(r, vec![2.0, -1.5]);
    }
}
