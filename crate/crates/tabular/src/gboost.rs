//! Gradient boosting of regression trees on the logistic loss.
//!
//! Each stage fits a least-squares tree to the residuals `y - p` and replaces
//! every leaf value by a shrunken Newton step. A leaf step that would raise
//! that leaf's training loss is halved until it no longer does, so the
//! training loss never increases from one stage to the next.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::hyper::{self, Hyperparams};
use crate::rng;
use crate::tree::{self, ColumnMatrix, GrowParams, MaxFeatures, Node, RegTarget, Splitter, TreeModel};

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
}

impl BoostParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(p, &["n_estimators", "learning_rate", "max_depth", "max_features"])?;
        Ok(Self {
            n_estimators: hyper::get_usize(p, "n_estimators", 100)?,
            learning_rate: hyper::get_positive_f64(p, "learning_rate", 0.1)?,
            max_depth: if p.contains_key("max_depth") {
                hyper::get_opt_usize(p, "max_depth")?
            } else {
                Some(3)
            },
            max_features: MaxFeatures::from_hyper(p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: f64,
    pub trees: Vec<TreeModel>,
    /// Mean training log-loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of a raw score against a 0/1 label.
fn row_loss(score: f64, y: u8) -> f64 {
    softplus(score) - f64::from(y) * score
}

impl GradientBoosting {
    pub fn fit(params: &BoostParams, data: &TabularDataset, seed: u64) -> Result<Self> {
        Self::fit_columns(params, &ColumnMatrix::new(&data.x), &data.y, seed)
    }

    pub(crate) fn fit_columns(
        params: &BoostParams,
        cm: &ColumnMatrix,
        y: &[u8],
        seed: u64,
    ) -> Result<Self> {
        let n = y.len();
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == n {
            return Err(TabularError::DegenerateData(
                "gradient boosting needs both classes".into(),
            ));
        }
        let prior = pos as f64 / n as f64;
        let init = (prior / (1.0 - prior)).ln();
        let mut score = vec![init; n];
        let mean_loss = |s: &[f64]| s.iter().zip(y).map(|(&f, &l)| row_loss(f, l)).sum::<f64>() / n as f64;
        let mut train_loss = vec![mean_loss(&score)];
        let mut trees = Vec::with_capacity(params.n_estimators);
        let mut residual = vec![0.0; n];
        let grow_params = GrowParams {
            max_depth: params.max_depth,
            max_features: params.max_features,
            splitter: Splitter::Best,
        };
        for stage in 0..params.n_estimators {
            for i in 0..n {
                residual[i] = f64::from(y[i]) - sigmoid(score[i]);
            }
            let mut rng = rng::chacha(rng::derive(seed, stage as u64));
            let target = RegTarget { r: &residual };
            let mut grown = tree::grow(cm, &target, None, grow_params, &mut rng);
            for leaf in &grown.leaves {
                let rows = &grown.rows[leaf.start..leaf.end];
                let (mut num, mut den) = (0.0, 0.0);
                for &r in rows {
                    let p = sigmoid(score[r as usize]);
                    num += residual[r as usize];
                    den += p * (1.0 - p);
                }
                let newton = if den.abs() < 1e-150 { 0.0 } else { num / den };
                let mut step = params.learning_rate * newton;
                let leaf_loss = |s: f64| {
                    rows.iter()
                        .map(|&r| row_loss(score[r as usize] + s, y[r as usize]))
                        .sum::<f64>()
                };
                let base = leaf_loss(0.0);
                let mut halvings = 0;
                while leaf_loss(step) > base {
                    if halvings == MAX_HALVINGS {
                        step = 0.0;
                        break;
                    }
                    step /= 2.0;
                    halvings += 1;
                }
                for &r in rows {
                    score[r as usize] += step;
                }
                grown.tree.nodes[leaf.node] = Node::Leaf { value: step };
            }
            train_loss.push(mean_loss(&score));
            trees.push(grown.tree);
        }
        Ok(Self {
            init,
            trees,
            train_loss,
        })
    }

    /// The first `n` stages; equal to training with `n_estimators = n`.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.trees.len());
        Self {
            init: self.init,
            trees: self.trees[..n].to_vec(),
            train_loss: self.train_loss[..=n].to_vec(),
        }
    }

    pub fn decision_function(&self, x: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision_function(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn data(n: usize, d: usize, seed: u64) -> TabularDataset {
        use rand::Rng;
        let mut r = rng::chacha(seed);
        let x = Array2::from_shape_fn((n, d), |_| r.gen_range(-2.0..2.0));
        let y = (0..n)
            .map(|i| u8::from(x[[i, 0]] + 0.5 * x[[i, d - 1]] + r.gen_range(-0.5..0.5) > 0.0))
            .collect();
        TabularDataset::new(x, y, (0..d).map(|i| format!("f{i}")).collect()).unwrap()
    }

    #[test]
    fn prior_init() {
        let ds = data(40, 2, 1);
        let p = ds.positives() as f64 / 40.0;
        let m = GradientBoosting::fit(
            &BoostParams {
                n_estimators: 0,
                learning_rate: 0.1,
                max_depth: Some(3),
                max_features: MaxFeatures::All,
            },
            &ds,
            0,
        )
        .unwrap();
        assert!((m.predict_proba(&[0.0, 0.0]) - p).abs() < 1e-12);
    }

    #[test]
    fn learns() {
        let ds = data(200, 3, 2);
        let m = GradientBoosting::fit(
            &BoostParams {
                n_estimators: 50,
                learning_rate: 0.3,
                max_depth: Some(3),
                max_features: MaxFeatures::All,
            },
            &ds,
            0,
        )
        .unwrap();
        let acc = (0..200)
            .filter(|&i| (m.predict_proba(ds.row(i).as_slice().unwrap()) >= 0.5) == (ds.y[i] == 1))
            .count() as f64
            / 200.0;
        assert!(acc > 0.85, "accuracy {acc}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn loss_non_increasing(seed in 0u64..1000, lr in prop::sample::select(vec![0.001, 0.01, 0.05, 0.5, 1.0]),
                               depth in 1usize..8, frac in prop::sample::select(vec![0.4, 1.0])) {
            let ds = data(60, 4, seed);
            prop_assume!(ds.has_both_classes());
            let mf = if frac == 1.0 { MaxFeatures::All } else { MaxFeatures::Fraction(frac) };
            let m = GradientBoosting::fit(
                &BoostParams { n_estimators: 30, learning_rate: lr, max_depth: Some(depth), max_features: mf },
                &ds, seed).unwrap();
            for w in m.train_loss.windows(2) {
                prop_assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
            }
        }
    }
}
