//! Bagged CART forests with per-split feature subsampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::hyper::{self, ClassWeight, Hyperparams};
use crate::rng;
use crate::tree::{self, ClassTarget, ColumnMatrix, Criterion, GrowParams, MaxFeatures, Splitter, TreeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub criterion: Criterion,
    pub class_weight: ClassWeight,
}

impl ForestParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(
            p,
            &["n_estimators", "max_depth", "max_features", "bootstrap", "criterion", "class_weight"],
        )?;
        Ok(Self {
            n_estimators: hyper::get_usize(p, "n_estimators", 100)?,
            max_depth: hyper::get_opt_usize(p, "max_depth")?,
            max_features: if p.contains_key("max_features") {
                MaxFeatures::from_hyper(p)?
            } else {
                MaxFeatures::Sqrt
            },
            bootstrap: hyper::get_bool(p, "bootstrap", true)?,
            criterion: Criterion::from_hyper(p)?,
            class_weight: ClassWeight::from_hyper(p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<TreeModel>,
}

impl RandomForest {
    pub fn fit(params: &ForestParams, data: &TabularDataset, seed: u64) -> Result<Self> {
        Self::fit_columns(params, &ColumnMatrix::new(&data.x), &data.y, seed)
    }

    pub(crate) fn fit_columns(
        params: &ForestParams,
        cm: &ColumnMatrix,
        y: &[u8],
        seed: u64,
    ) -> Result<Self> {
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == y.len() {
            return Err(TabularError::DegenerateData(
                "random forest needs both classes".into(),
            ));
        }
        let n = y.len();
        let cw = params.class_weight.weights(y);
        let grow_params = GrowParams {
            max_depth: params.max_depth,
            max_features: params.max_features,
            splitter: Splitter::Best,
        };
        let mut trees = Vec::with_capacity(params.n_estimators);
        let mut counts = vec![0u32; n];
        for t in 0..params.n_estimators {
            let mut rng = rng::chacha(rng::derive(seed, t as u64));
            let (w, active): (Vec<f64>, Option<Vec<bool>>) = if params.bootstrap {
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
                (
                    (0..n).map(|i| counts[i] as f64 * cw[y[i] as usize]).collect(),
                    Some(counts.iter().map(|&c| c > 0).collect()),
                )
            } else {
                ((0..n).map(|i| cw[y[i] as usize]).collect(), None)
            };
            let target = ClassTarget {
                y,
                w: &w,
                criterion: params.criterion,
            };
            let grown = tree::grow(cm, &target, active.as_deref(), grow_params, &mut rng);
            trees.push(grown.tree);
        }
        Ok(Self { trees })
    }

    /// The forest made of the first `n` trees; equal to training with
    /// `n_estimators = n`, since tree t draws only from its own stream.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            trees: self.trees[..n.min(self.trees.len())].to_vec(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
