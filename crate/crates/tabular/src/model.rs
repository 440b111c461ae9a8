//! Family dispatch: one enum over every fitted classifier.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::forest::{ForestParams, RandomForest};
use crate::gboost::{BoostParams, GradientBoosting};
use crate::hyper::{Family, Hyperparams, ModelSpec};
use crate::knn::{Knn, KnnParams};
use crate::logreg::{LogRegParams, LogisticRegression};
use crate::mlp::{Mlp, MlpParams};
use crate::tree::{ColumnMatrix, DecisionTree, DecisionTreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fitted", rename_all = "lowercase")]
pub enum FittedModel {
    Logreg(LogisticRegression),
    Knn(Knn),
    Mlp(Mlp),
    Dtree(DecisionTree),
    Gboost(GradientBoosting),
    Rforest(RandomForest),
    /// Fixed probability, independent of the input.
    Constant(f64),
}

/// Parses and validates the hyperparameters of `family` without training.
pub fn validate(family: Family, p: &Hyperparams) -> Result<()> {
    match family {
        Family::Logreg => LogRegParams::from_hyper(p).map(drop),
        Family::Knn => KnnParams::from_hyper(p).map(drop),
        Family::Mlp => MlpParams::from_hyper(p).map(drop),
        Family::Dtree => DecisionTreeParams::from_hyper(p).map(drop),
        Family::Gboost => BoostParams::from_hyper(p).map(drop),
        Family::Rforest => ForestParams::from_hyper(p).map(drop),
    }
}

/// Trains `spec` on `data`.
pub fn train(spec: &ModelSpec, data: &TabularDataset) -> Result<FittedModel> {
    train_with_columns(spec, data, None)
}

/// Like [`train`], reusing a presorted column view of `data.x` when given.
pub fn train_with_columns(
    spec: &ModelSpec,
    data: &TabularDataset,
    columns: Option<&ColumnMatrix>,
) -> Result<FittedModel> {
    if data.n_rows() == 0 {
        return Err(TabularError::DegenerateData("no training rows".into()));
    }
    if !spec.family.tolerates_single_class() && !data.has_both_classes() {
        return Err(TabularError::DegenerateData(format!(
            "{} needs both classes in the training data",
            spec.family
        )));
    }
    let owned;
    let cm = match columns {
        Some(c) => c,
        None => {
            owned = ColumnMatrix::new(&data.x);
            &owned
        }
    };
    let p = &spec.hyperparameters;
    Ok(match spec.family {
        Family::Logreg => FittedModel::Logreg(LogisticRegression::fit(&LogRegParams::from_hyper(p)?, data)?),
        Family::Knn => FittedModel::Knn(Knn::fit(&KnnParams::from_hyper(p)?, data)?),
        Family::Mlp => FittedModel::Mlp(Mlp::fit(&MlpParams::from_hyper(p)?, data, spec.seed)?),
        Family::Dtree => FittedModel::Dtree(DecisionTree::fit_columns(
            &DecisionTreeParams::from_hyper(p)?,
            cm,
            &data.y,
            spec.seed,
        )?),
        Family::Gboost => FittedModel::Gboost(GradientBoosting::fit_columns(
            &BoostParams::from_hyper(p)?,
            cm,
            &data.y,
            spec.seed,
        )?),
        Family::Rforest => FittedModel::Rforest(RandomForest::fit_columns(
            &ForestParams::from_hyper(p)?,
            cm,
            &data.y,
            spec.seed,
        )?),
    })
}

impl FittedModel {
    /// Probability that retrieval is needed for one (already scaled) row.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let p = match self {
            FittedModel::Logreg(m) => m.predict_proba(x),
            FittedModel::Knn(m) => m.predict_proba(x),
            FittedModel::Mlp(m) => m.predict_proba(x),
            FittedModel::Dtree(m) => m.predict_proba(x),
            FittedModel::Gboost(m) => m.predict_proba(x),
            FittedModel::Rforest(m) => m.predict_proba(x),
            FittedModel::Constant(p) => *p,
        };
        p.clamp(0.0, 1.0)
    }

    pub fn predict_proba_rows(&self, x: &ndarray::Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.predict_proba(s),
                None => self.predict_proba(&r.to_vec()),
            })
            .collect()
    }
}
