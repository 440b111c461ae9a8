//! Soft-voting ensembles and the serialized gate artifact.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TabularError};
use crate::hyper::{Family, Hyperparams, ModelSpec};
use crate::model::FittedModel;
use crate::scaler::Scaler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub spec: ModelSpec,
    pub model: FittedModel,
}

/// Arithmetic mean of member probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingModel {
    pub members: Vec<Member>,
}

impl VotingModel {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(TabularError::DegenerateData("voting model needs members".into()));
        }
        Ok(Self { members })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.members.iter().map(|m| m.model.predict_proba(x)).sum();
        sum / self.members.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub hyperparameters: Hyperparams,
    /// Selection metric per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: Family,
    pub best_hyperparameters: Hyperparams,
    pub validation_score: f64,
    pub grid: Vec<GridScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub search_seeds: Vec<u64>,
    pub threshold: f64,
    pub selection_metric: String,
    pub scaler_fit: String,
    pub validation_rows: Vec<usize>,
    /// Families in rank order.
    pub ranking: Vec<FamilyResult>,
    /// Families whose every grid point failed to train, with the first error.
    pub skipped: Vec<(Family, String)>,
}

/// Everything needed to score raw feature rows: schema, scaler, ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    pub voting: VotingModel,
    pub provenance: Option<Provenance>,
}

impl GateModel {
    /// A gate that returns `p` for every input.
    pub fn constant(feature_names: Vec<String>, p: f64) -> Self {
        let d = feature_names.len();
        Self {
            feature_names,
            scaler: Scaler {
                mean: vec![0.0; d],
                std: vec![1.0; d],
            },
            voting: VotingModel {
                members: vec![Member {
                    spec: ModelSpec::new(Family::Logreg, Hyperparams::new(), 0),
                    model: FittedModel::Constant(p.clamp(0.0, 1.0)),
                }],
            },
            provenance: None,
        }
    }

    pub fn check_schema(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            let detail = names
                .iter()
                .zip(&self.feature_names)
                .position(|(a, b)| a != b)
                .map_or_else(
                    || format!("expected {} features, got {}", self.feature_names.len(), names.len()),
                    |i| format!("feature {i}: expected `{}`, got `{}`", self.feature_names[i], names[i]),
                );
            return Err(TabularError::SchemaMismatch(detail));
        }
        Ok(())
    }

    /// Scales a raw row and returns the ensemble probability.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.feature_names.len() {
            return Err(TabularError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: raw.len(),
            });
        }
        let scaled = self.scaler.transform_row(ndarray::ArrayView1::from(raw));
        Ok(self.voting.predict_proba(&scaled))
    }

    /// Deterministic pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.scaler.n_features() != model.feature_names.len() {
            return Err(TabularError::DimensionMismatch {
                expected: model.feature_names.len(),
                got: model.scaler.n_features(),
            });
        }
        Ok(model)
    }
}
