//! Tabular classifiers for retrieval gating: six model families, standard
//! scaling, grid search scored by In-Accuracy, and a soft-voting gate.

pub mod dataset;
pub mod error;
pub mod forest;
pub mod gboost;
pub mod hyper;
pub mod knn;
pub mod logreg;
pub mod mlp;
pub mod model;
pub mod rng;
pub mod scaler;
pub mod search;
pub mod tree;
pub mod voting;

pub use dataset::{in_accuracy, Outcome, TabularDataset};
pub use error::{Result, TabularError};
pub use hyper::{Family, GridConfig, HyperValue, Hyperparams, ModelSpec, DEFAULT_GRID_TOML};
pub use model::{train, FittedModel};
pub use scaler::Scaler;
pub use search::{end_to_end_train, grid_search, SearchOptions};
pub use voting::{GateModel, Member, Provenance, VotingModel};
