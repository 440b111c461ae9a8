//! Retrieval gating from external, LLM-independent question features.
//!
//! The crate covers the domain types and dataset I/O, the knowledge stores,
//! a dictionary entity linker, feature extraction, the small text
//! classifiers behind the question-type and complexity features, and the
//! evaluation harness. Tabular model training lives in `extgate-tabular`.

pub mod error;
pub mod evalgate;
pub mod features;
pub mod linker;
pub mod record;
pub mod reference;
pub mod stores;
pub mod text;
pub mod textclf;

pub use error::{Error, Result};
pub use evalgate::{decide, evaluate_method, ideal_decisions, label_need_retrieval, CostModel, ReportFormat};
pub use features::{Extractor, FeatureSchema, Models, SchemaOptions};
pub use linker::{Gazetteer, Sidecar};
pub use record::{
    answer_is_correct, load_dataset, EntityMention, FeatureDef, FeatureGroup, FeatureVector, GateDecision,
    QuestionRecord, RunReport,
};
pub use stores::{load_store, Store, StoreKind, Stores};
pub use textclf::{relevance_score, TextClassifier};
