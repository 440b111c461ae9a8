//! Loading stores and models from a config, and the features TSV.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use extgate_core::stores::{load_store, StoreKind, Stores};
use extgate_core::{
    Extractor, FeatureSchema, FeatureVector, Gazetteer, Models, QuestionRecord, Sidecar, TextClassifier,
};
use extgate_tabular::{Outcome, TabularDataset};
use ndarray::Array2;

use crate::config::RunConfig;

pub fn load_stores(cfg: &RunConfig) -> Result<Stores> {
    let mut stores = Stores::default();
    let s = &cfg.stores;
    for (kind, path) in [
        (StoreKind::Triples, &s.triples),
        (StoreKind::Pageviews, &s.pageviews),
        (StoreKind::Frequency, &s.frequency),
        (StoreKind::Knowledgability, &s.knowledgability),
    ] {
        if let Some(p) = path {
            let store = load_store(kind, p).with_context(|| format!("loading {kind} store {}", p.display()))?;
            stores.insert(store);
        }
    }
    Ok(stores)
}

fn load_classifier(path: &Path) -> Result<TextClassifier> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TextClassifier::from_json(&text, None).with_context(|| format!("loading classifier {}", path.display()))
}

pub fn load_extractor(cfg: &RunConfig) -> Result<Extractor> {
    let schema = FeatureSchema::new(cfg.features.clone()).context("building the feature schema")?;
    let stores = load_stores(cfg)?;
    let gazetteer = match &cfg.linker.gazetteer {
        Some(p) => Some(
            Gazetteer::load(p, stores.pageviews.as_ref()).with_context(|| format!("loading gazetteer {}", p.display()))?,
        ),
        None => None,
    };
    let sidecar = match &cfg.linker.sidecar {
        Some(p) => Some(Sidecar::load(p).with_context(|| format!("loading sidecar {}", p.display()))?),
        None => None,
    };
    let m = &cfg.models;
    let models = Models {
        qtype: match &m.qtype {
            Some(p) => Some(load_classifier(p)?),
            None => m.bundled.then(extgate_core::textclf::bundled_qtype),
        },
        complexity: match &m.complexity {
            Some(p) => Some(load_classifier(p)?),
            None => m.bundled.then(extgate_core::textclf::bundled_complexity),
        },
    };
    Ok(Extractor {
        schema,
        stores,
        gazetteer,
        sidecar,
        models,
    })
}

/// Run metadata shared by every output header.
pub fn metadata(cfg: &RunConfig, ex: &Extractor) -> Vec<(String, String)> {
    let o = &ex.schema.options;
    let mut m = vec![
        ("seed".to_string(), cfg.seed.to_string()),
        ("threshold".to_string(), cfg.threshold.to_string()),
        ("schema".to_string(), o.preset.clone()),
        ("features".to_string(), ex.schema.len().to_string()),
        ("context_norm".to_string(), o.context_norm.to_string()),
        ("ngram".to_string(), o.ngram.to_string()),
    ];
    for (kind, meta) in ex.stores.metas() {
        let mut v = meta.snapshot.clone();
        if let Some(w) = meta.window() {
            let _ = write!(v, " window={w}");
        }
        m.push((format!("store.{kind}"), v));
    }
    m
}

/// Feature rows keyed by question id, with their column names.
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureTable {
    pub fn from_vectors(records: &[QuestionRecord], vectors: &[FeatureVector]) -> Self {
        let names = vectors
            .first()
            .map(FeatureVector::names)
            .unwrap_or_default();
        let rows = records
            .iter()
            .zip(vectors)
            .map(|(r, v)| (r.id.clone(), v.values.clone()))
            .collect();
        Self { names, rows }
    }

    pub fn to_tsv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str("id");
        for n in &self.names {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
        for (id, vals) in &self.rows {
            out.push_str(id);
            for v in vals {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let Some((_, header)) = lines.next() else { bail!("features file is empty") };
        let mut cols = header.split('\t');
        if cols.next() != Some("id") {
            bail!("features header must start with `id`");
        }
        let names: Vec<String> = cols.map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let mut f = line.split('\t');
            let id = f.next().unwrap_or_default().to_string();
            let vals = f
                .map(|v| v.parse::<f64>().with_context(|| format!("line {}: bad value `{v}`", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != names.len() {
                bail!("line {}: {} values for {} features", i + 1, vals.len(), names.len());
            }
            rows.push((id, vals));
        }
        Ok(Self { names, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing features {}", path.display()))
    }

    /// Feature matrix in dataset order; every record needs a row.
    pub fn matrix_for(&self, records: &[QuestionRecord]) -> Result<Array2<f64>> {
        let by_id: HashMap<&str, &Vec<f64>> = self.rows.iter().map(|(i, v)| (i.as_str(), v)).collect();
        let d = self.names.len();
        let mut x = Array2::zeros((records.len(), d));
        for (i, r) in records.iter().enumerate() {
            let v = by_id
                .get(r.id.as_str())
                .with_context(|| format!("question `{}` has no feature row", r.id))?;
            for (j, val) in v.iter().enumerate() {
                x[[i, j]] = *val;
            }
        }
        Ok(x)
    }
}

/// Features from `--features` when given, else extracted now.
pub fn features_for(
    ex: &Extractor,
    records: &[QuestionRecord],
    features: Option<&Path>,
) -> Result<FeatureTable> {
    match features {
        Some(p) => FeatureTable::load(p),
        None => {
            let vectors = ex.extract_all(records).context("extracting features")?;
            let mut t = FeatureTable::from_vectors(records, &vectors);
            if t.names.is_empty() {
                t.names = ex.schema.names();
            }
            Ok(t)
        }
    }
}

pub fn training_data(table: &FeatureTable, records: &[QuestionRecord]) -> Result<TabularDataset> {
    let x = table.matrix_for(records)?;
    let outcomes: Vec<Outcome> = extgate_core::evalgate::outcomes(records);
    Ok(TabularDataset::from_outcomes(x, outcomes, table.names.clone())?)
}
