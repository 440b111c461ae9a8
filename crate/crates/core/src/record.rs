//! Question records, dataset I/O and answer correctness.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::text;

/// One QA example with its stored answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub answer_without_retrieval: String,
    pub answer_with_retrieval: String,
    #[serde(default)]
    pub contexts: Vec<String>,
    #[serde(default)]
    pub dataset_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_overrides: Option<BTreeMap<String, f64>>,
}

impl QuestionRecord {
    pub fn correct_without(&self) -> bool {
        answer_is_correct(&self.answer_without_retrieval, &self.gold_answers)
    }

    pub fn correct_with(&self) -> bool {
        answer_is_correct(&self.answer_with_retrieval, &self.gold_answers)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers is empty".into());
        }
        if let Some(g) = self.gold_answers.iter().find(|g| text::normalize(g).is_empty()) {
            return Err(format!("gold answer {g:?} normalises to the empty string"));
        }
        Ok(())
    }
}

/// A linked entity. Mentions read from a sidecar file carry no span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub kg_id: String,
    pub char_span: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Graph,
    Popularity,
    Frequency,
    Knowledgability,
    Qtype,
    Complexity,
    Context,
    /// LLM-derived signals; only ever supplied as overrides.
    Uncertainty,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 8] = [
        FeatureGroup::Graph,
        FeatureGroup::Popularity,
        FeatureGroup::Frequency,
        FeatureGroup::Knowledgability,
        FeatureGroup::Qtype,
        FeatureGroup::Complexity,
        FeatureGroup::Context,
        FeatureGroup::Uncertainty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureGroup::Graph => "graph",
            FeatureGroup::Popularity => "popularity",
            FeatureGroup::Frequency => "frequency",
            FeatureGroup::Knowledgability => "knowledgability",
            FeatureGroup::Qtype => "qtype",
            FeatureGroup::Complexity => "complexity",
            FeatureGroup::Context => "context",
            FeatureGroup::Uncertainty => "uncertainty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.as_str() == s)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub group: FeatureGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Vec<FeatureDef>,
}

impl FeatureVector {
    pub fn names(&self) -> Vec<String> {
        self.schema.iter().map(|d| d.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema
            .iter()
            .position(|d| d.name == name)
            .map(|i| self.values[i])
    }

    /// Values of one group, in schema order.
    pub fn group(&self, group: FeatureGroup) -> Vec<(String, f64)> {
        self.schema
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| d.group == group)
            .map(|(d, v)| (d.name.clone(), *v))
            .collect()
    }

    /// Checks length, finiteness and the range constraints of the
    /// probability-valued groups.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFeatureVector(m));
        if self.values.len() != self.schema.len() {
            return bad(format!(
                "{} values for {} schema entries",
                self.values.len(),
                self.schema.len()
            ));
        }
        for (d, v) in self.schema.iter().zip(&self.values) {
            if !v.is_finite() {
                return bad(format!("`{}` is not finite", d.name));
            }
            let unit = matches!(d.group, FeatureGroup::Qtype | FeatureGroup::Complexity)
                || d.name.starts_with("ctx_rel_");
            if unit && !(0.0..=1.0).contains(v) {
                return bad(format!("`{}` = {v} is outside [0, 1]", d.name));
            }
        }
        let qtype: Vec<f64> = self.group(FeatureGroup::Qtype).into_iter().map(|p| p.1).collect();
        if !qtype.is_empty() {
            let sum: f64 = qtype.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("question-type probabilities sum to {sum}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub retrieve: bool,
    pub score: f64,
}

impl GateDecision {
    /// Retrieval happens at or above the threshold.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        Self {
            retrieve: score >= threshold,
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method_name: String,
    pub in_accuracy: f64,
    pub lm_calls: f64,
    pub retrieval_calls: f64,
    pub mean_pflops: f64,
}

/// True iff the normalised answer contains some normalised gold answer.
pub fn answer_is_correct(answer: &str, gold_answers: &[String]) -> bool {
    let a = text::normalize(answer);
    gold_answers.iter().any(|g| {
        let g = text::normalize(g);
        !g.is_empty() && a.contains(&g)
    })
}

pub fn parse_dataset(content: &str) -> Result<Vec<QuestionRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        rec.validate().map_err(|reason| Error::MalformedRecord {
            line: line_no,
            reason,
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a line-delimited JSON dataset; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<QuestionRecord>> {
    parse_dataset(&error::read_to_string(path)?)
}

pub fn to_jsonl(records: &[QuestionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, records: &[QuestionRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}
