//! Gating, evaluation rows, cost accounting and feature analyses.
//!
//! The training label is 1 exactly when retrieval turns a wrong answer into
//! a right one. The ideal oracle retrieves on those questions only.

use std::fmt::Write as _;

use extgate_tabular::rng::{chacha, derive};
use extgate_tabular::{GateModel, Outcome, TabularError};
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{FeatureVector, GateDecision, QuestionRecord, RunReport};
use crate::reference::ReferenceRow;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn outcome(record: &QuestionRecord) -> Outcome {
    Outcome::new(record.correct_without(), record.correct_with())
}

pub fn outcomes(records: &[QuestionRecord]) -> Vec<Outcome> {
    records.iter().map(outcome).collect()
}

pub fn label_need_retrieval(record: &QuestionRecord) -> u8 {
    outcome(record).need_retrieval()
}

fn schema_error(e: TabularError) -> Error {
    match e {
        TabularError::SchemaMismatch(m) => Error::SchemaMismatch(m),
        TabularError::DimensionMismatch { expected, got } => Error::DimensionMismatch { expected, got },
        other => Error::Tabular(other),
    }
}

pub fn decide(model: &GateModel, features: &FeatureVector, threshold: f64) -> Result<GateDecision> {
    model.check_schema(&features.names()).map_err(schema_error)?;
    let score = model.predict_proba(&features.values).map_err(schema_error)?;
    Ok(GateDecision::from_score(score, threshold))
}

/// Per-method cost ledger. LMC is accounted, never measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub llm_generate_calls_per_question: f64,
    pub ue_llm_calls_per_question: f64,
    pub pflops_per_llm_call: f64,
    pub pflops_feature_pipeline: f64,
}

impl Default for CostModel {
    /// An external-feature gate: one generation, no uncertainty calls.
    fn default() -> Self {
        Self {
            llm_generate_calls_per_question: 1.0,
            ue_llm_calls_per_question: 0.0,
            pflops_per_llm_call: 0.0181,
            pflops_feature_pipeline: 0.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.llm_generate_calls_per_question,
            self.ue_llm_calls_per_question,
            self.pflops_per_llm_call,
            self.pflops_feature_pipeline,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Artifact(format!("cost model entries must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn lm_calls(&self) -> f64 {
        self.llm_generate_calls_per_question + self.ue_llm_calls_per_question
    }

    pub fn mean_pflops(&self) -> f64 {
        self.pflops_per_llm_call * self.lm_calls() + self.pflops_feature_pipeline
    }
}

pub fn evaluate_outcomes(
    method_name: &str,
    decisions: &[bool],
    outcomes: &[Outcome],
    cost: &CostModel,
) -> Result<RunReport> {
    if decisions.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: outcomes.len(),
            got: decisions.len(),
        });
    }
    let n = outcomes.len().max(1) as f64;
    let correct = decisions.iter().zip(outcomes).filter(|(d, o)| o.correct_given(**d)).count();
    let retrieved = decisions.iter().filter(|d| **d).count();
    Ok(RunReport {
        method_name: method_name.to_string(),
        in_accuracy: correct as f64 / n,
        lm_calls: cost.lm_calls(),
        retrieval_calls: retrieved as f64 / n,
        mean_pflops: cost.mean_pflops(),
    })
}

pub fn evaluate_method(
    method_name: &str,
    decisions: &[bool],
    records: &[QuestionRecord],
    cost: &CostModel,
) -> Result<RunReport> {
    evaluate_outcomes(method_name, decisions, &outcomes(records), cost)
}

pub fn ideal_decisions(outcomes: &[Outcome]) -> Vec<bool> {
    outcomes.iter().map(|o| o.need_retrieval() == 1).collect()
}

/// Never, Always and Ideal rows, all costed as one generation per question.
pub fn baseline_reports(outcomes: &[Outcome], cost: &CostModel) -> Vec<RunReport> {
    let n = outcomes.len();
    let base = CostModel {
        ue_llm_calls_per_question: 0.0,
        ..*cost
    };
    let rows = [
        ("Never RAG", vec![false; n]),
        ("Always RAG", vec![true; n]),
        ("Ideal", ideal_decisions(outcomes)),
    ];
    rows.into_iter()
        .map(|(name, d)| evaluate_outcomes(name, &d, outcomes, &base).expect("lengths agree"))
        .collect()
}

/// FLOPs at full utilisation: TFLOPs per GPU times GPUs times seconds.
pub fn flops_upper_bound(tflops_per_gpu: f64, num_gpus: u32, elapsed_seconds: f64) -> f64 {
    tflops_per_gpu * f64::from(num_gpus) * 1e12 * elapsed_seconds
}

/// Mean drop of `metric` over `repeats` seeded shuffles of each column.
/// `metric` maps the model's probabilities for all rows to a score.
pub fn permutation_importance(
    model: &GateModel,
    x: &Array2<f64>,
    feature_names: &[String],
    metric: &dyn Fn(&[f64]) -> f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    model.check_schema(feature_names).map_err(schema_error)?;
    if x.ncols() != feature_names.len() {
        return Err(Error::DimensionMismatch {
            expected: feature_names.len(),
            got: x.ncols(),
        });
    }
    let predict = |m: &Array2<f64>| -> Result<Vec<f64>> {
        m.rows()
            .into_iter()
            .map(|r| model.predict_proba(r.as_slice().expect("standard layout")).map_err(schema_error))
            .collect()
    };
    let x = x.as_standard_layout().to_owned();
    let baseline = metric(&predict(&x)?);
    let mut out = vec![0.0; x.ncols()];
    if repeats == 0 {
        return Ok(out);
    }
    let n = x.nrows();
    for (j, slot) in out.iter_mut().enumerate() {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut rng = chacha(derive(derive(seed, j as u64), r as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut shuffled = x.clone();
            for (i, &p) in perm.iter().enumerate() {
                shuffled[[i, j]] = x[[p, j]];
            }
            total += baseline - metric(&predict(&shuffled)?);
        }
        *slot = total / repeats as f64;
    }
    Ok(out)
}

/// Feature names sorted by descending score; equal scores keep feature order.
pub fn rank_importance(names: &[String], scores: &[f64]) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = names.iter().cloned().zip(scores.iter().copied()).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

fn centered(col: ArrayView1<f64>) -> Option<Vec<f64>> {
    let n = col.len().max(1) as f64;
    let mean = col.sum() / n;
    let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let std = (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    (std > 1e-12 * mean.abs().max(1.0)).then_some(c)
}

/// Absolute Pearson correlations among the columns of `x` and `y`, with `y`
/// as the last row and column. Zero-variance columns correlate 0 with
/// everything, themselves included.
pub fn correlation_matrix(x: &Array2<f64>, y: &[f64]) -> Result<Array2<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let mut cols: Vec<Option<Vec<f64>>> = x.columns().into_iter().map(centered).collect();
    cols.push(centered(ArrayView1::from(y)));
    let d = cols.len();
    let mut m = Array2::zeros((d, d));
    for i in 0..d {
        let Some(a) = &cols[i] else { continue };
        m[[i, i]] = 1.0;
        for j in i + 1..d {
            let Some(b) = &cols[j] else { continue };
            let sab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let saa: f64 = a.iter().map(|p| p * p).sum();
            let sbb: f64 = b.iter().map(|q| q * q).sum();
            let r = (sab / (saa.sqrt() * sbb.sqrt())).abs().min(1.0);
            m[[i, j]] = r;
            m[[j, i]] = r;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[serde(alias = "md")]
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "md" | "markdown" => Some(Self::Markdown),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            Self::Markdown => "md",
            Self::Csv => "csv",
        }
    }
}

pub const REPORT_COLUMNS: [&str; 5] = ["method", "in_accuracy", "lm_calls", "retrieval_calls", "mean_pflops"];

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

/// One row per report in input order. Markdown shows InAcc in percent with
/// one decimal; CSV keeps full precision. `metadata` goes above the table,
/// as a list in Markdown and as `#` comment lines in CSV.
pub fn render_report(reports: &[RunReport], format: ReportFormat, metadata: &[(String, String)]) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            for (k, v) in metadata {
                let _ = writeln!(out, "- {}: {}", md_cell(k), md_cell(v));
            }
            if !metadata.is_empty() {
                out.push('\n');
            }
            out.push_str("| Method | InAcc | LMC | RC | PFLOPs |\n|---|---:|---:|---:|---:|\n");
            for r in reports {
                let _ = writeln!(
                    out,
                    "| {} | {:.1} | {:.1} | {:.2} | {:.5} |",
                    md_cell(&r.method_name),
                    r.in_accuracy * 100.0,
                    r.lm_calls,
                    r.retrieval_calls,
                    r.mean_pflops
                );
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            for (k, v) in metadata {
                let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS).expect("in-memory write");
            for r in reports {
                w.write_record([
                    r.method_name.clone(),
                    r.in_accuracy.to_string(),
                    r.lm_calls.to_string(),
                    r.retrieval_calls.to_string(),
                    r.mean_pflops.to_string(),
                ])
                .expect("in-memory write");
            }
            out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
            out
        }
    }
}

/// Parses CSV produced by [`render_report`], skipping `#` lines.
pub fn parse_report_csv(text: &str) -> Result<Vec<RunReport>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |e: String| Error::Artifact(format!("report csv: {e}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("column {i} of {:?}", rec)))
        };
        out.push(RunReport {
            method_name: rec.get(0).unwrap_or_default().to_string(),
            in_accuracy: num(1)?,
            lm_calls: num(2)?,
            retrieval_calls: num(3)?,
            mean_pflops: num(4)?,
        });
    }
    Ok(out)
}

/// Published comparison rows; InAcc is already in percent.
pub fn render_reference(rows: &[ReferenceRow], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out.push_str("| Method | InAcc | LMC | RC |\n|---|---:|---:|---:|\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "| {} | {:.1} | {:.1} | {:.2} |",
                    r.method, r.in_accuracy, r.lm_calls, r.retrieval_calls
                );
            }
        }
        ReportFormat::Csv => {
            out.push_str("method,in_accuracy_percent,lm_calls,retrieval_calls\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{},{}", r.method, r.in_accuracy, r.lm_calls, r.retrieval_calls);
            }
        }
    }
    out
}

/// `feature,score` lines.
pub fn render_importance(ranked: &[(String, f64)]) -> String {
    let mut out = String::from("feature,score\n");
    for (n, s) in ranked {
        let _ = writeln!(out, "{n},{s}");
    }
    out
}

/// Square matrix with a header row and a leading name column.
pub fn render_correlation(names: &[String], m: &Array2<f64>) -> String {
    let mut out = String::from("feature");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (n, row) in names.iter().zip(m.rows()) {
        out.push_str(n);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(Outcome::new(false, true).need_retrieval(), 1);
        assert_eq!(Outcome::new(true, true).need_retrieval(), 0);
        assert_eq!(Outcome::new(false, false).need_retrieval(), 0);
    }

    #[test]
    fn flops() {
        assert_eq!(flops_upper_bound(312.0, 1, 1.0), 3.12e14);
        assert_eq!(flops_upper_bound(0.0, 8, 100.0), 0.0);
        assert_eq!(flops_upper_bound(312.0, 4, 2.5), 3.12e15);
    }

    #[test]
    fn length_mismatch() {
        let o = [Outcome::new(true, true)];
        assert!(matches!(
            evaluate_outcomes("x", &[], &o, &CostModel::default()),
            Err(Error::LengthMismatch { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn three_point_correlation() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 2.0, 2.0, 3.0, 4.0]).unwrap();
        let m = correlation_matrix(&x, &[0.0, 0.0, 0.0]).unwrap();
        assert!((m[[0, 1]] - 0.982).abs() <= 0.001);
        assert_eq!(m[[2, 2]], 0.0);
        assert_eq!(m[[0, 2]], 0.0);
    }

    #[test]
    fn empty_report_is_header_only() {
        let md = render_report(&[], ReportFormat::Markdown, &[]);
        assert_eq!(md.lines().count(), 2);
        let csv = render_report(&[], ReportFormat::Csv, &[]);
        assert_eq!(csv, "method,in_accuracy,lm_calls,retrieval_calls,mean_pflops\n");
    }
}
