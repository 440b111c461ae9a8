//! `extgate`: ingest stores, extract features, train and evaluate retrieval
//! gates, and serve gate decisions over standard streams.

mod config;
mod pipeline;
mod serve;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use extgate_core::evalgate::{
    self, baseline_reports, correlation_matrix, evaluate_outcomes, permutation_importance, rank_importance,
    render_correlation, render_importance, render_report,
};
use extgate_core::stores::FrequencyStore;
use extgate_core::textclf::{parse_corpus, TextClassifier, TrainConfig};
use extgate_core::{load_dataset, ReportFormat};
use extgate_tabular::hyper::format_params;
use extgate_tabular::{end_to_end_train, in_accuracy, GateModel, Provenance};

use crate::config::RunConfig;
use crate::pipeline::{features_for, load_extractor, load_stores, metadata, training_data};

#[derive(Parser)]
#[command(name = "extgate", version, about = "Retrieval gating from external question features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured retrieval threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate every configured store and print a summary.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Write per-question features as TSV.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search the classifier families and write the voting gate.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Features from `extract`; extracted on the fly when absent.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a gate against Never, Always and Ideal retrieval.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report printed to stdout: md or csv. Both files are written.
        #[arg(long)]
        format: Option<String>,
    },
    /// Answer one JSON request per stdin line with a gate decision.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Build a frequency table from a corpus with one document per line.
    BuildFreq {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a text classifier on a `label<TAB>text` corpus.
    TrainTextclf {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        dimension: Option<usize>,
        /// 0 for full-batch training.
        #[arg(long)]
        batch_size: Option<usize>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.out.clone())
}

fn ingest(common: Common) -> Result<()> {
    let cfg = load_config(&common)?;
    let stores = load_stores(&cfg)?;
    let metas = stores.metas();
    if metas.is_empty() {
        println!("no stores configured");
    }
    for (kind, m) in metas {
        let window = m.window().map(|w| format!(" window={w}")).unwrap_or_default();
        println!(
            "{kind}\trows={}\twarnings={}\tsnapshot={}{window}",
            m.rows, m.warnings, m.snapshot
        );
    }
    if let Some(p) = &cfg.linker.gazetteer {
        let g = extgate_core::Gazetteer::load(p, stores.pageviews.as_ref())?;
        println!("gazetteer\taliases={}\tmax_alias_tokens={}", g.len(), g.max_alias_tokens);
    }
    Ok(())
}

fn extract(common: Common, dataset: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&common)?;
    let ex = load_extractor(&cfg)?;
    let records = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let table = features_for(&ex, &records, None)?;
    let path = out_dir(&cfg, out).join("features.tsv");
    write(&path, &table.to_tsv(&metadata(&cfg, &ex)))?;
    println!("wrote {} rows to {}", table.rows.len(), path.display());
    Ok(())
}

fn provenance_markdown(model: &GateModel) -> String {
    let mut out = String::from("# Training provenance\n\n");
    let members: Vec<String> = model
        .voting
        .members
        .iter()
        .map(|m| format!("{} {}", m.spec.family, format_params(&m.spec.hyperparameters)))
        .collect();
    let _ = writeln!(out, "Voting members: {}\n", members.join("; "));
    let Some(p): Option<&Provenance> = model.provenance.as_ref() else { return out };
    let _ = writeln!(out, "- master seed: {}", p.master_seed);
    let _ = writeln!(out, "- search seeds: {:?}", p.search_seeds);
    let _ = writeln!(out, "- threshold: {}", p.threshold);
    let _ = writeln!(out, "- selection metric: {}", p.selection_metric);
    let _ = writeln!(out, "- scaler: {}", p.scaler_fit);
    let _ = writeln!(out, "- validation rows: {}\n", p.validation_rows.len());
    out.push_str("## Family ranking\n\n| Rank | Family | Validation InAcc | Best hyperparameters |\n|---:|---|---:|---|\n");
    for (i, f) in p.ranking.iter().enumerate() {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {} |",
            i + 1,
            f.family,
            f.validation_score,
            format_params(&f.best_hyperparameters)
        );
    }
    for (fam, why) in &p.skipped {
        let _ = writeln!(out, "\nSkipped {fam}: {why}");
    }
    for f in &p.ranking {
        let _ = writeln!(out, "\n## {} grid\n\n| Hyperparameters | Mean | Per seed |\n|---|---:|---|", f.family);
        for g in &f.grid {
            let seeds: Vec<String> = g.per_seed.iter().map(|s| format!("{s:.4}")).collect();
            let _ = writeln!(
                out,
                "| {} | {:.4} | {} |",
                format_params(&g.hyperparameters),
                g.mean,
                seeds.join(", ")
            );
        }
    }
    out
}

fn train(common: Common, dataset: PathBuf, features: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&common)?;
    let ex = load_extractor(&cfg)?;
    let records = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let table = features_for(&ex, &records, features.as_deref())?;
    let data = training_data(&table, &records)?;
    let model = end_to_end_train(&data, &cfg.search_options()?, cfg.seed).context("training the gate")?;
    let dir = out_dir(&cfg, out);
    write(&dir.join("model.json"), &model.to_json()?)?;
    write(&dir.join("provenance.md"), &provenance_markdown(&model))?;
    let members: Vec<&str> = model.voting.members.iter().map(|m| m.spec.family.as_str()).collect();
    println!("selected {}; wrote {}", members.join(" + "), dir.join("model.json").display());
    Ok(())
}

fn load_model(path: &Path) -> Result<GateModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    GateModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn evaluate(
    common: Common,
    model: PathBuf,
    dataset: PathBuf,
    features: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let format = match format {
        Some(f) => ReportFormat::parse(&f).with_context(|| format!("unknown format `{f}`; use md or csv"))?,
        None => cfg.evaluate.format,
    };
    let gate = load_model(&model)?;
    let ex = load_extractor(&cfg)?;
    let records = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let table = features_for(&ex, &records, features.as_deref())?;
    gate.check_schema(&table.names)
        .map_err(|e| extgate_core::Error::SchemaMismatch(e.to_string()))
        .context("model and features disagree")?;
    let x = table.matrix_for(&records)?;
    let probs = x
        .rows()
        .into_iter()
        .map(|r| gate.predict_proba(&r.to_vec()))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    let decisions: Vec<bool> = probs.iter().map(|p| *p >= cfg.threshold).collect();
    let outcomes = evalgate::outcomes(&records);
    let method = cfg.evaluate.method.clone();
    let cost = cfg.cost_for(&method);
    let mut reports = baseline_reports(&outcomes, &cfg.cost_for("baseline"));
    reports.insert(2, evaluate_outcomes(&method, &decisions, &outcomes, &cost)?);

    let mut meta = metadata(&cfg, &ex);
    meta.push(("records".into(), records.len().to_string()));
    meta.push(("model".into(), model_summary(&gate)));
    meta.push((
        format!("cost.{method}"),
        format!(
            "llm_calls={} ue_calls={} pflops_per_call={} pflops_pipeline={}",
            cost.llm_generate_calls_per_question,
            cost.ue_llm_calls_per_question,
            cost.pflops_per_llm_call,
            cost.pflops_feature_pipeline
        ),
    ));

    let dir = out_dir(&cfg, out);
    let mut md = render_report(&reports, ReportFormat::Markdown, &meta);
    if cfg.evaluate.reference {
        md.push_str("\nPublished Natural Questions results (LLaMA 3.1-8B-Instruct), for comparison only:\n\n");
        md.push_str(&evalgate::render_reference(&extgate_core::reference::NQ_RESULTS, ReportFormat::Markdown));
    }
    let csv = render_report(&reports, ReportFormat::Csv, &meta);
    write(&dir.join("report.md"), &md)?;
    write(&dir.join("report.csv"), &csv)?;

    let mut dec = String::from("id\tscore\tretrieve\n");
    for ((id, _), (p, d)) in table.rows.iter().zip(probs.iter().zip(&decisions)) {
        let _ = writeln!(dec, "{id}\t{p}\t{d}");
    }
    write(&dir.join("decisions.tsv"), &dec)?;

    let threshold = cfg.threshold;
    let metric = |p: &[f64]| in_accuracy(p, &outcomes, threshold);
    let scores = permutation_importance(&gate, &x, &table.names, &metric, cfg.evaluate.importance_repeats, cfg.seed)?;
    write(&dir.join("importance.csv"), &render_importance(&rank_importance(&table.names, &scores)))?;

    let y: Vec<f64> = outcomes.iter().map(|o| f64::from(o.need_retrieval())).collect();
    let corr = correlation_matrix(&x, &y)?;
    let mut names = table.names.clone();
    names.push("need_retrieval".into());
    write(&dir.join("correlation.csv"), &render_correlation(&names, &corr))?;

    print!("{}", if format == ReportFormat::Csv { csv } else { md });
    Ok(())
}

fn model_summary(gate: &GateModel) -> String {
    let members: Vec<&str> = gate.voting.members.iter().map(|m| m.spec.family.as_str()).collect();
    match &gate.provenance {
        Some(p) => format!("{} (master seed {})", members.join(" + "), p.master_seed),
        None => members.join(" + "),
    }
}

fn build_freq(corpus: PathBuf, out: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let store = FrequencyStore::from_corpus(&text);
    if store.is_empty() {
        bail!("corpus {} has no tokens", corpus.display());
    }
    write(&out, &store.to_tsv())?;
    println!("{} terms, {} tokens", store.len(), store.total_tokens);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_textclf(
    corpus: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    dimension: Option<usize>,
    batch_size: Option<usize>,
) -> Result<()> {
    let text = std::fs::read_to_string(&corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let rows = parse_corpus(&text).with_context(|| format!("parsing corpus {}", corpus.display()))?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        seed: seed.unwrap_or(d.seed),
        epochs: epochs.unwrap_or(d.epochs),
        learning_rate: learning_rate.unwrap_or(d.learning_rate),
        dimension: dimension.unwrap_or(d.dimension),
        batch_size: batch_size.unwrap_or(d.batch_size),
        l2: d.l2,
    };
    let model = TextClassifier::train(&rows, cfg)?;
    write(&out, &model.to_json())?;
    println!(
        "classes {:?}; training accuracy {:.3}",
        model.class_names,
        model.accuracy(&rows)
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest { common } => ingest(common),
        Command::Extract { common, dataset, out } => extract(common, dataset, out),
        Command::Train {
            common,
            dataset,
            features,
            out,
        } => train(common, dataset, features, out),
        Command::Evaluate {
            common,
            model,
            dataset,
            features,
            out,
            format,
        } => evaluate(common, model, dataset, features, out, format),
        Command::Serve { common, model } => {
            let cfg = load_config(&common)?;
            let gate = load_model(&model)?;
            let ex = load_extractor(&cfg)?;
            gate.check_schema(&ex.schema.names())
                .context("model and configured feature schema disagree")?;
            serve::run(&ex, &gate, cfg.threshold)
        }
        Command::BuildFreq { corpus, out } => build_freq(corpus, out),
        Command::TrainTextclf {
            corpus,
            out,
            seed,
            epochs,
            learning_rate,
            dimension,
            batch_size,
        } => train_textclf(corpus, out, seed, epochs, learning_rate, dimension, batch_size),
    }
}
