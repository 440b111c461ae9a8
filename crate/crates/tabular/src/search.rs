//! Grid search on a held-out validation split and the end-to-end training
//! protocol: search every family, keep the two best, retrain them on all
//! rows and combine them by soft voting.
//!
//! Selection uses In-Accuracy on the validation rows: a row counts as correct
//! when the answer picked by the gate (with retrieval iff the predicted
//! probability reaches the threshold) is correct. Ties between grid points go
//! to the lexicographically smaller hyperparameter map; ties between families
//! go to the smaller family name.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{in_accuracy, TabularDataset};
use crate::error::{Result, TabularError};
use crate::hyper::{self, cmp_params, Family, GridConfig, HyperValue, Hyperparams, ModelSpec};
use crate::model::{self, FittedModel};
use crate::rng;
use crate::scaler::Scaler;
use crate::tree::ColumnMatrix;
use crate::voting::{FamilyResult, GateModel, GridScore, Member, Provenance, VotingModel};

pub const VALIDATION_ROWS: usize = 100;
pub const MIN_ROWS: usize = 120;

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub grids: GridConfig,
    pub families: Vec<Family>,
    pub n_seeds: usize,
    pub validation_rows: usize,
    pub top_k: usize,
    pub threshold: f64,
    /// Train grid points on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grids: GridConfig::default_grids(),
            families: Family::ALL.to_vec(),
            n_seeds: 3,
            validation_rows: VALIDATION_ROWS,
            top_k: 2,
            threshold: 0.5,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: Hyperparams,
    pub score: f64,
    /// Every grid point that trained, in candidate order.
    pub scores: Vec<GridScore>,
    /// Points that failed to train, with the error message.
    pub failures: Vec<(Hyperparams, String)>,
}

/// Seeds used for the repeated runs of each grid point.
pub fn search_seeds(master_seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| rng::derive(master_seed, 100 + i)).collect()
}

fn score_model(m: &FittedModel, val: &TabularDataset, threshold: f64) -> f64 {
    let probas = m.predict_proba_rows(&val.x);
    in_accuracy(&probas, val.outcomes.as_deref().unwrap_or_default(), threshold)
}

/// Parameter whose smaller settings can be read off one larger fit: the
/// first k trees or stages of an ensemble are the k-member ensemble, and a
/// network that converged before epoch m is the network capped at m.
fn growth_key(family: Family) -> Option<&'static str> {
    match family {
        Family::Rforest | Family::Gboost => Some("n_estimators"),
        Family::Mlp => Some("max_iter"),
        _ => None,
    }
}

/// Candidate indices grouped by everything except the growth parameter,
/// each group ordered by decreasing growth.
fn growth_groups(family: Family, points: &[Hyperparams]) -> Vec<Vec<(usize, usize)>> {
    let mut grouped: BTreeMap<Hyperparams, Vec<(usize, usize)>> = BTreeMap::new();
    let mut groups = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let growth = growth_key(family).and_then(|k| match p.get(k) {
            Some(HyperValue::Int(v)) if *v >= 1 => Some((k, *v as usize)),
            _ => None,
        });
        match growth {
            Some((k, v)) => {
                let mut rest = p.clone();
                rest.remove(k);
                grouped.entry(rest).or_default().push((i, v));
            }
            None => groups.push(vec![(i, 0)]),
        }
    }
    groups.extend(grouped.into_values());
    for g in &mut groups {
        g.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    }
    groups
}

fn reuse(current: &FittedModel, growth: usize) -> Option<FittedModel> {
    match current {
        FittedModel::Rforest(f) => Some(FittedModel::Rforest(f.truncated(growth))),
        FittedModel::Gboost(g) => Some(FittedModel::Gboost(g.truncated(growth))),
        FittedModel::Mlp(m) if m.n_iter <= growth => Some(current.clone()),
        _ => None,
    }
}

type PointScore = (usize, std::result::Result<f64, String>);

#[allow(clippy::too_many_arguments)]
fn run_group(
    family: Family,
    points: &[Hyperparams],
    group: &[(usize, usize)],
    seed: u64,
    train: &TabularDataset,
    cm: &ColumnMatrix,
    val: &TabularDataset,
    threshold: f64,
) -> Vec<PointScore> {
    let mut out = Vec::with_capacity(group.len());
    let mut current: Option<FittedModel> = None;
    for &(idx, growth) in group {
        if let Some(m) = current.as_ref().and_then(|c| reuse(c, growth)) {
            out.push((idx, Ok(score_model(&m, val, threshold))));
            continue;
        }
        let spec = ModelSpec::new(family, points[idx].clone(), seed);
        match model::train_with_columns(&spec, train, Some(cm)) {
            Ok(m) => {
                out.push((idx, Ok(score_model(&m, val, threshold))));
                current = Some(m);
            }
            Err(e) => out.push((idx, Err(e.to_string()))),
        }
    }
    out
}

/// Scores every candidate on `val` averaged over `seeds` and returns the best.
pub fn grid_search(
    family: Family,
    candidates: &[Hyperparams],
    train: &TabularDataset,
    val: &TabularDataset,
    seeds: &[u64],
    threshold: f64,
    parallel: bool,
) -> Result<GridOutcome> {
    if candidates.is_empty() {
        return Err(TabularError::EmptyGrid(family.to_string()));
    }
    if seeds.is_empty() {
        return Err(TabularError::DegenerateData("no search seeds".into()));
    }
    if val.outcomes.is_none() {
        return Err(TabularError::DegenerateData(
            "validation rows carry no answer outcomes".into(),
        ));
    }
    let mut points: Vec<Hyperparams> = candidates.to_vec();
    points.sort_by(cmp_params);
    points.dedup();
    let cm = ColumnMatrix::new(&train.x);
    let groups = growth_groups(family, &points);
    // seed-independent groups train once and share the score across seeds
    let jobs: Vec<(usize, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, members)| {
            let n = if hyper::seed_dependent(family, &points[members[0].0]) {
                seeds.len()
            } else {
                1
            };
            (0..n).map(move |s| (g, s))
        })
        .collect();
    let run = |&(g, s): &(usize, usize)| {
        run_group(family, &points, &groups[g], seeds[s], train, &cm, val, threshold)
    };
    // collect() keeps job order, so the reduction below is order-stable
    let results: Vec<Vec<PointScore>> = if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut table: Vec<Vec<Option<std::result::Result<f64, String>>>> =
        vec![vec![None; seeds.len()]; points.len()];
    for (&(g, s), scored) in jobs.iter().zip(results) {
        let shared = !hyper::seed_dependent(family, &points[groups[g][0].0]);
        for (idx, r) in scored {
            if shared {
                table[idx].iter_mut().for_each(|slot| *slot = Some(r.clone()));
            } else {
                table[idx][s] = Some(r);
            }
        }
    }

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (p, row) in points.into_iter().zip(table) {
        let row: std::result::Result<Vec<f64>, String> =
            row.into_iter().map(|r| r.expect("every job filled")).collect();
        match row {
            Ok(per_seed) => {
                let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
                scores.push(GridScore {
                    hyperparameters: p,
                    per_seed,
                    mean,
                });
            }
            Err(e) => failures.push((p, e)),
        }
    }
    // first strict maximum in sorted order = smallest params among ties
    let best = scores
        .iter()
        .fold(None::<&GridScore>, |best, s| match best {
            Some(b) if s.mean <= b.mean => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| {
            TabularError::DegenerateData(format!(
                "no {family} grid point trained: {}",
                failures.first().map_or("", |f| f.1.as_str())
            ))
        })?;
    Ok(GridOutcome {
        best: best.hyperparameters.clone(),
        score: best.mean,
        scores: scores.clone(),
        failures,
    })
}

/// Seeded split into (train, validation) row indices, both sorted.
pub fn validation_split(n: usize, size: usize, master_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::chacha(rng::derive(master_seed, 0)));
    let mut val = idx[..size.min(n)].to_vec();
    let mut train = idx[size.min(n)..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn rank(a: &FamilyResult, b: &FamilyResult) -> Ordering {
    b.validation_score
        .total_cmp(&a.validation_score)
        .then_with(|| a.family.as_str().cmp(b.family.as_str()))
}

/// Runs the full selection protocol and returns the voting gate.
pub fn end_to_end_train(
    data: &TabularDataset,
    opts: &SearchOptions,
    master_seed: u64,
) -> Result<GateModel> {
    if data.n_rows() < MIN_ROWS.max(opts.validation_rows + 1) {
        return Err(TabularError::DegenerateData(format!(
            "need at least {} rows, got {}",
            MIN_ROWS.max(opts.validation_rows + 1),
            data.n_rows()
        )));
    }
    if data.outcomes.is_none() {
        return Err(TabularError::DegenerateData(
            "training rows carry no answer outcomes".into(),
        ));
    }
    if opts.top_k == 0 {
        return Err(TabularError::DegenerateData("top_k must be at least 1".into()));
    }
    let (train_idx, val_idx) = validation_split(data.n_rows(), opts.validation_rows, master_seed);
    let raw_train = data.subset(&train_idx);
    let raw_val = data.subset(&val_idx);
    let scaler = Scaler::fit(&raw_train.x);
    let train = raw_train.with_x(scaler.transform(&raw_train.x));
    let val = raw_val.with_x(scaler.transform(&raw_val.x));
    let seeds = search_seeds(master_seed, opts.n_seeds);

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let mut any_grid = false;
    for &family in &opts.families {
        let candidates = opts.grids.candidates(family);
        if candidates.is_empty() {
            continue;
        }
        any_grid = true;
        match grid_search(family, &candidates, &train, &val, &seeds, opts.threshold, opts.parallel) {
            Ok(out) => results.push(FamilyResult {
                family,
                best_hyperparameters: out.best,
                validation_score: out.score,
                grid: out.scores,
            }),
            Err(e) => skipped.push((family, e.to_string())),
        }
    }
    if !any_grid {
        return Err(TabularError::EmptyGrid("all families".into()));
    }
    results.sort_by(rank);
    if results.len() < opts.top_k {
        return Err(TabularError::DegenerateData(format!(
            "only {} families trained, need {}",
            results.len(),
            opts.top_k
        )));
    }

    let full_scaler = Scaler::fit(&data.x);
    let full = data.with_x(full_scaler.transform(&data.x));
    let cm = ColumnMatrix::new(&full.x);
    let members = results[..opts.top_k]
        .iter()
        .map(|r| {
            let spec = ModelSpec::new(r.family, r.best_hyperparameters.clone(), seeds[0]);
            let model = model::train_with_columns(&spec, &full, Some(&cm))?;
            Ok(Member { spec, model })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GateModel {
        feature_names: data.feature_names.clone(),
        scaler: full_scaler,
        voting: VotingModel::new(members)?,
        provenance: Some(Provenance {
            master_seed,
            search_seeds: seeds,
            threshold: opts.threshold,
            selection_metric: "in_accuracy".into(),
            scaler_fit: "training portion during search, all rows for the final members".into(),
            validation_rows: val_idx,
            ranking: results,
            skipped,
        }),
    })
}
