use extgate_tabular::hyper::{GridConfig, HyperValue};
use extgate_tabular::knn::{Algorithm, Knn, KnnParams, Metric, Weighting};
use extgate_tabular::{end_to_end_train, Family, GateModel, Outcome, Scaler, SearchOptions, TabularDataset};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Retrieval helps when column 0 is below 0.5; 5% of labels are flipped.
fn planted(n: usize, d: usize, seed: u64) -> TabularDataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, d), || r.gen_range(0.0..1.0));
    let outcomes = (0..n)
        .map(|i| {
            if (x[[i, 0]] < 0.5) ^ r.gen_bool(0.05) {
                Outcome::new(false, true)
            } else {
                Outcome::new(r.gen_bool(0.5), false)
            }
        })
        .collect();
    TabularDataset::from_outcomes(x, outcomes, (0..d).map(|i| format!("f{i}")).collect()).unwrap()
}

fn small_grids() -> SearchOptions {
    let grids = GridConfig::parse(
        r#"
[logreg]
C = [0.1, 1]
[knn]
n_neighbors = [5, 7]
weights = ["uniform", "distance"]
[dtree]
max_depth = [3, "None"]
max_features = [0.4, "None"]
[rforest]
n_estimators = [25, 35]
max_features = ["sqrt"]
max_depth = [5]
[gboost]
n_estimators = [25]
max_depth = [3]
max_features = ["sqrt", "None"]
[mlp]
hidden_layer_sizes = [[20]]
early_stopping = true
"#,
    )
    .unwrap();
    SearchOptions {
        grids,
        ..SearchOptions::default()
    }
}

#[test]
fn repeated_training_gives_identical_artifacts() {
    let data = planted(200, 6, 3);
    let a = end_to_end_train(&data, &small_grids(), 11).unwrap();
    let b = end_to_end_train(&data, &small_grids(), 11).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let par = SearchOptions {
        parallel: true,
        ..small_grids()
    };
    let c = end_to_end_train(&data, &par, 11).unwrap();
    assert_eq!(a.to_json().unwrap(), c.to_json().unwrap());
    let prov = a.provenance.as_ref().unwrap();
    assert_eq!(prov.validation_rows.len(), 100);
    assert_eq!(prov.search_seeds.len(), 3);
    assert_eq!(a.voting.members.len(), 2);
    let top: Vec<Family> = prov.ranking[..2].iter().map(|r| r.family).collect();
    let members: Vec<Family> = a.voting.members.iter().map(|m| m.spec.family).collect();
    assert_eq!(top, members);
}

#[test]
fn artifact_round_trip_preserves_predictions() {
    let data = planted(160, 4, 5);
    let gate = end_to_end_train(&data, &small_grids(), 2).unwrap();
    let back = GateModel::from_json(&gate.to_json().unwrap()).unwrap();
    assert_eq!(gate, back);
    for i in 0..data.n_rows() {
        let row = data.x.row(i).to_vec();
        assert_eq!(gate.predict_proba(&row).unwrap(), back.predict_proba(&row).unwrap());
    }
}

#[test]
fn voting_is_mean_of_members() {
    let data = planted(160, 4, 6);
    let gate = end_to_end_train(&data, &small_grids(), 3).unwrap();
    for i in 0..data.n_rows() {
        let raw = data.x.row(i).to_vec();
        let scaled = gate.scaler.transform_row(data.x.row(i));
        let m: Vec<f64> = gate.voting.members.iter().map(|m| m.model.predict_proba(&scaled)).collect();
        assert_eq!(gate.predict_proba(&raw).unwrap(), (m[0] + m[1]) / 2.0);
    }
}

#[test]
fn degenerate_inputs() {
    assert!(end_to_end_train(&planted(119, 3, 1), &small_grids(), 0).is_err());
    let empty = SearchOptions {
        grids: GridConfig::parse("").unwrap(),
        ..SearchOptions::default()
    };
    assert!(end_to_end_train(&planted(150, 3, 1), &empty, 0).is_err());
}

fn brute_force(x: &Array2<f64>, q: &[f64], k: usize, metric: Metric) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..x.nrows())
        .map(|i| {
            let row = x.row(i);
            let dist = match metric {
                Metric::Euclidean => row.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                Metric::Manhattan => row.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
            };
            (dist, i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|p| p.1).collect()
}

#[test]
fn knn_matches_brute_force_on_grid_settings() {
    let data = planted(500, 30, 8);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let queries: Vec<Vec<f64>> = (0..50).map(|_| (0..30).map(|_| r.gen_range(-0.2..1.2)).collect()).collect();
    for p in GridConfig::default_grids().candidates(Family::Knn) {
        let params = KnnParams::from_hyper(&p).unwrap();
        let m = Knn::fit(&params, &data).unwrap();
        for q in &queries {
            let got: Vec<usize> = m.neighbors(q).iter().map(|n| n.index).collect();
            assert_eq!(got, brute_force(&data.x, q, params.n_neighbors, params.metric), "{p:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaler_absorbs_per_feature_rescaling(seed in 0u64..1000, col in 0usize..4, exp in -8i32..8,
                                            c in 0.01f64..100.0, negate in any::<bool>()) {
        let data = planted(60, 4, seed);
        let sign = if negate { -1.0 } else { 1.0 };
        // a power of two rescales exactly; a generic constant only up to rounding
        for (factor, exact) in [(sign * 2f64.powi(exp), true), (sign * c, false)] {
            let mut x2 = data.x.clone();
            x2.column_mut(col).mapv_inplace(|v| v * factor);
            let z1 = Scaler::fit(&data.x).transform(&data.x);
            let z2 = Scaler::fit(&x2).transform(&x2);
            let ds1 = data.with_x(z1.clone());
            let ds2 = data.with_x(z2.clone());
            for algorithm in [Algorithm::Brute, Algorithm::KdTree] {
                let params = KnnParams { n_neighbors: 5, metric: Metric::Euclidean, algorithm, weights: Weighting::Uniform };
                let m1 = Knn::fit(&params, &ds1).unwrap();
                let m2 = Knn::fit(&params, &ds2).unwrap();
                for i in 0..10 {
                    let n1 = m1.neighbors(&z1.row(i).to_vec());
                    let n2 = m2.neighbors(&z2.row(i).to_vec());
                    let i1: Vec<usize> = n1.iter().map(|n| n.index).collect();
                    let i2: Vec<usize> = n2.iter().map(|n| n.index).collect();
                    if exact {
                        prop_assert_eq!(i1, i2);
                    } else {
                        // compare only when the k-th neighbour is not a near tie
                        let kth = n1[4].distance;
                        let next = brute_force(&z1, &z1.row(i).to_vec(), 6, Metric::Euclidean)[5];
                        let gap = (z1.row(next).iter().zip(z1.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() - kth).abs();
                        if gap > 1e-9 * kth.max(1.0) {
                            let mut s1 = i1.clone();
                            let mut s2 = i2.clone();
                            s1.sort_unstable();
                            s2.sort_unstable();
                            prop_assert_eq!(s1, s2);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn default_grid_file_lists_published_values() {
    let g = GridConfig::default_grids();
    let lr = &g.sections["logreg"];
    assert_eq!(lr["C"], vec![HyperValue::Float(0.01), HyperValue::Float(0.1), HyperValue::Int(1)]);
}
