use extgate_core::textclf::{
    bundled_complexity, bundled_qtype, parse_corpus, relevance_score, Problem, TextClassifier, TrainConfig,
    QTYPE_HELDOUT,
};
use proptest::prelude::*;

#[test]
fn qtype_heldout_accuracy() {
    let m = bundled_qtype();
    let held = parse_corpus(QTYPE_HELDOUT).unwrap();
    let acc = m.accuracy(&held);
    assert!(acc >= 0.8, "held-out accuracy {acc}");
    assert_eq!(m.class_names.len(), 9);
}

#[test]
fn qtype_examples() {
    let m = bundled_qtype();
    assert_eq!(m.predict("How many moons does Mars have?"), "count");
    let nile = m.predict("Is the Nile longer than the Amazon?");
    assert!(nile == "comparative" || nile == "yesno", "{nile}");
    let p = m.predict_proba("anything at all");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn complexity_single_hop() {
    let m = bundled_complexity();
    let p = m.proba_of("Who wrote Hamlet?", "multi").unwrap();
    assert!(p < 0.5, "{p}");
    let q = m.proba_of("Who is the spouse of the director of Jaws?", "multi").unwrap();
    assert!(q > 0.5, "{q}");
}

fn small_corpus() -> Vec<(String, String)> {
    [
        ("what is the capital of peru", "generic"),
        ("how many legs does a spider have", "count"),
        ("how many strings on a violin", "count"),
        ("is paris in france", "yesno"),
        ("did mozart write operas", "yesno"),
        ("who wrote hamlet", "generic"),
        ("how many moons", "count"),
        ("is rome older than paris", "yesno"),
        ("who directed jaws", "generic"),
        ("was einstein born in ulm", "yesno"),
    ]
    .iter()
    .map(|(t, l)| (t.to_string(), l.to_string()))
    .collect()
}

#[test]
fn gradient_matches_central_differences() {
    let corpus = small_corpus();
    let mut labels: Vec<&str> = corpus.iter().map(|c| c.1.as_str()).collect();
    labels.sort();
    labels.dedup();
    let feats: Vec<_> = corpus
        .iter()
        .map(|(t, l)| (extgate_core::textclf::featurize(t, 64), labels.iter().position(|x| x == l).unwrap()))
        .collect();
    let p = Problem::new(&feats, labels.len(), 0.01);
    let params: Vec<f64> = (0..p.n_params()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.07).collect();
    let batch: Vec<usize> = (0..10).collect();
    let (_, g) = p.loss_and_gradient(&params, &batch);
    let h = 1e-6;
    for i in 0..p.n_params() {
        let mut a = params.clone();
        let mut b = params.clone();
        a[i] += h;
        b[i] -= h;
        let num = (p.loss_and_gradient(&a, &batch).0 - p.loss_and_gradient(&b, &batch).0) / (2.0 * h);
        let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8);
        assert!(rel < 1e-4 || (num - g[i]).abs() < 1e-9, "param {i}: {num} vs {}", g[i]);
    }
}

#[test]
fn full_batch_loss_never_increases() {
    let cfg = TrainConfig {
        batch_size: 0,
        epochs: 100,
        ..TrainConfig::default()
    };
    let m = TextClassifier::train(&small_corpus(), cfg).unwrap();
    for w in m.loss_history.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn artifact_round_trip_and_dimension_check() {
    let cfg = TrainConfig {
        dimension: 1024,
        ..TrainConfig::default()
    };
    let m = TextClassifier::train(&small_corpus(), cfg).unwrap();
    let json = m.to_json();
    let back = TextClassifier::from_json(&json, Some(1024)).unwrap();
    for (t, _) in small_corpus() {
        assert_eq!(back.predict_proba(&t), m.predict_proba(&t));
    }
    assert!(matches!(
        TextClassifier::from_json(&json, Some(2048)),
        Err(extgate_core::error::Error::DimensionMismatch { expected: 2048, got: 1024 })
    ));
}

proptest! {
    #[test]
    fn relevance_is_symmetric_and_order_free(
        a in proptest::collection::vec("[a-e]{1,2}", 0..8),
        b in proptest::collection::vec("[a-e]{1,2}", 0..8),
    ) {
        let qa = a.join(" ");
        let cb = b.join(" ");
        let s = relevance_score(&qa, &cb);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, relevance_score(&cb, &qa));
        let mut rev = a.clone();
        rev.reverse();
        prop_assert_eq!(s, relevance_score(&rev.join(" "), &cb));
    }
}
