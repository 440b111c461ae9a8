use std::collections::BTreeMap;

use extgate_core::features::{
    aggregate, frequency_features, graph_features, knowledgability_features, popularity_features, Agg,
    Extractor, FeatureSchema, Models, QTYPE_LABELS,
};
use extgate_core::stores::{FrequencyStore, KnowledgabilityStore, PopularityStore, Stores, TripleCountStore};
use extgate_core::textclf::{TextClassifier, TrainConfig};
use extgate_core::{EntityMention, Error, FeatureGroup, Gazetteer, QuestionRecord};
use proptest::prelude::*;

fn hand_model(classes: &[&str], bias: &[f64]) -> TextClassifier {
    TextClassifier {
        dimension: 16,
        class_names: classes.iter().map(|s| s.to_string()).collect(),
        bias: bias.to_vec(),
        weights: BTreeMap::new(),
        config: TrainConfig::default(),
        loss_history: Vec::new(),
    }
}

fn golden_extractor() -> Extractor {
    let mut stores = Stores::default();
    stores.triples = Some(
        TripleCountStore::parse("kg_id\tsubject_count\tobject_count\nQ1\t5\t2\nQ2\t1\t4\n").unwrap(),
    );
    stores.pageviews = Some(PopularityStore::parse("kg_id\tviews\nQ1\t10\nQ2\t1000\n").unwrap());
    stores.frequency = Some(
        FrequencyStore::parse(
            "term\tcount\n__TOTAL__\t10000\ndid\t500\nmarie\t40\ncurie\t8\nvisit\t300\nparis\t90\n",
        )
        .unwrap(),
    );
    stores.knowledgability = Some(KnowledgabilityStore::parse("kg_id\tscore\nQ1\t80\nQ2\t50\n").unwrap());
    // Sorted class names; only `count` and `yesno` get mass.
    let mut qnames: Vec<&str> = QTYPE_LABELS.to_vec();
    qnames.sort();
    let qbias: Vec<f64> = qnames
        .iter()
        .map(|c| if *c == "count" || *c == "yesno" { 0.0 } else { f64::NEG_INFINITY })
        .collect();
    Extractor {
        schema: FeatureSchema::default(),
        stores,
        gazetteer: Some(Gazetteer::parse("alias\tkg_id\nmarie curie\tQ1\nparis\tQ2\ncurie\tQ3\n", None).unwrap()),
        sidecar: None,
        models: Models {
            qtype: Some(hand_model(&qnames, &qbias)),
            complexity: Some(hand_model(&["multi", "single"], &[0.0, 0.0])),
        },
    }
}

fn golden_record() -> QuestionRecord {
    QuestionRecord {
        id: "g1".into(),
        question: "Did Marie Curie visit Paris?".into(),
        gold_answers: vec!["yes".into()],
        answer_without_retrieval: "no".into(),
        answer_with_retrieval: "yes".into(),
        contexts: vec!["Marie Curie visited Paris in 1891".into(), "Paris".into()],
        dataset_tag: "fixture".into(),
        feature_overrides: None,
    }
}

#[test]
fn golden_vector() {
    let l = |x: f64| x.ln_1p();
    // Linked: "Marie Curie" -> Q1 (5 subj, 2 obj, 10 views, score 80) and
    // "Paris" -> Q2 (1, 4, 1000, 50). The nested alias "curie" loses.
    let rel1 = 2.0 * 3.0 / (5.0 + 6.0);
    let rel2 = 2.0 * 1.0 / (5.0 + 1.0);
    let expected = [
        l(1.0), l(5.0), l(3.0), // graph subject
        l(2.0), l(4.0), l(3.0), // graph object
        l(10.0), l(1000.0), l(505.0), // popularity
        l(8.0), l(90.0), l(49.0), // entity frequency, "marie curie" = min(40, 8)
        l(8.0), // rarest unigram
        0.65, // knowledgability mean
        0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, // qtype
        0.5, // complexity
        rel2, rel1, (rel1 + rel2) / 2.0, 7.0 / 512.0, // context
    ];
    let fv = golden_extractor().extract(&golden_record()).unwrap();
    assert_eq!(fv.values.len(), 28);
    for (i, (got, want)) in fv.values.iter().zip(expected).enumerate() {
        assert_eq!(*got, want, "feature {i} `{}`", fv.schema[i].name);
    }
}

#[test]
fn full_override_identity_needs_nothing() {
    let schema = FeatureSchema::default();
    let mut o = BTreeMap::new();
    for (i, n) in schema.names().iter().enumerate() {
        let v = if n.starts_with("qtype_") {
            if n == "qtype_generic" { 1.0 } else { 0.0 }
        } else {
            (i as f64) / 100.0
        };
        o.insert(n.clone(), v);
    }
    let mut r = golden_record();
    r.feature_overrides = Some(o.clone());
    let fv = Extractor::new(schema).extract(&r).unwrap();
    for (d, v) in fv.schema.iter().zip(&fv.values) {
        assert_eq!(*v, o[&d.name]);
    }
}

#[test]
fn partial_override_and_errors() {
    let ex = golden_extractor();
    let mut r = golden_record();
    r.feature_overrides = Some(BTreeMap::from([("pop_max".to_string(), 2.5)]));
    let fv = ex.extract(&r).unwrap();
    assert_eq!(fv.get("pop_max"), Some(2.5));
    assert_eq!(fv.get("pop_min"), Some(10f64.ln_1p()));

    r.feature_overrides = Some(BTreeMap::from([("pop_maximum".to_string(), 2.5)]));
    let err = ex.extract(&r).unwrap_err();
    assert!(matches!(err, Error::Question { ref source, .. } if matches!(**source, Error::SchemaMismatch(_))));

    let mut bare = golden_extractor();
    bare.models.qtype = None;
    let err = bare.extract(&golden_record()).unwrap_err();
    assert!(matches!(err, Error::Question { ref source, .. } if matches!(**source, Error::ModelMissing(_))));

    let mut no_store = golden_extractor();
    no_store.stores.pageviews = None;
    let err = no_store.extract(&golden_record()).unwrap_err();
    assert!(matches!(err, Error::Question { ref source, .. } if matches!(**source, Error::StoreMissing(_))));
}

#[test]
fn uncertainty_is_override_only() {
    let ex = Extractor {
        schema: FeatureSchema::preset("external_ue").unwrap(),
        ..golden_extractor()
    };
    assert!(ex.extract(&golden_record()).is_err());
    let mut r = golden_record();
    r.feature_overrides = Some(
        extgate_core::features::UNCERTAINTY_FEATURES
            .iter()
            .map(|n| (n.to_string(), 0.25))
            .collect(),
    );
    let fv = ex.extract(&r).unwrap();
    assert_eq!(fv.values.len(), 33);
    assert_eq!(fv.group(FeatureGroup::Uncertainty).len(), 5);
}

#[test]
fn unlinkable_question_zero_fills_entity_groups() {
    let ex = golden_extractor();
    let mut r = golden_record();
    r.question = "What is the meaning of life?".into();
    let fv = ex.extract(&r).unwrap();
    for g in [FeatureGroup::Graph, FeatureGroup::Popularity, FeatureGroup::Knowledgability] {
        assert!(fv.group(g).iter().all(|(_, v)| *v == 0.0), "{g}");
    }
    assert_eq!(fv.get("freq_entity_max"), Some(0.0));
}

#[test]
fn bundled_models_fill_the_simplex() {
    let ex = Extractor {
        models: Models::bundled(),
        ..golden_extractor()
    };
    let fv = ex.extract(&golden_record()).unwrap();
    let q: f64 = fv.group(FeatureGroup::Qtype).iter().map(|p| p.1).sum();
    assert!((q - 1.0).abs() < 1e-6);
}

#[test]
fn batch_extraction_keeps_order() {
    let ex = golden_extractor();
    let records: Vec<QuestionRecord> = (0..50)
        .map(|i| {
            let mut r = golden_record();
            r.id = format!("q{i}");
            if i % 3 == 0 {
                r.question = format!("Is Paris bigger than {i}?");
            }
            r
        })
        .collect();
    let all = ex.extract_all(&records).unwrap();
    for (r, fv) in records.iter().zip(&all) {
        assert_eq!(fv, &ex.extract(r).unwrap());
    }
}

fn mentions_strategy() -> impl Strategy<Value = Vec<EntityMention>> {
    proptest::collection::vec((0usize..6, "[a-c]{1,3}( [a-c]{1,3})?"), 0..6).prop_map(|v| {
        v.into_iter()
            .map(|(k, s)| EntityMention {
                surface: s,
                kg_id: format!("Q{k}"),
                char_span: None,
            })
            .collect()
    })
}

fn stores_fixture() -> (TripleCountStore, PopularityStore, FrequencyStore, KnowledgabilityStore) {
    (
        TripleCountStore::parse(
            "kg_id\tsubject_count\tobject_count\nQ0\t0\t3\nQ1\t7\t1\nQ2\t2\t2\nQ3\t100\t0\n",
        )
        .unwrap(),
        PopularityStore::parse("kg_id\tviews\nQ0\t5\nQ1\t0\nQ2\t123456\nQ4\t9\n").unwrap(),
        FrequencyStore::parse("term\tcount\n__TOTAL__\t1000\na\t10\nb\t3\naa\t7\nbcb\t1\n").unwrap(),
        KnowledgabilityStore::parse("kg_id\tscore\nQ0\t10\nQ2\t95\nQ3\t0\nQ5\t60\n").unwrap(),
    )
}

proptest! {
    #[test]
    fn entity_groups_are_permutation_invariant(m in mentions_strategy(), seed in any::<u64>()) {
        let (t, p, f, k) = stores_fixture();
        let mut shuffled = m.clone();
        let n = shuffled.len();
        if n > 1 {
            shuffled.rotate_left((seed % n as u64) as usize);
            shuffled.swap(0, n - 1);
        }
        let aggs = [Agg::Min, Agg::Max, Agg::Mean];
        prop_assert_eq!(graph_features(&m, &t), graph_features(&shuffled, &t));
        prop_assert_eq!(popularity_features(&m, &p), popularity_features(&shuffled, &p));
        prop_assert_eq!(frequency_features(&m, "a b", &f, 1), frequency_features(&shuffled, "a b", &f, 1));
        let ka = knowledgability_features(&m, &k, &aggs);
        prop_assert_eq!(&ka, &knowledgability_features(&shuffled, &k, &aggs));

        let g = graph_features(&m, &t);
        let pop = popularity_features(&m, &p);
        let fr = frequency_features(&m, "a b", &f, 1);
        for tri in [&g[0..3], &g[3..6], &pop[..], &fr[0..3], &ka[..]] {
            prop_assert!(tri[0] <= tri[2] && tri[2] <= tri[1], "{:?}", tri);
            prop_assert!(tri.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn aggregate_orders(v in proptest::collection::vec(-1e6f64..1e6, 0..20)) {
        let a = aggregate(&v);
        prop_assert!(a.min <= a.mean && a.mean <= a.max);
    }

    #[test]
    fn extraction_is_pure(q in "[A-Za-z ]{1,40}") {
        let ex = golden_extractor();
        let mut r = golden_record();
        r.question = q;
        let a = ex.extract(&r).unwrap();
        prop_assert_eq!(&a, &ex.extract(&r).unwrap());
        a.validate().unwrap();
    }
}
