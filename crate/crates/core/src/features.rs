//! The external feature groups and their assembly into a `FeatureVector`.
//!
//! Count-derived features are `log1p` of the aggregate, and entities absent
//! from a store are skipped. With no usable entity every aggregate is 0.
//! Per-record overrides replace computed values, and a group whose features
//! are all overridden is not computed at all, so it needs no store or model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::{Gazetteer, Sidecar};
use crate::record::{EntityMention, FeatureDef, FeatureGroup, FeatureVector, QuestionRecord};
use crate::stores::{FrequencyStore, KnowledgabilityStore, PopularityStore, Stores, TripleCountStore};
use crate::text;
use crate::textclf::{self, TextClassifier};

pub const QTYPE_LABELS: [&str; 9] = [
    "ordinal",
    "count",
    "generic",
    "superlative",
    "difference",
    "intersection",
    "multihop",
    "comparative",
    "yesno",
];

/// Class of the complexity model whose probability is the feature.
pub const MULTIHOP_CLASS: &str = "multi";

pub const UNCERTAINTY_FEATURES: [&str; 5] = [
    "ue_mean_token_entropy",
    "ue_max_token_entropy",
    "ue_sar",
    "ue_eigval_laplacian",
    "ue_lex_similarity",
];

pub const KNOWLEDGABILITY_PROMPT: &str = "Answer the following question based on your internal knowledge with one or few words. If you are sure the answer is accurate and correct, please say '100'. If you are not confident with the answer, please range your knowledgability from 0 to 100, say just number. For example, '40'. Question: {question}. Answer:";

pub fn knowledgability_prompt(question: &str) -> String {
    KNOWLEDGABILITY_PROMPT.replace("{question}", question)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agg {
    Min,
    Max,
    Mean,
}

impl Agg {
    pub fn as_str(&self) -> &'static str {
        match self {
            Agg::Min => "min",
            Agg::Max => "max",
            Agg::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Aggregates {
    pub fn get(&self, a: Agg) -> f64 {
        match a {
            Agg::Min => self.min,
            Agg::Max => self.max,
            Agg::Mean => self.mean,
        }
    }

    fn log1p(self) -> [f64; 3] {
        [self.min.ln_1p(), self.max.ln_1p(), self.mean.ln_1p()]
    }
}

/// Min, max and mean; the empty list gives all zeros.
pub fn aggregate(values: &[f64]) -> Aggregates {
    if values.is_empty() {
        return Aggregates {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        };
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    // Summation rounding must not push the mean outside [min, max].
    Aggregates {
        min,
        max,
        mean: mean.clamp(min, max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaOptions {
    /// `external`, `external_no_freq_pop`, `external_ue`, or one group name.
    pub preset: String,
    pub include_context_length: bool,
    pub knowledgability_aggregates: Vec<Agg>,
    /// Order of the n-grams in the rarest n-gram feature.
    pub ngram: usize,
    /// Divisor for the total context length in tokens.
    pub context_norm: f64,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            preset: "external".into(),
            include_context_length: true,
            knowledgability_aggregates: vec![Agg::Mean],
            ngram: 1,
            context_norm: 512.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub defs: Vec<FeatureDef>,
    pub options: SchemaOptions,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::new(SchemaOptions::default()).expect("default options are valid")
    }
}

fn preset_groups(preset: &str) -> Option<Vec<FeatureGroup>> {
    let external = &FeatureGroup::ALL[..7];
    Some(match preset {
        "external" => external.to_vec(),
        "external_no_freq_pop" => external
            .iter()
            .copied()
            .filter(|g| !matches!(g, FeatureGroup::Frequency | FeatureGroup::Popularity))
            .collect(),
        "external_ue" => FeatureGroup::ALL.to_vec(),
        other => vec![FeatureGroup::parse(other)?],
    })
}

fn group_names(group: FeatureGroup, o: &SchemaOptions) -> Vec<String> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match group {
        FeatureGroup::Graph => s(&[
            "graph_subj_min",
            "graph_subj_max",
            "graph_subj_mean",
            "graph_obj_min",
            "graph_obj_max",
            "graph_obj_mean",
        ]),
        FeatureGroup::Popularity => s(&["pop_min", "pop_max", "pop_mean"]),
        FeatureGroup::Frequency => s(&[
            "freq_entity_min",
            "freq_entity_max",
            "freq_entity_mean",
            "freq_rarest_ngram",
        ]),
        FeatureGroup::Knowledgability => o
            .knowledgability_aggregates
            .iter()
            .map(|a| format!("know_{}", a.as_str()))
            .collect(),
        FeatureGroup::Qtype => QTYPE_LABELS.iter().map(|l| format!("qtype_{l}")).collect(),
        FeatureGroup::Complexity => s(&["complexity_multihop"]),
        FeatureGroup::Context => {
            let mut v = s(&["ctx_rel_min", "ctx_rel_max", "ctx_rel_mean"]);
            if o.include_context_length {
                v.push("ctx_length".into());
            }
            v
        }
        FeatureGroup::Uncertainty => s(&UNCERTAINTY_FEATURES),
    }
}

/// Every name any schema can contain, used to reject misspelt overrides.
fn is_known_feature(name: &str) -> bool {
    let all = SchemaOptions {
        knowledgability_aggregates: vec![Agg::Min, Agg::Max, Agg::Mean],
        ..SchemaOptions::default()
    };
    FeatureGroup::ALL
        .iter()
        .any(|g| group_names(*g, &all).iter().any(|n| n == name))
}

impl FeatureSchema {
    pub fn new(mut options: SchemaOptions) -> Result<Self> {
        let groups = preset_groups(&options.preset)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown preset `{}`", options.preset)))?;
        options.knowledgability_aggregates.sort();
        options.knowledgability_aggregates.dedup();
        if options.knowledgability_aggregates.is_empty() {
            return Err(Error::SchemaMismatch("knowledgability_aggregates is empty".into()));
        }
        if options.ngram == 0 {
            return Err(Error::SchemaMismatch("ngram must be at least 1".into()));
        }
        if !(options.context_norm.is_finite() && options.context_norm > 0.0) {
            return Err(Error::SchemaMismatch("context_norm must be positive".into()));
        }
        let defs = groups
            .into_iter()
            .flat_map(|g| group_names(g, &options).into_iter().map(move |name| FeatureDef { name, group: g }))
            .collect();
        Ok(Self { defs, options })
    }

    pub fn preset(preset: &str) -> Result<Self> {
        Self::new(SchemaOptions {
            preset: preset.into(),
            ..SchemaOptions::default()
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.defs.iter().map(|d| d.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn groups(&self) -> Vec<FeatureGroup> {
        let mut g: Vec<FeatureGroup> = self.defs.iter().map(|d| d.group).collect();
        g.dedup();
        g
    }
}

pub fn graph_features(mentions: &[EntityMention], store: &TripleCountStore) -> [f64; 6] {
    let (subj, obj): (Vec<f64>, Vec<f64>) = mentions
        .iter()
        .filter_map(|m| store.lookup(&m.kg_id))
        .map(|(s, o)| (s as f64, o as f64))
        .unzip();
    let [a, b, c] = aggregate(&subj).log1p();
    let [d, e, f] = aggregate(&obj).log1p();
    [a, b, c, d, e, f]
}

pub fn popularity_features(mentions: &[EntityMention], store: &PopularityStore) -> [f64; 3] {
    let views: Vec<f64> = mentions
        .iter()
        .filter_map(|m| store.lookup(&m.kg_id))
        .map(|v| v as f64)
        .collect();
    aggregate(&views).log1p()
}

/// Entity surface frequencies (minimum over a surface's tokens, mentions
/// without a surface skipped) and the rarest question n-gram. Tokens and
/// n-grams missing from the store count 0.
pub fn frequency_features(
    mentions: &[EntityMention],
    question: &str,
    store: &FrequencyStore,
    ngram: usize,
) -> [f64; 4] {
    let freq = |t: &str| store.lookup_normalized(t).unwrap_or(0) as f64;
    let entity: Vec<f64> = mentions
        .iter()
        .filter_map(|m| {
            let toks = text::words(&m.surface);
            toks.iter().map(|t| freq(t)).reduce(f64::min)
        })
        .collect();
    let [a, b, c] = aggregate(&entity).log1p();
    let words = text::words(question);
    let rarest = words
        .windows(ngram)
        .map(|w| freq(&w.join(" ")))
        .reduce(f64::min)
        .unwrap_or(0.0);
    [a, b, c, rarest.ln_1p()]
}

pub fn knowledgability_features(
    mentions: &[EntityMention],
    store: &KnowledgabilityStore,
    aggregates: &[Agg],
) -> Vec<f64> {
    let scores: Vec<f64> = mentions.iter().filter_map(|m| store.lookup(&m.kg_id)).collect();
    let a = aggregate(&scores);
    aggregates.iter().map(|x| a.get(*x) / 100.0).collect()
}

/// Probabilities over `QTYPE_LABELS`, in that order.
pub fn question_type_features(question: &str, model: &TextClassifier) -> Result<[f64; 9]> {
    let p = model.predict_proba(question);
    let mut out = [0.0; 9];
    for (o, label) in out.iter_mut().zip(QTYPE_LABELS) {
        let i = model
            .class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::ModelMissing(format!("question-type model has no class `{label}`")))?;
        *o = p[i];
    }
    if model.class_names.len() != QTYPE_LABELS.len() {
        return Err(Error::ModelMissing(format!(
            "question-type model has {} classes, expected 9",
            model.class_names.len()
        )));
    }
    Ok(out)
}

pub fn complexity_feature(question: &str, model: &TextClassifier) -> Result<f64> {
    model
        .proba_of(question, MULTIHOP_CLASS)
        .ok_or_else(|| Error::ModelMissing(format!("complexity model has no class `{MULTIHOP_CLASS}`")))
}

/// Relevance aggregates, then total context tokens over `norm`.
pub fn context_relevance_features(question: &str, contexts: &[String], norm: f64) -> [f64; 4] {
    let scores: Vec<f64> = contexts.iter().map(|c| textclf::relevance_score(question, c)).collect();
    let a = aggregate(&scores);
    let tokens: usize = contexts.iter().map(|c| text::words(c).len()).sum();
    [a.min, a.max, a.mean, tokens as f64 / norm]
}

#[derive(Debug, Clone, Default)]
pub struct Models {
    pub qtype: Option<TextClassifier>,
    pub complexity: Option<TextClassifier>,
}

impl Models {
    /// Both classifiers trained on the bundled corpora.
    pub fn bundled() -> Self {
        Self {
            qtype: Some(textclf::bundled_qtype()),
            complexity: Some(textclf::bundled_complexity()),
        }
    }
}

/// Everything feature extraction reads. Entities come from the sidecar when
/// it lists the question, else from the gazetteer.
#[derive(Debug, Clone, Default)]
pub struct Extractor {
    pub schema: FeatureSchema,
    pub stores: Stores,
    pub gazetteer: Option<Gazetteer>,
    pub sidecar: Option<Sidecar>,
    pub models: Models,
}

fn missing_store(what: &str) -> Error {
    Error::StoreMissing(format!("{what} store is required"))
}

impl Extractor {
    pub fn new(schema: FeatureSchema) -> Self {
        Self {
            schema,
            ..Self::default()
        }
    }

    pub fn mentions(&self, id: &str, question: &str) -> Result<Vec<EntityMention>> {
        if let Some(m) = self.sidecar.as_ref().and_then(|s| s.get(id)) {
            return Ok(m.to_vec());
        }
        match (&self.gazetteer, &self.sidecar) {
            (Some(g), _) => Ok(g.link(question)),
            (None, Some(_)) => Ok(Vec::new()),
            (None, None) => Err(Error::StoreMissing("a gazetteer or sidecar is required".into())),
        }
    }

    fn compute_group(
        &self,
        group: FeatureGroup,
        id: &str,
        question: &str,
        contexts: &[String],
        mentions: &mut Option<Vec<EntityMention>>,
    ) -> Result<Vec<f64>> {
        let o = &self.schema.options;
        let entity_group = matches!(
            group,
            FeatureGroup::Graph | FeatureGroup::Popularity | FeatureGroup::Frequency | FeatureGroup::Knowledgability
        );
        if entity_group && mentions.is_none() {
            *mentions = Some(self.mentions(id, question)?);
        }
        let m = mentions.as_deref().unwrap_or(&[]);
        Ok(match group {
            FeatureGroup::Graph => {
                graph_features(m, self.stores.triples.as_ref().ok_or_else(|| missing_store("triples"))?).to_vec()
            }
            FeatureGroup::Popularity => {
                popularity_features(m, self.stores.pageviews.as_ref().ok_or_else(|| missing_store("pageviews"))?)
                    .to_vec()
            }
            FeatureGroup::Frequency => {
                let s = self.stores.frequency.as_ref().ok_or_else(|| missing_store("frequency"))?;
                frequency_features(m, question, s, o.ngram).to_vec()
            }
            FeatureGroup::Knowledgability => {
                let s = self
                    .stores
                    .knowledgability
                    .as_ref()
                    .ok_or_else(|| missing_store("knowledgability"))?;
                knowledgability_features(m, s, &o.knowledgability_aggregates)
            }
            FeatureGroup::Qtype => {
                let model = self
                    .models
                    .qtype
                    .as_ref()
                    .ok_or_else(|| Error::ModelMissing("no question-type model or overrides".into()))?;
                question_type_features(question, model)?.to_vec()
            }
            FeatureGroup::Complexity => {
                let model = self
                    .models
                    .complexity
                    .as_ref()
                    .ok_or_else(|| Error::ModelMissing("no complexity model or override".into()))?;
                vec![complexity_feature(question, model)?]
            }
            FeatureGroup::Context => {
                let c = context_relevance_features(question, contexts, o.context_norm);
                c[..if o.include_context_length { 4 } else { 3 }].to_vec()
            }
            FeatureGroup::Uncertainty => {
                return Err(Error::ModelMissing(
                    "uncertainty features are only available as overrides".into(),
                ))
            }
        })
    }

    /// Features for a bare question, as used by serving.
    pub fn extract_question(
        &self,
        id: &str,
        question: &str,
        contexts: &[String],
        overrides: Option<&BTreeMap<String, f64>>,
    ) -> Result<FeatureVector> {
        let empty = BTreeMap::new();
        let overrides = overrides.unwrap_or(&empty);
        if let Some(name) = overrides.keys().find(|n| !is_known_feature(n)) {
            return Err(Error::SchemaMismatch(format!("unknown feature `{name}` in overrides")));
        }
        let defs = &self.schema.defs;
        let mut values = Vec::with_capacity(defs.len());
        let mut mentions = None;
        let mut i = 0;
        while i < defs.len() {
            let group = defs[i].group;
            let end = i + defs[i..].iter().take_while(|d| d.group == group).count();
            let slice = &defs[i..end];
            if slice.iter().all(|d| overrides.contains_key(&d.name)) {
                values.extend(slice.iter().map(|d| overrides[&d.name]));
            } else {
                let computed = self.compute_group(group, id, question, contexts, &mut mentions)?;
                values.extend(
                    slice
                        .iter()
                        .zip(computed)
                        .map(|(d, v)| overrides.get(&d.name).copied().unwrap_or(v)),
                );
            }
            i = end;
        }
        let fv = FeatureVector {
            values,
            schema: defs.clone(),
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn extract(&self, record: &QuestionRecord) -> Result<FeatureVector> {
        self.extract_question(
            &record.id,
            &record.question,
            &record.contexts,
            record.feature_overrides.as_ref(),
        )
        .map_err(|e| e.in_question(&record.id))
    }

    /// Parallel over records; results keep dataset order and the first
    /// failing record in dataset order is reported.
    pub fn extract_all(&self, records: &[QuestionRecord]) -> Result<Vec<FeatureVector>> {
        let out: Vec<Result<FeatureVector>> = records.par_iter().map(|r| self.extract(r)).collect();
        out.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mention(id: &str, surface: &str) -> EntityMention {
        EntityMention {
            surface: surface.into(),
            kg_id: id.into(),
            char_span: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[5.0]), Aggregates { min: 5.0, max: 5.0, mean: 5.0 });
        assert_eq!(aggregate(&[2.0, 4.0, 9.0]), Aggregates { min: 2.0, max: 9.0, mean: 5.0 });
        assert_eq!(aggregate(&[]), Aggregates { min: 0.0, max: 0.0, mean: 0.0 });
    }

    #[test]
    fn default_schema_shape() {
        let s = FeatureSchema::default();
        assert_eq!(s.len(), 28);
        let count = |g| s.defs.iter().filter(|d| d.group == g).count();
        let expected = [6, 3, 4, 1, 9, 1, 4];
        for (g, n) in FeatureGroup::ALL[..7].iter().zip(expected) {
            assert_eq!(count(*g), n, "{g}");
        }
        assert_eq!(FeatureSchema::preset("external_no_freq_pop").unwrap().len(), 21);
        assert_eq!(FeatureSchema::preset("external_ue").unwrap().len(), 33);
        assert_eq!(FeatureSchema::preset("popularity").unwrap().len(), 3);
        assert!(FeatureSchema::preset("bogus").is_err());
    }

    #[test]
    fn graph_two_entities() {
        let s = TripleCountStore::parse("kg_id\tsubject_count\tobject_count\nQ1\t1\t0\nQ2\t3\t4\n").unwrap();
        let g = graph_features(&[mention("Q1", ""), mention("Q2", ""), mention("Q9", "")], &s);
        let l = |x: f64| x.ln_1p();
        assert_eq!(g, [l(1.0), l(3.0), l(2.0), l(0.0), l(4.0), l(2.0)]);
        assert_eq!(graph_features(&[], &s), [0.0; 6]);
    }

    #[test]
    fn frequency_rarest_unigram() {
        let s = FrequencyStore::parse("term\tcount\n__TOTAL__\t1000\nwho\t100\nis\t200\neinstein\t5\n").unwrap();
        assert_eq!(frequency_features(&[], "who is einstein", &s, 1)[3], 5f64.ln_1p());
        assert_eq!(frequency_features(&[], "who is bohr", &s, 1)[3], 0.0);
        let f = frequency_features(&[mention("Q", "Einstein")], "x", &s, 1);
        assert_eq!(&f[..3], &[5f64.ln_1p(); 3]);
    }

    #[test]
    fn knowledgability_scaling() {
        let s = KnowledgabilityStore::parse("kg_id\tscore\nA\t40\nB\t80\nC\t100\n").unwrap();
        assert_eq!(knowledgability_features(&[mention("C", "")], &s, &[Agg::Mean]), vec![1.0]);
        let two = [mention("A", ""), mention("B", "")];
        assert!((knowledgability_features(&two, &s, &[Agg::Mean])[0] - 0.6).abs() < 1e-15);
        assert_eq!(knowledgability_features(&[], &s, &[Agg::Mean]), vec![0.0]);
    }

    #[test]
    fn prompt_substitution() {
        let p = knowledgability_prompt("Who wrote Hamlet?");
        assert!(p.contains("Question: Who wrote Hamlet?. Answer:"));
        assert!(p.starts_with("Answer the following question based on your internal knowledge"));
        assert_eq!(p, knowledgability_prompt("Who wrote Hamlet?"));
        assert!(knowledgability_prompt("").ends_with("Question: . Answer:"));
    }

    #[test]
    fn context_examples() {
        assert_eq!(context_relevance_features("q", &[], 512.0), [0.0; 4]);
        let q = "who wrote hamlet";
        assert_eq!(context_relevance_features(q, &[q.to_string()], 512.0), [1.0, 1.0, 1.0, 3.0 / 512.0]);
        let c = ["a b".to_string(), "b c d".to_string()];
        let r = context_relevance_features("a b", &c, 512.0);
        assert_eq!((r[0], r[1]), (0.4, 1.0));
    }
}
