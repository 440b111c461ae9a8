//! Hashed bag-of-n-grams logistic regression for question type and
//! complexity, plus the lexical relevance scorer used for contexts.
//!
//! Texts are normalised, split into unigrams and bigrams, and hashed with
//! FNV-1a into a fixed number of buckets. The count vector is L2-normalised
//! and a bias term is added. Training is softmax regression with an L2
//! penalty on the non-bias weights.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub const DEFAULT_DIMENSION: usize = 1 << 16;
const FORMAT: &str = "extgate-textclf";

pub const QTYPE_TRAIN: &str = include_str!("../data/qtype_train.tsv");
pub const QTYPE_HELDOUT: &str = include_str!("../data/qtype_heldout.tsv");
pub const COMPLEXITY_TRAIN: &str = include_str!("../data/complexity_train.tsv");

/// Sparse feature vector: sorted, distinct bucket indices with values.
pub type Sparse = Vec<(u32, f64)>;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashed, L2-normalised unigram and bigram counts of `s`.
pub fn featurize(s: &str, dimension: usize) -> Sparse {
    let words = text::words(s);
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut add = |key: String| {
        let idx = (fnv1a(&key) % dimension as u64) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
    };
    for w in &words {
        add(format!("u:{w}"));
    }
    for pair in words.windows(2) {
        add(format!("b:{} {}", pair[0], pair[1]));
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    counts.into_iter().map(|(i, v)| (i, v / norm)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// 0 means full-batch gradient descent.
    pub batch_size: usize,
    pub dimension: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            epochs: 60,
            learning_rate: 0.5,
            l2: 1e-4,
            batch_size: 16,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

/// The training objective over the buckets that occur in the corpus.
/// Buckets never seen in training keep weight exactly zero under the L2
/// penalty, so restricting to active columns changes nothing.
///
/// Parameters are laid out class-major: each class has one weight per
/// active column followed by its bias.
pub struct Problem {
    /// Active bucket indices, sorted.
    pub columns: Vec<u32>,
    /// Examples over compact column indices, with their class index.
    pub examples: Vec<(Vec<(usize, f64)>, usize)>,
    pub n_classes: usize,
    pub l2: f64,
}

impl Problem {
    pub fn new(features: &[(Sparse, usize)], n_classes: usize, l2: f64) -> Self {
        let mut columns: Vec<u32> = features.iter().flat_map(|(f, _)| f.iter().map(|p| p.0)).collect();
        columns.sort_unstable();
        columns.dedup();
        let pos: HashMap<u32, usize> = columns.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let examples = features
            .iter()
            .map(|(f, y)| (f.iter().map(|&(i, v)| (pos[&i], v)).collect(), *y))
            .collect();
        Self {
            columns,
            examples,
            n_classes,
            l2,
        }
    }

    fn stride(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn n_params(&self) -> usize {
        self.n_classes * self.stride()
    }

    fn scores(&self, params: &[f64], x: &[(usize, f64)]) -> Vec<f64> {
        let s = self.stride();
        (0..self.n_classes)
            .map(|c| {
                let w = &params[c * s..(c + 1) * s];
                w[s - 1] + x.iter().map(|&(j, v)| w[j] * v).sum::<f64>()
            })
            .collect()
    }

    /// Mean cross-entropy over `batch` plus `l2 / 2 * ||W||^2`, and its
    /// gradient.
    pub fn loss_and_gradient(&self, params: &[f64], batch: &[usize]) -> (f64, Vec<f64>) {
        let s = self.stride();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let inv = 1.0 / batch.len().max(1) as f64;
        for &b in batch {
            let (x, y) = &self.examples[b];
            let p = softmax(&self.scores(params, x));
            loss -= p[*y].max(f64::MIN_POSITIVE).ln() * inv;
            for (c, pc) in p.iter().enumerate() {
                let d = (pc - if c == *y { 1.0 } else { 0.0 }) * inv;
                let g = &mut grad[c * s..(c + 1) * s];
                for &(j, v) in x {
                    g[j] += d * v;
                }
                g[s - 1] += d;
            }
        }
        for c in 0..self.n_classes {
            for j in 0..s - 1 {
                let w = params[c * s + j];
                loss += 0.5 * self.l2 * w * w;
                grad[c * s + j] += self.l2 * w;
            }
        }
        (loss, grad)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub dimension: usize,
    pub class_names: Vec<String>,
    pub bias: Vec<f64>,
    /// Bucket index to per-class weights; only nonzero buckets are stored.
    pub weights: BTreeMap<u32, Vec<f64>>,
    pub config: TrainConfig,
    /// Full-data objective after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    format: String,
    dimension: usize,
    class_names: Vec<String>,
    config: TrainConfig,
    bias: Vec<f64>,
    weights: Vec<(u32, Vec<f64>)>,
}

impl TextClassifier {
    pub fn train(corpus: &[(String, String)], config: TrainConfig) -> Result<Self> {
        let mut class_names: Vec<String> = corpus.iter().map(|(_, l)| l.clone()).collect();
        class_names.sort();
        class_names.dedup();
        if class_names.len() < 2 {
            return Err(Error::DegenerateCorpus(format!(
                "need at least 2 distinct labels, found {}",
                class_names.len()
            )));
        }
        if config.dimension == 0 {
            return Err(Error::DegenerateCorpus("dimension must be positive".into()));
        }
        let features: Vec<(Sparse, usize)> = corpus
            .iter()
            .map(|(t, l)| {
                let y = class_names.binary_search(l).expect("label collected above");
                (featurize(t, config.dimension), y)
            })
            .collect();
        let problem = Problem::new(&features, class_names.len(), config.l2);
        let mut params = vec![0.0; problem.n_params()];
        let n = problem.examples.len();
        let all: Vec<usize> = (0..n).collect();
        let batch = if config.batch_size == 0 { n } else { config.batch_size.min(n) };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order = all.clone();
        let mut loss_history = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            if batch < n {
                order.shuffle(&mut rng);
            }
            for chunk in order.chunks(batch) {
                let (_, g) = problem.loss_and_gradient(&params, chunk);
                for (p, gi) in params.iter_mut().zip(&g) {
                    *p -= config.learning_rate * gi;
                }
            }
            loss_history.push(problem.loss_and_gradient(&params, &all).0);
        }

        let s = problem.columns.len() + 1;
        let k = class_names.len();
        let bias = (0..k).map(|c| params[c * s + s - 1]).collect();
        let mut weights = BTreeMap::new();
        for (j, &col) in problem.columns.iter().enumerate() {
            let w: Vec<f64> = (0..k).map(|c| params[c * s + j]).collect();
            if w.iter().any(|v| *v != 0.0) {
                weights.insert(col, w);
            }
        }
        Ok(Self {
            dimension: config.dimension,
            class_names,
            bias,
            weights,
            config,
            loss_history,
        })
    }

    /// Softmax over classes, in `class_names` order.
    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, v) in featurize(text, self.dimension) {
            if let Some(w) = self.weights.get(&i) {
                for (zc, wc) in z.iter_mut().zip(w) {
                    *zc += wc * v;
                }
            }
        }
        softmax(&z)
    }

    pub fn predict(&self, text: &str) -> &str {
        let p = self.predict_proba(text);
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        &self.class_names[best]
    }

    /// Probability of one class by name.
    pub fn proba_of(&self, text: &str, class: &str) -> Option<f64> {
        let i = self.class_names.iter().position(|c| c == class)?;
        Some(self.predict_proba(text)[i])
    }

    pub fn accuracy(&self, corpus: &[(String, String)]) -> f64 {
        let hits = corpus.iter().filter(|(t, l)| self.predict(t) == l).count();
        hits as f64 / corpus.len().max(1) as f64
    }

    pub fn to_json(&self) -> String {
        let a = Artifact {
            format: FORMAT.into(),
            dimension: self.dimension,
            class_names: self.class_names.clone(),
            config: self.config,
            bias: self.bias.clone(),
            weights: self.weights.iter().map(|(k, v)| (*k, v.clone())).collect(),
        };
        serde_json::to_string(&a).expect("artifact serialises")
    }

    /// Loads an artifact; with `expected_dimension`, a different bucket
    /// count is rejected.
    pub fn from_json(s: &str, expected_dimension: Option<usize>) -> Result<Self> {
        let a: Artifact = serde_json::from_str(s).map_err(|e| Error::Artifact(e.to_string()))?;
        if a.format != FORMAT {
            return Err(Error::Artifact(format!("unknown format `{}`", a.format)));
        }
        if let Some(d) = expected_dimension {
            if d != a.dimension {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: a.dimension,
                });
            }
        }
        let k = a.class_names.len();
        if a.bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: a.bias.len(),
            });
        }
        let mut weights = BTreeMap::new();
        for (i, w) in a.weights {
            if i as usize >= a.dimension {
                return Err(Error::Artifact(format!("bucket {i} outside dimension {}", a.dimension)));
            }
            if w.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: w.len(),
                });
            }
            weights.insert(i, w);
        }
        Ok(Self {
            dimension: a.dimension,
            class_names: a.class_names,
            bias: a.bias,
            weights,
            config: a.config,
            loss_history: Vec::new(),
        })
    }
}

/// Reads a `label<TAB>text` corpus with a header row.
pub fn parse_corpus(content: &str) -> Result<Vec<(String, String)>> {
    let t = crate::stores::parse_table(content, &["label", "text"], false)?;
    Ok(t.rows
        .into_iter()
        .map(|(_, f)| (f[1].to_string(), f[0].trim().to_string()))
        .collect())
}

/// Question-type model trained on the bundled corpus.
pub fn bundled_qtype() -> TextClassifier {
    let corpus = parse_corpus(QTYPE_TRAIN).expect("bundled corpus parses");
    TextClassifier::train(&corpus, TrainConfig::default()).expect("bundled corpus has 9 labels")
}

/// Complexity model (labels `multi`, `single`) trained on the bundled corpus.
pub fn bundled_complexity() -> TextClassifier {
    let corpus = parse_corpus(COMPLEXITY_TRAIN).expect("bundled corpus parses");
    TextClassifier::train(&corpus, TrainConfig::default()).expect("bundled corpus has 2 labels")
}

/// Multiset token F1 between two texts; 0 when either side is empty.
pub fn relevance_score(question: &str, context: &str) -> f64 {
    let q = text::words(question);
    let c = text::words(context);
    if q.is_empty() || c.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &q {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut common = 0;
    for w in &c {
        if let Some(n) = counts.get_mut(w.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (q.len() + c.len()) as f64
}
