//! CART trees on presorted columns.
//!
//! Every column is sorted once per training matrix. A node owns the same
//! index range in each per-feature order; splitting a node stably partitions
//! that range in every order, so no node ever re-sorts. The builder is shared
//! by the decision-tree, random-forest and gradient-boosting families through
//! the [`Target`] trait.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::hyper::{self, HyperValue, Hyperparams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Fraction(f64),
    Count(usize),
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub(crate) fn from_hyper(p: &Hyperparams) -> Result<Self> {
        match p.get("max_features") {
            None | Some(HyperValue::None) => Ok(MaxFeatures::All),
            Some(HyperValue::Float(f)) if *f > 0.0 && *f <= 1.0 => Ok(MaxFeatures::Fraction(*f)),
            Some(HyperValue::Int(i)) if *i >= 1 => Ok(MaxFeatures::Count(*i as usize)),
            Some(HyperValue::Str(s)) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
            Some(HyperValue::Str(s)) if s == "log2" => Ok(MaxFeatures::Log2),
            Some(v) => Err(TabularError::invalid(
                "max_features",
                format!("expected a fraction in (0,1], a count, sqrt, log2 or None, got {v}"),
            )),
        }
    }

    /// Number of features drawn per split out of `d`.
    pub fn resolve(&self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Fraction(f) => (f * d as f64).floor() as usize,
            MaxFeatures::Count(c) => *c,
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub(crate) fn from_hyper(p: &Hyperparams) -> Result<Self> {
        Ok(match hyper::get_choice(p, "criterion", &["gini", "entropy"], "gini")? {
            "entropy" => Criterion::Entropy,
            _ => Criterion::Gini,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Splitter {
    Best,
    Random,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub splitter: Splitter,
}

/// Column-major copy of a training matrix plus per-feature sort orders.
#[derive(Debug, Clone)]
pub struct ColumnMatrix {
    pub(crate) n_rows: usize,
    pub(crate) cols: Vec<Vec<f64>>,
    pub(crate) sorted: Vec<Vec<u32>>,
}

impl ColumnMatrix {
    pub fn new(x: &Array2<f64>) -> Self {
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let sorted = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            n_rows: x.nrows(),
            cols,
            sorted,
        }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A fitted tree; leaves hold a probability (classification) or an additive
/// score (boosting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// What a tree is fit to: per-node sufficient statistics and a split score.
pub(crate) trait Target {
    type Stats: Copy + Default;
    fn add(&self, s: &mut Self::Stats, row: usize);
    fn sub(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    /// Larger is better; comparable across splits of the same node.
    fn split_score(&self, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf_value(&self, s: &Self::Stats) -> f64;
}

/// Binary classification with per-row weights.
pub(crate) struct ClassTarget<'a> {
    pub y: &'a [u8],
    pub w: &'a [f64],
    pub criterion: Criterion,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassStats {
    w: [f64; 2],
}

fn impurity(c: Criterion, w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p = [w[0] / total, w[1] / total];
    match c {
        Criterion::Gini => 1.0 - p[0] * p[0] - p[1] * p[1],
        Criterion::Entropy => p
            .iter()
            .filter(|&&q| q > 0.0)
            .map(|&q| -q * q.log2())
            .sum(),
    }
}

impl Target for ClassTarget<'_> {
    type Stats = ClassStats;

    fn add(&self, s: &mut ClassStats, row: usize) {
        s.w[self.y[row] as usize] += self.w[row];
    }

    fn sub(&self, a: &ClassStats, b: &ClassStats) -> ClassStats {
        ClassStats {
            w: [a.w[0] - b.w[0], a.w[1] - b.w[1]],
        }
    }

    fn is_pure(&self, s: &ClassStats) -> bool {
        s.w[0] <= 0.0 || s.w[1] <= 0.0
    }

    fn split_score(&self, l: &ClassStats, r: &ClassStats) -> f64 {
        let (wl, wr) = (l.w[0] + l.w[1], r.w[0] + r.w[1]);
        -(wl * impurity(self.criterion, l.w) + wr * impurity(self.criterion, r.w))
    }

    /// Laplace-smoothed positive fraction.
    fn leaf_value(&self, s: &ClassStats) -> f64 {
        (s.w[1] + 1.0) / (s.w[0] + s.w[1] + 2.0)
    }
}

/// Least-squares regression on unit-weight rows (boosting residuals).
pub(crate) struct RegTarget<'a> {
    pub r: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RegStats {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Target for RegTarget<'_> {
    type Stats = RegStats;

    fn add(&self, s: &mut RegStats, row: usize) {
        let v = self.r[row];
        s.n += 1.0;
        s.sum += v;
        s.sum_sq += v * v;
    }

    fn sub(&self, a: &RegStats, b: &RegStats) -> RegStats {
        RegStats {
            n: a.n - b.n,
            sum: a.sum - b.sum,
            sum_sq: a.sum_sq - b.sum_sq,
        }
    }

    fn is_pure(&self, s: &RegStats) -> bool {
        if s.n <= 1.0 {
            return true;
        }
        let mean = s.sum / s.n;
        (s.sum_sq / s.n - mean * mean) <= f64::EPSILON * (1.0 + mean * mean)
    }

    /// Equivalent to maximising the squared-error reduction.
    fn split_score(&self, l: &RegStats, r: &RegStats) -> f64 {
        l.sum * l.sum / l.n + r.sum * r.sum / r.n
    }

    fn leaf_value(&self, s: &RegStats) -> f64 {
        if s.n > 0.0 {
            s.sum / s.n
        } else {
            0.0
        }
    }
}

/// A finished leaf: node id and its range in the row order.
pub(crate) struct LeafRange {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

pub(crate) struct Grown {
    pub tree: TreeModel,
    pub leaves: Vec<LeafRange>,
    /// Row order whose leaf ranges are given by `leaves`.
    pub rows: Vec<u32>,
}

struct Builder<'a, T: Target> {
    cm: &'a ColumnMatrix,
    target: &'a T,
    params: GrowParams,
    rng: &'a mut ChaCha8Rng,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    tmp: Vec<u32>,
    nodes: Vec<Node>,
    leaves: Vec<LeafRange>,
    features: Vec<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows a tree over the rows with `active[row] == true`.
pub(crate) fn grow<T: Target>(
    cm: &ColumnMatrix,
    target: &T,
    active: Option<&[bool]>,
    params: GrowParams,
    rng: &mut ChaCha8Rng,
) -> Grown {
    let order: Vec<Vec<u32>> = match active {
        None => cm.sorted.clone(),
        Some(a) => cm
            .sorted
            .iter()
            .map(|o| o.iter().copied().filter(|&r| a[r as usize]).collect())
            .collect(),
    };
    let m = order.first().map_or(0, Vec::len);
    let mut b = Builder {
        cm,
        target,
        params,
        rng,
        order,
        goes_left: vec![false; cm.n_rows],
        tmp: vec![0; m],
        nodes: Vec::new(),
        leaves: Vec::new(),
        features: (0..cm.n_features()).collect(),
    };
    if m == 0 || cm.n_features() == 0 {
        // degenerate: a single leaf over whatever rows exist
        let mut s = T::Stats::default();
        for r in 0..cm.n_rows {
            if active.map_or(true, |a| a[r]) {
                target.add(&mut s, r);
            }
        }
        let rows: Vec<u32> = (0..cm.n_rows as u32)
            .filter(|&r| active.map_or(true, |a| a[r as usize]))
            .collect();
        return Grown {
            tree: TreeModel {
                nodes: vec![Node::Leaf {
                    value: target.leaf_value(&s),
                }],
            },
            leaves: vec![LeafRange {
                node: 0,
                start: 0,
                end: rows.len(),
            }],
            rows,
        };
    }
    b.build(0, m, 0);
    let rows = b.order.swap_remove(0);
    Grown {
        tree: TreeModel { nodes: b.nodes },
        leaves: b.leaves,
        rows,
    }
}

impl<T: Target> Builder<'_, T> {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let mut stats = T::Stats::default();
        for &r in &self.order[0][start..end] {
            self.target.add(&mut stats, r as usize);
        }
        let id = self.nodes.len();
        let at_depth_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if end - start < 2 || at_depth_limit || self.target.is_pure(&stats) {
            None
        } else {
            self.find_split(start, end, &stats)
        };
        let Some(split) = split else {
            self.nodes.push(Node::Leaf {
                value: self.target.leaf_value(&stats),
            });
            self.leaves.push(LeafRange {
                node: id,
                start,
                end,
            });
            return id;
        };
        self.nodes.push(Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let n_left = self.partition(start, end, split.feature, split.threshold);
        let left = self.build(start, start + n_left, depth + 1);
        let right = self.build(start + n_left, end, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left as u32;
            *r = right as u32;
        }
        id
    }

    fn find_split(&mut self, start: usize, end: usize, total: &T::Stats) -> Option<Split> {
        let d = self.cm.n_features();
        let k = self.params.max_features.resolve(d);
        let sample = k < d || self.params.splitter == Splitter::Random;
        let mut best: Option<Split> = None;
        let mut evaluated = 0usize;
        for i in 0..d {
            if evaluated >= k {
                break;
            }
            let f = if sample {
                // partial Fisher-Yates: draw features lazily
                let j = self.rng.gen_range(i..d);
                self.features.swap(i, j);
                self.features[i]
            } else {
                i
            };
            let candidate = match self.params.splitter {
                Splitter::Best => self.best_threshold(f, start, end, total),
                Splitter::Random => self.random_threshold(f, start, end, total),
            };
            let Some(candidate) = candidate else {
                // constant within this node; does not count towards k
                continue;
            };
            evaluated += 1;
            if best.as_ref().map_or(true, |b| candidate.score > b.score) {
                best = Some(candidate);
            }
        }
        best
    }

    fn best_threshold(&self, f: usize, start: usize, end: usize, total: &T::Stats) -> Option<Split> {
        let col = &self.cm.cols[f];
        let ord = &self.order[f][start..end];
        let mut left = T::Stats::default();
        let mut best: Option<Split> = None;
        for w in 0..ord.len() - 1 {
            let r = ord[w] as usize;
            self.target.add(&mut left, r);
            let (a, b) = (col[r], col[ord[w + 1] as usize]);
            if a < b {
                let right = self.target.sub(total, &left);
                let score = self.target.split_score(&left, &right);
                if best.as_ref().map_or(true, |s| score > s.score) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b || !t.is_finite() {
                        t = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold: t,
                        score,
                    });
                }
            }
        }
        best
    }

    fn random_threshold(&mut self, f: usize, start: usize, end: usize, total: &T::Stats) -> Option<Split> {
        let col = &self.cm.cols[f];
        let lo = col[self.order[f][start] as usize];
        let hi = col[self.order[f][end - 1] as usize];
        if hi <= lo {
            return None;
        }
        let u: f64 = self.rng.gen();
        let mut t = lo + u * (hi - lo);
        if t >= hi {
            t = lo;
        }
        let mut left = T::Stats::default();
        for &r in &self.order[f][start..end] {
            if col[r as usize] > t {
                break;
            }
            self.target.add(&mut left, r as usize);
        }
        let right = self.target.sub(total, &left);
        Some(Split {
            feature: f,
            threshold: t,
            score: self.target.split_score(&left, &right),
        })
    }

    /// Stable partition of every order's range; returns the left size.
    fn partition(&mut self, start: usize, end: usize, f: usize, t: f64) -> usize {
        let col = &self.cm.cols[f];
        let mut n_left = 0;
        for &r in &self.order[0][start..end] {
            let l = col[r as usize] <= t;
            self.goes_left[r as usize] = l;
            n_left += usize::from(l);
        }
        for ord in self.order.iter_mut() {
            let slice = &mut ord[start..end];
            let (mut li, mut ri) = (0, n_left);
            for &r in slice.iter() {
                if self.goes_left[r as usize] {
                    self.tmp[li] = r;
                    li += 1;
                } else {
                    self.tmp[ri] = r;
                    ri += 1;
                }
            }
            slice.copy_from_slice(&self.tmp[..end - start]);
        }
        n_left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub splitter: Splitter,
}

impl DecisionTreeParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(p, &["max_depth", "max_features", "criterion", "splitter"])?;
        Ok(Self {
            max_depth: hyper::get_opt_usize(p, "max_depth")?,
            max_features: MaxFeatures::from_hyper(p)?,
            criterion: Criterion::from_hyper(p)?,
            splitter: match hyper::get_choice(p, "splitter", &["best", "random"], "best")? {
                "random" => Splitter::Random,
                _ => Splitter::Best,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tree: TreeModel,
}

impl DecisionTree {
    pub fn fit(params: &DecisionTreeParams, data: &TabularDataset, seed: u64) -> Result<Self> {
        let cm = ColumnMatrix::new(&data.x);
        Self::fit_columns(params, &cm, &data.y, seed)
    }

    pub(crate) fn fit_columns(
        params: &DecisionTreeParams,
        cm: &ColumnMatrix,
        y: &[u8],
        seed: u64,
    ) -> Result<Self> {
        if y.is_empty() {
            return Err(TabularError::DegenerateData("no rows".into()));
        }
        let w = vec![1.0; y.len()];
        let target = ClassTarget {
            y,
            w: &w,
            criterion: params.criterion,
        };
        let mut rng = rng::chacha(seed);
        let grown = grow(
            cm,
            &target,
            None,
            GrowParams {
                max_depth: params.max_depth,
                max_features: params.max_features,
                splitter: params.splitter,
            },
            &mut rng,
        );
        Ok(Self { tree: grown.tree })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.tree.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn params(depth: Option<usize>, mf: MaxFeatures, splitter: Splitter) -> DecisionTreeParams {
        DecisionTreeParams {
            max_depth: depth,
            max_features: mf,
            criterion: Criterion::Gini,
            splitter,
        }
    }

    #[test]
    fn resolve_max_features() {
        assert_eq!(MaxFeatures::Fraction(0.2).resolve(28), 5);
        assert_eq!(MaxFeatures::Fraction(0.4).resolve(28), 11);
        assert_eq!(MaxFeatures::Sqrt.resolve(28), 5);
        assert_eq!(MaxFeatures::Log2.resolve(28), 4);
        assert_eq!(MaxFeatures::All.resolve(28), 28);
        assert_eq!(MaxFeatures::Fraction(0.2).resolve(3), 1);
    }

    #[test]
    fn stump_threshold_is_midpoint() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let data = TabularDataset::new(x, vec![0, 0, 1, 1], vec!["a".into()]).unwrap();
        let t = DecisionTree::fit(&params(Some(1), MaxFeatures::All, Splitter::Best), &data, 0)
            .unwrap();
        match &t.tree.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.5),
            n => panic!("expected split, got {n:?}"),
        }
        // Laplace: (0+1)/(2+2) and (2+1)/(2+2)
        assert_eq!(t.predict_proba(&[0.0]), 0.25);
        assert_eq!(t.predict_proba(&[9.0]), 0.75);
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let data = TabularDataset::new(x, vec![0, 1, 1, 0], vec!["a".into(), "b".into()]).unwrap();
        let t = DecisionTree::fit(&params(None, MaxFeatures::All, Splitter::Best), &data, 0)
            .unwrap();
        for i in 0..4 {
            let p = t.predict_proba(data.row(i).as_slice().unwrap());
            assert_eq!(p >= 0.5, data.y[i] == 1);
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = array![[1.0], [2.0]];
        let data = TabularDataset::new(x, vec![1, 1], vec!["a".into()]).unwrap();
        let t = DecisionTree::fit(&params(None, MaxFeatures::All, Splitter::Best), &data, 0)
            .unwrap();
        assert_eq!(t.tree.nodes.len(), 1);
        assert_eq!(t.predict_proba(&[0.0]), 0.75);
    }

    #[test]
    fn depth_limit_respected() {
        let x = Array2::from_shape_fn((64, 2), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let y: Vec<u8> = (0..64).map(|i| ((i * 5) % 3 == 0) as u8).collect();
        let data = TabularDataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        for d in [1, 3, 5] {
            let t = DecisionTree::fit(&params(Some(d), MaxFeatures::All, Splitter::Best), &data, 1)
                .unwrap();
            assert!(t.tree.depth() <= d);
        }
    }

    fn consistent_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
        (1usize..5, 2usize..60).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(-3i32..4, d), n),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(|(rows, labels)| {
                    // one label per distinct row keeps the data consistent
                    let mut seen: Vec<(Vec<i32>, u8)> = Vec::new();
                    let y = rows
                        .iter()
                        .zip(&labels)
                        .map(|(r, &l)| match seen.iter().find(|(s, _)| s == r) {
                            Some((_, v)) => *v,
                            None => {
                                seen.push((r.clone(), l));
                                l
                            }
                        })
                        .collect();
                    let x = rows
                        .into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect();
                    (x, y)
                })
        })
    }

    proptest! {
        #[test]
        fn unlimited_depth_memorises((rows, y) in consistent_data(), seed in 0u64..50,
                                     random in any::<bool>(), frac in prop::sample::select(vec![0.2, 0.4, 1.0])) {
            let d = rows[0].len();
            let x = Array2::from_shape_vec((rows.len(), d), rows.concat()).unwrap();
            let names = (0..d).map(|i| format!("f{i}")).collect();
            let data = TabularDataset::new(x, y, names).unwrap();
            let mf = if frac == 1.0 { MaxFeatures::All } else { MaxFeatures::Fraction(frac) };
            let sp = if random { Splitter::Random } else { Splitter::Best };
            let t = DecisionTree::fit(&params(None, mf, sp), &data, seed).unwrap();
            for i in 0..data.n_rows() {
                let p = t.predict_proba(data.row(i).as_slice().unwrap());
                prop_assert_eq!(p >= 0.5, data.y[i] == 1);
            }
        }
    }
}
