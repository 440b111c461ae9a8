//! Exact k-nearest-neighbour classification.
//!
//! Three search backends return the same neighbour set: a linear scan, a
//! k-d tree and a ball tree. Neighbours are ordered by `(distance, row)`, so
//! ties at the k-th distance always resolve to the lower row index.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::hyper::{self, Hyperparams};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }

    /// Combines per-dimension gaps into a distance.
    fn from_gaps(&self, gaps: impl Iterator<Item = f64>) -> f64 {
        match self {
            Metric::Euclidean => gaps.map(|g| g * g).sum::<f64>().sqrt(),
            Metric::Manhattan => gaps.sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Brute,
    KdTree,
    BallTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbors: usize,
    pub metric: Metric,
    pub algorithm: Algorithm,
    pub weights: Weighting,
}

impl KnnParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(p, &["n_neighbors", "metric", "algorithm", "weights"])?;
        Ok(Self {
            n_neighbors: hyper::get_usize(p, "n_neighbors", 5)?,
            metric: match hyper::get_choice(p, "metric", &["euclidean", "manhattan"], "euclidean")? {
                "manhattan" => Metric::Manhattan,
                _ => Metric::Euclidean,
            },
            // "auto" resolves to the linear scan
            algorithm: match hyper::get_choice(
                p,
                "algorithm",
                &["auto", "brute", "kd_tree", "ball_tree"],
                "auto",
            )? {
                "kd_tree" => Algorithm::KdTree,
                "ball_tree" => Algorithm::BallTree,
                _ => Algorithm::Brute,
            },
            weights: match hyper::get_choice(p, "weights", &["uniform", "distance"], "uniform")? {
                "distance" => Weighting::Distance,
                _ => Weighting::Uniform,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TreeNode {
    start: usize,
    end: usize,
    /// k-d: bounding box `lo`/`hi`; ball: `lo` is the centroid.
    lo: Vec<f64>,
    hi: Vec<f64>,
    radius: f64,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpatialIndex {
    perm: Vec<usize>,
    nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub params: KnnParams,
    n_features: usize,
    /// Row-major training points.
    points: Vec<f64>,
    labels: Vec<u8>,
    index: Option<SpatialIndex>,
}

struct Heap {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl Heap {
    fn offer(&mut self, n: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(n);
        } else if n < *self.heap.peek().unwrap() {
            self.heap.pop();
            self.heap.push(n);
        }
    }

    fn prunes(&self, bound: f64) -> bool {
        self.heap.len() == self.k && bound > self.heap.peek().unwrap().distance
    }
}

impl Knn {
    pub fn fit(params: &KnnParams, data: &TabularDataset) -> Result<Self> {
        if data.n_rows() == 0 {
            return Err(TabularError::DegenerateData("kNN needs at least one row".into()));
        }
        let mut knn = Self {
            params: params.clone(),
            n_features: data.n_features(),
            points: data.x.iter().copied().collect(),
            labels: data.y.clone(),
            index: None,
        };
        knn.index = match params.algorithm {
            Algorithm::Brute => None,
            Algorithm::KdTree | Algorithm::BallTree => Some(knn.build_index()),
        };
        Ok(knn)
    }

    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n_features..(i + 1) * self.n_features]
    }

    fn build_index(&self) -> SpatialIndex {
        let mut idx = SpatialIndex {
            perm: (0..self.n_rows()).collect(),
            nodes: Vec::new(),
        };
        self.build_node(&mut idx, 0, self.n_rows());
        idx
    }

    fn build_node(&self, idx: &mut SpatialIndex, start: usize, end: usize) -> usize {
        let d = self.n_features;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &idx.perm[start..end] {
            for (j, &v) in self.point(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let (lo, hi, radius) = match self.params.algorithm {
            Algorithm::BallTree => {
                let m = (end - start) as f64;
                let mut centroid = vec![0.0; d];
                for &i in &idx.perm[start..end] {
                    centroid.iter_mut().zip(self.point(i)).for_each(|(c, v)| *c += v);
                }
                centroid.iter_mut().for_each(|c| *c /= m);
                let radius = idx.perm[start..end]
                    .iter()
                    .map(|&i| self.params.metric.distance(&centroid, self.point(i)))
                    .fold(0.0, f64::max);
                (centroid, hi.iter().zip(&lo).map(|(h, l)| h - l).collect(), radius)
            }
            _ => (lo, hi, 0.0),
        };
        let id = idx.nodes.len();
        idx.nodes.push(TreeNode {
            start,
            end,
            lo,
            hi,
            radius,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        // split on the widest dimension at the median
        let spread = |j: usize| match self.params.algorithm {
            Algorithm::BallTree => idx.nodes[id].hi[j],
            _ => idx.nodes[id].hi[j] - idx.nodes[id].lo[j],
        };
        let dim = (0..d).fold(0, |best, j| if spread(j) > spread(best) { j } else { best });
        if spread(dim) <= 0.0 {
            return id;
        }
        let pts = &self.points;
        idx.perm[start..end].sort_by(|&a, &b| {
            pts[a * d + dim].total_cmp(&pts[b * d + dim]).then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let left = self.build_node(idx, start, mid);
        let right = self.build_node(idx, mid, end);
        idx.nodes[id].children = Some((left, right));
        id
    }

    fn lower_bound(&self, node: &TreeNode, q: &[f64]) -> f64 {
        match self.params.algorithm {
            Algorithm::BallTree => {
                let dc = self.params.metric.distance(q, &node.lo);
                // slack absorbs rounding in the triangle inequality
                (dc - node.radius - 1e-9 * (dc + node.radius)).max(0.0)
            }
            _ => self.params.metric.from_gaps(
                q.iter()
                    .zip(node.lo.iter().zip(&node.hi))
                    .map(|(v, (l, h))| (l - v).max(v - h).max(0.0)),
            ),
        }
    }

    fn search(&self, idx: &SpatialIndex, node: usize, q: &[f64], heap: &mut Heap) {
        let n = &idx.nodes[node];
        match n.children {
            None => {
                for &i in &idx.perm[n.start..n.end] {
                    heap.offer(Neighbor {
                        distance: self.params.metric.distance(q, self.point(i)),
                        index: i,
                    });
                }
            }
            Some((l, r)) => {
                let bl = self.lower_bound(&idx.nodes[l], q);
                let br = self.lower_bound(&idx.nodes[r], q);
                let order = if br < bl { [(r, br), (l, bl)] } else { [(l, bl), (r, br)] };
                for (child, bound) in order {
                    if !heap.prunes(bound) {
                        self.search(idx, child, q, heap);
                    }
                }
            }
        }
    }

    /// The k nearest training rows, nearest first.
    pub fn neighbors(&self, q: &[f64]) -> Vec<Neighbor> {
        assert_eq!(q.len(), self.n_features);
        let k = self.params.n_neighbors.min(self.n_rows());
        let mut heap = Heap {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        };
        match &self.index {
            None => {
                for i in 0..self.n_rows() {
                    heap.offer(Neighbor {
                        distance: self.params.metric.distance(q, self.point(i)),
                        index: i,
                    });
                }
            }
            Some(idx) => self.search(idx, 0, q, &mut heap),
        }
        heap.heap.into_sorted_vec()
    }

    pub fn predict_proba(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        let label = |n: &Neighbor| f64::from(self.labels[n.index]);
        match self.params.weights {
            Weighting::Uniform => nb.iter().map(label).sum::<f64>() / nb.len() as f64,
            Weighting::Distance => {
                // exact matches take all the weight
                let exact: Vec<&Neighbor> = nb.iter().filter(|n| n.distance == 0.0).collect();
                if !exact.is_empty() {
                    return exact.iter().map(|n| label(n)).sum::<f64>() / exact.len() as f64;
                }
                let (num, den) = nb.iter().fold((0.0, 0.0), |(a, b), n| {
                    let w = 1.0 / n.distance;
                    (a + w * label(n), b + w)
                });
                num / den
            }
        }
    }
}
