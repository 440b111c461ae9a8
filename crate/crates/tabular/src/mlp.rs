//! Feed-forward network with a logistic output unit.
//!
//! Training follows scikit-learn's `MLPClassifier`: Glorot-uniform
//! initialisation, shuffled mini-batches of `min(200, n)` rows, adam or
//! Nesterov-momentum sgd, and the loss
//! `mean(logloss) + alpha / (2 * batch) * sum(W^2)`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::gboost::{sigmoid, softplus};
use crate::hyper::{self, HyperValue, Hyperparams};
use crate::rng;

const LEARNING_RATE_INIT: f64 = 0.001;
const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
const TOL: f64 = 1e-4;
const N_ITER_NO_CHANGE: usize = 10;
const VALIDATION_FRACTION: f64 = 0.1;
const MAX_BATCH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the activation output.
    fn backprop(&self, a: &Array2<f64>, delta: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(delta).and(a).for_each(|d, &v| {
                if v <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(delta).and(a).for_each(|d, &v| *d *= 1.0 - v * v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpSolver {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    Constant,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub solver: MlpSolver,
    pub alpha: f64,
    pub learning_rate: Schedule,
    pub early_stopping: bool,
    pub max_iter: usize,
}

impl MlpParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(
            p,
            &[
                "hidden_layer_sizes",
                "activation",
                "solver",
                "alpha",
                "learning_rate",
                "early_stopping",
                "max_iter",
            ],
        )?;
        let hidden_layer_sizes = match p.get("hidden_layer_sizes") {
            None => vec![100],
            Some(HyperValue::Int(n)) if *n >= 1 => vec![*n as usize],
            Some(HyperValue::List(items)) => items
                .iter()
                .map(|v| match v {
                    HyperValue::Int(n) if *n >= 1 => Ok(*n as usize),
                    other => Err(TabularError::invalid(
                        "hidden_layer_sizes",
                        format!("layer size must be a positive integer, got {other}"),
                    )),
                })
                .collect::<Result<_>>()?,
            Some(v) => {
                return Err(TabularError::invalid(
                    "hidden_layer_sizes",
                    format!("expected a tuple of sizes, got {v}"),
                ))
            }
        };
        let alpha = hyper::get_f64(p, "alpha", 1e-4)?;
        if alpha < 0.0 {
            return Err(TabularError::invalid("alpha", "must be >= 0"));
        }
        Ok(Self {
            hidden_layer_sizes,
            activation: match hyper::get_choice(p, "activation", &["relu", "tanh"], "relu")? {
                "tanh" => Activation::Tanh,
                _ => Activation::Relu,
            },
            solver: match hyper::get_choice(p, "solver", &["adam", "sgd"], "adam")? {
                "sgd" => MlpSolver::Sgd,
                _ => MlpSolver::Adam,
            },
            alpha,
            learning_rate: match hyper::get_choice(
                p,
                "learning_rate",
                &["constant", "adaptive"],
                "constant",
            )? {
                "adaptive" => Schedule::Adaptive,
                _ => Schedule::Constant,
            },
            early_stopping: hyper::get_bool(p, "early_stopping", false)?,
            max_iter: hyper::get_usize(p, "max_iter", 200)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// fan_in x fan_out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub layers: Vec<Layer>,
    pub n_iter: usize,
}

struct Optimizer {
    solver: MlpSolver,
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    fn new(solver: MlpSolver, n: usize) -> Self {
        Self {
            solver,
            lr: LEARNING_RATE_INIT,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.solver {
            MlpSolver::Adam => {
                self.t += 1;
                let lr_t = self.lr * (1.0 - BETA2.powi(self.t)).sqrt() / (1.0 - BETA1.powi(self.t));
                for i in 0..theta.len() {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    theta[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + EPSILON);
                }
            }
            MlpSolver::Sgd => {
                // Nesterov momentum; `m` holds the velocity
                for i in 0..theta.len() {
                    self.m[i] = MOMENTUM * self.m[i] - self.lr * grad[i];
                    theta[i] += MOMENTUM * self.m[i] - self.lr * grad[i];
                }
            }
        }
    }
}

impl Mlp {
    fn init(d: usize, params: &MlpParams, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![d];
        sizes.extend(&params.hidden_layer_sizes);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), || rng.gen_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(w[1], || rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Self {
            activation: params.activation,
            layers,
            n_iter: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Weights then biases of each layer, row-major.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = theta[k];
                k += 1;
            }
        }
    }

    /// Activations of every layer; the last entry holds output logits.
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let mut z = input.dot(&l.w) + &l.b;
            if i < last {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Regularised loss and its gradient in [`Mlp::params_flat`] order.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, y: &[u8], alpha: f64) -> (f64, Vec<f64>) {
        let n = x.nrows() as f64;
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let mut loss = 0.0;
        let mut delta = Array2::zeros((x.nrows(), 1));
        for i in 0..x.nrows() {
            let z = logits[[i, 0]];
            let yi = f64::from(y[i]);
            loss += softplus(z) - yi * z;
            delta[[i, 0]] = (sigmoid(z) - yi) / n;
        }
        let sq: f64 = self.layers.iter().map(|l| l.w.iter().map(|v| v * v).sum::<f64>()).sum();
        loss = loss / n + alpha / (2.0 * n) * sq;

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let gw = input.t().dot(&delta) + &(&self.layers[i].w * (alpha / n));
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut next = delta.dot(&self.layers[i].w.t());
                self.activation.backprop(&acts[i - 1], &mut next);
                delta = next;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss, flat)
    }

    fn accuracy(&self, x: &Array2<f64>, y: &[u8]) -> f64 {
        let logits = self.forward(x).pop().unwrap();
        let hits = y
            .iter()
            .enumerate()
            .filter(|(i, &l)| u8::from(logits[[*i, 0]] > 0.0) == l)
            .count();
        hits as f64 / y.len() as f64
    }

    pub fn fit(params: &MlpParams, data: &TabularDataset, seed: u64) -> Result<Self> {
        if !data.has_both_classes() {
            return Err(TabularError::DegenerateData("mlp needs both classes".into()));
        }
        let mut rng = rng::chacha(seed);
        let mut net = Self::init(data.n_features(), params, &mut rng);

        let mut rows: Vec<usize> = (0..data.n_rows()).collect();
        let mut val_rows = Vec::new();
        if params.early_stopping {
            let n_val = ((data.n_rows() as f64) * VALIDATION_FRACTION).ceil() as usize;
            if n_val == 0 || n_val >= data.n_rows() {
                return Err(TabularError::DegenerateData(
                    "too few rows for an early-stopping split".into(),
                ));
            }
            let mut split_rng = rng::chacha(rng::derive(seed, 1));
            rows.shuffle(&mut split_rng);
            val_rows = rows.split_off(data.n_rows() - n_val);
            rows.sort_unstable();
            val_rows.sort_unstable();
        }
        let x_val = data.x.select(Axis(0), &val_rows);
        let y_val: Vec<u8> = val_rows.iter().map(|&i| data.y[i]).collect();

        let batch = rows.len().min(MAX_BATCH);
        let mut theta = net.params_flat();
        let mut opt = Optimizer::new(params.solver, theta.len());
        let mut best_loss = f64::INFINITY;
        let mut best_score = f64::NEG_INFINITY;
        let mut best_theta = theta.clone();
        let mut no_improvement = 0;

        for epoch in 0..params.max_iter {
            rows.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in rows.chunks(batch) {
                let xb = data.x.select(Axis(0), chunk);
                let yb: Vec<u8> = chunk.iter().map(|&i| data.y[i]).collect();
                let (loss, grad) = net.loss_and_gradient(&xb, &yb, params.alpha);
                epoch_loss += loss * chunk.len() as f64;
                opt.step(&mut theta, &grad);
                net.set_params_flat(&theta);
            }
            epoch_loss /= rows.len() as f64;
            net.n_iter = epoch + 1;
            if !epoch_loss.is_finite() {
                break;
            }

            if params.early_stopping {
                let score = net.accuracy(&x_val, &y_val);
                if score < best_score + TOL {
                    no_improvement += 1;
                } else {
                    no_improvement = 0;
                }
                if score > best_score {
                    best_score = score;
                    best_theta.clone_from(&theta);
                }
            } else {
                if epoch_loss > best_loss - TOL {
                    no_improvement += 1;
                } else {
                    no_improvement = 0;
                }
                best_loss = best_loss.min(epoch_loss);
            }

            if no_improvement > N_ITER_NO_CHANGE {
                if params.solver == MlpSolver::Sgd && params.learning_rate == Schedule::Adaptive {
                    if opt.lr <= 1e-6 {
                        break;
                    }
                    opt.lr /= 5.0;
                    no_improvement = 0;
                } else {
                    break;
                }
            }
        }
        if params.early_stopping {
            net.set_params_flat(&best_theta);
        }
        Ok(net)
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut a = Array1::from(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w) + &l.b;
            if i < last {
                match self.activation {
                    Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                    Activation::Tanh => z.mapv_inplace(f64::tanh),
                }
            }
            a = z;
        }
        sigmoid(a[0])
    }
}
