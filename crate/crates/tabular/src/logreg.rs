//! L2-regularised logistic regression.
//!
//! The objective follows scikit-learn's parameterisation,
//! `C * sum_i s_i * logloss_i + ||w||^2 / 2`, where `s_i` is the class weight
//! of row i. `lbfgs` leaves the intercept unpenalised; `liblinear` treats the
//! intercept as an ordinary weight (as liblinear does) and is solved with a
//! damped Newton method.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Result, TabularError};
use crate::gboost::{sigmoid, softplus};
use crate::hyper::{self, ClassWeight, Hyperparams};

const GRAD_TOL: f64 = 1e-4;
const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Solver {
    Lbfgs,
    Liblinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub c: f64,
    pub solver: Solver,
    pub class_weight: ClassWeight,
    pub max_iter: usize,
}

impl LogRegParams {
    pub fn from_hyper(p: &Hyperparams) -> Result<Self> {
        hyper::reject_unknown(p, &["C", "solver", "class_weight", "max_iter"])?;
        Ok(Self {
            c: hyper::get_positive_f64(p, "C", 1.0)?,
            solver: match hyper::get_choice(p, "solver", &["lbfgs", "liblinear"], "lbfgs")? {
                "liblinear" => Solver::Liblinear,
                _ => Solver::Lbfgs,
            },
            class_weight: ClassWeight::from_hyper(p)?,
            max_iter: hyper::get_usize(p, "max_iter", 100)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub n_iter: usize,
}

/// Objective pieces shared by both solvers. `theta = [w..., b]`.
pub struct Problem<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [u8],
    /// Per-row weight, already multiplied by C.
    pub s: Vec<f64>,
    pub penalize_intercept: bool,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn z(&self, theta: &[f64], row: ArrayView1<'_, f64>) -> f64 {
        let d = self.x.ncols();
        row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d]
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let d = self.x.ncols();
        let mut r = theta[..d].iter().map(|v| v * v).sum::<f64>();
        if self.penalize_intercept {
            r += theta[d] * theta[d];
        }
        0.5 * r
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let data: f64 = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let z = self.z(theta, row);
                self.s[i] * (softplus(z) - f64::from(self.y[i]) * z)
            })
            .sum();
        data + self.penalty(theta)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.x.ncols();
        let mut g = vec![0.0; d + 1];
        let mut f = 0.0;
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let z = self.z(theta, row);
            let yi = f64::from(self.y[i]);
            f += self.s[i] * (softplus(z) - yi * z);
            let r = self.s[i] * (sigmoid(z) - yi);
            for (gj, xj) in g[..d].iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        for j in 0..d {
            g[j] += theta[j];
        }
        if self.penalize_intercept {
            g[d] += theta[d];
        }
        (f + self.penalty(theta), g)
    }

    fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.x.ncols();
        let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut xt = vec![0.0; d + 1];
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let p = sigmoid(self.z(theta, row));
            let c = self.s[i] * p * (1.0 - p);
            xt[..d].iter_mut().zip(row).for_each(|(a, b)| *a = *b);
            xt[d] = 1.0;
            for a in 0..=d {
                let ca = c * xt[a];
                for b in 0..=a {
                    h[(a, b)] += ca * xt[b];
                }
            }
        }
        for a in 0..=d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for j in 0..d {
            h[(j, j)] += 1.0;
        }
        if self.penalize_intercept {
            h[(d, d)] += 1.0;
        }
        h
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking Armijo search along `dir`; returns the accepted point.
fn line_search(
    prob: &Problem<'_>,
    theta: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope = dot(g0, dir);
    if slope >= 0.0 {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..60 {
        let cand: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t + step * d).collect();
        let (f, g) = prob.value_and_gradient(&cand);
        if f <= f0 + 1e-4 * step * slope {
            return Some((cand, f, g));
        }
        step *= 0.5;
    }
    None
}

fn lbfgs(prob: &Problem<'_>, max_iter: usize) -> (Vec<f64>, usize) {
    let mut theta = vec![0.0; prob.dim()];
    let (mut f, mut g) = prob.value_and_gradient(&theta);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iter = 0;
    while iter < max_iter && max_abs(&g) > GRAD_TOL {
        iter += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &q);
            q.iter_mut().zip(&y_hist[k]).for_each(|(a, b)| *a -= alpha[k] * b);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for k in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &q);
            q.iter_mut().zip(&s_hist[k]).for_each(|(a, b)| *a += (alpha[k] - beta) * b);
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let accepted = line_search(prob, &theta, f, &g, &dir).or_else(|| {
            // fall back to steepest descent with a fresh memory
            s_hist.clear();
            y_hist.clear();
            let sd: Vec<f64> = g.iter().map(|v| -v / max_abs(&g).max(1.0)).collect();
            line_search(prob, &theta, f, &g, &sd)
        });
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let converged = (f - f_next).abs() <= 1e-15 * f.abs().max(f_next.abs()).max(1.0);
        if dot(&s, &y) > 1e-12 {
            if s_hist.len() == LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        theta = next;
        f = f_next;
        g = g_next;
        if converged {
            break;
        }
    }
    (theta, iter)
}

fn newton(prob: &Problem<'_>, max_iter: usize) -> (Vec<f64>, usize) {
    let mut theta = vec![0.0; prob.dim()];
    let (mut f, mut g) = prob.value_and_gradient(&theta);
    let mut iter = 0;
    while iter < max_iter && max_abs(&g) > GRAD_TOL {
        iter += 1;
        let h = prob.hessian(&theta);
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
        let dir: Vec<f64> = match h.cholesky() {
            Some(ch) => ch.solve(&rhs).iter().copied().collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        let Some((next, f_next, g_next)) = line_search(prob, &theta, f, &g, &dir) else {
            break;
        };
        theta = next;
        f = f_next;
        g = g_next;
    }
    (theta, iter)
}

impl LogisticRegression {
    pub fn fit(params: &LogRegParams, data: &TabularDataset) -> Result<Self> {
        if !data.has_both_classes() {
            return Err(TabularError::DegenerateData(
                "logistic regression needs both classes".into(),
            ));
        }
        let cw = params.class_weight.weights(&data.y);
        let prob = Problem {
            x: &data.x,
            y: &data.y,
            s: data.y.iter().map(|&l| params.c * cw[l as usize]).collect(),
            penalize_intercept: params.solver == Solver::Liblinear,
        };
        let (theta, n_iter) = match params.solver {
            Solver::Lbfgs => lbfgs(&prob, params.max_iter),
            Solver::Liblinear => newton(&prob, params.max_iter),
        };
        let d = data.n_features();
        Ok(Self {
            coef: theta[..d].to_vec(),
            intercept: theta[d],
            n_iter,
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.coef, x) + self.intercept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn params(solver: Solver, c: f64) -> LogRegParams {
        LogRegParams {
            c,
            solver,
            class_weight: ClassWeight::Uniform,
            max_iter: 10_000,
        }
    }

    #[test]
    fn two_point_separable() {
        let data = TabularDataset::new(array![[-1.0], [1.0]], vec![0, 1], vec!["a".into()]).unwrap();
        for solver in [Solver::Lbfgs, Solver::Liblinear] {
            let m = LogisticRegression::fit(&params(solver, 1.0), &data).unwrap();
            assert!(m.predict_proba(&[1.0]) > 0.5);
            assert!(m.predict_proba(&[-1.0]) < 0.5);
        }
    }

    #[test]
    fn solvers_reach_stationary_points() {
        let mut r = crate::rng::chacha(5);
        let x = Array2::from_shape_fn((120, 4), |_| r.gen_range(-2.0..2.0));
        let y: Vec<u8> = (0..120)
            .map(|i| u8::from(x[[i, 0]] - x[[i, 2]] + r.gen_range(-1.0..1.0) > 0.0))
            .collect();
        let data = TabularDataset::new(x, y, (0..4).map(|i| format!("f{i}")).collect()).unwrap();
        for solver in [Solver::Lbfgs, Solver::Liblinear] {
            let p = params(solver, 0.1);
            let m = LogisticRegression::fit(&p, &data).unwrap();
            let prob = Problem {
                x: &data.x,
                y: &data.y,
                s: vec![0.1; 120],
                penalize_intercept: solver == Solver::Liblinear,
            };
            let mut theta = m.coef.clone();
            theta.push(m.intercept);
            let (_, g) = prob.value_and_gradient(&theta);
            assert!(max_abs(&g) <= GRAD_TOL, "{solver:?}: {g:?}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = crate::rng::chacha(11);
        let x = Array2::from_shape_fn((10, 3), |_| r.gen_range(-2.0..2.0));
        let y: Vec<u8> = (0..10).map(|i| (i % 3 == 0) as u8).collect();
        for penalize_intercept in [false, true] {
            let prob = Problem {
                x: &x,
                y: &y,
                s: (0..10).map(|i| 0.5 + i as f64 / 10.0).collect(),
                penalize_intercept,
            };
            let theta = vec![0.3, -0.7, 1.1, 0.2];
            let (_, g) = prob.value_and_gradient(&theta);
            for j in 0..theta.len() {
                let h = 1e-5;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                let fd = (prob.value(&tp) - prob.value(&tm)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-12);
                assert!(rel < 1e-4, "coordinate {j}: fd {fd} vs analytic {}", g[j]);
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let data = TabularDataset::new(array![[0.0], [1.0]], vec![1, 1], vec!["a".into()]).unwrap();
        assert!(matches!(
            LogisticRegression::fit(&params(Solver::Lbfgs, 1.0), &data),
            Err(TabularError::DegenerateData(_))
        ));
    }
}
