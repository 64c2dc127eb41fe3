use serde::{Deserialize, Serialize};

use crate::numeric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2_lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { l2_lambda: 1e-4, max_iter: 1000, tol: 1e-8 }
    }
}

pub(super) struct LogRegFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Regularized mean negative log-likelihood and its gradient at `theta`
/// (`theta = [w_1..w_p, b]`; the intercept is not penalized):
///
/// `f = (1/n) Σ [log(1 + e^{z_i}) − y_i z_i] + (λ/2)‖w‖²`, `z_i = w·x_i + b`.
pub fn logistic_objective(x: &[Vec<f64>], y: &[bool], theta: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let p = theta.len() - 1;
    let n = x.len() as f64;
    let mut f = 0.0;
    let mut g = vec![0.0; p + 1];
    for (xi, &yi) in x.iter().zip(y) {
        let z = super::linear(&theta[..p], theta[p], xi);
        let t = if yi { 1.0 } else { 0.0 };
        f += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for j in 0..p {
            g[j] += r * xi[j];
        }
        g[p] += r;
    }
    f /= n;
    g.iter_mut().for_each(|v| *v /= n);
    for j in 0..p {
        f += 0.5 * lambda * theta[j] * theta[j];
        g[j] += lambda * theta[j];
    }
    (f, g)
}

fn hessian(x: &[Vec<f64>], theta: &[f64], lambda: f64) -> Vec<f64> {
    let p = theta.len() - 1;
    let d = p + 1;
    let n = x.len() as f64;
    let mut h = vec![0.0; d * d];
    let mut xa = vec![0.0; d];
    for xi in x {
        let z = super::linear(&theta[..p], theta[p], xi);
        let s = sigmoid(z);
        let w = s * (1.0 - s) / n;
        xa[..p].copy_from_slice(xi);
        xa[p] = 1.0;
        for a in 0..d {
            let wa = w * xa[a];
            for b in a..d {
                h[a * d + b] += wa * xa[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            h[a * d + b] = h[b * d + a];
        }
    }
    for j in 0..p {
        h[j * d + j] += lambda;
    }
    // keeps the intercept direction solvable when all points are saturated
    h[p * d + p] += 1e-12;
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Damped Newton iterations with Armijo backtracking until ‖∇f‖₂ < tol.
pub(super) fn fit(x: &[Vec<f64>], y: &[bool], params: &LogRegParams) -> LogRegFit {
    let p = x.first().map_or(0, Vec::len);
    let mut theta = vec![0.0; p + 1];
    let (mut f, mut g) = logistic_objective(x, y, &theta, params.l2_lambda);
    let mut iterations = 0;
    while norm(&g) >= params.tol && iterations < params.max_iter {
        iterations += 1;
        let h = hessian(x, &theta, params.l2_lambda);
        let step = numeric::solve(&h, &g).unwrap_or_else(|| g.clone());
        let slope: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
        let dir: Vec<f64> = if slope > 0.0 { step } else { g.clone() };
        let slope = dir.iter().zip(&g).map(|(s, gi)| s * gi).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a - t * d).collect();
            let (fc, gc) = logistic_objective(x, y, &cand, params.l2_lambda);
            if fc <= f - 1e-4 * t * slope || (fc <= f && norm(&gc) < norm(&g)) {
                theta = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            break;
        }
    }
    let gradient_norm = norm(&g);
    LogRegFit {
        bias: theta[p],
        weights: theta[..p].to_vec(),
        converged: gradient_norm < params.tol,
        iterations,
        gradient_norm,
    }
}
