//! Linear SVM trained by dual coordinate descent on the L2-regularized hinge
//! loss `½‖w‖² + C Σ max(0, 1 − y_i (w·x_i + b))`. The intercept is handled
//! by augmenting every row with a constant 1 feature, so it is regularized
//! together with the weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Cost of margin violations.
    pub c: f64,
    pub epochs: usize,
    /// Stop once the projected-gradient spread of an epoch falls below this.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, epochs: 200, tol: 1e-3 }
    }
}

pub(super) struct SvmFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub epochs: usize,
}

pub(super) fn fit(x: &[Vec<f64>], y: &[bool], params: &SvmParams, seed_value: u64) -> SvmFit {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let sign: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let qdiag: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; p + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_from_seed(seed_value);
    let c = params.c;
    let mut converged = false;
    let mut epochs = 0;
    for _ in 0..params.epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let xi = &x[i];
            let margin = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[p];
            let g = sign[i] * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qdiag[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * sign[i];
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += d * xj;
                }
                w[p] += d;
            }
        }
        if pg_max - pg_min < params.tol {
            converged = true;
            break;
        }
    }
    let bias = w[p];
    w.truncate(p);
    SvmFit { weights: w, bias, converged, epochs }
}
