use serde::{Deserialize, Serialize};

use super::{SurvivalError, SurvivalRecord};
use crate::numeric;

pub const MAX_ITER: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-9;
/// Cap on |β|·sd, applied when the likelihood keeps increasing (separation).
pub const SEPARATION_CAP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub covariate_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub log_partial_likelihood: f64,
    pub aic: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Coefficients hit the separation cap (monotone likelihood).
    pub separated: bool,
    pub n: usize,
    pub n_events: usize,
}

impl CoxFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// Event times grouped for Efron's approximation, in descending time order.
struct Layout {
    order: Vec<usize>,
    /// (start, end) slices of `order` sharing a time; `events` lists the
    /// indices with an event at that time.
    blocks: Vec<(usize, usize, Vec<usize>)>,
}

fn layout(time: &[f64], event: &[bool]) -> Layout {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && time[order[j]] == time[order[i]] {
            j += 1;
        }
        let ev = order[i..j].iter().copied().filter(|&k| event[k]).collect();
        blocks.push((i, j, ev));
        i = j;
    }
    Layout { order, blocks }
}

/// Efron log partial likelihood, gradient and observed information at `beta`.
fn efron(x: &[Vec<f64>], lay: &Layout, beta: &[f64], want_info: bool) -> (f64, Vec<f64>, Vec<f64>) {
    let p = beta.len();
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; if want_info { p * p } else { 0 }];
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; if want_info { p * p } else { 0 }];
    let add = |k: usize, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
        *s0 += w[k];
        for a in 0..p {
            s1[a] += w[k] * x[k][a];
            if want_info {
                for b in 0..p {
                    s2[a * p + b] += w[k] * x[k][a] * x[k][b];
                }
            }
        }
    };
    let mut d1 = vec![0.0; p];
    let mut d2 = vec![0.0; if want_info { p * p } else { 0 }];
    let mut num1 = vec![0.0; p];
    for (start, end, events) in &lay.blocks {
        for &k in &lay.order[*start..*end] {
            add(k, &mut s0, &mut s1, &mut s2);
        }
        if events.is_empty() {
            continue;
        }
        let d = events.len() as f64;
        let mut d0 = 0.0;
        d1.iter_mut().for_each(|v| *v = 0.0);
        d2.iter_mut().for_each(|v| *v = 0.0);
        for &k in events {
            ll += eta[k];
            d0 += w[k];
            for a in 0..p {
                grad[a] += x[k][a];
                d1[a] += w[k] * x[k][a];
                if want_info {
                    for b in 0..p {
                        d2[a * p + b] += w[k] * x[k][a] * x[k][b];
                    }
                }
            }
        }
        for l in 0..events.len() {
            let f = l as f64 / d;
            let den = s0 - f * d0;
            ll -= den.ln() + shift;
            for a in 0..p {
                num1[a] = s1[a] - f * d1[a];
                grad[a] -= num1[a] / den;
            }
            if want_info {
                for a in 0..p {
                    for b in 0..p {
                        let n2 = s2[a * p + b] - f * d2[a * p + b];
                        info[a * p + b] += n2 / den - num1[a] * num1[b] / (den * den);
                    }
                }
            }
        }
    }
    (ll, grad, info)
}

fn design(records: &[SurvivalRecord], names: &[String]) -> Result<Vec<Vec<f64>>, SurvivalError> {
    records
        .iter()
        .map(|r| {
            names
                .iter()
                .map(|n| {
                    r.covariates.get(n).copied().filter(|v| v.is_finite()).ok_or_else(|| {
                        SurvivalError::MissingCovariate { participant_id: r.participant_id.clone(), name: n.clone() }
                    })
                })
                .collect()
        })
        .collect()
}

/// Efron log partial likelihood and its gradient on the original covariate scale.
pub fn cox_log_likelihood(x: &[Vec<f64>], time: &[f64], event: &[bool], beta: &[f64]) -> (f64, Vec<f64>) {
    let lay = layout(time, event);
    let (ll, g, _) = efron(x, &lay, beta, false);
    (ll, g)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Newton–Raphson with step-halving on centered, unit-variance covariates.
pub fn fit_cox(records: &[SurvivalRecord], names: &[String]) -> Result<CoxFit, SurvivalError> {
    if records.is_empty() {
        return Err(SurvivalError::EmptyRecords);
    }
    let n_events = records.iter().filter(|r| r.event).count();
    if n_events == 0 {
        return Err(SurvivalError::NoEvents);
    }
    let raw = design(records, names)?;
    let p = names.len();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = raw.iter().map(|r| r[j]).collect();
        mean[j] = numeric::mean(&col);
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / col.len() as f64;
        sd[j] = var.sqrt();
        if !(sd[j] > 0.0) || sd[j] <= 1e-12 * mean[j].abs() {
            return Err(SurvivalError::ZeroVarianceCovariate(names[j].clone()));
        }
    }
    let z: Vec<Vec<f64>> = raw.iter().map(|r| (0..p).map(|j| (r[j] - mean[j]) / sd[j]).collect()).collect();
    let time: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let event: Vec<bool> = records.iter().map(|r| r.event).collect();
    let lay = layout(&time, &event);

    let mut gamma = vec![0.0; p];
    let (mut ll, mut grad, mut info) = efron(&z, &lay, &gamma, true);
    let mut iterations = 0;
    let mut capped = false;
    while max_abs(&grad) >= GRADIENT_TOL && iterations < MAX_ITER {
        iterations += 1;
        let newton = numeric::solve(&info, &grad).filter(|s| s.iter().all(|v| v.is_finite()));
        let mut moved = false;
        // fall back to steepest ascent when the Newton direction cannot improve
        for step in newton.into_iter().chain(std::iter::once(grad.clone())) {
            let mut t = 1.0;
            for _ in 0..60 {
                let cand: Vec<f64> = gamma
                    .iter()
                    .zip(&step)
                    .map(|(g, s)| (g + t * s).clamp(-SEPARATION_CAP, SEPARATION_CAP))
                    .collect();
                let (cl, cg, ci) = efron(&z, &lay, &cand, true);
                // near the optimum the gain is below the rounding of ll
                if cl >= ll - 1e-12 * (1.0 + ll.abs()) && cand != gamma {
                    moved = true;
                    capped = cand.iter().any(|v| v.abs() >= SEPARATION_CAP);
                    gamma = cand;
                    ll = cl;
                    grad = cg;
                    info = ci;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    let converged = max_abs(&grad) < GRADIENT_TOL;
    if capped {
        log::warn!("Cox fit on {names:?} hit the separation cap");
    }
    let cov = numeric::invert(&info, p);
    let coefficients: Vec<f64> = (0..p).map(|j| gamma[j] / sd[j]).collect();
    let standard_errors: Vec<f64> = (0..p)
        .map(|j| cov.as_ref().map_or(f64::NAN, |c| c[j * p + j].max(0.0).sqrt() / sd[j]))
        .collect();
    Ok(CoxFit {
        covariate_names: names.to_vec(),
        coefficients,
        standard_errors,
        log_partial_likelihood: ll,
        aic: 2.0 * p as f64 - 2.0 * ll,
        n_iterations: iterations,
        converged,
        separated: capped,
        n: records.len(),
        n_events,
    })
}

/// Log partial likelihood with no covariates (every β = 0).
pub fn null_log_likelihood(records: &[SurvivalRecord]) -> f64 {
    let time: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let event: Vec<bool> = records.iter().map(|r| r.event).collect();
    let x = vec![Vec::new(); records.len()];
    cox_log_likelihood(&x, &time, &event, &[]).0
}

/// Row-major design matrix of `names` over `records`.
pub fn covariate_matrix(records: &[SurvivalRecord], names: &[String]) -> Result<Vec<Vec<f64>>, SurvivalError> {
    design(records, names)
}
