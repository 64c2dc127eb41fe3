//! Slow, direct reference implementations used to cross-check the library.

/// AUC by counting every (positive, negative) pair.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Midranks of `v` (1-based) by counting.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided signed-rank p-value by enumerating all 2^n sign patterns of the
/// nonzero differences; returns (W+, p).
pub fn wilcoxon_enumerated(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let ranks = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let total: f64 = ranks.iter().sum();
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let obs = (w - total / 2.0).abs();
    let n = d.len();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if (s - total / 2.0).abs() >= obs - 1e-9 {
            extreme += 1;
        }
    }
    (w, extreme as f64 / (1u64 << n) as f64)
}

/// Harrell's C over all ordered pairs.
pub fn c_index_pairs(time: &[f64], event: &[bool], risk: &[f64]) -> f64 {
    let (mut conc, mut comp) = (0.0, 0.0);
    for i in 0..time.len() {
        for j in 0..time.len() {
            let usable = event[i] && (time[i] < time[j] || (time[i] == time[j] && !event[j]));
            if i == j || !usable {
                continue;
            }
            comp += 1.0;
            conc += if risk[i] > risk[j] {
                1.0
            } else if risk[i] == risk[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    conc / comp
}

/// Breslow partial likelihood on tie-free data (equal to Efron there):
/// Σ_events [η_i − ln Σ_{t_j ≥ t_i} exp η_j].
pub fn cox_loglik_direct(x: &[Vec<f64>], time: &[f64], event: &[bool], beta: &[f64]) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut ll = 0.0;
    for i in 0..time.len() {
        if event[i] {
            let risk: f64 = (0..time.len()).filter(|&j| time[j] >= time[i]).map(|j| eta[j].exp()).sum();
            ll += eta[i] - risk.ln();
        }
    }
    ll
}

/// Score vector of the tie-free partial likelihood.
pub fn cox_score_direct(x: &[Vec<f64>], time: &[f64], event: &[bool], beta: &[f64]) -> Vec<f64> {
    let p = beta.len();
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut u = vec![0.0; p];
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        let set: Vec<usize> = (0..time.len()).filter(|&j| time[j] >= time[i]).collect();
        let s0: f64 = set.iter().map(|&j| eta[j].exp()).sum();
        for a in 0..p {
            let s1: f64 = set.iter().map(|&j| eta[j].exp() * x[j][a]).sum();
            u[a] += x[i][a] - s1 / s0;
        }
    }
    u
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First sign change of `f` on a grid over [-span, span], refined by bisection.
fn grid_root(span: f64, f: impl Fn(f64) -> f64) -> f64 {
    let steps = 40;
    let h = 2.0 * span / steps as f64;
    let mut a = -span;
    let mut fa = f(a);
    for k in 1..=steps {
        let b = -span + k as f64 * h;
        let fb = f(b);
        if fa == 0.0 {
            return a;
        }
        if (fa > 0.0) != (fb > 0.0) {
            return bisect(a, b, &f);
        }
        a = b;
        fa = fb;
    }
    panic!("no sign change of the score on the grid");
}

/// Two-covariate Cox estimate solving the score equations by nested
/// grid search and bisection: β₂ is profiled out for every trial β₁.
pub fn cox_two_covariate_oracle(x: &[Vec<f64>], time: &[f64], event: &[bool]) -> [f64; 2] {
    let span = 10.0;
    let b2_of = |b1: f64| grid_root(span, |b2| cox_score_direct(x, time, event, &[b1, b2])[1]);
    let b1 = grid_root(span, |b1| {
        let b2 = b2_of(b1);
        cox_score_direct(x, time, event, &[b1, b2])[0]
    });
    [b1, b2_of(b1)]
}

/// One-sample Kolmogorov–Smirnov test against Uniform[0, 1]; returns (D, p)
/// using the asymptotic distribution with the Stephens correction.
pub fn ks_uniform(sample: &[f64]) -> (f64, f64) {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let en = n.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Least-squares slope and intercept by the textbook sums.
pub fn ols_direct(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// One-covariate Cox estimate: grid bracket plus bisection on the score.
pub fn cox_one_covariate_oracle(x: &[Vec<f64>], time: &[f64], event: &[bool]) -> f64 {
    grid_root(10.0, |b| cox_score_direct(x, time, event, &[b])[0])
}

/// Efron log partial likelihood written out per distinct event time:
/// Σ_t [Σ_{D_t} η − Σ_{l<d} ln(Σ_{R_t} e^η − (l/d) Σ_{D_t} e^η)].
pub fn efron_loglik_direct(x: &[Vec<f64>], time: &[f64], event: &[bool], beta: &[f64]) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let mut times: Vec<f64> = (0..time.len()).filter(|&i| event[i]).map(|i| time[i]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for t in times {
        let dead: Vec<usize> = (0..time.len()).filter(|&i| event[i] && time[i] == t).collect();
        let risk: f64 = (0..time.len()).filter(|&j| time[j] >= t).map(|j| eta[j].exp()).sum();
        let tied: f64 = dead.iter().map(|&i| eta[i].exp()).sum();
        let d = dead.len() as f64;
        ll += dead.iter().map(|&i| eta[i]).sum::<f64>();
        for l in 0..dead.len() {
            ll -= (risk - l as f64 / d * tied).ln();
        }
    }
    ll
}
