use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, auc, EvalError, MetricSummary, Prediction};
use crate::numeric;
use crate::seed;

/// Draws after the first that a degenerate replicate may use before it is skipped.
const REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleUnit {
    #[default]
    MatchedPair,
    DataPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_replicates: usize,
    pub ci_level: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub resample_unit: ResampleUnit,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec { n_replicates: 1000, ci_level: 0.95, master_seed: 0, resample_unit: ResampleUnit::MatchedPair }
    }
}

impl BootstrapSpec {
    pub fn with_seed(seed: u64) -> Self {
        BootstrapSpec { master_seed: seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_replicates == 0 || !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(EvalError::InvalidSpec("need n_replicates ≥ 1 and 0 < ci_level < 1".into()));
        }
        Ok(())
    }
}

/// Resamples `units` with replacement; replicate `r` draws from
/// `derive_seed(master_seed, r)`. `metric` returns `None` when undefined on a
/// resample, which triggers a redraw.
pub fn bootstrap<U, F>(units: &[U], metric: F, spec: &BootstrapSpec) -> Result<MetricSummary, EvalError>
where
    U: Sync,
    F: Fn(&[&U]) -> Option<f64> + Sync,
{
    spec.validate()?;
    if units.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = units.len();
    let values: Vec<Option<f64>> = (0..spec.n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::task_rng(spec.master_seed, r as u64);
            let mut draw: Vec<&U> = Vec::with_capacity(n);
            for _ in 0..=REDRAWS {
                draw.clear();
                draw.extend((0..n).map(|_| &units[rng.random_range(0..n)]));
                if let Some(v) = metric(&draw) {
                    return Some(v);
                }
            }
            None
        })
        .collect();
    let skipped = values.iter().filter(|v| v.is_none()).count();
    let mut kept: Vec<f64> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(EvalError::AllReplicatesDegenerate { attempts: spec.n_replicates * (REDRAWS + 1) });
    }
    if skipped > 0 {
        log::info!("bootstrap skipped {skipped} degenerate replicates");
    }
    let mean = numeric::mean(&kept);
    kept.sort_by(f64::total_cmp);
    let alpha = (1.0 - spec.ci_level) / 2.0;
    let ci_low = numeric::quantile_sorted(&kept, alpha);
    let ci_high = numeric::quantile_sorted(&kept, 1.0 - alpha);
    Ok(MetricSummary { mean, ci_low, ci_high, n, skipped_replicates: skipped })
}

/// Bootstrapped AUC and accuracy of predictions, resampling matched tuples or
/// individual data points according to `spec.resample_unit`.
pub fn bootstrap_predictions(
    preds: &[Prediction],
    spec: &BootstrapSpec,
) -> Result<(MetricSummary, MetricSummary), EvalError> {
    let units: Vec<Vec<&Prediction>> = match spec.resample_unit {
        ResampleUnit::DataPoint => preds.iter().map(|p| vec![p]).collect(),
        ResampleUnit::MatchedPair => {
            let mut by_tuple: BTreeMap<usize, Vec<&Prediction>> = BTreeMap::new();
            for p in preds {
                by_tuple.entry(p.tuple).or_default().push(p);
            }
            by_tuple.into_values().collect()
        }
    };
    let flatten = |draw: &[&Vec<&Prediction>]| -> (Vec<f64>, Vec<bool>, Vec<bool>) {
        let mut s = Vec::new();
        let mut y = Vec::new();
        let mut h = Vec::new();
        for p in draw.iter().flat_map(|u| u.iter()) {
            s.push(p.score);
            y.push(p.label);
            h.push(p.predicted);
        }
        (s, y, h)
    };
    let auc_summary = bootstrap(
        &units,
        |d| {
            let (s, y, _) = flatten(d);
            auc(&s, &y).ok()
        },
        spec,
    )?;
    let acc_summary = bootstrap(
        &units,
        |d| {
            let (_, y, h) = flatten(d);
            accuracy(&h, &y).ok()
        },
        spec,
    )?;
    Ok((auc_summary, acc_summary))
}
