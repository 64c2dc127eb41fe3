use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap_predictions, loocv_predictions, positive_group, BootstrapSpec, EvalError, MetricSummary, Prediction};
use crate::classifiers::ClassifierSpec;
use crate::cohort::{Cohort, LabelGroup};
use crate::features::{BagTable, FeatureSpec};
use crate::matching::{greedy_match_filtered, MatchError, MatchSpec, MatchedSet};
use crate::numeric;

/// Windows with fewer matched pairs are not reported.
pub const MIN_WINDOW_PAIRS: usize = 5;

/// Half-open windows `[k·stride, k·stride + length)` over time to first MCI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: f64,
    pub stride: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { length: 1.0, stride: 0.5 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.length > 0.0 && self.stride > 0.0 && self.length.is_finite() && self.stride.is_finite()) {
            return Err(EvalError::InvalidSpec("window length and stride must be positive".into()));
        }
        Ok(())
    }

    /// All windows whose start is at most `max_t`.
    pub fn windows(&self, max_t: f64) -> Vec<(f64, f64)> {
        if !(max_t >= 0.0) {
            return Vec::new();
        }
        let last = (max_t / self.stride).floor() as usize;
        (0..=last)
            .map(|k| {
                let start = k as f64 * self.stride;
                (start, start + self.length)
            })
            .filter(|(s, _)| *s <= max_t)
            .collect()
    }

    pub fn contains(window: (f64, f64), t: f64) -> bool {
        window.0 <= t && t < window.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_start: f64,
    pub window_end: f64,
    pub window_center: f64,
    pub auc: MetricSummary,
    pub accuracy: MetricSummary,
    pub n_pairs: usize,
    /// Mean chronological age over all data points of the window's pairs.
    pub mean_age: f64,
}

fn summarize(
    window: (f64, f64),
    preds: &[Prediction],
    n_pairs: usize,
    bspec: &BootstrapSpec,
) -> Result<WindowResult, EvalError> {
    let (auc, accuracy) = bootstrap_predictions(preds, bspec)?;
    let ages: Vec<f64> = preds.iter().map(|p| p.age).collect();
    Ok(WindowResult {
        window_start: window.0,
        window_end: window.1,
        window_center: (window.0 + window.1) / 2.0,
        auc,
        accuracy,
        n_pairs,
        mean_age: numeric::mean(&ages),
    })
}

/// Tuples of `window` for the global model: for every participant of group
/// `pos` with a tuple in the window, the one whose time to event is closest
/// to the window center (ties: younger session, then lower tuple index).
/// Returned in ascending tuple order.
pub fn window_pairs(matched: &MatchedSet, pos: usize, window: (f64, f64)) -> Vec<usize> {
    let center = (window.0 + window.1) / 2.0;
    let mut pick: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for (t, tup) in matched.tuples.iter().enumerate() {
        let m = &tup.members[pos];
        let Some(tte) = m.time_to_event.filter(|&v| WindowSpec::contains(window, v)) else { continue };
        let key = ((tte - center).abs(), m.age, t);
        let e = pick.entry(m.participant_id.as_str()).or_insert(key);
        if key.0.total_cmp(&e.0).then(key.1.total_cmp(&e.1)).is_lt() {
            *e = key;
        }
    }
    let mut tuples: Vec<usize> = pick.values().map(|v| v.2).collect();
    tuples.sort_unstable();
    tuples
}

/// One LOOCV run over the whole matched set, then per window the pair of each
/// positive-class participant whose time to event is closest to the window
/// center (ties: earlier session).
pub fn global_model_windows(
    cohort: &Cohort,
    bags: &BagTable,
    matched: &MatchedSet,
    features: &FeatureSpec,
    clf: &ClassifierSpec,
    wspec: &WindowSpec,
    bspec: &BootstrapSpec,
) -> Result<Vec<WindowResult>, EvalError> {
    wspec.validate()?;
    bspec.validate()?;
    let pos = positive_group(matched)?;
    let preds = loocv_predictions(cohort, bags, matched, features, clf)?;
    let mut by_tuple: BTreeMap<usize, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        by_tuple.entry(p.tuple).or_default().push(p);
    }
    let max_t = matched
        .tuples
        .iter()
        .filter_map(|t| t.members[pos].time_to_event)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    for w in wspec.windows(max_t) {
        let tuples = window_pairs(matched, pos, w);
        if tuples.len() < MIN_WINDOW_PAIRS {
            log::info!("window [{}, {}) skipped: {} pairs", w.0, w.1, tuples.len());
            continue;
        }
        let selected: Vec<Prediction> = tuples.iter().flat_map(|t| by_tuple[t].iter().cloned()).collect();
        out.push(summarize(w, &selected, tuples.len(), bspec)?);
    }
    Ok(out)
}

/// A separate greedy match and LOOCV per window of CN* sessions.
pub fn time_specific_windows(
    cohort: &Cohort,
    bags: &BagTable,
    features: &FeatureSpec,
    clf: &ClassifierSpec,
    mspec: &MatchSpec,
    wspec: &WindowSpec,
    bspec: &BootstrapSpec,
) -> Result<Vec<WindowResult>, EvalError> {
    wspec.validate()?;
    bspec.validate()?;
    mspec.validate()?;
    let star = mspec
        .groups
        .iter()
        .position(|g| g.group == LabelGroup::CnStar)
        .ok_or_else(|| EvalError::InvalidSpec("time-specific windows need a CN_star group".into()))?;
    let max_t = (0..cohort.len())
        .filter(|&i| cohort.label(i).group == LabelGroup::CnStar)
        .filter_map(|i| cohort.label(i).time_to_first_mci)
        .fold(f64::NEG_INFINITY, f64::max);
    let results: Vec<Option<WindowResult>> = wspec
        .windows(max_t)
        .into_par_iter()
        .map(|w| -> Result<Option<WindowResult>, EvalError> {
            let keep = |g: usize, s: usize| {
                g != star || cohort.label(s).time_to_first_mci.is_some_and(|t| WindowSpec::contains(w, t))
            };
            let set = match greedy_match_filtered(cohort, mspec, &keep) {
                Ok(set) => set,
                Err(MatchError::EmptyGroup(_) | MatchError::NoMatches) => {
                    log::info!("window [{}, {}) skipped: no matches", w.0, w.1);
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            };
            if set.len() < MIN_WINDOW_PAIRS {
                log::info!("window [{}, {}) skipped: {} pairs", w.0, w.1, set.len());
                return Ok(None);
            }
            let preds = loocv_predictions(cohort, bags, &set, features, clf)?;
            summarize(w, &preds, set.len(), bspec).map(Some)
        })
        .collect::<Result<_, _>>()?;
    Ok(results.into_iter().flatten().collect())
}
