//! Cox proportional hazards (Efron ties), Harrell's C, likelihood-ratio
//! tests, life tables and the nested-scenario comparison.

mod cox;
mod scenarios;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, LabelGroup};
use crate::evaluation::EvalError;
use crate::features::BagTable;
use crate::numeric;

pub use cox::{
    covariate_matrix, cox_log_likelihood, fit_cox, null_log_likelihood, CoxFit, GRADIENT_TOL, MAX_ITER,
    SEPARATION_CAP,
};
pub use scenarios::{survival_scenarios, Scenario, ScenarioRow};

#[derive(Debug, Error, PartialEq)]
pub enum SurvivalError {
    #[error("no survival records")]
    EmptyRecords,
    #[error("no events among the records")]
    NoEvents,
    #[error("covariate `{0}` has zero variance")]
    ZeroVarianceCovariate(String),
    #[error("participant `{participant_id}` lacks covariate `{name}`")]
    MissingCovariate { participant_id: String, name: String },
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("life-table interval width must be positive")]
    InvalidWidth,
    #[error(transparent)]
    Bootstrap(#[from] EvalError),
}

/// Covariate name for chronological age at baseline.
pub const AGE: &str = "age";
/// Covariate name for sex (female 0, male 1).
pub const SEX: &str = "sex";

/// Covariate name under which a model's bias-corrected BAG is stored.
pub fn bag_covariate(model: &str) -> String {
    format!("bag__{model}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub participant_id: String,
    /// Years from baseline to first MCI diagnosis, or to the last session.
    pub duration: f64,
    pub event: bool,
    pub covariates: BTreeMap<String, f64>,
}

/// One record per participant whose baseline session is CN. Covariates are
/// baseline age, sex, each model's raw brain-age estimate (under the model
/// name) and, when `bags` is given, its corrected BAG (`bag__<model>`).
/// Participants observed only once (duration 0) are left out.
pub fn survival_records(cohort: &Cohort, bags: Option<&BagTable>) -> Result<Vec<SurvivalRecord>, SurvivalError> {
    let baselines = cohort
        .select_baselines(&[LabelGroup::CnStable, LabelGroup::CnStar])
        .map_err(|_| SurvivalError::EmptyRecords)?;
    let mut out = Vec::with_capacity(baselines.len());
    for b in baselines {
        let s = cohort.session(b);
        let label = cohort.label(b);
        let (duration, event) = match label.group {
            LabelGroup::CnStar => (label.time_to_first_mci.expect("CN_star has an MCI session"), true),
            _ => {
                let span = cohort.participant_spans().iter().find(|r| r.start == b).expect("baseline span");
                (cohort.session(span.end - 1).age - s.age, false)
            }
        };
        if !(duration > 0.0) {
            continue;
        }
        let mut covariates = BTreeMap::new();
        covariates.insert(AGE.to_string(), s.age);
        covariates.insert(SEX.to_string(), s.sex.encode());
        for (m, v) in &s.estimates {
            covariates.insert(m.clone(), *v);
            if let Some(bag) = bags.and_then(|t| t.get(m, b)) {
                covariates.insert(bag_covariate(m), bag);
            }
        }
        out.push(SurvivalRecord { participant_id: s.participant_id.clone(), duration, event, covariates });
    }
    if out.is_empty() {
        return Err(SurvivalError::EmptyRecords);
    }
    Ok(out)
}

/// Harrell's C. A pair (i, j) is comparable when i has an event and either
/// t_i < t_j, or t_i = t_j with j censored; it is concordant when
/// risk_i > risk_j and counts ½ on tied risks.
pub fn harrell_c(time: &[f64], event: &[bool], risk: &[f64]) -> Result<f64, SurvivalError> {
    let mut comparable = 0u64;
    let mut twice_concordant = 0u64;
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        for j in 0..time.len() {
            if i == j || !(time[i] < time[j] || (time[i] == time[j] && !event[j])) {
                continue;
            }
            comparable += 1;
            twice_concordant += match risk[i].total_cmp(&risk[j]) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    if comparable == 0 {
        return Err(SurvivalError::NoComparablePairs);
    }
    Ok(twice_concordant as f64 / (2 * comparable) as f64)
}

pub fn concordance_index(fit: &CoxFit, records: &[SurvivalRecord]) -> Result<f64, SurvivalError> {
    let x = covariate_matrix(records, &fit.covariate_names)?;
    let risk: Vec<f64> = x.iter().map(|r| fit.linear_predictor(r)).collect();
    let time: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let event: Vec<bool> = records.iter().map(|r| r.event).collect();
    harrell_c(&time, &event, &risk)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub chi_squared: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Upper tail of the χ² distribution, Q(df/2, x/2).
pub fn chi_squared_upper_tail(x: f64, df: usize) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    numeric::gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

pub fn likelihood_ratio_test(reduced: &CoxFit, full: &CoxFit) -> Result<LrtResult, SurvivalError> {
    if let Some(missing) = reduced.covariate_names.iter().find(|n| !full.covariate_names.contains(n)) {
        return Err(SurvivalError::NotNested(format!("`{missing}` missing from the full model")));
    }
    if reduced.n != full.n || reduced.n_events != full.n_events {
        return Err(SurvivalError::NotNested("models were fitted on different records".into()));
    }
    let df = full.covariate_names.len() - reduced.covariate_names.len();
    let chi_squared = (2.0 * (full.log_partial_likelihood - reduced.log_partial_likelihood)).max(0.0);
    let p_value = if df == 0 { 1.0 } else { chi_squared_upper_tail(chi_squared, df) };
    Ok(LrtResult { chi_squared, df, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifeTableRow {
    pub interval_start: f64,
    pub interval_end: f64,
    pub n_at_risk: usize,
    pub n_events: usize,
    pub n_censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    pub width: f64,
    pub rows: Vec<LifeTableRow>,
}

impl LifeTable {
    pub fn check_recurrence(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].n_at_risk + w[0].n_events + w[0].n_censored == w[0].n_at_risk)
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.n_events + r.n_censored).sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["interval_start", "interval_end", "n_at_risk", "n_events", "n_censored"])?;
        for r in &self.rows {
            out.write_record([
                r.interval_start.to_string(),
                r.interval_end.to_string(),
                r.n_at_risk.to_string(),
                r.n_events.to_string(),
                r.n_censored.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Counts per interval `[k·w, (k+1)·w)` up to the largest duration.
pub fn build_life_table(records: &[SurvivalRecord], width: f64) -> Result<LifeTable, SurvivalError> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(SurvivalError::InvalidWidth);
    }
    if records.is_empty() {
        return Err(SurvivalError::EmptyRecords);
    }
    let bin = |d: f64| (d / width).floor().max(0.0) as usize;
    let n_bins = records.iter().map(|r| bin(r.duration)).max().unwrap_or(0) + 1;
    let mut events = vec![0usize; n_bins];
    let mut censored = vec![0usize; n_bins];
    for r in records {
        if r.event {
            events[bin(r.duration)] += 1;
        } else {
            censored[bin(r.duration)] += 1;
        }
    }
    let mut at_risk = records.len();
    let rows = (0..n_bins)
        .map(|k| {
            let row = LifeTableRow {
                interval_start: k as f64 * width,
                interval_end: (k + 1) as f64 * width,
                n_at_risk: at_risk,
                n_events: events[k],
                n_censored: censored[k],
            };
            at_risk -= events[k] + censored[k];
            row
        })
        .collect();
    Ok(LifeTable { width, rows })
}
