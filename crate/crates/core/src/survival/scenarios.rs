use serde::{Deserialize, Serialize};

use super::{concordance_index, fit_cox, likelihood_ratio_test, SurvivalError, SurvivalRecord, AGE, SEX};
use crate::evaluation::{bootstrap, BootstrapSpec, MetricSummary};

/// Covariate set of one comparison row; the added covariate is appended to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub covariates: Vec<String>,
}

impl Scenario {
    pub fn basic() -> Self {
        Scenario { name: "basic".into(), covariates: vec![AGE.into(), SEX.into()] }
    }

    /// `basic` or a covariate name added on top of age and sex.
    pub fn parse(name: &str) -> Self {
        let name = name.trim();
        if name == "basic" {
            return Self::basic();
        }
        let mut s = Self::basic();
        s.name = name.to_string();
        s.covariates.push(name.to_string());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub added: String,
    pub n: usize,
    pub n_events: usize,
    pub c_index_without: MetricSummary,
    pub c_index_with: MetricSummary,
    /// Point estimates on the full record set.
    pub c_point_without: f64,
    pub c_point_with: f64,
    pub aic_without: f64,
    pub aic_with: f64,
    pub chi_squared: f64,
    pub p_value: f64,
}

fn c_of(records: &[&SurvivalRecord], names: &[String]) -> Option<f64> {
    let rs: Vec<SurvivalRecord> = records.iter().map(|r| (*r).clone()).collect();
    let fit = fit_cox(&rs, names).ok()?;
    concordance_index(&fit, &rs).ok()
}

/// For every scenario, Cox fits without and with `added`, bootstrapped
/// C-indices (participants resampled, refit per replicate), AICs and the LRT.
/// Each row uses the records that carry all of its covariates.
pub fn survival_scenarios(
    records: &[SurvivalRecord],
    scenarios: &[Scenario],
    added: &str,
    bspec: &BootstrapSpec,
) -> Result<Vec<ScenarioRow>, SurvivalError> {
    let mut rows = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let reduced_names = sc.covariates.clone();
        let mut full_names = reduced_names.clone();
        if !full_names.iter().any(|n| n == added) {
            full_names.push(added.to_string());
        }
        let rs: Vec<SurvivalRecord> = records
            .iter()
            .filter(|r| full_names.iter().all(|n| r.covariates.get(n).is_some_and(|v| v.is_finite())))
            .cloned()
            .collect();
        let reduced = fit_cox(&rs, &reduced_names)?;
        let full = fit_cox(&rs, &full_names)?;
        let lrt = likelihood_ratio_test(&reduced, &full)?;
        let c_without = bootstrap(&rs, |d| c_of(d, &reduced_names), bspec)?;
        let c_with = bootstrap(&rs, |d| c_of(d, &full_names), bspec)?;
        rows.push(ScenarioRow {
            scenario: sc.name.clone(),
            added: added.to_string(),
            n: rs.len(),
            n_events: reduced.n_events,
            c_index_without: c_without,
            c_index_with: c_with,
            c_point_without: concordance_index(&reduced, &rs)?,
            c_point_with: concordance_index(&full, &rs)?,
            aic_without: reduced.aic,
            aic_with: full.aic,
            chi_squared: lrt.chi_squared,
            p_value: lrt.p_value,
        });
    }
    Ok(rows)
}
