//! Seeded synthetic longitudinal cohorts with planted diagnosis trajectories
//! and model-specific brain-age offsets.
//!
//! A fraction of participants has prevalent MCI, with onset up to
//! `prevalent_window` years before baseline. For the rest, time from
//! baseline to MCI onset is exponential with rate
//! `base · frailty · exp(age_slope · (baseline_age − 70))`. AD follows MCI
//! after an exponential delay. Diagnoses are emitted per visit and never
//! revert; the first visit after MCI onset is always diagnosed MCI, so no
//! CN→AD jump is emitted.
//!
//! Brain-age offsets are keyed to the *diagnosed* trajectory: a CN session
//! `t` years before the first MCI visit gets the pre-MCI offset when `t` lies
//! in the model's window.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, CohortError, Diagnosis, SessionRecord, Sex};
use crate::seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEffect {
    pub noise_sd: f64,
    pub bias_slope: f64,
    pub bias_intercept: f64,
    /// Years before the first MCI diagnosis, inclusive.
    pub pre_mci_window: (f64, f64),
    pub pre_mci_offset: f64,
    pub mci_offset: f64,
    pub ad_offset: f64,
    /// Offset per unit of log frailty, applied to every session.
    #[serde(default)]
    pub frailty_loading: f64,
}

impl ModelEffect {
    /// No group offsets; noise and the regression-to-the-mean bias only.
    pub fn null(noise_sd: f64) -> Self {
        ModelEffect {
            noise_sd,
            bias_slope: 0.0,
            bias_intercept: 0.0,
            pre_mci_window: (0.0, 4.0),
            pre_mci_offset: 0.0,
            mci_offset: 0.0,
            ad_offset: 0.0,
            frailty_loading: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_participants: usize,
    pub baseline_age_range: (f64, f64),
    pub visit_interval_mean: f64,
    pub visit_interval_sd: f64,
    /// Shortest allowed gap between visits.
    pub min_visit_interval: f64,
    /// Follow-up count per participant is uniform on `0..=max_followups`.
    pub max_followups: usize,
    /// Fraction male.
    pub sex_ratio: f64,
    /// Incident MCI hazard per year at baseline age 70 with frailty 1.
    pub mci_base_hazard: f64,
    /// Log-hazard increase per year of baseline age.
    pub mci_age_slope: f64,
    /// Fraction of participants already past MCI onset at baseline.
    pub prevalent_mci_fraction: f64,
    /// Prevalent onsets are uniform over this many years before baseline.
    pub prevalent_window: f64,
    /// Gamma frailty shape k (mean 1, variance 1/k); 0 disables frailty.
    pub frailty_shape: f64,
    /// MCI→AD hazard per year.
    pub ad_conversion_hazard: f64,
    pub model_effects: BTreeMap<String, ModelEffect>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        default_paper_scenario()
    }
}

impl SimConfig {
    pub fn with_size(mut self, n: usize, seed: u64) -> Self {
        self.n_participants = n;
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let (lo, hi) = self.baseline_age_range;
        if self.n_participants == 0 {
            return bad("n_participants must be positive".into());
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("bad baseline age range [{lo}, {hi}]"));
        }
        if !(self.visit_interval_mean > 0.0 && self.visit_interval_sd >= 0.0 && self.min_visit_interval > 0.0) {
            return bad("visit interval parameters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.sex_ratio) {
            return bad("sex_ratio must lie in [0, 1]".into());
        }
        let rates = [self.mci_base_hazard, self.ad_conversion_hazard, self.frailty_shape, self.prevalent_window];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !self.mci_age_slope.is_finite() {
            return bad("rates must be finite and ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&self.prevalent_mci_fraction) {
            return bad("prevalent_mci_fraction must lie in [0, 1]".into());
        }
        if self.model_effects.is_empty() {
            return bad("at least one model effect is required".into());
        }
        for (name, e) in &self.model_effects {
            if !(e.noise_sd > 0.0) {
                return bad(format!("{name}: noise_sd must be positive"));
            }
            if !(e.pre_mci_window.0 < e.pre_mci_window.1) {
                return bad(format!("{name}: pre-MCI window start must precede its end"));
            }
        }
        Ok(())
    }
}

/// Models wm_nonrigid, wm_affine and gm_ours. WM-nonrigid carries +2 y in the
/// 0–4 y pre-MCI window and +2 y at MCI and AD; GM-ours carries +2 y at MCI
/// and +4 y at AD; WM-affine lies midway. Noise 3 y, bias slope −0.3.
pub fn default_paper_scenario() -> SimConfig {
    let effect = |pre: f64, mci: f64, ad: f64| ModelEffect {
        noise_sd: 3.0,
        bias_slope: -0.3,
        bias_intercept: 21.0,
        pre_mci_window: (0.0, 4.0),
        pre_mci_offset: pre,
        mci_offset: mci,
        ad_offset: ad,
        frailty_loading: 0.0,
    };
    let model_effects = BTreeMap::from([
        ("gm_ours".to_string(), effect(0.0, 2.0, 4.0)),
        ("wm_affine".to_string(), effect(1.0, 2.0, 3.0)),
        ("wm_nonrigid".to_string(), effect(2.0, 2.0, 2.0)),
    ]);
    SimConfig {
        n_participants: 500,
        baseline_age_range: (50.0, 90.0),
        visit_interval_mean: 2.0,
        visit_interval_sd: 1.0,
        min_visit_interval: 0.5,
        max_followups: 8,
        sex_ratio: 0.45,
        mci_base_hazard: 0.12,
        mci_age_slope: 0.04,
        prevalent_mci_fraction: 0.15,
        prevalent_window: 4.0,
        frailty_shape: 2.0,
        ad_conversion_hazard: 0.2,
        model_effects,
        master_seed: 42,
    }
}

/// The paper-default scenario with wm_nonrigid estimates also shifted by
/// `loading · ln(frailty)`, so that brain age carries conversion risk.
pub fn frailty_linked_scenario(loading: f64) -> SimConfig {
    let mut cfg = default_paper_scenario();
    if let Some(e) = cfg.model_effects.get_mut("wm_nonrigid") {
        e.frailty_loading = loading;
    }
    cfg
}

/// Scenario by CLI name: `paper-default` or `frailty-linked`.
pub fn scenario_by_name(name: &str) -> Result<SimConfig, SimError> {
    match name {
        "paper-default" => Ok(default_paper_scenario()),
        "frailty-linked" => Ok(frailty_linked_scenario(DEFAULT_FRAILTY_LOADING)),
        other => Err(SimError::InvalidConfig(format!("unknown scenario `{other}`"))),
    }
}

/// Years of wm_nonrigid offset per unit of log frailty in `frailty-linked`.
pub const DEFAULT_FRAILTY_LOADING: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub sex: Sex,
    pub baseline_age: f64,
    pub frailty: f64,
    pub mci_onset_age: Option<f64>,
    pub ad_onset_age: Option<f64>,
    pub first_mci_diagnosis_age: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub participant_id: String,
    pub age: f64,
    pub diagnosis: Diagnosis,
    /// Injected offset per model, excluding bias and noise.
    pub offsets: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub participants: Vec<ParticipantTruth>,
    pub sessions: Vec<SessionTruth>,
}

fn incident_onset(cfg: &SimConfig, age0: f64, frailty: f64, e: f64) -> Option<f64> {
    let rate = cfg.mci_base_hazard * frailty * (cfg.mci_age_slope * (age0 - 70.0)).exp();
    (rate > 0.0).then(|| age0 + e / rate)
}

pub fn simulate_cohort(cfg: &SimConfig) -> Result<(Cohort, SimTruth), SimError> {
    cfg.validate()?;
    let mut rng = seed::rng_from_seed(cfg.master_seed);
    let frailty_dist = (cfg.frailty_shape > 0.0)
        .then(|| Gamma::new(cfg.frailty_shape, 1.0 / cfg.frailty_shape))
        .transpose()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let interval = Normal::new(cfg.visit_interval_mean, cfg.visit_interval_sd)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let width = cfg.n_participants.to_string().len().max(4);
    let models: Vec<String> = cfg.model_effects.keys().cloned().collect();
    let noise: Vec<Normal<f64>> = cfg
        .model_effects
        .values()
        .map(|e| Normal::new(0.0, e.noise_sd).expect("validated noise_sd"))
        .collect();

    let mut sessions = Vec::new();
    let mut truth = SimTruth { participants: Vec::new(), sessions: Vec::new() };
    for p in 0..cfg.n_participants {
        let pid = format!("sim{:0width$}", p + 1);
        let sex = if rng.random::<f64>() < cfg.sex_ratio { Sex::Male } else { Sex::Female };
        let (lo, hi) = cfg.baseline_age_range;
        let age0 = lo + (hi - lo) * rng.random::<f64>();
        let frailty = frailty_dist.as_ref().map_or(1.0, |d| d.sample(&mut rng));
        let prevalent = rng.random::<f64>() < cfg.prevalent_mci_fraction;
        let back = cfg.prevalent_window * rng.random::<f64>();
        let e_mci: f64 = Exp1.sample(&mut rng);
        let e_ad: f64 = Exp1.sample(&mut rng);
        let mci_onset = if prevalent { Some(age0 - back) } else { incident_onset(cfg, age0, frailty, e_mci) };
        let ad_onset = mci_onset
            .filter(|_| cfg.ad_conversion_hazard > 0.0)
            .map(|m| m + e_ad / cfg.ad_conversion_hazard);
        let n_follow = rng.random_range(0..=cfg.max_followups);
        let mut ages = vec![age0];
        for _ in 0..n_follow {
            let gap = interval.sample(&mut rng).max(cfg.min_visit_interval);
            ages.push(ages.last().unwrap() + gap);
        }
        let mut dx = Vec::with_capacity(ages.len());
        for (k, &a) in ages.iter().enumerate() {
            let prev = k.checked_sub(1).map(|j| dx[j]);
            let d = match (mci_onset, ad_onset) {
                (Some(m), _) if a < m => Diagnosis::CN,
                (None, _) => Diagnosis::CN,
                (Some(_), Some(ad)) if a >= ad && prev != Some(Diagnosis::CN) => Diagnosis::AD,
                _ => Diagnosis::MCI,
            };
            dx.push(d);
        }
        let first_mci = ages.iter().zip(&dx).find(|(_, d)| **d == Diagnosis::MCI).map(|(a, _)| *a);
        let draws: Vec<Vec<f64>> = ages.iter().map(|_| noise.iter().map(|n| n.sample(&mut rng)).collect()).collect();
        for (k, &a) in ages.iter().enumerate() {
            let mut offsets = BTreeMap::new();
            let mut estimates = BTreeMap::new();
            for (j, (name, e)) in cfg.model_effects.iter().enumerate() {
                let mut off = match dx[k] {
                    Diagnosis::CN => match first_mci.map(|m| m - a) {
                        Some(t) if (e.pre_mci_window.0..=e.pre_mci_window.1).contains(&t) => e.pre_mci_offset,
                        _ => 0.0,
                    },
                    Diagnosis::MCI => e.mci_offset,
                    Diagnosis::AD => e.ad_offset,
                };
                off += e.frailty_loading * frailty.ln();
                offsets.insert(name.clone(), off);
                estimates.insert(name.clone(), a + off + e.bias_slope * a + e.bias_intercept + draws[k][j]);
            }
            sessions.push(SessionRecord {
                dataset_id: "sim".into(),
                participant_id: pid.clone(),
                age: a,
                sex,
                diagnosis: dx[k],
                race: None,
                estimates,
            });
            truth.sessions.push(SessionTruth { participant_id: pid.clone(), age: a, diagnosis: dx[k], offsets });
        }
        truth.participants.push(ParticipantTruth {
            participant_id: pid,
            sex,
            baseline_age: age0,
            frailty,
            mci_onset_age: mci_onset,
            ad_onset_age: ad_onset,
            first_mci_diagnosis_age: first_mci,
        });
    }
    let cohort = Cohort::from_sessions(models, sessions)?;
    Ok((cohort, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::LabelGroup;

    #[test]
    fn zero_hazard_is_all_stable() {
        let mut cfg = default_paper_scenario().with_size(80, 3);
        cfg.mci_base_hazard = 0.0;
        cfg.prevalent_mci_fraction = 0.0;
        cfg.ad_conversion_hazard = 0.0;
        let (c, t) = simulate_cohort(&cfg).unwrap();
        assert!(c.labels().iter().all(|l| l.group == LabelGroup::CnStable));
        assert!(t.participants.iter().all(|p| p.mci_onset_age.is_none()));
    }

    #[test]
    fn noiseless_unbiased_estimates_equal_age() {
        let mut cfg = default_paper_scenario().with_size(30, 1);
        for e in cfg.model_effects.values_mut() {
            *e = ModelEffect { noise_sd: 1e-300, ..ModelEffect::null(1.0) };
        }
        let (c, _) = simulate_cohort(&cfg).unwrap();
        for s in c.sessions() {
            for v in s.estimates.values() {
                assert!((v - s.age).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_cohort() {
        let cfg = default_paper_scenario().with_size(60, 9);
        assert_eq!(simulate_cohort(&cfg).unwrap(), simulate_cohort(&cfg).unwrap());
        let other = default_paper_scenario().with_size(60, 10);
        assert_ne!(simulate_cohort(&cfg).unwrap().0, simulate_cohort(&other).unwrap().0);
    }

    #[test]
    fn diagnoses_are_monotone_without_cn_to_ad_jumps() {
        let (c, _) = simulate_cohort(&default_paper_scenario().with_size(400, 5)).unwrap();
        for span in c.participant_spans() {
            let d: Vec<Diagnosis> = c.sessions()[span.clone()].iter().map(|s| s.diagnosis).collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert!(d.windows(2).all(|w| !(w[0] == Diagnosis::CN && w[1] == Diagnosis::AD)));
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = default_paper_scenario();
        cfg.model_effects.get_mut("gm_ours").unwrap().noise_sd = 0.0;
        assert!(matches!(simulate_cohort(&cfg), Err(SimError::InvalidConfig(_))));
    }
}
