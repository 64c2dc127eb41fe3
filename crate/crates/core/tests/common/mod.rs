#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;

use bageval::{Cohort, Diagnosis, SessionRecord, Sex};

pub fn session(pid: &str, age: f64, sex: Sex, dx: Diagnosis, estimates: &[(&str, f64)]) -> SessionRecord {
    SessionRecord {
        dataset_id: "ds".into(),
        participant_id: pid.into(),
        age,
        sex,
        diagnosis: dx,
        race: None,
        estimates: estimates.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
    }
}

/// Single-model cohort whose estimate equals the chronological age.
pub fn cohort(rows: &[(&str, f64, Sex, Diagnosis)]) -> Cohort {
    let sessions = rows.iter().map(|&(p, a, s, d)| session(p, a, s, d, &[("m", a)])).collect();
    Cohort::from_sessions(vec!["m".into()], sessions).unwrap()
}
