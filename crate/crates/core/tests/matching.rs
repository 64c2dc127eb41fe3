mod common;

use bageval::matching::{audit_match, greedy_match, MatchError, MatchSpec, ParticipantReuse};
use bageval::{Diagnosis::*, LabelGroup, Sex};

const F: Sex = Sex::Female;
const M: Sex = Sex::Male;
use common::cohort;
use proptest::prelude::*;

#[test]
fn cn_vs_ad_drops_distant_male_pair() {
    let c = cohort(&[
        ("c1", 70.3, F, CN),
        ("c2", 71.0, M, CN),
        ("a1", 70.9, F, AD),
        ("a2", 74.0, M, AD),
    ]);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    assert_eq!(set.len(), 1);
    let ids: Vec<&str> = set.tuples[0].members.iter().map(|m| m.participant_id.as_str()).collect();
    assert_eq!(ids, ["c1", "a1"]);
    let audit = audit_match(&set).unwrap();
    assert!((audit.max_age_gap - 0.6).abs() < 1e-9);
}

#[test]
fn mirrored_groups_match_completely() {
    let mut rows = Vec::new();
    let names: Vec<(String, String)> = (0..12).map(|i| (format!("c{i:02}"), format!("a{i:02}"))).collect();
    for (i, (cn, ad)) in names.iter().enumerate() {
        let age = 60.0 + 1.7 * i as f64;
        let sex = if i % 3 == 0 { M } else { F };
        rows.push((cn.as_str(), age, sex, CN));
        rows.push((ad.as_str(), age, sex, AD));
    }
    let c = cohort(&rows);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    assert_eq!(set.len(), 12);
    assert!(audit_match(&set).unwrap().tuple_age_gaps.iter().all(|&g| g == 0.0));
}

#[test]
fn time_tolerance_prefers_closer_time_to_event() {
    // s converts to MCI three years after the 70.0 session.
    // k1 / k2 are stable with last CN visit 1.5 / 2.8 years after 70.2 / 69.9.
    let c = cohort(&[
        ("s", 70.0, F, CN),
        ("s", 73.0, F, MCI),
        ("k1", 70.2, F, CN),
        ("k1", 71.7, F, CN),
        ("k2", 69.9, F, CN),
        ("k2", 72.7, F, CN),
    ]);
    let spec = MatchSpec::of_groups(&[LabelGroup::CnStar, LabelGroup::CnStable]).with_time_tolerance(Some(2.0));
    let set = greedy_match(&c, &spec).unwrap();
    assert_eq!(set.len(), 1);
    let t = &set.tuples[0];
    let star = t.members.iter().find(|m| m.participant_id == "s").unwrap();
    let cn = t.members.iter().find(|m| m.participant_id != "s").unwrap();
    assert_eq!(star.time_to_event, Some(3.0));
    assert_eq!(cn.participant_id, "k2");
    assert!((cn.time_to_event.unwrap() - 2.8).abs() < 1e-9);
}

#[test]
fn corrupted_tuple_fails_audit() {
    let c = cohort(&[("c1", 70.0, F, CN), ("a1", 70.5, F, AD)]);
    let mut set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    set.tuples[0].members[1].sex = M;
    assert!(matches!(audit_match(&set), Err(MatchError::InvariantViolation { tuple: 0, .. })));
}

#[test]
fn empty_set_audits_cleanly() {
    let c = cohort(&[("c1", 70.0, F, CN), ("a1", 70.5, F, AD)]);
    let mut set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    set.tuples.clear();
    let audit = audit_match(&set).unwrap();
    assert_eq!(audit.n_tuples, 0);
}

#[test]
fn no_feasible_pairs_is_an_error() {
    let c = cohort(&[("c1", 60.0, F, CN), ("a1", 80.0, F, AD)]);
    let r = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad]));
    assert_eq!(r.unwrap_err(), MatchError::NoMatches);
}

#[test]
fn spec_validation() {
    assert!(matches!(MatchSpec::of_groups(&[LabelGroup::Ad]).validate(), Err(MatchError::InvalidSpec(_))));
    let bad = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad]).with_age_tolerance(0.0);
    assert!(matches!(bad.validate(), Err(MatchError::InvalidSpec(_))));
}

#[test]
fn skipped_anchor_session_keeps_participant_available() {
    // a1's first AD session has no partner; its second one does.
    let c = cohort(&[("a1", 60.0, F, AD), ("a1", 70.0, F, AD), ("c1", 70.4, F, CN), ("c2", 90.0, F, CN)]);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.anchor(0).age, 70.0);
}

fn arb_rows() -> impl Strategy<Value = Vec<(u8, f64, bool, u8)>> {
    prop::collection::vec((0u8..40, 55.0f64..85.0, any::<bool>(), 0u8..3), 4..60)
}

fn build(rows: &[(u8, f64, bool, u8)]) -> Option<bageval::Cohort> {
    let mut seen = std::collections::HashSet::new();
    let mut sessions = Vec::new();
    let mut sex_of = std::collections::HashMap::new();
    let mut dx_of = std::collections::HashMap::new();
    for &(p, age, male, dx) in rows {
        let age = (age * 10.0).round() / 10.0;
        if !seen.insert((p, age.to_bits())) {
            continue;
        }
        let sex = *sex_of.entry(p).or_insert(if male { M } else { F });
        let dx = *dx_of.entry(p).or_insert(match dx {
            0 => CN,
            1 => MCI,
            _ => AD,
        });
        sessions.push(common::session(&format!("p{p:02}"), age, sex, dx, &[("m", age)]));
    }
    bageval::Cohort::from_sessions(vec!["m".into()], sessions).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn one_session_per_participant_and_deterministic(rows in arb_rows(), tol in 0.2f64..3.0) {
        let Some(c) = build(&rows) else { return Ok(()) };
        let spec = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Mci, LabelGroup::Ad]).with_age_tolerance(tol);
        match greedy_match(&c, &spec) {
            Ok(set) => {
                prop_assert_eq!(set.n_participants(), 3 * set.len());
                let audit = audit_match(&set).unwrap();
                prop_assert!(audit.max_age_gap <= tol + 1e-9);
                prop_assert_eq!(greedy_match(&c, &spec).unwrap(), set);
            }
            Err(e) => prop_assert!(matches!(e, MatchError::NoMatches | MatchError::EmptyGroup(_))),
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    // Fails: with multiple sessions per participant, a looser tolerance lets an
    // anchor's early session consume a partner that a later anchor needed.
    #[test]
    #[ignore = "greedy matching is not monotone in age tolerance"]
    fn loosening_tolerance_never_loses_tuples(rows in arb_rows(), tol in 0.1f64..2.0, extra in 0.0f64..2.0) {
        let Some(c) = build(&rows) else { return Ok(()) };
        let count = |t: f64| {
            let spec = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad]).with_age_tolerance(t);
            greedy_match(&c, &spec).map(|s| s.len()).unwrap_or(0)
        };
        prop_assert!(count(tol + extra) >= count(tol), "tol {} -> {}: {} vs {}", tol, tol + extra, count(tol), count(tol + extra));
    }
}

#[test]
fn looser_tolerance_can_lose_a_tuple() {
    let c = cohort(&[
        ("a1", 59.9, M, AD),
        ("a1", 76.3, M, AD),
        ("a2", 79.7, M, AD),
        ("c1", 55.0, M, CN),
        ("c1", 76.3, M, CN),
        ("c2", 60.2, M, CN),
        ("c2", 79.6, M, CN),
    ]);
    let count = |t: f64| {
        let spec = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad]).with_age_tolerance(t);
        greedy_match(&c, &spec).unwrap().len()
    };
    assert_eq!(count(0.2), 2);
    assert_eq!(count(0.35), 1);
}

#[test]
fn per_session_reuse_allows_multiple_sessions() {
    let c = cohort(&[
        ("s", 70.0, F, CN),
        ("s", 71.0, F, CN),
        ("s", 72.0, F, MCI),
        ("k", 70.1, F, CN),
        ("k", 71.1, F, CN),
        ("k", 73.2, F, CN),
    ]);
    let spec = MatchSpec::of_groups(&[LabelGroup::CnStar, LabelGroup::CnStable])
        .with_time_tolerance(Some(1.5))
        .with_reuse(ParticipantReuse::PerSession);
    let set = greedy_match(&c, &spec).unwrap();
    assert_eq!(set.len(), 2);
    assert!(set.tuples.iter().all(|t| t.members[1].participant_id == "k"));
}
