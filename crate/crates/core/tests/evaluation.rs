mod common;

use bageval::classifiers::ClassifierSpec;
use bageval::evaluation::{
    adjusted_paired_difference, auc, bootstrap, bootstrap_predictions, global_model_windows, loocv_folds,
    loocv_predictions, positive_group, time_specific_windows, wilcoxon_exact, wilcoxon_signed_rank, window_pairs,
    BootstrapSpec, EvalError, Prediction, WindowSpec,
};
use bageval::features::FeatureSpec;
use bageval::matching::{greedy_match, ParticipantReuse};
use bageval::seed::rng_from_seed;
use bageval::simulator::{default_paper_scenario, simulate_cohort, ModelEffect};
use bageval::{BagTable, Cohort, Diagnosis::*, LabelGroup, MatchSpec, Sex};
use common::{oracles, session};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

proptest! {
    #[test]
    fn auc_matches_pair_counting(v in prop::collection::vec((-5i32..5, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let labels: Vec<bool> = v.iter().map(|p| p.1).collect();
        match auc(&scores, &labels) {
            Ok(a) => prop_assert!((a - oracles::auc_pairs(&scores, &labels)).abs() < 1e-12),
            Err(e) => prop_assert_eq!(e, EvalError::SingleClass),
        }
    }

    #[test]
    fn auc_is_invariant_to_increasing_transforms(v in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = v.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = v.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let moved: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 - 1.0).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&moved, &labels).unwrap());
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - auc(&scores, &labels).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn exact_signed_rank_matches_enumeration(d in prop::collection::vec(-4i32..5, 1..13)) {
        let diffs: Vec<f64> = d.iter().map(|&v| v as f64 * 0.5).collect();
        prop_assume!(diffs.iter().any(|&v| v != 0.0));
        let r = wilcoxon_exact(&diffs).unwrap();
        let (w, p) = oracles::wilcoxon_enumerated(&diffs);
        prop_assert!((r.statistic - w).abs() < 1e-12);
        prop_assert!((r.p_value - p).abs() < 1e-9, "{} vs {}", r.p_value, p);
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean(v in prop::collection::vec(-10.0f64..10.0, 1..40), seed in 0u64..1000) {
        let spec = BootstrapSpec { n_replicates: 200, ..BootstrapSpec::with_seed(seed) };
        let s = bootstrap(&v, |d| Some(d.iter().map(|x| **x).sum::<f64>() / d.len() as f64), &spec).unwrap();
        prop_assert!(s.ci_low <= s.mean + 1e-12 && s.mean <= s.ci_high + 1e-12, "{s:?}");
    }
}

#[test]
fn signed_rank_detects_a_unit_shift() {
    let mut rng = rng_from_seed(30);
    let d: Vec<f64> = (0..30).map(|_| normal(&mut rng) + 1.0).collect();
    let r = wilcoxon_signed_rank(&d).unwrap();
    assert!(r.p_value < 0.01, "p = {}", r.p_value);
}

#[test]
fn bootstrap_of_a_constant_has_zero_width() {
    let v = vec![0.7; 1000];
    let s = bootstrap(&v, |d| Some(d.iter().map(|x| **x).sum::<f64>() / d.len() as f64), &BootstrapSpec::with_seed(1))
        .unwrap();
    assert!(s.ci_high - s.ci_low < 1e-12);
    assert!((s.mean - 0.7).abs() < 1e-12);
}

#[test]
fn bootstrap_is_reproducible_and_seed_sensitive() {
    let v: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
    let m = |d: &[&f64]| Some(d.iter().map(|x| **x).sum::<f64>());
    let a = bootstrap(&v, m, &BootstrapSpec::with_seed(3)).unwrap();
    assert_eq!(a, bootstrap(&v, m, &BootstrapSpec::with_seed(3)).unwrap());
    assert_ne!(a, bootstrap(&v, m, &BootstrapSpec::with_seed(4)).unwrap());
}

fn pred(tuple: usize, label: bool, score: f64) -> Prediction {
    Prediction {
        tuple,
        session: 2 * tuple + usize::from(label),
        participant_id: format!("p{tuple}{label}"),
        group_index: usize::from(label),
        age: 70.0,
        label,
        score,
        predicted: score > 0.0,
        time_to_event: None,
    }
}

#[test]
fn planted_scores_give_an_auc_interval_above_chance() {
    let mut rng = rng_from_seed(50);
    let preds: Vec<Prediction> = (0..50)
        .flat_map(|t| [pred(t, false, normal(&mut rng)), pred(t, true, normal(&mut rng) + 1.5)])
        .collect();
    let (a, acc) = bootstrap_predictions(&preds, &BootstrapSpec::with_seed(7)).unwrap();
    assert!(a.ci_low > 0.5, "{a:?}");
    assert!(acc.ci_low <= acc.mean && acc.mean <= acc.ci_high);
    assert_eq!(a.n, 50);
}

/// Participants with two sessions each; the model estimates are the age plus
/// `shift(group) + noise`.
fn four_group_cohort(seed: u64, n_per: usize, shift_a: impl Fn(&str) -> f64) -> Cohort {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::new();
    for g in ["cn", "star", "mci", "ad"] {
        for i in 0..n_per {
            let pid = format!("{g}{i:03}");
            let age = 60.0 + 25.0 * i as f64 / n_per as f64;
            let sex = if i % 2 == 0 { Sex::Female } else { Sex::Male };
            let (dx0, dx1) = match g {
                "cn" => (CN, CN),
                "star" => (CN, MCI),
                "mci" => (MCI, MCI),
                _ => (AD, AD),
            };
            for (k, dx) in [dx0, dx1].into_iter().enumerate() {
                let a = age + 2.0 * k as f64;
                let common = normal(&mut rng);
                let ea = a + common + 0.5 * normal(&mut rng) + if k == 0 { shift_a(g) } else { 0.0 };
                let eb = a + common + 0.5 * normal(&mut rng);
                rows.push(session(&pid, a, sex, dx, &[("a", ea), ("b", eb)]));
            }
        }
    }
    Cohort::from_sessions(vec!["a".into(), "b".into()], rows).unwrap()
}

fn four_group_spec() -> MatchSpec {
    MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::CnStar, LabelGroup::Mci, LabelGroup::Ad])
}

#[test]
fn identical_models_have_no_paired_difference() {
    let c = four_group_cohort(1, 30, |_| 0.0);
    let rows: Vec<_> = c
        .sessions()
        .iter()
        .map(|s| session(&s.participant_id, s.age, s.sex, s.diagnosis, &[("a", s.estimates["a"]), ("b", s.estimates["a"])]))
        .collect();
    let c = Cohort::from_sessions(vec!["a".into(), "b".into()], rows).unwrap();
    let set = greedy_match(&c, &four_group_spec()).unwrap();
    let err = adjusted_paired_difference(&set, &BagTable::uncorrected(&c), "a", "b").unwrap_err();
    assert_eq!(err, EvalError::AllZeroDifferences);
}

#[test]
fn planted_pre_mci_difference_is_recovered() {
    let c = four_group_cohort(2, 40, |g| if g == "star" { 2.0 } else { 0.0 });
    let set = greedy_match(&c, &four_group_spec()).unwrap();
    let r = adjusted_paired_difference(&set, &BagTable::uncorrected(&c), "a", "b").unwrap();
    let star = r.groups.iter().find(|g| g.group == "CN_star").unwrap();
    assert!((star.adjusted_mean - 2.0).abs() < 0.4, "{}", star.adjusted_mean);
    assert!(star.wilcoxon.p_value < 0.05);
    for g in r.groups.iter().filter(|g| g.group != "CN_star") {
        assert!(g.adjusted_mean.abs() < 0.4, "{}: {}", g.group, g.adjusted_mean);
    }
}

#[test]
fn constant_offset_cancels_after_adjustment() {
    let c = four_group_cohort(3, 40, |_| 1.5);
    let set = greedy_match(&c, &four_group_spec()).unwrap();
    let r = adjusted_paired_difference(&set, &BagTable::uncorrected(&c), "a", "b").unwrap();
    assert!((r.cn_stable_mean - 1.5).abs() < 0.4);
    for g in &r.groups {
        assert!(g.adjusted_mean.abs() < 0.4, "{}: {}", g.group, g.adjusted_mean);
        assert!((g.raw_mean - 1.5).abs() < 0.4);
    }
}

fn cn_ad_cohort(seed: u64, n_per: usize, ad_shift: f64) -> Cohort {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::new();
    for (g, dx) in [("c", CN), ("a", AD)] {
        for i in 0..n_per {
            let pid = format!("{g}{i:03}");
            let sex = if i % 3 == 0 { Sex::Male } else { Sex::Female };
            for k in 0..2 {
                let age = 62.0 + 20.0 * i as f64 / n_per as f64 + 1.5 * k as f64;
                let shift = if dx == AD { ad_shift } else { 0.0 };
                rows.push(session(&pid, age, sex, dx, &[("m", age + shift + normal(&mut rng))]));
            }
        }
    }
    Cohort::from_sessions(vec!["m".into()], rows).unwrap()
}

#[test]
fn loocv_folds_hold_out_whole_participants() {
    let c = cn_ad_cohort(4, 25, 1.0);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    let folds = loocv_folds(&set);
    let mut seen = vec![0; set.len()];
    for f in &folds {
        for &t in &f.test_tuples {
            seen[t] += 1;
        }
        let held: Vec<&str> = f
            .test_tuples
            .iter()
            .flat_map(|&t| set.tuples[t].members.iter().map(|m| m.participant_id.as_str()))
            .collect();
        for &t in &f.train_tuples {
            assert!(set.tuples[t].members.iter().all(|m| !held.contains(&m.participant_id.as_str())));
        }
        assert_eq!(f.test_tuples.len() + f.train_tuples.len(), set.len());
    }
    assert!(seen.iter().all(|&k| k == 1));

    let fs = FeatureSpec::with_models(["m"]);
    let bags = BagTable::uncorrected(&c);
    let clf = ClassifierSpec::logistic(9);
    let a = loocv_predictions(&c, &bags, &set, &fs, &clf).unwrap();
    assert_eq!(a, loocv_predictions(&c, &bags, &set, &fs, &clf).unwrap());
    assert_eq!(a.len(), 2 * set.len());
}

#[test]
fn identical_tuples_receive_identical_scores() {
    let rows: Vec<_> = (0..3)
        .flat_map(|i| {
            [
                session(&format!("c{i}"), 70.0, Sex::Female, CN, &[("m", 69.0)]),
                session(&format!("a{i}"), 70.0, Sex::Female, AD, &[("m", 74.0)]),
            ]
        })
        .collect();
    let c = Cohort::from_sessions(vec!["m".into()], rows).unwrap();
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    assert_eq!(set.len(), 3);
    let preds =
        loocv_predictions(&c, &BagTable::uncorrected(&c), &set, &FeatureSpec::with_models(["m"]), &ClassifierSpec::logistic(0))
            .unwrap();
    for label in [false, true] {
        let s: Vec<f64> = preds.iter().filter(|p| p.label == label).map(|p| p.score).collect();
        assert!(s.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{s:?}");
    }
}

#[test]
fn separable_groups_reach_perfect_auc() {
    let c = cn_ad_cohort(5, 20, 15.0);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    let preds =
        loocv_predictions(&c, &BagTable::uncorrected(&c), &set, &FeatureSpec::with_models(["m"]), &ClassifierSpec::logistic(0))
            .unwrap();
    let s: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let y: Vec<bool> = preds.iter().map(|p| p.label).collect();
    assert_eq!(auc(&s, &y).unwrap(), 1.0);
}

#[test]
fn global_window_takes_the_session_closest_to_the_center() {
    // s converts at 72.6, so its CN sessions lie 2.6 and 2.1 years before
    let c = common::cohort(&[
        ("s", 70.0, Sex::Female, CN),
        ("s", 70.5, Sex::Female, CN),
        ("s", 72.6, Sex::Female, MCI),
        ("k1", 70.0, Sex::Female, CN),
        ("k1", 72.5, Sex::Female, CN),
        ("k2", 70.5, Sex::Female, CN),
        ("k2", 72.6, Sex::Female, CN),
    ]);
    let spec = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::CnStar]).with_reuse(ParticipantReuse::PerSession);
    let set = greedy_match(&c, &spec).unwrap();
    assert_eq!(set.len(), 2);
    let pos = positive_group(&set).unwrap();
    let picked = window_pairs(&set, pos, (2.0, 3.0));
    assert_eq!(picked.len(), 1);
    let tte = set.tuples[picked[0]].members[pos].time_to_event.unwrap();
    assert!((tte - 2.6).abs() < 1e-9, "{tte}");
    // a window holding only the 2.1 session picks it
    let picked = window_pairs(&set, pos, (1.5, 2.5));
    assert!((set.tuples[picked[0]].members[pos].time_to_event.unwrap() - 2.1).abs() < 1e-9);
    assert!(window_pairs(&set, pos, (3.0, 4.0)).is_empty());
}

#[test]
fn window_grid_starts_at_zero_and_covers_the_range() {
    let w = WindowSpec::default().windows(3.2);
    assert_eq!(w.first(), Some(&(0.0, 1.0)));
    let centers: Vec<f64> = w.iter().map(|(a, b)| (a + b) / 2.0).collect();
    assert_eq!(&centers[..3], &[0.5, 1.0, 1.5]);
    assert!(w.last().unwrap().1 >= 3.2);
    assert!(WindowSpec::contains((1.0, 2.0), 1.0) && !WindowSpec::contains((1.0, 2.0), 2.0));
}

fn planted_window_cohort(seed: u64) -> Cohort {
    let mut cfg = default_paper_scenario().with_size(700, seed);
    let mut effect = ModelEffect::null(3.0);
    effect.pre_mci_window = (2.0, 4.0);
    effect.pre_mci_offset = 6.0;
    cfg.model_effects = [("m".to_string(), effect)].into();
    simulate_cohort(&cfg).unwrap().0
}

#[test]
fn time_specific_windows_peak_where_the_effect_was_planted() {
    let c = planted_window_cohort(11);
    let bags = BagTable::uncorrected(&c);
    let bspec = BootstrapSpec { n_replicates: 200, ..BootstrapSpec::with_seed(1) };
    let wspec = WindowSpec::default();
    let run = || {
        time_specific_windows(
            &c,
            &bags,
            &FeatureSpec::with_models(["m"]),
            &ClassifierSpec::logistic(1),
            &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::CnStar]),
            &wspec,
            &bspec,
        )
        .unwrap()
    };
    let ws = run();
    assert_eq!(ws, run());
    assert!(ws.iter().all(|w| w.n_pairs >= 5));
    // windows past the longest observed time before conversion produce nothing
    assert!(ws.iter().all(|w| w.window_start < 20.0));
    let best = ws.iter().max_by(|a, b| a.auc.mean.total_cmp(&b.auc.mean)).unwrap();
    assert!((1.5..=4.5).contains(&best.window_center), "peak at {}", best.window_center);
}

#[test]
fn global_model_rejects_more_than_two_groups() {
    let c = four_group_cohort(6, 10, |_| 0.0);
    let set = greedy_match(&c, &four_group_spec()).unwrap();
    let err = global_model_windows(
        &c,
        &BagTable::uncorrected(&c),
        &set,
        &FeatureSpec::with_models(["a"]),
        &ClassifierSpec::logistic(0),
        &WindowSpec::default(),
        &BootstrapSpec::default(),
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::InvalidSpec(_)));
}

#[test]
fn too_few_tuples_is_an_error() {
    let c = cn_ad_cohort(7, 2, 1.0);
    let set = greedy_match(&c, &MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::Ad])).unwrap();
    let err = loocv_predictions(&c, &BagTable::uncorrected(&c), &set, &FeatureSpec::basic(), &ClassifierSpec::logistic(0))
        .unwrap_err();
    assert_eq!(err, EvalError::TooFewTuples(set.len()));
}
