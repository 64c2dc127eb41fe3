use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classifiers::{train, ClassifierSpec};
use crate::cohort::Cohort;
use crate::features::{build_feature_matrix, BagTable, FeatureSpec};
use crate::matching::MatchedSet;
use crate::seed;

/// Held-out score for one matched data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tuple: usize,
    pub session: usize,
    pub participant_id: String,
    pub group_index: usize,
    pub age: f64,
    pub label: bool,
    pub score: f64,
    pub predicted: bool,
    pub time_to_event: Option<f64>,
}

/// One LOOCV fold: all tuples sharing an anchor participant are held out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoocvFold {
    pub test_tuples: Vec<usize>,
    pub train_tuples: Vec<usize>,
}

/// Index of the positive class in a two-group match: the later-stage label,
/// or the second group when both selectors share a label.
pub fn positive_group(matched: &MatchedSet) -> Result<usize, EvalError> {
    let g = &matched.spec.groups;
    if g.len() != 2 {
        return Err(EvalError::InvalidSpec(format!("classification needs 2 groups, got {}", g.len())));
    }
    Ok(if g[0].group > g[1].group { 0 } else { 1 })
}

pub fn loocv_folds(matched: &MatchedSet) -> Vec<LoocvFold> {
    let mut by_anchor: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for t in 0..matched.len() {
        by_anchor.entry(matched.anchor(t).participant_id.as_str()).or_default().push(t);
    }
    let mut folds: Vec<LoocvFold> = by_anchor
        .into_values()
        .map(|test| {
            let held: HashSet<usize> = test.iter().copied().collect();
            let train = (0..matched.len()).filter(|t| !held.contains(t)).collect();
            LoocvFold { test_tuples: test, train_tuples: train }
        })
        .collect();
    folds.sort_by_key(|f| f.test_tuples[0]);
    folds
}

fn check_fold(matched: &MatchedSet, k: usize, fold: &LoocvFold) -> Result<(), EvalError> {
    let held: HashSet<&str> = fold
        .test_tuples
        .iter()
        .flat_map(|&t| matched.tuples[t].members.iter().map(|m| m.participant_id.as_str()))
        .collect();
    for &t in &fold.train_tuples {
        if let Some(m) = matched.tuples[t].members.iter().find(|m| held.contains(m.participant_id.as_str())) {
            return Err(EvalError::FoldLeak { fold: k, participant_id: m.participant_id.clone() });
        }
    }
    Ok(())
}

/// Leave-one-participant-out predictions over a two-group matched set,
/// concatenated in tuple order. Fold `k` trains with seed
/// `derive_seed(clf.seed, k)`.
pub fn loocv_predictions(
    cohort: &Cohort,
    bags: &BagTable,
    matched: &MatchedSet,
    features: &FeatureSpec,
    clf: &ClassifierSpec,
) -> Result<Vec<Prediction>, EvalError> {
    let pos = positive_group(matched)?;
    if matched.len() < 3 {
        return Err(EvalError::TooFewTuples(matched.len()));
    }
    let sessions: Vec<usize> =
        matched.tuples.iter().flat_map(|t| t.members.iter().map(|m| m.session)).collect();
    let all = build_feature_matrix(cohort, bags, &sessions, features)?;
    let width = matched.spec.groups.len();
    let rows_of = |ts: &[usize]| -> Vec<usize> { ts.iter().flat_map(|&t| t * width..(t + 1) * width).collect() };
    let labels: Vec<bool> =
        matched.tuples.iter().flat_map(|t| t.members.iter().map(|m| m.group_index == pos)).collect();

    let folds = loocv_folds(matched);
    for (k, f) in folds.iter().enumerate() {
        check_fold(matched, k, f)?;
    }
    let per_fold: Vec<Vec<Prediction>> = folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| -> Result<Vec<Prediction>, EvalError> {
            let train_rows = rows_of(&fold.train_tuples);
            let test_rows = rows_of(&fold.test_tuples);
            let y: Vec<bool> = train_rows.iter().map(|&r| labels[r]).collect();
            let model = train(&clf.reseeded(seed::derive_seed(clf.seed, k as u64)), &all.select_rows(&train_rows), &y)?;
            let scores = model.score(&all.select_rows(&test_rows))?;
            Ok(test_rows
                .iter()
                .zip(scores)
                .map(|(&r, score)| {
                    let (t, g) = (r / width, r % width);
                    let m = &matched.tuples[t].members[g];
                    Prediction {
                        tuple: t,
                        session: m.session,
                        participant_id: m.participant_id.clone(),
                        group_index: g,
                        age: m.age,
                        label: labels[r],
                        score,
                        predicted: model.label_of(score),
                        time_to_event: m.time_to_event,
                    }
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut out: Vec<Prediction> = per_fold.into_iter().flatten().collect();
    out.sort_by_key(|p| (p.tuple, p.group_index));
    Ok(out)
}
