use serde::{Deserialize, Serialize};

use super::{wilcoxon_signed_rank, EvalError, WilcoxonResult};
use crate::cohort::{Cohort, LabelGroup};
use crate::features::BagTable;
use crate::matching::MatchedSet;
use crate::numeric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDifference {
    pub group: String,
    pub n: usize,
    /// Mean of BAG_a − BAG_b within the group.
    pub raw_mean: f64,
    /// Per-tuple differences minus the CN_stable mean difference.
    pub adjusted: Vec<f64>,
    pub adjusted_mean: f64,
    pub wilcoxon: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifferenceReport {
    pub model_a: String,
    pub model_b: String,
    pub cn_stable_mean: f64,
    pub groups: Vec<GroupDifference>,
}

/// Per-group BAG differences between two models on matched tuples, centered
/// on the CN_stable group's mean difference. The signed-rank test uses the
/// uncentered within-group differences.
pub fn adjusted_paired_difference(
    matched: &MatchedSet,
    bags: &BagTable,
    model_a: &str,
    model_b: &str,
) -> Result<PairedDifferenceReport, EvalError> {
    bags.column(model_a)?;
    bags.column(model_b)?;
    let cn = matched
        .spec
        .groups
        .iter()
        .position(|g| g.group == LabelGroup::CnStable)
        .ok_or(EvalError::MissingCnStable)?;
    let diffs: Vec<Vec<f64>> = (0..matched.spec.groups.len())
        .map(|g| {
            matched
                .tuples
                .iter()
                .filter_map(|t| {
                    let s = t.members[g].session;
                    Some(bags.get(model_a, s)? - bags.get(model_b, s)?)
                })
                .collect()
        })
        .collect();
    if diffs[cn].is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let cn_mean = numeric::mean(&diffs[cn]);
    let mut groups = Vec::new();
    for (g, d) in diffs.iter().enumerate() {
        if g == cn {
            continue;
        }
        if d.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let adjusted: Vec<f64> = d.iter().map(|v| v - cn_mean).collect();
        groups.push(GroupDifference {
            group: matched.spec.groups[g].to_string(),
            n: d.len(),
            raw_mean: numeric::mean(d),
            adjusted_mean: numeric::mean(&adjusted),
            adjusted,
            wilcoxon: wilcoxon_signed_rank(d)?,
        });
    }
    Ok(PairedDifferenceReport {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        cn_stable_mean: cn_mean,
        groups,
    })
}

pub fn mean_abs(bags: &[f64]) -> Result<f64, EvalError> {
    if bags.is_empty() {
        return Err(EvalError::EmptyAfterFilter);
    }
    Ok(numeric::mean(&bags.iter().map(|b| b.abs()).collect::<Vec<_>>()))
}

/// Mean |BAG| of `model` over `rows` whose age lies in `age_range` (inclusive).
/// Sessions without an estimate for the model are ignored.
pub fn mean_abs_bag(
    cohort: &Cohort,
    bags: &BagTable,
    rows: &[usize],
    model: &str,
    age_range: Option<(f64, f64)>,
) -> Result<f64, EvalError> {
    let col = bags.column(model)?;
    let vals: Vec<f64> = rows
        .iter()
        .filter(|&&i| age_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&cohort.session(i).age)))
        .filter_map(|&i| col[i])
        .collect();
    mean_abs(&vals)
}
