//! Metrics, bootstrap intervals, paired statistics, LOOCV and the two
//! sliding-window transition-prediction protocols.

mod bootstrap;
mod loocv;
mod paired;
mod wilcoxon;
mod windows;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::features::FeatureError;
use crate::matching::MatchError;

pub use bootstrap::{bootstrap, bootstrap_predictions, BootstrapSpec, ResampleUnit};
pub use loocv::{loocv_folds, loocv_predictions, positive_group, LoocvFold, Prediction};
pub use paired::{adjusted_paired_difference, mean_abs, mean_abs_bag, GroupDifference, PairedDifferenceReport};
pub use wilcoxon::{wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};
pub use windows::{global_model_windows, time_specific_windows, window_pairs, WindowResult, WindowSpec, MIN_WINDOW_PAIRS};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("metric needs both classes")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("all {attempts} bootstrap draws were degenerate")]
    AllReplicatesDegenerate { attempts: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("no rows left after the age filter")]
    EmptyAfterFilter,
    #[error("LOOCV needs at least 3 tuples, got {0}")]
    TooFewTuples(usize),
    #[error("matched set has no CN_stable group")]
    MissingCnStable,
    #[error("invalid evaluation spec: {0}")]
    InvalidSpec(String),
    #[error("fold {fold} trains on a held-out participant `{participant_id}`")]
    FoldLeak { fold: usize, participant_id: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Matching(#[from] MatchError),
}

/// Mean and percentile interval of a bootstrapped metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Number of resampled units per replicate.
    pub n: usize,
    /// Replicates dropped after repeated degenerate draws.
    #[serde(default)]
    pub skipped_replicates: usize,
}

impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({:.2}, {:.2})", self.mean, self.ci_low, self.ci_high)
    }
}

/// Mann–Whitney AUC: (concordant + ½ tied) / (positives × negatives),
/// computed from midrank sums.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, kept integral
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u64;
        let pos_here = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        rank2_pos += midrank2 * pos_here;
        i = j + 1;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let u2 = rank2_pos - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

pub fn accuracy(predicted: &[bool], labels: &[bool]) -> Result<f64, EvalError> {
    if predicted.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: predicted.len(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let agree = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / labels.len() as f64)
}
