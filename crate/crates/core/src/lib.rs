//! Evaluation toolkit for brain-age estimates as neurodegeneration biomarkers.
//!
//! The crate consumes per-session brain-age predictions (one column per
//! estimation model) over a longitudinal cohort and provides:
//!
//! - cohort ingestion, validation and trajectory labeling ([`cohort`]),
//! - brain-age gap features with linear bias correction ([`features`]),
//! - greedy sex/age/time-to-event matching across diagnostic groups ([`matching`]),
//! - logistic regression, linear SVM and random forest classifiers ([`classifiers`]),
//! - AUC/accuracy, bootstrap intervals, Wilcoxon tests, LOOCV and the two
//!   sliding-window transition-prediction protocols ([`evaluation`]),
//! - Cox proportional-hazards survival analysis with Efron ties ([`survival`]),
//! - a seeded longitudinal cohort simulator with planted effects ([`simulator`]),
//! - JSON/CSV/SVG reporting and a declarative pipeline runner ([`report`], [`pipeline`]).
//!
//! All randomness flows from explicit `u64` seeds; every result is reproducible
//! bit-for-bit regardless of the number of worker threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cohort;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod matching;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod simulator;
pub mod survival;

pub use cohort::{Cohort, Diagnosis, LabelGroup, SessionRecord, Sex, TrajectoryLabel};
pub use error::{Error, Result};
pub use evaluation::{MetricSummary, WindowResult};
pub use features::{BagTable, BiasParams, FeatureMatrix, ScalerParams};
pub use matching::{MatchSpec, MatchedSet};
pub use survival::{CoxFit, LifeTable, SurvivalRecord};
