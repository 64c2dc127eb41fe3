//! The three classifier families: L2-regularized logistic regression, linear
//! SVM and random forest.
//!
//! Missing-value imputation and [-1, 1] scaling are fitted on the training
//! rows and stored inside [`TrainedClassifier`], so scoring can never leak
//! test statistics.

mod forest;
mod logistic;
mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{fit_scaler, FeatureError, FeatureMatrix, ScalerParams};

pub use forest::{DecisionTree, Forest, ForestParams, MaxFeatures, TreeNode};
pub use logistic::{logistic_objective, LogRegParams};
pub use svm::SvmParams;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "logreg")]
    LogisticRegression,
    #[serde(rename = "svm")]
    LinearSvm,
    #[serde(rename = "forest")]
    RandomForest,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logreg",
            ClassifierKind::LinearSvm => "svm",
            ClassifierKind::RandomForest => "forest",
        }
    }

    /// Score above which a row is labeled positive.
    pub fn threshold(self) -> f64 {
        match self {
            ClassifierKind::LogisticRegression | ClassifierKind::RandomForest => 0.5,
            ClassifierKind::LinearSvm => 0.0,
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    #[serde(rename = "logreg")]
    Logistic(LogRegParams),
    #[serde(rename = "svm")]
    Svm(SvmParams),
    #[serde(rename = "forest")]
    Forest(ForestParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hyper: Hyperparams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        let hyper = match kind {
            ClassifierKind::LogisticRegression => Hyperparams::Logistic(LogRegParams::default()),
            ClassifierKind::LinearSvm => Hyperparams::Svm(SvmParams::default()),
            ClassifierKind::RandomForest => Hyperparams::Forest(ForestParams::default()),
        };
        ClassifierSpec { hyper, seed }
    }

    pub fn logistic(seed: u64) -> Self {
        Self::new(ClassifierKind::LogisticRegression, seed)
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.hyper {
            Hyperparams::Logistic(_) => ClassifierKind::LogisticRegression,
            Hyperparams::Svm(_) => ClassifierKind::LinearSvm,
            Hyperparams::Forest(_) => ClassifierKind::RandomForest,
        }
    }

    /// Same hyperparameters with a different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        ClassifierSpec { hyper: self.hyper.clone(), seed }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidSpec(m.to_string()));
        match &self.hyper {
            Hyperparams::Logistic(p) => {
                if !(p.l2_lambda > 0.0 && p.tol > 0.0 && p.max_iter > 0) {
                    return bad("logreg hyperparameters must be positive");
                }
            }
            Hyperparams::Svm(p) => {
                if !(p.c > 0.0 && p.tol > 0.0 && p.epochs > 0) {
                    return bad("svm hyperparameters must be positive");
                }
            }
            Hyperparams::Forest(p) => {
                if p.n_trees == 0 || p.min_samples_split < 2 {
                    return bad("forest needs n_trees ≥ 1 and min_samples_split ≥ 2");
                }
                if let MaxFeatures::Count(0) = p.max_features {
                    return bad("max_features must be positive");
                }
            }
        }
        Ok(())
    }
}

impl FromStr for ClassifierKind {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, ClassifierError> {
        match s.trim() {
            "logreg" | "logistic" | "logistic_regression" => Ok(ClassifierKind::LogisticRegression),
            "svm" | "linear_svm" => Ok(ClassifierKind::LinearSvm),
            "forest" | "rf" | "random_forest" => Ok(ClassifierKind::RandomForest),
            other => Err(ClassifierError::InvalidSpec(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Linear { weights: Vec<f64>, bias: f64 },
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub model: Model,
    pub scaler: ScalerParams,
    /// False when logistic regression hit `max_iter` above tolerance.
    pub converged: bool,
    pub iterations: usize,
}

fn design(rows: &FeatureMatrix, scaler: &ScalerParams) -> Vec<Vec<f64>> {
    let mut buf = Vec::with_capacity(scaler.n_outputs());
    (0..rows.n_rows())
        .map(|i| {
            scaler.transform_row(rows, i, &mut buf);
            buf.clone()
        })
        .collect()
}

/// Fits imputation/scaling on `rows`, then the classifier.
pub fn train(
    spec: &ClassifierSpec,
    rows: &FeatureMatrix,
    labels: &[bool],
) -> Result<TrainedClassifier, ClassifierError> {
    spec.validate()?;
    if rows.n_rows() != labels.len() {
        return Err(ClassifierError::LabelMismatch { rows: rows.n_rows(), labels: labels.len() });
    }
    if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
        return Err(ClassifierError::SingleClassTraining);
    }
    let scaler = fit_scaler(rows)?;
    let x = design(rows, &scaler);
    let (model, converged, iterations) = match &spec.hyper {
        Hyperparams::Logistic(p) => {
            let fit = logistic::fit(&x, labels, p);
            if !fit.converged {
                log::warn!(
                    "logistic regression stopped after {} iterations with gradient norm {:.3e}",
                    fit.iterations,
                    fit.gradient_norm
                );
            }
            (Model::Linear { weights: fit.weights, bias: fit.bias }, fit.converged, fit.iterations)
        }
        Hyperparams::Svm(p) => {
            let fit = svm::fit(&x, labels, p, spec.seed);
            (Model::Linear { weights: fit.weights, bias: fit.bias }, fit.converged, fit.epochs)
        }
        Hyperparams::Forest(p) => (Model::Forest(Forest::fit(&x, labels, p, spec.seed)), true, p.n_trees),
    };
    Ok(TrainedClassifier { kind: spec.kind(), model, scaler, converged, iterations })
}

impl TrainedClassifier {
    /// Continuous scores: probability (logreg), signed margin (svm) or
    /// positive vote fraction (forest).
    pub fn score(&self, rows: &FeatureMatrix) -> Result<Vec<f64>, ClassifierError> {
        if rows.column_names != self.scaler.input_columns {
            return Err(FeatureError::ColumnMismatch {
                expected: self.scaler.input_columns.clone(),
                got: rows.column_names.clone(),
            }
            .into());
        }
        let x = design(rows, &self.scaler);
        Ok(x.iter().map(|r| self.score_scaled(r)).collect())
    }

    /// Score of an already imputed and scaled row.
    pub fn score_scaled(&self, row: &[f64]) -> f64 {
        match &self.model {
            Model::Linear { weights, bias } => {
                let z = linear(weights, *bias, row);
                match self.kind {
                    ClassifierKind::LogisticRegression => logistic::sigmoid(z),
                    _ => z,
                }
            }
            Model::Forest(f) => f.vote_fraction(row),
        }
    }

    pub fn predict(&self, rows: &FeatureMatrix) -> Result<Vec<bool>, ClassifierError> {
        let t = self.kind.threshold();
        Ok(self.score(rows)?.into_iter().map(|s| s > t).collect())
    }

    /// Hard label for a score produced by this classifier.
    pub fn label_of(&self, score: f64) -> bool {
        score > self.kind.threshold()
    }
}

fn linear(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b
}
