use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::cohort::CohortError;
use crate::evaluation::EvalError;
use crate::features::FeatureError;
use crate::matching::MatchError;
use crate::simulator::SimError;
use crate::survival::SurvivalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error, wrapping the per-module errors with their module context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cohort: {0}")]
    Cohort(#[from] CohortError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("matching: {0}")]
    Matching(#[from] MatchError),
    #[error("classifiers: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("evaluation: {0}")]
    Evaluation(#[from] EvalError),
    #[error("survival: {0}")]
    Survival(#[from] SurvivalError),
    #[error("simulator: {0}")]
    Simulator(#[from] SimError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

const WRAPPERS: [&str; 5] = ["Bootstrap", "Classifier", "Feature", "Features", "Matching"];

fn feature_class(e: &FeatureError) -> ErrorClass {
    match e {
        FeatureError::UnknownModel(_) | FeatureError::InvalidSelection(_) => ErrorClass::Config,
        _ => ErrorClass::Data,
    }
}

fn classifier_class(e: &ClassifierError) -> ErrorClass {
    match e {
        ClassifierError::InvalidSpec(_) => ErrorClass::Config,
        ClassifierError::Feature(f) => feature_class(f),
        _ => ErrorClass::Data,
    }
}

fn eval_class(e: &EvalError) -> ErrorClass {
    match e {
        EvalError::InvalidSpec(_) => ErrorClass::Config,
        EvalError::Classifier(c) => classifier_class(c),
        EvalError::Features(f) => feature_class(f),
        EvalError::AllReplicatesDegenerate { .. } | EvalError::AllZeroDifferences | EvalError::FoldLeak { .. } => {
            ErrorClass::Numerical
        }
        _ => ErrorClass::Data,
    }
}

fn survival_class(e: &SurvivalError) -> ErrorClass {
    match e {
        SurvivalError::NotNested(_) | SurvivalError::InvalidWidth => ErrorClass::Config,
        SurvivalError::NoComparablePairs => ErrorClass::Numerical,
        SurvivalError::Bootstrap(b) => eval_class(b),
        _ => ErrorClass::Data,
    }
}

/// Broad failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Name of the module the error originated from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Cohort(_) => "cohort",
            Error::Features(_) => "features",
            Error::Matching(_) => "matching",
            Error::Classifier(_) => "classifiers",
            Error::Evaluation(_) => "evaluation",
            Error::Survival(_) => "survival",
            Error::Simulator(_) => "simulator",
            Error::Config(_) => "config",
            Error::Io { .. } | Error::Json(_) => "io",
        }
    }

    /// Short machine-readable error kind, e.g. `"DuplicateSession"`.
    pub fn kind(&self) -> String {
        let dbg = match self {
            Error::Cohort(e) => format!("{e:?}"),
            Error::Features(e) => format!("{e:?}"),
            Error::Matching(e) => format!("{e:?}"),
            Error::Classifier(e) => format!("{e:?}"),
            Error::Evaluation(e) => format!("{e:?}"),
            Error::Survival(e) => format!("{e:?}"),
            Error::Simulator(e) => format!("{e:?}"),
            Error::Config(_) => return "ConfigSchemaError".into(),
            Error::Io { .. } => return "IoError".into(),
            Error::Json(_) => return "JsonError".into(),
        };
        // nested errors report their innermost variant
        dbg.split(|c: char| !c.is_alphanumeric() && c != '_')
            .find(|t| !t.is_empty() && !WRAPPERS.contains(t))
            .unwrap_or("Unknown")
            .to_string()
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Simulator(_) => ErrorClass::Config,
            Error::Cohort(_) | Error::Io { .. } | Error::Json(_) | Error::Matching(_) => {
                ErrorClass::Data
            }
            Error::Features(e) => feature_class(e),
            Error::Classifier(e) => classifier_class(e),
            Error::Evaluation(e) => eval_class(e),
            Error::Survival(e) => survival_class(e),
        }
    }

    /// JSON object written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "module": self.module(),
                "message": self.to_string(),
                "exit_code": self.class().exit_code(),
            }
        })
    }
}
