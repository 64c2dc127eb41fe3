//! Declarative runs: a TOML config lists steps that execute in order and
//! write their reports into one output directory, followed by a manifest.
//!
//! ```toml
//! seed = 42
//! output_dir = "results"
//!
//! [bootstrap]
//! n_replicates = 1000
//!
//! [[steps]]
//! step = "simulate"
//! scenario = "paper-default"
//! n = 500
//!
//! [[steps]]
//! step = "classify"
//! groups = ["CN_stable", "AD"]
//! feature_sets = ["basic", "wm_nonrigid", "gm_ours"]
//! classifiers = ["logreg", "svm"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{ClassifierKind, ClassifierSpec};
use crate::cohort::{ingest_file, ColumnSchema, Cohort, LabelGroup, PREDICTION_PREFIX};
use crate::error::{Error, Result};
use crate::evaluation::{
    adjusted_paired_difference, bootstrap_predictions, global_model_windows, loocv_predictions,
    time_specific_windows, BootstrapSpec, ResampleUnit, WindowSpec,
};
use crate::features::{BagTable, FeatureSpec, ReferenceSelection};
use crate::matching::{greedy_match, GroupSelector, MatchSpec, ParticipantReuse};
use crate::report::{self, CurveSeries, Table2Row, Table3Report, WindowsReport};
use crate::seed::derive_seed;
use crate::simulator::{scenario_by_name, simulate_cohort};
use crate::survival::{build_life_table, survival_records, survival_scenarios, Scenario};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_ci")]
    pub ci_level: f64,
    #[serde(default)]
    pub resample_unit: ResampleUnit,
}

fn default_replicates() -> usize {
    1000
}

fn default_ci() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_replicates: default_replicates(), ci_level: default_ci(), resample_unit: ResampleUnit::default() }
    }
}

impl BootstrapConfig {
    pub fn spec(&self, seed: u64) -> BootstrapSpec {
        BootstrapSpec {
            n_replicates: self.n_replicates,
            ci_level: self.ci_level,
            master_seed: seed,
            resample_unit: self.resample_unit,
        }
    }
}

fn default_groups() -> Vec<String> {
    vec!["CN_stable".into(), "AD".into()]
}

fn default_logreg() -> String {
    "logreg".into()
}

fn default_mode() -> String {
    "time-specific".into()
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

fn default_reference() -> String {
    "CN_stable".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Generate a cohort; it becomes the working cohort and is saved as CSV.
    Simulate {
        #[serde(default = "paper_default")]
        scenario: String,
        n: usize,
        #[serde(default = "sim_csv")]
        output: String,
        #[serde(default)]
        truth: Option<String>,
    },
    /// Read a session table (CSV) or cohort JSON as the working cohort.
    Ingest { input: String },
    /// Refit the bias correction of every model on a reference selection.
    Bias {
        #[serde(default = "default_reference")]
        reference: String,
        #[serde(default = "bias_json")]
        output: String,
    },
    Match {
        #[serde(default = "default_groups")]
        groups: Vec<String>,
        #[serde(default = "one")]
        age_tolerance: f64,
        #[serde(default)]
        time_tolerance: Option<f64>,
        #[serde(default = "matched_json")]
        output: String,
    },
    /// Table-2 style grid of feature sets × classifiers under LOOCV.
    Classify {
        #[serde(default = "default_groups")]
        groups: Vec<String>,
        feature_sets: Vec<String>,
        classifiers: Vec<String>,
        #[serde(default = "table2_json")]
        output: String,
        #[serde(default = "table2_csv")]
        csv: String,
    },
    Predict {
        #[serde(default = "default_mode")]
        mode: String,
        feature_sets: Vec<String>,
        #[serde(default = "default_logreg")]
        classifier: String,
        #[serde(default = "one")]
        window_length: f64,
        #[serde(default = "half")]
        stride: f64,
        #[serde(default = "windows_json")]
        output: String,
        #[serde(default = "curve_svg")]
        svg: String,
    },
    /// Adjusted paired BAG differences between two models.
    Paired {
        model_a: String,
        model_b: String,
        #[serde(default = "four_groups")]
        groups: Vec<String>,
        #[serde(default = "paired_json")]
        output: String,
    },
    Survival {
        scenarios: Vec<String>,
        add: String,
        #[serde(default = "table3_json")]
        output: String,
    },
    Lifetable {
        #[serde(default = "two")]
        width: f64,
        #[serde(default = "lifetable_csv")]
        output: String,
    },
}

fn paper_default() -> String {
    "paper-default".into()
}
fn sim_csv() -> String {
    "sim.csv".into()
}
fn bias_json() -> String {
    "bias.json".into()
}
fn matched_json() -> String {
    "matched.json".into()
}
fn table2_json() -> String {
    "table2.json".into()
}
fn table2_csv() -> String {
    "table2.csv".into()
}
fn windows_json() -> String {
    "windows.json".into()
}
fn curve_svg() -> String {
    "curve.svg".into()
}
fn paired_json() -> String {
    "paired.json".into()
}
fn table3_json() -> String {
    "table3.json".into()
}
fn lifetable_csv() -> String {
    "lifetable.csv".into()
}
fn four_groups() -> Vec<String> {
    ["CN_stable", "CN_star", "MCI", "AD"].map(String::from).to_vec()
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::Simulate { .. } => "simulate",
            Step::Ingest { .. } => "ingest",
            Step::Bias { .. } => "bias",
            Step::Match { .. } => "match",
            Step::Classify { .. } => "classify",
            Step::Predict { .. } => "predict",
            Step::Paired { .. } => "paired",
            Step::Survival { .. } => "survival",
            Step::Lifetable { .. } => "lifetable",
        }
    }

    /// Model names the step reads from the cohort.
    fn referenced_models(&self) -> Result<Vec<String>> {
        let from_sets = |sets: &[String]| -> Result<Vec<String>> {
            let mut out = Vec::new();
            for s in sets {
                out.extend(s.parse::<FeatureSpec>()?.models);
            }
            Ok(out)
        };
        Ok(match self {
            Step::Classify { feature_sets, .. } | Step::Predict { feature_sets, .. } => from_sets(feature_sets)?,
            Step::Paired { model_a, model_b, .. } => vec![model_a.clone(), model_b.clone()],
            Step::Survival { scenarios, add, .. } => scenarios
                .iter()
                .map(|s| Scenario::parse(s))
                .flat_map(|s| s.covariates.into_iter().skip(2))
                .chain(std::iter::once(add.clone()))
                .collect(),
            _ => Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    pub steps: Vec<Step>,
}

fn default_output_dir() -> String {
    "results".into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config("config lists no steps".into()));
        }
        if !matches!(self.steps[0], Step::Simulate { .. } | Step::Ingest { .. }) {
            return Err(Error::Config("the first step must be `simulate` or `ingest`".into()));
        }
        self.bootstrap.spec(self.seed).validate()?;
        for s in &self.steps {
            s.referenced_models()?;
            match s {
                Step::Classify { classifiers, groups, .. } => {
                    for c in classifiers {
                        c.parse::<ClassifierKind>()?;
                    }
                    parse_groups(groups)?;
                }
                Step::Predict { mode, classifier, window_length, stride, .. } => {
                    classifier.parse::<ClassifierKind>()?;
                    if mode != "global" && mode != "time-specific" {
                        return Err(Error::Config(format!("unknown predict mode `{mode}`")));
                    }
                    WindowSpec { length: *window_length, stride: *stride }.validate()?;
                }
                Step::Match { groups, .. } | Step::Paired { groups, .. } => {
                    parse_groups(groups)?;
                }
                Step::Bias { reference, .. } => {
                    reference.parse::<ReferenceSelection>()?;
                }
                Step::Simulate { scenario, .. } => {
                    scenario_by_name(scenario)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fails with a schema error naming the first model column the cohort lacks.
    pub fn check_models(&self, cohort: &Cohort) -> Result<()> {
        for s in &self.steps {
            for m in s.referenced_models()? {
                if !cohort.models().contains(&m) {
                    return Err(Error::Config(format!(
                        "step `{}` references model `{m}` but the input has no `{PREDICTION_PREFIX}{m}` column",
                        s.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_groups(groups: &[String]) -> Result<Vec<GroupSelector>> {
    groups.iter().map(|g| g.parse::<GroupSelector>().map_err(|e| Error::Config(e.to_string()))).collect()
}

/// Reads a cohort from JSON (`.json`) or an ingestion CSV (anything else).
pub fn load_cohort(path: &Path) -> Result<Cohort> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        report::read_json(path)
    } else {
        Ok(ingest_file(path, &ColumnSchema::default())?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Classification grid over feature sets and classifiers. Every cell uses the
/// same matched set, classifier seed `seed` and bootstrap seed `seed`.
pub fn classification_table(
    cohort: &Cohort,
    bags: &BagTable,
    spec: &MatchSpec,
    feature_sets: &[FeatureSpec],
    classifiers: &[ClassifierKind],
    bspec: &BootstrapSpec,
    seed: u64,
) -> Result<Vec<Table2Row>> {
    let matched = greedy_match(cohort, spec)?;
    let mut rows = Vec::new();
    for fs in feature_sets {
        for &kind in classifiers {
            let preds = loocv_predictions(cohort, bags, &matched, fs, &ClassifierSpec::new(kind, seed))?;
            let (auc, accuracy) = bootstrap_predictions(&preds, bspec)?;
            rows.push(Table2Row {
                feature_set: fs.name(),
                classifier: kind.to_string(),
                groups: spec.groups.iter().map(|g| g.to_string()).collect(),
                n_tuples: matched.len(),
                accuracy,
                auc,
            });
        }
    }
    Ok(rows)
}

/// AUC-vs-time windows for each feature set, CN_stable vs CN*.
#[allow(clippy::too_many_arguments)]
pub fn window_report(
    cohort: &Cohort,
    bags: &BagTable,
    mode: &str,
    feature_sets: &[FeatureSpec],
    kind: ClassifierKind,
    wspec: &WindowSpec,
    bspec: &BootstrapSpec,
    seed: u64,
) -> Result<WindowsReport> {
    let mspec = MatchSpec::of_groups(&[LabelGroup::CnStable, LabelGroup::CnStar]);
    let clf = ClassifierSpec::new(kind, seed);
    let mut series = Vec::new();
    for fs in feature_sets {
        let windows = match mode {
            "global" => {
                let set = greedy_match(cohort, &mspec.clone().with_reuse(ParticipantReuse::PerSession))?;
                global_model_windows(cohort, bags, &set, fs, &clf, wspec, bspec)?
            }
            "time-specific" => time_specific_windows(cohort, bags, fs, &clf, &mspec, wspec, bspec)?,
            other => return Err(Error::Config(format!("unknown predict mode `{other}`"))),
        };
        series.push(CurveSeries { feature_set: fs.name(), windows });
    }
    let score_kind = match kind {
        ClassifierKind::LogisticRegression => "probability",
        ClassifierKind::LinearSvm => "margin",
        ClassifierKind::RandomForest => "vote_fraction",
    };
    Ok(WindowsReport {
        mode: mode.to_string(),
        classifier: kind.to_string(),
        window_length: wspec.length,
        stride: wspec.stride,
        score_kind: score_kind.into(),
        series,
    })
}

/// Survival comparison rows; raw brain-age estimates serve as covariates.
pub fn survival_table(cohort: &Cohort, scenarios: &[String], added: &str, bspec: &BootstrapSpec) -> Result<Table3Report> {
    let records = survival_records(cohort, None)?;
    let scenarios: Vec<Scenario> = scenarios.iter().map(|s| Scenario::parse(s)).collect();
    let rows = survival_scenarios(&records, &scenarios, added, bspec)?;
    Ok(Table3Report { added: added.to_string(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBody {
    pub version: String,
    pub config: RunConfig,
    /// Input files and their sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output files (relative to the output directory) and their sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub body: ManifestBody,
    /// sha256 of the body's JSON; wall time is excluded so reruns agree.
    pub manifest_hash: String,
    pub wall_time_seconds: f64,
}

struct State {
    cohort: Option<Cohort>,
    bags: Option<BagTable>,
}

impl State {
    fn cohort(&self) -> &Cohort {
        self.cohort.as_ref().expect("validated: first step loads a cohort")
    }

    fn bags(&mut self) -> Result<&BagTable> {
        if self.bags.is_none() {
            let c = self.cohort();
            self.bags = Some(BagTable::fit(c, &ReferenceSelection::default().resolve(c))?);
        }
        Ok(self.bags.as_ref().expect("set above"))
    }
}

/// Runs every step in order; paths in the config are relative to `base`.
/// Returns the manifest, which is also written as `manifest.json`.
pub fn run_pipeline(config: &RunConfig, base: &Path) -> Result<Manifest> {
    config.validate()?;
    let start = Instant::now();
    let out_dir = base.join(&config.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut outputs: BTreeMap<String, String> = BTreeMap::new();
    let mut inputs: BTreeMap<String, String> = BTreeMap::new();
    let mut emit = |name: &str, text: &str| -> Result<()> {
        report::write_text(&out_dir.join(name), text)?;
        outputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(())
    };
    let mut st = State { cohort: None, bags: None };
    let mut summary = String::new();

    for (i, step) in config.steps.iter().enumerate() {
        log::info!("step {} ({})", i + 1, step.name());
        let seed = derive_seed(config.seed, i as u64);
        let bspec = config.bootstrap.spec(seed);
        match step {
            Step::Simulate { scenario, n, output, truth } => {
                let cfg = scenario_by_name(scenario)?.with_size(*n, seed);
                let (cohort, t) = simulate_cohort(&cfg)?;
                let mut buf = Vec::new();
                cohort.write_csv(&mut buf, &ColumnSchema::default())?;
                emit(output, std::str::from_utf8(&buf).expect("csv output is UTF-8"))?;
                if let Some(path) = truth {
                    emit(path, &report::to_json_string(&t)?)?;
                }
                config.check_models(&cohort)?;
                st = State { cohort: Some(cohort), bags: None };
            }
            Step::Ingest { input } => {
                let path = base.join(input);
                inputs.insert(input.clone(), sha256_file(&path)?);
                let cohort = load_cohort(&path)?;
                config.check_models(&cohort)?;
                st = State { cohort: Some(cohort), bags: None };
            }
            Step::Bias { reference, output } => {
                let sel: ReferenceSelection = reference.parse()?;
                let c = st.cohort();
                let bags = BagTable::fit(c, &sel.resolve(c))?;
                let params: Vec<_> = bags.params().cloned().collect();
                emit(output, &report::to_json_string(&params)?)?;
                st.bags = Some(bags);
            }
            Step::Match { groups, age_tolerance, time_tolerance, output } => {
                let mut spec = MatchSpec::new(parse_groups(groups)?).with_age_tolerance(*age_tolerance);
                if time_tolerance.is_some() {
                    spec = spec.with_time_tolerance(*time_tolerance);
                }
                let set = greedy_match(st.cohort(), &spec)?;
                let audit = crate::matching::audit_match(&set)?;
                emit(output, &report::to_json_string(&serde_json::json!({ "matched": set, "audit": audit }))?)?;
            }
            Step::Classify { groups, feature_sets, classifiers, output, csv } => {
                let spec = MatchSpec::new(parse_groups(groups)?);
                let fs = feature_sets.iter().map(|f| f.parse()).collect::<Result<Vec<FeatureSpec>, _>>()?;
                let kinds = classifiers.iter().map(|c| c.parse()).collect::<Result<Vec<ClassifierKind>, _>>()?;
                st.bags()?;
                let rows =
                    classification_table(st.cohort(), st.bags.as_ref().unwrap(), &spec, &fs, &kinds, &bspec, seed)?;
                emit(output, &report::to_json_string(&rows)?)?;
                emit(csv, &report::table2_csv_string(&rows)?)?;
                summary.push_str(&report::table2_text(&rows));
                summary.push('\n');
            }
            Step::Predict { mode, feature_sets, classifier, window_length, stride, output, svg } => {
                let fs = feature_sets.iter().map(|f| f.parse()).collect::<Result<Vec<FeatureSpec>, _>>()?;
                let wspec = WindowSpec { length: *window_length, stride: *stride };
                st.bags()?;
                let rep = window_report(
                    st.cohort(),
                    st.bags.as_ref().unwrap(),
                    mode,
                    &fs,
                    classifier.parse()?,
                    &wspec,
                    &bspec,
                    seed,
                )?;
                emit(output, &report::to_json_string(&rep)?)?;
                emit(svg, &report::auc_curve_svg(&rep.series))?;
            }
            Step::Paired { model_a, model_b, groups, output } => {
                let spec = MatchSpec::new(parse_groups(groups)?);
                st.bags()?;
                let set = greedy_match(st.cohort(), &spec)?;
                let rep = adjusted_paired_difference(&set, st.bags.as_ref().unwrap(), model_a, model_b)?;
                emit(output, &report::to_json_string(&rep)?)?;
                summary.push_str(&report::paired_text(&rep));
                summary.push('\n');
            }
            Step::Survival { scenarios, add, output } => {
                let rep = survival_table(st.cohort(), scenarios, add, &bspec)?;
                emit(output, &report::to_json_string(&rep)?)?;
                summary.push_str(&report::table3_text(&rep));
                summary.push('\n');
            }
            Step::Lifetable { width, output } => {
                let records = survival_records(st.cohort(), None)?;
                let table = build_life_table(&records, *width)?;
                let mut buf = Vec::new();
                table.write_csv(&mut buf).map_err(|e| Error::Config(format!("csv: {e}")))?;
                emit(output, std::str::from_utf8(&buf).expect("csv output is UTF-8"))?;
            }
        }
    }
    if !summary.is_empty() {
        emit("summary.txt", &summary)?;
    }
    let body = ManifestBody { version: VERSION.to_string(), config: config.clone(), inputs, outputs };
    let manifest_hash = sha256_hex(serde_json::to_string(&body)?.as_bytes());
    let manifest = Manifest { body, manifest_hash, wall_time_seconds: start.elapsed().as_secs_f64() };
    report::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads a TOML config file and runs it relative to the file's directory.
pub fn run_config_file(path: &Path, seed_override: Option<u64>) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_pipeline(&cfg, &base)
}
