use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bageval::classifiers::{ClassifierKind, ClassifierSpec};
use bageval::cohort::{ingest_file, ColumnSchema};
use bageval::evaluation::{bootstrap_predictions, loocv_predictions, BootstrapSpec, WindowSpec};
use bageval::features::{build_feature_matrix, fit_cohort_bias, BagTable, FeatureSpec, ReferenceSelection};
use bageval::matching::{audit_match, greedy_match, GroupSelector, MatchSpec};
use bageval::pipeline::{load_cohort, run_config_file, survival_table, window_report};
use bageval::report::{self, Table2Row};
use bageval::simulator::{scenario_by_name, simulate_cohort};
use bageval::survival::{build_life_table, survival_records};
use bageval::{Cohort, Error, MatchedSet, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "bageval", version, about = "Brain-age gap evaluation over longitudinal cohorts")]
struct Cli {
    /// Worker threads for bootstrap, LOOCV and forests (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides BAGEVAL_SEED.
    #[arg(long, global = true, env = "BAGEVAL_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort as an ingestion CSV.
    Simulate {
        #[arg(long, default_value = "paper-default")]
        scenario: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the planted ground truth as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Validate a session CSV and write the labeled cohort as JSON.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bias-correction parameters.
    Bias {
        #[command(subcommand)]
        action: BiasAction,
    },
    /// Per-session feature table (age, sex and bias-corrected BAGs).
    Features {
        #[arg(long)]
        cohort: PathBuf,
        /// Comma-separated model names.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long)]
        rate: bool,
        #[arg(long, default_value = "CN_stable")]
        r#ref: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy sex/age matching across groups.
    Match {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "CN_stable,AD")]
        groups: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        age_tol: f64,
        /// Time-to-event tolerance for CN_stable/CN_star pairs (default 1.0 when both are present).
        #[arg(long)]
        time_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// LOOCV classification over a matched set.
    Classify {
        /// Output of `bageval match`.
        #[arg(long)]
        matched: PathBuf,
        /// Feature set, e.g. `basic`, `wm_nonrigid`, `wm_nonrigid+gm_ours:rate`.
        #[arg(long, default_value = "basic")]
        features: String,
        #[arg(long, default_value = "logreg")]
        classifier: String,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC over sliding windows of time before the first MCI diagnosis.
    Predict {
        #[arg(long, default_value = "time-specific")]
        mode: String,
        #[arg(long)]
        cohort: PathBuf,
        /// One curve per feature set; repeat the flag or separate with `;`.
        #[arg(long, value_delimiter = ';', required = true)]
        features: Vec<String>,
        #[arg(long, default_value = "logreg")]
        classifier: String,
        #[arg(long, default_value_t = 1.0)]
        window_length: f64,
        #[arg(long, default_value_t = 0.5)]
        stride: f64,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Cox comparisons with and without an added model's brain age.
    Survival {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "basic")]
        scenarios: Vec<String>,
        #[arg(long)]
        add: String,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Events and censorings per time interval.
    Lifetable {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a TOML pipeline config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print classification results as a text table. Accepts pipeline
    /// `table2.json` files and `bageval classify` outputs.
    Summarize {
        #[arg(long, required = true, num_args = 1..)]
        table2: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BiasAction {
    Fit(BiasFit),
}

#[derive(Args)]
struct BiasFit {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    model: Option<String>,
    /// `CN_stable`, `CN_stable+CN_star`, `all` or `dataset:<id>`.
    #[arg(long, default_value = "CN_stable")]
    r#ref: String,
    #[arg(long)]
    out: PathBuf,
}

/// Self-contained output of `match`, so `classify` needs no second input.
#[derive(Serialize, Deserialize)]
struct MatchedFile {
    cohort: Cohort,
    matched: MatchedSet,
    audit: bageval::matching::MatchAudit,
}

/// A table-2 file or a single `classify` output (extra fields ignored).
#[derive(Deserialize)]
#[serde(untagged)]
enum Table2Input {
    Rows(Vec<Table2Row>),
    Row(Table2Row),
}

#[derive(Serialize)]
struct ClassifyResult {
    #[serde(flatten)]
    row: Table2Row,
    seed: u64,
    predictions: Vec<bageval::evaluation::Prediction>,
}

fn need_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::Config("a seed is required: pass --seed or set BAGEVAL_SEED".into()))
}

fn corrected_bags(cohort: &Cohort) -> Result<BagTable> {
    Ok(BagTable::fit(cohort, &ReferenceSelection::default().resolve(cohort))?)
}

fn bspec(n: usize, seed: u64) -> BootstrapSpec {
    BootstrapSpec { n_replicates: n, ..BootstrapSpec::with_seed(seed) }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { scenario, n, out, truth } => {
            let cfg = scenario_by_name(&scenario)?.with_size(n, need_seed(seed)?);
            let (cohort, t) = simulate_cohort(&cfg)?;
            cohort.write_csv_file(&out, &ColumnSchema::default())?;
            if let Some(p) = truth {
                report::write_json(&p, &t)?;
            }
        }
        Command::Ingest { input, out } => {
            let cohort = ingest_file(&input, &ColumnSchema::default())?;
            report::write_json(&out, &cohort)?;
        }
        Command::Bias { action: BiasAction::Fit(a) } => {
            let cohort = load_cohort(&a.cohort)?;
            let sel: ReferenceSelection = a.r#ref.parse()?;
            let params = fit_cohort_bias(&cohort, &sel.resolve(&cohort))?;
            match a.model {
                Some(m) => {
                    let p = params
                        .into_iter()
                        .find(|p| p.model_name == m)
                        .ok_or_else(|| Error::Config(format!("cohort has no model `{m}`")))?;
                    report::write_json(&a.out, &p)?;
                }
                None => report::write_json(&a.out, &params)?,
            }
        }
        Command::Features { cohort, models, rate, r#ref, out } => {
            let cohort = load_cohort(&cohort)?;
            let sel: ReferenceSelection = r#ref.parse()?;
            let bags = BagTable::fit(&cohort, &sel.resolve(&cohort))?;
            let spec = FeatureSpec { models, include_rate: rate };
            let rows: Vec<usize> = (0..cohort.len()).collect();
            let fm = build_feature_matrix(&cohort, &bags, &rows, &spec)?;
            write_features_csv(&fm, &out)?;
        }
        Command::Match { cohort, groups, age_tol, time_tol, out } => {
            let cohort = load_cohort(&cohort)?;
            let groups = groups
                .iter()
                .map(|g| g.parse::<GroupSelector>().map_err(|e| Error::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let mut spec = MatchSpec::new(groups).with_age_tolerance(age_tol);
            if time_tol.is_some() {
                spec = spec.with_time_tolerance(time_tol);
            }
            let matched = greedy_match(&cohort, &spec)?;
            let audit = audit_match(&matched)?;
            report::write_json(&out, &MatchedFile { cohort, matched, audit })?;
        }
        Command::Classify { matched, features, classifier, bootstrap, out } => {
            let seed = need_seed(seed)?;
            let m: MatchedFile = report::read_json(&matched)?;
            let fs: FeatureSpec = features.parse()?;
            let kind: ClassifierKind = classifier.parse()?;
            let bags = corrected_bags(&m.cohort)?;
            let preds = loocv_predictions(&m.cohort, &bags, &m.matched, &fs, &ClassifierSpec::new(kind, seed))?;
            let (auc, accuracy) = bootstrap_predictions(&preds, &bspec(bootstrap, seed))?;
            let row = Table2Row {
                feature_set: fs.name(),
                classifier: kind.to_string(),
                groups: m.matched.spec.groups.iter().map(|g| g.to_string()).collect(),
                n_tuples: m.matched.len(),
                accuracy,
                auc,
            };
            report::write_json(&out, &ClassifyResult { row, seed, predictions: preds })?;
        }
        Command::Predict { mode, cohort, features, classifier, window_length, stride, bootstrap, out, svg } => {
            let seed = need_seed(seed)?;
            let cohort = load_cohort(&cohort)?;
            let fs = features.iter().map(|f| f.parse()).collect::<std::result::Result<Vec<FeatureSpec>, _>>()?;
            let bags = corrected_bags(&cohort)?;
            let wspec = WindowSpec { length: window_length, stride };
            let rep =
                window_report(&cohort, &bags, &mode, &fs, classifier.parse()?, &wspec, &bspec(bootstrap, seed), seed)?;
            report::write_json(&out, &rep)?;
            if let Some(p) = svg {
                report::write_text(&p, &report::auc_curve_svg(&rep.series))?;
            }
        }
        Command::Survival { cohort, scenarios, add, bootstrap, out } => {
            let seed = need_seed(seed)?;
            let cohort = load_cohort(&cohort)?;
            if !cohort.models().contains(&add) {
                return Err(Error::Config(format!("cohort has no model `{add}`")));
            }
            let rep = survival_table(&cohort, &scenarios, &add, &bspec(bootstrap, seed))?;
            report::write_json(&out, &rep)?;
            print!("{}", report::table3_text(&rep));
        }
        Command::Lifetable { cohort, width, out } => {
            let cohort = load_cohort(&cohort)?;
            let table = build_life_table(&survival_records(&cohort, None)?, width)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf).map_err(|e| Error::Config(format!("csv: {e}")))?;
            report::write_text(&out, std::str::from_utf8(&buf).expect("csv output is UTF-8"))?;
        }
        Command::Run { config } => {
            let m = run_config_file(&config, seed)?;
            println!("{}", serde_json::json!({ "manifest_hash": m.manifest_hash, "outputs": m.body.outputs.len() }));
        }
        Command::Summarize { table2 } => {
            let mut rows = Vec::new();
            for path in &table2 {
                match report::read_json::<Table2Input>(path)? {
                    Table2Input::Rows(r) => rows.extend(r),
                    Table2Input::Row(r) => rows.push(r),
                }
            }
            print!("{}", report::table2_text(&rows));
        }
    }
    Ok(())
}

fn write_features_csv(fm: &bageval::FeatureMatrix, out: &Path) -> Result<()> {
    let mut buf = Vec::new();
    fm.write_csv(&mut buf).map_err(|e| Error::Config(format!("csv: {e}")))?;
    report::write_text(out, std::str::from_utf8(&buf).expect("csv output is UTF-8"))
}

fn fail(value: serde_json::Value, code: u8) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{value}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let value = serde_json::json!({
                "error": { "kind": "UsageError", "module": "cli", "message": msg.trim_end(), "exit_code": 2 }
            });
            return fail(value, 2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(Error::Config(format!("thread pool: {e}")).to_json(), 2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.to_json(), e.class().exit_code() as u8),
    }
}
