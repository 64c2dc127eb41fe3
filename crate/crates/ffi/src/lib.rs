//! C ABI over `bageval-core`.
//!
//! Conventions:
//! - every fallible function returns a [`BagevalStatus`]; results go through
//!   out-pointers, which are left untouched on failure;
//! - on failure the thread-local last error holds a message and a JSON
//!   object (same shape as the CLI's stderr output);
//! - objects are opaque handles released with their `_free` function;
//!   strings returned by the library are released with [`bageval_string_free`];
//! - panics never cross the boundary and surface as `BAGEVAL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bageval::classifiers::ClassifierKind;
use bageval::cohort::{ingest_sessions, ColumnSchema};
use bageval::error::ErrorClass;
use bageval::evaluation::{auc, wilcoxon_signed_rank, BootstrapSpec};
use bageval::features::{BagTable, FeatureSpec, ReferenceSelection};
use bageval::matching::{GroupSelector, MatchSpec};
use bageval::pipeline::{classification_table, load_cohort, run_config_file, survival_table};
use bageval::simulator::{scenario_by_name, simulate_cohort};
use bageval::survival::{build_life_table, harrell_c, survival_records};
use bageval::{Cohort, Error};

/// Result code of every fallible call. The config, data and numerical codes
/// equal the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagevalStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numerical = 4,
    NullPointer = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

/// A validated, labeled cohort.
pub struct BagevalCohort {
    inner: Cohort,
}

struct LastError {
    message: CString,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn c_string(s: String) -> CString {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed")
}

fn set_error(status: BagevalStatus, message: String, json: serde_json::Value) -> BagevalStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(LastError { message: c_string(message), json: c_string(json.to_string()) }));
    status
}

fn plain_error(status: BagevalStatus, kind: &str, message: &str) -> BagevalStatus {
    let json = serde_json::json!({
        "error": { "kind": kind, "module": "ffi", "message": message, "exit_code": status as i32 }
    });
    set_error(status, message.to_string(), json)
}

fn from_error(e: Error) -> BagevalStatus {
    let status = match e.class() {
        ErrorClass::Config => BagevalStatus::Config,
        ErrorClass::Data => BagevalStatus::Data,
        ErrorClass::Numerical => BagevalStatus::Numerical,
    };
    set_error(status, e.to_string(), e.to_json())
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl<E: Into<Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Lib(e.into())
    }
}

/// Runs `f`, converting errors and panics into a status and the last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BagevalStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BagevalStatus::Ok,
        Ok(Err(Fail::Null(arg))) => plain_error(BagevalStatus::NullPointer, "NullPointer", &format!("`{arg}` is NULL")),
        Ok(Err(Fail::Utf8(arg))) => {
            plain_error(BagevalStatus::InvalidUtf8, "InvalidUtf8", &format!("`{arg}` is not valid UTF-8"))
        }
        Ok(Err(Fail::Lib(e))) => from_error(e),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            plain_error(BagevalStatus::Panic, "Panic", &msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn cohort_arg<'a>(p: *const BagevalCohort) -> Result<&'a Cohort, Fail> {
    p.as_ref().map(|c| &c.inner).ok_or(Fail::Null("cohort"))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    out.write(c_string(s).into_raw());
    Ok(())
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
}

fn config_error(msg: String) -> Fail {
    Fail::Lib(Error::Config(msg))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bageval_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn bageval_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |l| l.message.as_ptr()))
}

/// JSON error object of the last failed call on this thread, or NULL.
#[no_mangle]
pub extern "C" fn bageval_last_error_json() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |l| l.json.as_ptr()))
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bageval_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a session CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_from_csv_path(path: *const c_char, out: *mut *mut BagevalCohort) -> BagevalStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let c = load_cohort(Path::new(p))?;
        write_out(out, Box::into_raw(Box::new(BagevalCohort { inner: c })), "out")
    })
}

/// Parses a session table held in memory (CSV text with header).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_from_csv_text(text: *const c_char, out: *mut *mut BagevalCohort) -> BagevalStatus {
    guard(|| {
        let t = str_arg(text, "text")?;
        let c = ingest_sessions(t.as_bytes(), &ColumnSchema::default())?;
        write_out(out, Box::into_raw(Box::new(BagevalCohort { inner: c })), "out")
    })
}

/// Simulates a cohort from a named scenario (`paper-default`, `frailty-linked`).
///
/// # Safety
/// `scenario` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_simulate(
    scenario: *const c_char,
    n_participants: usize,
    seed: u64,
    out: *mut *mut BagevalCohort,
) -> BagevalStatus {
    guard(|| {
        let cfg = scenario_by_name(str_arg(scenario, "scenario")?)?.with_size(n_participants, seed);
        let (c, _) = simulate_cohort(&cfg)?;
        write_out(out, Box::into_raw(Box::new(BagevalCohort { inner: c })), "out")
    })
}

/// Releases a cohort. NULL is ignored.
///
/// # Safety
/// `cohort` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_free(cohort: *mut BagevalCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Number of sessions; 0 for NULL.
///
/// # Safety
/// `cohort` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_n_sessions(cohort: *const BagevalCohort) -> usize {
    cohort.as_ref().map_or(0, |c| c.inner.len())
}

/// Number of participants; 0 for NULL.
///
/// # Safety
/// `cohort` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_n_participants(cohort: *const BagevalCohort) -> usize {
    cohort.as_ref().map_or(0, |c| c.inner.n_participants())
}

/// Writes the cohort as a session CSV.
///
/// # Safety
/// `cohort` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bageval_cohort_write_csv(cohort: *const BagevalCohort, path: *const c_char) -> BagevalStatus {
    guard(|| {
        let c = cohort_arg(cohort)?;
        c.write_csv_file(Path::new(str_arg(path, "path")?), &ColumnSchema::default())?;
        Ok(())
    })
}

/// Mann–Whitney AUC; `labels` holds 0 / nonzero.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> BagevalStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l: Vec<bool> = slice_arg(labels, n, "labels")?.iter().map(|&v| v != 0).collect();
        write_out(out, auc(s, &l)?, "out")
    })
}

/// Two-sided Wilcoxon signed-rank test (exact for small samples).
///
/// # Safety
/// `diffs` must point to `n` elements; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_wilcoxon(
    diffs: *const f64,
    n: usize,
    out_statistic: *mut f64,
    out_p_value: *mut f64,
) -> BagevalStatus {
    guard(|| {
        let r = wilcoxon_signed_rank(slice_arg(diffs, n, "diffs")?)?;
        if out_statistic.is_null() || out_p_value.is_null() {
            return Err(Fail::Null("out"));
        }
        write_out(out_statistic, r.statistic, "out_statistic")?;
        write_out(out_p_value, r.p_value, "out_p_value")
    })
}

/// Harrell's concordance index; `event` holds 0 / nonzero.
///
/// # Safety
/// The three arrays must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_harrell_c(
    time: *const f64,
    event: *const u8,
    risk: *const f64,
    n: usize,
    out: *mut f64,
) -> BagevalStatus {
    guard(|| {
        let t = slice_arg(time, n, "time")?;
        let e: Vec<bool> = slice_arg(event, n, "event")?.iter().map(|&v| v != 0).collect();
        let r = slice_arg(risk, n, "risk")?;
        write_out(out, harrell_c(t, &e, r).map_err(Error::from)?, "out")
    })
}

/// LOOCV classification with bootstrapped accuracy and AUC, as a JSON array
/// with one row per classifier. `groups` and `classifiers` are
/// comma-separated (e.g. `"CN_stable,AD"`, `"logreg,svm"`).
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_classify_json(
    cohort: *const BagevalCohort,
    groups: *const c_char,
    feature_set: *const c_char,
    classifiers: *const c_char,
    n_bootstrap: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> BagevalStatus {
    guard(|| {
        let c = cohort_arg(cohort)?;
        let sel = split_list(str_arg(groups, "groups")?)
            .iter()
            .map(|g| g.parse::<GroupSelector>().map_err(|e| config_error(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let fs: FeatureSpec = str_arg(feature_set, "feature_set")?.parse()?;
        let kinds = split_list(str_arg(classifiers, "classifiers")?)
            .iter()
            .map(|k| k.parse::<ClassifierKind>())
            .collect::<Result<Vec<_>, _>>()?;
        let bags = BagTable::fit(c, &ReferenceSelection::default().resolve(c))?;
        let bspec = BootstrapSpec { n_replicates: n_bootstrap, ..BootstrapSpec::with_seed(seed) };
        let rows = classification_table(c, &bags, &MatchSpec::new(sel), &[fs], &kinds, &bspec, seed)?;
        write_string(out_json, serde_json::to_string(&rows)?)
    })
}

/// Cox comparison rows (C-index, AIC, likelihood-ratio test) as JSON.
/// `scenarios` is comma-separated, e.g. `"basic,gm_ours"`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_survival_json(
    cohort: *const BagevalCohort,
    scenarios: *const c_char,
    added: *const c_char,
    n_bootstrap: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> BagevalStatus {
    guard(|| {
        let c = cohort_arg(cohort)?;
        let sc = split_list(str_arg(scenarios, "scenarios")?);
        let add = str_arg(added, "added")?;
        if !c.models().iter().any(|m| m == add) {
            return Err(config_error(format!("cohort has no model `{add}`")));
        }
        let bspec = BootstrapSpec { n_replicates: n_bootstrap, ..BootstrapSpec::with_seed(seed) };
        let rep = survival_table(c, &sc, add, &bspec)?;
        write_string(out_json, serde_json::to_string(&rep)?)
    })
}

/// Life table as CSV text
/// (`interval_start,interval_end,n_at_risk,n_events,n_censored`).
///
/// # Safety
/// `cohort` must be a live handle; `out_csv` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_life_table_csv(
    cohort: *const BagevalCohort,
    width: f64,
    out_csv: *mut *mut c_char,
) -> BagevalStatus {
    guard(|| {
        let c = cohort_arg(cohort)?;
        let table = build_life_table(&survival_records(c, None)?, width)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf).map_err(|e| config_error(format!("csv: {e}")))?;
        write_string(out_csv, String::from_utf8(buf).expect("csv output is UTF-8"))
    })
}

/// Runs a TOML pipeline config; writes the manifest JSON to `out_manifest`
/// (may be NULL).
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_manifest` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn bageval_run_config(config_path: *const c_char, out_manifest: *mut *mut c_char) -> BagevalStatus {
    guard(|| {
        let m = run_config_file(Path::new(str_arg(config_path, "config_path")?), None)?;
        if !out_manifest.is_null() {
            write_string(out_manifest, serde_json::to_string(&m)?)?;
        }
        Ok(())
    })
}
