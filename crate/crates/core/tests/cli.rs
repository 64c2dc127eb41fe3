use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bageval(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bageval"))
        .args(args)
        .current_dir(dir)
        .env_remove("BAGEVAL_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_ingest_match_classify_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bageval(&["simulate", "--n", "200", "--seed", "42", "--out", "sim.csv", "--truth", "truth.json"], d));
    let header = std::fs::read_to_string(d.join("sim.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "dataset,participant_id,age,sex,diagnosis,pred__gm_ours,pred__wm_affine,pred__wm_nonrigid");
    assert_eq!(json(&d.join("truth.json"))["participants"].as_array().unwrap().len(), 200);

    ok(&bageval(&["ingest", "--input", "sim.csv", "--out", "cohort.json"], d));
    ok(&bageval(&["match", "--cohort", "cohort.json", "--groups", "CN_stable,AD", "--out", "matched.json"], d));
    let m = json(&d.join("matched.json"));
    assert!(m["audit"]["max_age_gap"].as_f64().unwrap() <= 1.0);

    let classify = |out: &str| {
        bageval(
            &["classify", "--matched", "matched.json", "--features", "wm_nonrigid", "--bootstrap", "200", "--seed", "7", "--out", out],
            d,
        )
    };
    ok(&classify("r1.json"));
    ok(&classify("r2.json"));
    let r1 = std::fs::read(d.join("r1.json")).unwrap();
    assert_eq!(r1, std::fs::read(d.join("r2.json")).unwrap());
    let v = json(&d.join("r1.json"));
    for k in ["mean", "ci_low", "ci_high"] {
        assert!(v["auc"][k].is_number(), "auc.{k}");
    }
    assert_eq!(v["classifier"], "logreg");

    let s = bageval(&["summarize", "--table2", "r1.json", "r2.json"], d);
    ok(&s);
    let text = String::from_utf8_lossy(&s.stdout);
    assert_eq!(text.matches("wm_nonrigid").count(), 2, "{text}");
}

#[test]
fn seed_comes_from_the_environment_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |env: Option<&str>, extra: &[&str], out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_bageval"));
        c.current_dir(d).env_remove("BAGEVAL_SEED").args(["simulate", "--n", "30", "--out", out]).args(extra);
        if let Some(s) = env {
            c.env("BAGEVAL_SEED", s);
        }
        c.output().unwrap()
    };
    ok(&run(Some("5"), &[], "a.csv"));
    ok(&run(None, &["--seed", "5"], "b.csv"));
    ok(&run(Some("6"), &["--seed", "5"], "c.csv"));
    ok(&run(Some("6"), &[], "d.csv"));
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv"), read("c.csv"));
    assert_ne!(read("a.csv"), read("d.csv"));

    let missing = run(None, &[], "e.csv");
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_json(&missing)["error"]["kind"], "ConfigSchemaError");
}

#[test]
fn error_paths_exit_with_class_codes_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("dup.csv"), "participant_id,age,sex,diagnosis,pred__m\np,70,F,CN,71\np,70,F,CN,72\n").unwrap();
    let out = bageval(&["ingest", "--input", "dup.csv", "--out", "c.json"], d);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "DuplicateSession");
    assert_eq!(e["error"]["module"], "cohort");

    let out = bageval(&["ingest", "--input", "absent.csv", "--out", "c.json"], d);
    assert_eq!(out.status.code(), Some(3));

    let out = bageval(&["simulate", "--scenario", "nope", "--seed", "1", "--out", "x.csv"], d);
    assert_eq!(out.status.code(), Some(2));

    let out = bageval(&["frobnicate"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "UsageError");

    ok(&bageval(&["simulate", "--n", "60", "--seed", "1", "--out", "s.csv"], d));
    let out = bageval(&["lifetable", "--cohort", "s.csv", "--width", "0", "--out", "lt.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "InvalidWidth");

    let out = bageval(&["survival", "--cohort", "s.csv", "--add", "wm_missing", "--seed", "1", "--out", "t3.json"], d);
    assert_eq!(out.status.code(), Some(2));

    assert!(bageval(&["--help"], d).status.success());
}

#[test]
fn lifetable_survival_and_predict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bageval(&["simulate", "--n", "300", "--seed", "3", "--out", "s.csv"], d));
    ok(&bageval(&["lifetable", "--cohort", "s.csv", "--width", "2", "--out", "lt.csv"], d));
    let lt = std::fs::read_to_string(d.join("lt.csv")).unwrap();
    assert_eq!(lt.lines().next().unwrap(), "interval_start,interval_end,n_at_risk,n_events,n_censored");

    ok(&bageval(
        &["survival", "--cohort", "s.csv", "--scenarios", "basic,gm_ours", "--add", "wm_nonrigid", "--bootstrap", "50", "--seed", "2", "--out", "t3.json"],
        d,
    ));
    let t3 = json(&d.join("t3.json"));
    assert_eq!(t3["rows"].as_array().unwrap().len(), 2);
    assert!(t3["rows"][0]["c_index_with"]["ci_low"].is_number());

    ok(&bageval(
        &[
            "predict", "--cohort", "s.csv", "--features", "wm_nonrigid;gm_ours", "--bootstrap", "50", "--seed", "2",
            "--out", "w.json", "--svg", "curve.svg",
        ],
        d,
    ));
    let w = json(&d.join("w.json"));
    assert_eq!(w["series"].as_array().unwrap().len(), 2);
    let svg = std::fs::read_to_string(d.join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("wm_nonrigid"));

    ok(&bageval(&["bias", "fit", "--cohort", "s.csv", "--model", "gm_ours", "--out", "b.json"], d));
    assert!((json(&d.join("b.json"))["slope"].as_f64().unwrap() + 0.3).abs() < 0.1);
    ok(&bageval(&["features", "--cohort", "s.csv", "--models", "gm_ours", "--rate", "--out", "f.csv"], d));
    let f = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert!(f.lines().next().unwrap().starts_with("participant_id,session_age,age,sex,"));
}

fn write_config(dir: &Path, models: &str) {
    let cfg = format!(
        r#"seed = 11
output_dir = "out"
[bootstrap]
n_replicates = 100

[[steps]]
step = "simulate"
n = 300

[[steps]]
step = "classify"
feature_sets = ["basic", "{models}"]
classifiers = ["logreg"]

[[steps]]
step = "predict"
feature_sets = ["{models}"]

[[steps]]
step = "survival"
scenarios = ["basic"]
add = "wm_nonrigid"

[[steps]]
step = "lifetable"
"#
    );
    std::fs::write(dir.join("run.toml"), cfg).unwrap();
}

#[test]
fn pipeline_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "wm_nonrigid");
    ok(&bageval(&["run", "--config", "run.toml"], d));
    let out = d.join("out");
    for f in ["table2.json", "table2.csv", "windows.json", "table3.json", "lifetable.csv", "curve.svg", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let m1 = json(&out.join("manifest.json"));
    let first: Vec<(String, Vec<u8>)> = ["table2.json", "windows.json", "table3.json", "lifetable.csv", "curve.svg"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
        .collect();
    ok(&bageval(&["run", "--config", "run.toml"], d));
    let m2 = json(&out.join("manifest.json"));
    assert_eq!(m1["manifest_hash"], m2["manifest_hash"]);
    assert_eq!(m1["outputs"], m2["outputs"]);
    for (f, bytes) in first {
        assert_eq!(bytes, std::fs::read(out.join(&f)).unwrap(), "{f} differs");
    }
    assert!(m1["wall_time_seconds"].is_number());
    assert_eq!(m1["config"]["seed"], 11);

    let s = bageval(&["summarize", "--table2", "out/table2.json"], d);
    ok(&s);
    assert!(String::from_utf8_lossy(&s.stdout).contains("logreg"));
}

#[test]
fn pipeline_names_a_missing_model_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, "gm_tsan");
    let out = bageval(&["run", "--config", "run.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "ConfigSchemaError");
    assert!(e["error"]["message"].as_str().unwrap().contains("pred__gm_tsan"), "{e}");
}

#[test]
fn pipeline_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[[steps]]\nstep = \"simulate\"\nn = 10\n").unwrap();
    let out = bageval(&["run", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("seed"));
}
