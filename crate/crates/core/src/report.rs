//! JSON, CSV, SVG and plain-text renderings of evaluation results.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{MetricSummary, PairedDifferenceReport, WindowResult};
use crate::survival::ScenarioRow;

/// One cell of a classification table: a feature set under one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub feature_set: String,
    pub classifier: String,
    pub groups: Vec<String>,
    pub n_tuples: usize,
    pub accuracy: MetricSummary,
    pub auc: MetricSummary,
}

pub const TABLE2_COLUMNS: [&str; 8] =
    ["feature_set", "classifier", "accuracy_mean", "accuracy_lo", "accuracy_hi", "auc_mean", "auc_lo", "auc_hi"];

/// AUC-vs-time results of one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub feature_set: String,
    pub windows: Vec<WindowResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowsReport {
    pub mode: String,
    pub classifier: String,
    pub window_length: f64,
    pub stride: f64,
    /// Scores are probabilities for logreg, margins for svm and vote fractions for forest.
    pub score_kind: String,
    pub series: Vec<CurveSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Report {
    pub added: String,
    pub rows: Vec<ScenarioRow>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Shortest round-trip representation, so CSV values parse back exactly.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_table2_csv<W: Write>(rows: &[Table2Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    out.write_record(TABLE2_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.feature_set.clone(),
            r.classifier.clone(),
            num(r.accuracy.mean),
            num(r.accuracy.ci_low),
            num(r.accuracy.ci_high),
            num(r.auc.mean),
            num(r.auc.ci_low),
            num(r.auc.ci_high),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("csv", e))
}

pub fn table2_csv_string(rows: &[Table2Row]) -> Result<String> {
    let mut buf = Vec::new();
    write_table2_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn pad(s: &str, w: usize) -> String {
    format!("{s:<w$}")
}

/// Fixed-width text table of accuracy and AUC, `mean (lo, hi)` per cell.
pub fn table2_text(rows: &[Table2Row]) -> String {
    let w0 = rows.iter().map(|r| r.feature_set.len()).max().unwrap_or(0).max("features".len());
    let mut s = format!("{}  {}  {:<20}  {}\n", pad("features", w0), pad("classifier", 10), "accuracy", "AUC");
    for r in rows {
        let _ = writeln!(
            s,
            "{}  {}  {:<20}  {}",
            pad(&r.feature_set, w0),
            pad(&r.classifier, 10),
            r.accuracy.to_string(),
            r.auc
        );
    }
    s
}

pub fn table3_text(report: &Table3Report) -> String {
    let w0 = report.rows.iter().map(|r| r.scenario.len()).max().unwrap_or(0).max("scenario".len());
    let mut s = format!(
        "{}  {:<20}  {:<20}  {:>10}  {:>10}  {:>8}  {:>9}\n",
        pad("scenario", w0),
        "C w/o",
        format!("C with {}", report.added),
        "AIC w/o",
        "AIC with",
        "chi2",
        "p"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{}  {:<20}  {:<20}  {:>10.1}  {:>10.1}  {:>8.2}  {:>9.2e}",
            pad(&r.scenario, w0),
            r.c_index_without.to_string(),
            r.c_index_with.to_string(),
            r.aic_without,
            r.aic_with,
            r.chi_squared,
            r.p_value
        );
    }
    s
}

pub fn paired_text(report: &PairedDifferenceReport) -> String {
    let mut s = format!(
        "{} − {} (CN_stable mean difference {:+.2})\n",
        report.model_a, report.model_b, report.cn_stable_mean
    );
    for g in &report.groups {
        let _ = writeln!(s, "{:<10} n={:<5} adjusted {:+.2}  p={:.2e}", g.group, g.n, g.adjusted_mean, g.wilcoxon.p_value);
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// AUC against time to MCI: one line per feature set with its bootstrap band
/// and the number of pairs above each point. Time runs right to left toward
/// the diagnosis, as years before the first MCI session.
pub fn auc_curve_svg(series: &[CurveSeries]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (60.0, 170.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let t_max = series
        .iter()
        .flat_map(|s| s.windows.iter().map(|r| r.window_end))
        .fold(1.0f64, f64::max)
        .ceil();
    let x = |t: f64| left + pw * (1.0 - t / t_max);
    let y = |a: f64| top + ph * (1.0 - a.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    // axes
    let _ = writeln!(
        s,
        r#"<g id="axes" stroke="black" fill="none"><line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}"/></g>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for k in 0..=10 {
        let a = k as f64 / 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{left}" y2="{:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{a:.1}</text>"#,
            left - 4.0,
            y(a),
            y(a),
            left - 6.0,
            y(a) + 4.0
        );
    }
    let step = if t_max > 10.0 { 2.0 } else { 1.0 };
    let mut t = 0.0;
    while t <= t_max + 1e-9 {
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            x(t),
            top + ph,
            x(t),
            top + ph + 4.0,
            x(t),
            top + ph + 16.0
        );
        t += step;
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        y(0.5),
        left + pw,
        y(0.5)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Years before first MCI diagnosis</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">AUC</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="series" data-feature-set="{}">"#, escape(&ser.feature_set));
        if !ser.windows.is_empty() {
            let band: Vec<String> = ser
                .windows
                .iter()
                .map(|r| format!("{:.1},{:.1}", x(r.window_center), y(r.auc.ci_high)))
                .chain(ser.windows.iter().rev().map(|r| format!("{:.1},{:.1}", x(r.window_center), y(r.auc.ci_low))))
                .collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> =
                ser.windows.iter().map(|r| format!("{:.1},{:.1}", x(r.window_center), y(r.auc.mean))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
            for r in &ser.windows {
                let (cx, cy) = (x(r.window_center), y(r.auc.mean));
                let _ = writeln!(
                    s,
                    r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{color}"/><text class="n" x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="9" fill="{color}">{}</text>"#,
                    cy - 7.0 - 10.0 * i as f64,
                    r.n_pairs
                );
            }
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.feature_set)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
