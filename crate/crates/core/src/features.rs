//! Brain-age-gap features.
//!
//! The brain age gap (BAG) is the estimated brain age minus chronological age.
//! Gaps are bias-corrected by regressing them on chronological age over a
//! reference set and subtracting the fitted line. Classifier inputs are built
//! from age, sex, corrected gaps, their change rate between adjacent sessions,
//! and interactions of gap/rate with age and sex.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, LabelGroup};
use crate::numeric;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("bias reference needs at least two distinct ages")]
    DegenerateReference,
    #[error("participant `{participant_id}` has two sessions at age {age}")]
    ZeroInterval { participant_id: String, age: f64 },
    #[error("unknown model `{0}` (no estimates in cohort)")]
    UnknownModel(String),
    #[error("cannot fit scaler on an empty training set")]
    EmptyTrainingSet,
    #[error("column mismatch: expected {expected:?}, got {got:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("invalid selection `{0}`")]
    InvalidSelection(String),
}

/// Brain age gap: estimated minus chronological age (years).
pub fn compute_bag(estimated: f64, chronological: f64) -> f64 {
    estimated - chronological
}

/// Linear age-bias of a model's gap: `bag ≈ slope · age + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub model_name: String,
    pub slope: f64,
    pub intercept: f64,
}

impl BiasParams {
    pub fn identity(model_name: impl Into<String>) -> Self {
        BiasParams { model_name: model_name.into(), slope: 0.0, intercept: 0.0 }
    }
}

/// OLS fit of gap on age over `(age, bag)` reference rows.
pub fn fit_bias(model_name: &str, reference_rows: &[(f64, f64)]) -> Result<BiasParams, FeatureError> {
    let ages: Vec<f64> = reference_rows.iter().map(|r| r.0).collect();
    let bags: Vec<f64> = reference_rows.iter().map(|r| r.1).collect();
    let (slope, intercept) = numeric::ols(&ages, &bags).ok_or(FeatureError::DegenerateReference)?;
    Ok(BiasParams { model_name: model_name.to_string(), slope, intercept })
}

/// Corrected gap. The corrected brain age is `age + apply_bias(..)`.
pub fn apply_bias(bag: f64, age: f64, params: &BiasParams) -> f64 {
    bag - (params.slope * age + params.intercept)
}

/// Which sessions serve as the bias-correction reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferenceSelection {
    All,
    Groups(Vec<LabelGroup>),
    Dataset(String),
}

impl ReferenceSelection {
    pub fn resolve(&self, cohort: &Cohort) -> Vec<usize> {
        (0..cohort.len())
            .filter(|&i| match self {
                ReferenceSelection::All => true,
                ReferenceSelection::Groups(g) => g.contains(&cohort.label(i).group),
                ReferenceSelection::Dataset(d) => &cohort.session(i).dataset_id == d,
            })
            .collect()
    }
}

impl Default for ReferenceSelection {
    fn default() -> Self {
        ReferenceSelection::Groups(vec![LabelGroup::CnStable])
    }
}

impl FromStr for ReferenceSelection {
    type Err = FeatureError;

    /// `all`, `dataset:<id>`, or a `+`-separated list of label groups
    /// (e.g. `CN_stable`, `CN_stable+CN_star`), optionally prefixed `group:`.
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(ReferenceSelection::All);
        }
        if let Some(d) = s.strip_prefix("dataset:") {
            return Ok(ReferenceSelection::Dataset(d.to_string()));
        }
        let g = s.strip_prefix("group:").unwrap_or(s);
        let groups = g
            .split('+')
            .map(|p| p.parse::<LabelGroup>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| FeatureError::InvalidSelection(s.to_string()))?;
        Ok(ReferenceSelection::Groups(groups))
    }
}

/// Per-model, per-session (corrected) gaps for a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct BagTable {
    bags: BTreeMap<String, Vec<Option<f64>>>,
    params: BTreeMap<String, BiasParams>,
}

impl BagTable {
    /// Raw gaps with no correction.
    pub fn uncorrected(cohort: &Cohort) -> BagTable {
        let params = cohort.models().iter().map(|m| (m.clone(), BiasParams::identity(m))).collect();
        Self::with_params(cohort, params)
    }

    /// Fits one [`BiasParams`] per model on the `reference` sessions and
    /// applies it to every session.
    pub fn fit(cohort: &Cohort, reference: &[usize]) -> Result<BagTable, FeatureError> {
        let params = fit_cohort_bias(cohort, reference)?;
        Ok(Self::with_params(cohort, params.into_iter().map(|p| (p.model_name.clone(), p)).collect()))
    }

    /// Applies the given parameters; models without parameters stay uncorrected.
    pub fn from_params(cohort: &Cohort, params: &[BiasParams]) -> BagTable {
        let mut map: BTreeMap<String, BiasParams> =
            cohort.models().iter().map(|m| (m.clone(), BiasParams::identity(m))).collect();
        for p in params {
            map.insert(p.model_name.clone(), p.clone());
        }
        Self::with_params(cohort, map)
    }

    fn with_params(cohort: &Cohort, params: BTreeMap<String, BiasParams>) -> BagTable {
        let bags = params
            .iter()
            .map(|(m, p)| {
                let col = cohort
                    .sessions()
                    .iter()
                    .map(|s| s.estimates.get(m).map(|&e| apply_bias(compute_bag(e, s.age), s.age, p)))
                    .collect();
                (m.clone(), col)
            })
            .collect();
        BagTable { bags, params }
    }

    pub fn get(&self, model: &str, session: usize) -> Option<f64> {
        self.bags.get(model).and_then(|c| c[session])
    }

    pub fn column(&self, model: &str) -> Result<&[Option<f64>], FeatureError> {
        self.bags
            .get(model)
            .map(Vec::as_slice)
            .filter(|c| c.iter().any(Option::is_some))
            .ok_or_else(|| FeatureError::UnknownModel(model.to_string()))
    }

    pub fn params(&self) -> impl Iterator<Item = &BiasParams> {
        self.params.values()
    }
}

/// Fits bias parameters for every model of the cohort on the reference sessions.
pub fn fit_cohort_bias(cohort: &Cohort, reference: &[usize]) -> Result<Vec<BiasParams>, FeatureError> {
    cohort
        .models()
        .iter()
        .map(|m| {
            let rows: Vec<(f64, f64)> = reference
                .iter()
                .filter_map(|&i| {
                    let s = cohort.session(i);
                    s.estimates.get(m).map(|&e| (s.age, compute_bag(e, s.age)))
                })
                .collect();
            fit_bias(m, &rows)
        })
        .collect()
}

/// Per-session gap change rate (years of gap per year of age) relative to
/// the same participant's immediately preceding session. `None` for first
/// sessions and where either gap is missing.
pub fn compute_bag_rate(
    cohort: &Cohort,
    bags: &BagTable,
    model: &str,
) -> Result<Vec<Option<f64>>, FeatureError> {
    let col = bags.column(model)?;
    let mut out = vec![None; cohort.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let Some(prev) = cohort.previous_session(i) else { continue };
        let dt = cohort.session(i).age - cohort.session(prev).age;
        if dt == 0.0 {
            return Err(FeatureError::ZeroInterval {
                participant_id: cohort.session(i).participant_id.clone(),
                age: cohort.session(i).age,
            });
        }
        if let (Some(cur), Some(before)) = (col[i], col[prev]) {
            *slot = Some((cur - before) / dt);
        }
    }
    Ok(out)
}

/// Model set plus rate flag; `basic` means age and sex only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub models: Vec<String>,
    #[serde(default)]
    pub include_rate: bool,
}

impl FeatureSpec {
    pub fn basic() -> Self {
        FeatureSpec { models: Vec::new(), include_rate: false }
    }

    pub fn with_models<S: Into<String>>(models: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec { models: models.into_iter().map(Into::into).collect(), include_rate: false }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.models.is_empty() {
            f.write_str("basic")?;
        } else {
            f.write_str(&self.models.join("+"))?;
        }
        if self.include_rate {
            f.write_str(":rate")?;
        }
        Ok(())
    }
}

impl FromStr for FeatureSpec {
    type Err = FeatureError;

    /// `basic`, `model`, `model_a+model_b`, each optionally suffixed `:rate`.
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let s = s.trim();
        let (body, include_rate) = match s.strip_suffix(":rate") {
            Some(b) => (b, true),
            None => (s, false),
        };
        if body.is_empty() {
            return Err(FeatureError::InvalidSelection(s.to_string()));
        }
        let models = if body == "basic" {
            Vec::new()
        } else {
            body.split('+')
                .map(|m| m.trim())
                .filter(|m| *m != "basic")
                .map(|m| {
                    if m.is_empty() {
                        Err(FeatureError::InvalidSelection(s.to_string()))
                    } else {
                        Ok(m.to_string())
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(FeatureSpec { models, include_rate })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub participant_id: String,
    pub age: f64,
}

/// Dense row-major feature table with a per-cell missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    values: Vec<f64>,
    missing: Vec<bool>,
    pub row_keys: Vec<RowKey>,
}

impl FeatureMatrix {
    /// Builds a matrix from rows; `None` cells are flagged missing.
    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<Option<f64>>], row_keys: Vec<RowKey>) -> Self {
        let p = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut missing = Vec::with_capacity(rows.len() * p);
        for r in rows {
            assert_eq!(r.len(), p, "row width must match column count");
            for v in r {
                values.push(v.unwrap_or(0.0));
                missing.push(v.is_none());
            }
        }
        FeatureMatrix { column_names, values, missing, row_keys }
    }

    /// Matrix without missing cells.
    pub fn dense(column_names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let keys = (0..rows.len())
            .map(|i| RowKey { participant_id: format!("row{i}"), age: 0.0 })
            .collect();
        let rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        Self::from_rows(column_names, &rows, keys)
    }

    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn row_missing(&self, i: usize) -> &[bool] {
        let p = self.n_cols();
        &self.missing[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n_cols() + j;
        (!self.missing[k]).then_some(self.values[k])
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let p = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut missing = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            values.extend_from_slice(self.row(r));
            missing.extend_from_slice(self.row_missing(r));
        }
        FeatureMatrix {
            column_names: self.column_names.clone(),
            values,
            missing,
            row_keys: rows.iter().map(|&r| self.row_keys[r].clone()).collect(),
        }
    }

    /// CSV with `participant_id,age` key columns followed by features; missing cells empty.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["participant_id".to_string(), "session_age".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_keys[i].participant_id.clone(), self.row_keys[i].age.to_string()];
            rec.extend((0..self.n_cols()).map(|j| self.get(i, j).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds `[age, sex]` followed, per model, by
/// `[bag, bag×age, bag×sex]` and (with `include_rate`) `[rate, rate×age, rate×sex]`.
pub fn build_feature_matrix(
    cohort: &Cohort,
    bags: &BagTable,
    rows: &[usize],
    spec: &FeatureSpec,
) -> Result<FeatureMatrix, FeatureError> {
    let mut names = vec!["age".to_string(), "sex".to_string()];
    let mut bag_cols = Vec::with_capacity(spec.models.len());
    let mut rate_cols = Vec::with_capacity(spec.models.len());
    for m in &spec.models {
        bag_cols.push(bags.column(m)?);
        names.extend([format!("bag__{m}"), format!("bag_x_age__{m}"), format!("bag_x_sex__{m}")]);
        if spec.include_rate {
            rate_cols.push(compute_bag_rate(cohort, bags, m)?);
            names.extend([format!("rate__{m}"), format!("rate_x_age__{m}"), format!("rate_x_sex__{m}")]);
        }
    }
    let mut out_rows = Vec::with_capacity(rows.len());
    let mut keys = Vec::with_capacity(rows.len());
    for &i in rows {
        let s = cohort.session(i);
        let (age, sex) = (s.age, s.sex.encode());
        let mut r = Vec::with_capacity(names.len());
        r.push(Some(age));
        r.push(Some(sex));
        for (k, col) in bag_cols.iter().enumerate() {
            let b = col[i];
            r.extend([b, b.map(|v| v * age), b.map(|v| v * sex)]);
            if spec.include_rate {
                let q = rate_cols[k][i];
                r.extend([q, q.map(|v| v * age), q.map(|v| v * sex)]);
            }
        }
        out_rows.push(r);
        keys.push(RowKey { participant_id: s.participant_id.clone(), age });
    }
    Ok(FeatureMatrix::from_rows(names, &out_rows, keys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Training-fold statistics for imputation and [-1, 1] min-max scaling.
/// Columns with no observed training values are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub input_columns: Vec<String>,
    /// Retained columns, with their index into `input_columns`.
    pub kept: Vec<(usize, ColumnScale)>,
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<ScalerParams, FeatureError> {
    if train.n_rows() == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut kept = Vec::new();
    for (j, name) in train.column_names.iter().enumerate() {
        let vals: Vec<f64> = (0..train.n_rows()).filter_map(|i| train.get(i, j)).collect();
        if vals.is_empty() {
            log::warn!("feature column `{name}` has no observed training values; dropped");
            continue;
        }
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        kept.push((j, ColumnScale { name: name.clone(), min, max, mean: numeric::mean(&vals) }));
    }
    Ok(ScalerParams { input_columns: train.column_names.clone(), kept })
}

impl ScalerParams {
    pub fn output_columns(&self) -> Vec<String> {
        self.kept.iter().map(|(_, c)| c.name.clone()).collect()
    }

    pub fn n_outputs(&self) -> usize {
        self.kept.len()
    }

    fn check(&self, m: &FeatureMatrix) -> Result<(), FeatureError> {
        if m.column_names != self.input_columns {
            return Err(FeatureError::ColumnMismatch {
                expected: self.input_columns.clone(),
                got: m.column_names.clone(),
            });
        }
        Ok(())
    }

    fn scale(c: &ColumnScale, v: f64) -> f64 {
        let span = c.max - c.min;
        if span > 0.0 {
            2.0 * (v - c.min) / span - 1.0
        } else {
            0.0
        }
    }

    /// Imputes and scales row `i` of `m` into `out` (cleared first).
    pub fn transform_row(&self, m: &FeatureMatrix, i: usize, out: &mut Vec<f64>) {
        out.clear();
        let (row, miss) = (m.row(i), m.row_missing(i));
        for (j, c) in &self.kept {
            let v = if miss[*j] { c.mean } else { row[*j] };
            out.push(Self::scale(c, v));
        }
    }

    /// Maps a scaled value of output column `k` back to the original units.
    /// Constant columns map back to their single training value.
    pub fn inverse(&self, k: usize, scaled: f64) -> f64 {
        let c = &self.kept[k].1;
        let span = c.max - c.min;
        if span > 0.0 {
            c.min + (scaled + 1.0) * span / 2.0
        } else {
            c.min
        }
    }
}

/// Imputed, scaled copy of `rows` with dropped columns removed.
pub fn apply_scaler(rows: &FeatureMatrix, params: &ScalerParams) -> Result<FeatureMatrix, FeatureError> {
    params.check(rows)?;
    let mut out = Vec::with_capacity(rows.n_rows());
    let mut buf = Vec::new();
    for i in 0..rows.n_rows() {
        params.transform_row(rows, i, &mut buf);
        out.push(buf.iter().map(|&v| Some(v)).collect::<Vec<_>>());
    }
    Ok(FeatureMatrix::from_rows(params.output_columns(), &out, rows.row_keys.clone()))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::cohort::{Diagnosis, SessionRecord, Sex};
    use proptest::prelude::*;

    #[test]
    fn bag_definition() {
        assert_eq!(compute_bag(75.0, 70.0), 5.0);
        assert_eq!(compute_bag(70.0, 70.0), 0.0);
        assert!((compute_bag(68.2, 73.1) + 4.9).abs() < 1e-12);
    }

    #[test]
    fn fit_bias_cases() {
        let zero: Vec<_> = [50.0, 60.0, 75.0].iter().map(|&a| (a, 0.0)).collect();
        let p = fit_bias("m", &zero).unwrap();
        assert_eq!((p.slope, p.intercept), (0.0, 0.0));
        // Noiseless line bag = 0.5 age - 30; closed-form OLS recovers it exactly.
        let line: Vec<_> = [50.0, 55.0, 63.0, 80.0].iter().map(|&a| (a, 0.5 * a - 30.0)).collect();
        let p = fit_bias("m", &line).unwrap();
        assert!((p.slope - 0.5).abs() < 1e-12 && (p.intercept + 30.0).abs() < 1e-10);
        let two: Vec<_> = [50.0, 90.0].iter().map(|&a| (a, 2.0)).collect();
        let p = fit_bias("m", &two).unwrap();
        assert!(p.slope.abs() < 1e-15 && (p.intercept - 2.0).abs() < 1e-12);
        assert_eq!(fit_bias("m", &[(70.0, 1.0), (70.0, 3.0)]), Err(FeatureError::DegenerateReference));
        assert_eq!(fit_bias("m", &[(70.0, 1.0)]), Err(FeatureError::DegenerateReference));
    }

    #[test]
    fn apply_bias_cases() {
        let p = BiasParams { model_name: "m".into(), slope: 0.5, intercept: -30.0 };
        assert_eq!(apply_bias(5.0, 70.0, &p), 0.0);
        let id = BiasParams::identity("m");
        assert_eq!(apply_bias(3.25, 61.0, &id), 3.25);
    }

    proptest! {
        #[test]
        fn corrected_gaps_are_flat_in_age(
            rows in prop::collection::vec((45.0f64..95.0, -15.0f64..15.0), 3..60)
        ) {
            prop_assume!(numeric::ols(&rows.iter().map(|r| r.0).collect::<Vec<_>>(), &rows.iter().map(|r| r.1).collect::<Vec<_>>()).is_some());
            let p = fit_bias("m", &rows).unwrap();
            let ages: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let res: Vec<f64> = rows.iter().map(|&(a, b)| apply_bias(b, a, &p)).collect();
            let (s, i) = numeric::ols(&ages, &res).unwrap();
            prop_assert!(s.abs() < 1e-8, "slope {s}");
            prop_assert!(i.abs() < 1e-8, "intercept {i}");
        }

        #[test]
        fn bag_antisymmetric(a in -200.0f64..200.0, b in -200.0f64..200.0) {
            prop_assert_eq!(compute_bag(a, b), -compute_bag(b, a));
        }

        #[test]
        fn scale_inverse_recovers_training_values(
            cols in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2..20), 1..5)
        ) {
            let n = cols.iter().map(Vec::len).min().unwrap();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
            let names = (0..cols.len()).map(|j| format!("c{j}")).collect();
            let m = FeatureMatrix::dense(names, &rows);
            let sp = fit_scaler(&m).unwrap();
            let scaled = apply_scaler(&m, &sp).unwrap();
            for i in 0..n {
                for k in 0..sp.n_outputs() {
                    let (j, c) = &sp.kept[k];
                    let v = scaled.get(i, k).unwrap();
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
                    if c.max > c.min {
                        prop_assert!((sp.inverse(k, v) - rows[i][*j]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    fn sess(pid: &str, age: f64, sex: Sex, est: f64) -> SessionRecord {
        SessionRecord {
            dataset_id: "D".into(),
            participant_id: pid.into(),
            age,
            sex,
            diagnosis: Diagnosis::CN,
            race: None,
            estimates: [("a".to_string(), est), ("b".to_string(), est + 1.0)].into_iter().collect(),
        }
    }

    fn toy() -> Cohort {
        Cohort::from_sessions(
            vec!["a".into(), "b".into()],
            vec![
                sess("p", 70.0, Sex::Female, 72.0),
                sess("p", 72.0, Sex::Female, 75.0),
                sess("q", 70.0, Sex::Male, 71.0),
                sess("q", 71.5, Sex::Male, 72.5),
                sess("r", 80.0, Sex::Male, 83.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bag_rate_uses_previous_session() {
        let c = toy();
        let bags = BagTable::uncorrected(&c);
        let r = compute_bag_rate(&c, &bags, "a").unwrap();
        assert_eq!(r[0], None);
        assert_eq!(r[1], Some(0.5)); // BAG 2.0 at 70 → 3.0 at 72
        assert_eq!(r[3], Some(0.0)); // BAG 1.0 at 70 → 1.0 at 71.5
        assert_eq!(r[4], None);
        assert!(matches!(compute_bag_rate(&c, &bags, "zzz"), Err(FeatureError::UnknownModel(_))));
    }

    #[test]
    fn feature_matrix_layout() {
        let c = toy();
        let bags = BagTable::uncorrected(&c);
        let all: Vec<usize> = (0..c.len()).collect();
        let m = build_feature_matrix(&c, &bags, &all, &FeatureSpec::with_models(["a"])).unwrap();
        assert_eq!(m.n_cols(), 5);
        // p@70 is female with BAG 2 → bag×sex = 0, bag×age = 140
        assert_eq!(m.row(0), &[70.0, 0.0, 2.0, 140.0, 0.0]);
        let spec = FeatureSpec { models: vec!["a".into(), "b".into()], include_rate: true };
        let m2 = build_feature_matrix(&c, &bags, &all, &spec).unwrap();
        assert_eq!(m2.n_cols(), 14);
        assert!(m2.get(0, 5).is_none() && m2.get(1, 5) == Some(0.5));
        assert_eq!(m2, build_feature_matrix(&c, &bags, &all, &spec).unwrap());
        let err = build_feature_matrix(&c, &bags, &all, &FeatureSpec::with_models(["nope"]));
        assert_eq!(err, Err(FeatureError::UnknownModel("nope".into())));
    }

    #[test]
    fn scaler_cases() {
        let train = FeatureMatrix::dense(vec!["x".into()], &[vec![0.0], vec![10.0]]);
        let sp = fit_scaler(&train).unwrap();
        let test = FeatureMatrix::dense(vec!["x".into()], &[vec![5.0], vec![-2.0]]);
        let out = apply_scaler(&test, &sp).unwrap();
        assert!(out.get(0, 0).unwrap().abs() < 1e-15);
        assert!((out.get(1, 0).unwrap() + 1.4).abs() < 1e-12);

        let keys = vec![RowKey { participant_id: "a".into(), age: 1.0 }, RowKey { participant_id: "b".into(), age: 1.0 }];
        let m = FeatureMatrix::from_rows(
            vec!["x".into(), "gone".into(), "const".into()],
            &[vec![Some(1.0), None, Some(4.0)], vec![None, None, Some(4.0)]],
            keys,
        );
        let sp = fit_scaler(&m).unwrap();
        assert_eq!(sp.output_columns(), vec!["x".to_string(), "const".to_string()]);
        let out = apply_scaler(&m, &sp).unwrap();
        assert!(!out.has_missing());
        assert_eq!(out.get(1, 0), Some(0.0)); // imputed to mean of a constant column
        assert_eq!(out.get(0, 1), Some(0.0));

        let empty = FeatureMatrix::dense(vec!["x".into()], &[]);
        assert_eq!(fit_scaler(&empty), Err(FeatureError::EmptyTrainingSet));
        let wrong = FeatureMatrix::dense(vec!["y".into()], &[vec![1.0]]);
        assert!(matches!(apply_scaler(&wrong, &fit_scaler(&train).unwrap()), Err(FeatureError::ColumnMismatch { .. })));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("basic".parse::<FeatureSpec>().unwrap(), FeatureSpec::basic());
        let s: FeatureSpec = "gm_ours+wm_nonrigid:rate".parse().unwrap();
        assert_eq!(s.models, vec!["gm_ours", "wm_nonrigid"]);
        assert!(s.include_rate);
        assert_eq!(s.to_string(), "gm_ours+wm_nonrigid:rate");
        assert_eq!("basic+wm".parse::<FeatureSpec>().unwrap().models, vec!["wm"]);
        assert!("a++b".parse::<FeatureSpec>().is_err());
        assert_eq!("all".parse::<ReferenceSelection>().unwrap(), ReferenceSelection::All);
        assert_eq!(
            "dataset:BLSA".parse::<ReferenceSelection>().unwrap(),
            ReferenceSelection::Dataset("BLSA".into())
        );
        assert_eq!(
            "CN_stable".parse::<ReferenceSelection>().unwrap(),
            ReferenceSelection::Groups(vec![LabelGroup::CnStable])
        );
    }
}
