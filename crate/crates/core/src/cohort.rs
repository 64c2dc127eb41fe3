//! Longitudinal cohort data model, CSV ingestion and trajectory labeling.
//!
//! A [`Cohort`] holds imaging sessions sorted by `(participant_id, age)`. Every
//! session carries a [`TrajectoryLabel`] derived from the participant's whole
//! diagnosis history: CN sessions of participants who are diagnosed MCI at a
//! later session become `CN_star`, the remaining CN sessions are `CN_stable`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column prefix marking a brain-age estimate column, e.g. `pred__wm_nonrigid`.
pub const PREDICTION_PREFIX: &str = "pred__";

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("missing required column `{column}`")]
    MissingColumn { column: String },
    #[error("no `{PREDICTION_PREFIX}<model>` estimate column in header")]
    NoModelColumns,
    #[error("row {row}: duplicate session for participant `{participant_id}` at age {age}")]
    DuplicateSession { row: usize, participant_id: String, age: f64 },
    #[error("row {row}: age `{value}` is not a finite positive number")]
    NonFiniteAge { row: usize, value: String },
    #[error("row {row}: unknown diagnosis label `{value}`")]
    UnknownDiagnosisLabel { row: usize, value: String },
    #[error("row {row}: unknown sex `{value}` (expected F or M)")]
    UnknownSex { row: usize, value: String },
    #[error("row {row}: empty participant id")]
    EmptyParticipant { row: usize },
    #[error("row {row}: estimate `{value}` in column `{column}` is not a finite number")]
    InvalidEstimate { row: usize, column: String, value: String },
    #[error("row {row}: session has no brain-age estimates")]
    NoEstimates { row: usize },
    #[error("no participant qualifies for the requested baseline groups")]
    EmptySelection,
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl Sex {
    /// Numeric encoding used as a model feature: female = 0, male = 1.
    pub fn encode(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }
}

impl FromStr for Sex {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "F" | "f" => Ok(Sex::Female),
            "M" | "m" => Ok(Sex::Male),
            _ => Err(()),
        }
    }
}

/// Session-level clinical diagnosis as recorded at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    MCI,
    AD,
}

impl Diagnosis {
    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::CN => "CN",
            Diagnosis::MCI => "MCI",
            Diagnosis::AD => "AD",
        }
    }
}

impl FromStr for Diagnosis {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "CN" => Ok(Diagnosis::CN),
            "MCI" => Ok(Diagnosis::MCI),
            "AD" => Ok(Diagnosis::AD),
            _ => Err(()),
        }
    }
}

/// Derived trajectory group of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelGroup {
    #[serde(rename = "CN_stable")]
    CnStable,
    #[serde(rename = "CN_star")]
    CnStar,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "AD")]
    Ad,
}

impl LabelGroup {
    pub const ALL: [LabelGroup; 4] =
        [LabelGroup::CnStable, LabelGroup::CnStar, LabelGroup::Mci, LabelGroup::Ad];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelGroup::CnStable => "CN_stable",
            LabelGroup::CnStar => "CN_star",
            LabelGroup::Mci => "MCI",
            LabelGroup::Ad => "AD",
        }
    }
}

impl fmt::Display for LabelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "CN_stable" | "CN" => Ok(LabelGroup::CnStable),
            "CN_star" | "CN*" => Ok(LabelGroup::CnStar),
            "MCI" => Ok(LabelGroup::Mci),
            "AD" => Ok(LabelGroup::Ad),
            other => Err(format!("unknown label group `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLabel {
    pub group: LabelGroup,
    /// Years from this session to the participant's first MCI session at or
    /// after it.
    pub time_to_first_mci: Option<f64>,
    /// Years from this session to the participant's last CN session; CN only.
    pub time_to_last_cn: Option<f64>,
}

impl TrajectoryLabel {
    /// Time-to-event horizon used for matching CN against CN* data points:
    /// time to first MCI for CN*, time to last CN for stable CN.
    pub fn time_to_event(&self) -> Option<f64> {
        match self.group {
            LabelGroup::CnStar => self.time_to_first_mci,
            LabelGroup::CnStable => self.time_to_last_cn,
            _ => None,
        }
    }
}

/// One imaging session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub dataset_id: String,
    pub participant_id: String,
    /// Chronological age at scan, in fractional years. Sessions are keyed by it.
    pub age: f64,
    pub sex: Sex,
    pub diagnosis: Diagnosis,
    /// Optional metadata; never used as a model feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race: Option<String>,
    /// Estimated brain age (years) keyed by model name.
    pub estimates: BTreeMap<String, f64>,
}

/// Validated, labeled longitudinal cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CohortData", into = "CohortData")]
pub struct Cohort {
    models: Vec<String>,
    sessions: Vec<SessionRecord>,
    labels: Vec<TrajectoryLabel>,
    spans: Vec<Range<usize>>,
}

#[derive(Serialize, Deserialize)]
struct CohortData {
    models: Vec<String>,
    sessions: Vec<SessionRecord>,
    #[serde(default)]
    labels: Vec<TrajectoryLabel>,
}

impl TryFrom<CohortData> for Cohort {
    type Error = CohortError;

    fn try_from(d: CohortData) -> Result<Self, CohortError> {
        Cohort::from_sessions(d.models, d.sessions)
    }
}

impl From<Cohort> for CohortData {
    fn from(c: Cohort) -> Self {
        CohortData { models: c.models, sessions: c.sessions, labels: c.labels }
    }
}

impl Cohort {
    /// Validates sessions, sorts them per participant by age and labels them.
    /// Row indices in errors refer to positions in `sessions` (1-based).
    pub fn from_sessions(
        models: Vec<String>,
        mut sessions: Vec<SessionRecord>,
    ) -> Result<Self, CohortError> {
        if models.is_empty() {
            return Err(CohortError::NoModelColumns);
        }
        let mut seen = HashSet::with_capacity(sessions.len());
        for (i, s) in sessions.iter().enumerate() {
            let row = i + 1;
            if s.participant_id.is_empty() {
                return Err(CohortError::EmptyParticipant { row });
            }
            if !(s.age.is_finite() && s.age > 0.0) {
                return Err(CohortError::NonFiniteAge { row, value: s.age.to_string() });
            }
            if s.estimates.is_empty() {
                return Err(CohortError::NoEstimates { row });
            }
            for (model, v) in &s.estimates {
                if !v.is_finite() {
                    return Err(CohortError::InvalidEstimate {
                        row,
                        column: format!("{PREDICTION_PREFIX}{model}"),
                        value: v.to_string(),
                    });
                }
            }
            if !seen.insert((s.participant_id.clone(), s.age.to_bits())) {
                return Err(CohortError::DuplicateSession {
                    row,
                    participant_id: s.participant_id.clone(),
                    age: s.age,
                });
            }
        }
        sessions.sort_by(|a, b| {
            a.participant_id.cmp(&b.participant_id).then(a.age.total_cmp(&b.age))
        });
        let spans = participant_spans(&sessions);
        let labels = compute_labels(&sessions, &spans);
        Ok(Cohort { models, sessions, labels, spans })
    }

    /// Model names in column order.
    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn session(&self, idx: usize) -> &SessionRecord {
        &self.sessions[idx]
    }

    pub fn labels(&self) -> &[TrajectoryLabel] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &TrajectoryLabel {
        &self.labels[idx]
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Contiguous session-index ranges, one per participant, in participant order.
    pub fn participant_spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub fn n_participants(&self) -> usize {
        self.spans.len()
    }

    /// Index of the session immediately preceding `idx` for the same participant.
    pub fn previous_session(&self, idx: usize) -> Option<usize> {
        if idx == 0 {
            return None;
        }
        (self.sessions[idx - 1].participant_id == self.sessions[idx].participant_id)
            .then_some(idx - 1)
    }

    /// Recomputes trajectory labels. Labels are a pure function of the
    /// sessions, so this is idempotent.
    pub fn label_trajectories(mut self) -> Cohort {
        self.labels = compute_labels(&self.sessions, &self.spans);
        self
    }

    /// Earliest session of each participant whose baseline label group is in
    /// `groups`, as session indices.
    pub fn select_baselines(&self, groups: &[LabelGroup]) -> Result<Vec<usize>, CohortError> {
        let wanted: BTreeSet<LabelGroup> = groups.iter().copied().collect();
        let out: Vec<usize> = self
            .spans
            .iter()
            .map(|span| span.start)
            .filter(|&i| wanted.contains(&self.labels[i].group))
            .collect();
        if out.is_empty() {
            return Err(CohortError::EmptySelection);
        }
        Ok(out)
    }

    /// Writes the cohort in the ingestion CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &ColumnSchema) -> Result<(), CohortError> {
        let mut w = csv::Writer::from_writer(writer);
        let with_race = self.sessions.iter().any(|s| s.race.is_some());
        let mut header = vec![
            schema.dataset.clone(),
            schema.participant_id.clone(),
            schema.age.clone(),
            schema.sex.clone(),
            schema.diagnosis.clone(),
        ];
        if with_race {
            header.push(schema.race.clone());
        }
        header.extend(self.models.iter().map(|m| format!("{}{m}", schema.prediction_prefix)));
        w.write_record(&header)?;
        for s in &self.sessions {
            let mut rec = vec![
                s.dataset_id.clone(),
                s.participant_id.clone(),
                s.age.to_string(),
                s.sex.as_str().to_string(),
                s.diagnosis.as_str().to_string(),
            ];
            if with_race {
                rec.push(s.race.clone().unwrap_or_default());
            }
            rec.extend(
                self.models
                    .iter()
                    .map(|m| s.estimates.get(m).map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path, schema: &ColumnSchema) -> Result<(), CohortError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f), schema)
    }
}

fn participant_spans(sessions: &[SessionRecord]) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=sessions.len() {
        if i == sessions.len() || sessions[i].participant_id != sessions[start].participant_id {
            if i > start {
                spans.push(start..i);
            }
            start = i;
        }
    }
    spans
}

fn compute_labels(sessions: &[SessionRecord], spans: &[Range<usize>]) -> Vec<TrajectoryLabel> {
    let mut labels = Vec::with_capacity(sessions.len());
    for span in spans {
        let ss = &sessions[span.clone()];
        let last_cn_age = ss.iter().rev().find(|s| s.diagnosis == Diagnosis::CN).map(|s| s.age);
        for (k, s) in ss.iter().enumerate() {
            let first_mci_from_here = ss[k..]
                .iter()
                .find(|t| t.diagnosis == Diagnosis::MCI)
                .map(|t| t.age - s.age);
            let label = match s.diagnosis {
                Diagnosis::CN => {
                    let ttl = last_cn_age.map(|a| a - s.age);
                    // MCI strictly later, since this session itself is CN.
                    let group = if first_mci_from_here.is_some() {
                        LabelGroup::CnStar
                    } else {
                        LabelGroup::CnStable
                    };
                    TrajectoryLabel {
                        group,
                        time_to_first_mci: first_mci_from_here,
                        time_to_last_cn: ttl,
                    }
                }
                Diagnosis::MCI => TrajectoryLabel {
                    group: LabelGroup::Mci,
                    time_to_first_mci: first_mci_from_here,
                    time_to_last_cn: None,
                },
                Diagnosis::AD => TrajectoryLabel {
                    group: LabelGroup::Ad,
                    time_to_first_mci: first_mci_from_here,
                    time_to_last_cn: None,
                },
            };
            labels.push(label);
        }
    }
    labels
}

/// Maps canonical field names onto header names of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub dataset: String,
    pub participant_id: String,
    pub age: String,
    pub sex: String,
    pub diagnosis: String,
    pub race: String,
    pub prediction_prefix: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            dataset: "dataset".into(),
            participant_id: "participant_id".into(),
            age: "age".into(),
            sex: "sex".into(),
            diagnosis: "diagnosis".into(),
            race: "race".into(),
            prediction_prefix: PREDICTION_PREFIX.into(),
        }
    }
}

/// Reads and validates a session table. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn ingest_sessions<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Cohort, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| CohortError::MissingColumn { column: name.to_string() })
    };
    let c_pid = require(&schema.participant_id)?;
    let c_age = require(&schema.age)?;
    let c_sex = require(&schema.sex)?;
    let c_dx = require(&schema.diagnosis)?;
    let c_ds = find(&schema.dataset);
    let c_race = find(&schema.race);
    let model_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_prefix(schema.prediction_prefix.as_str())
                .filter(|m| !m.is_empty())
                .map(|m| (i, m.to_string()))
        })
        .collect();
    if model_cols.is_empty() {
        return Err(CohortError::NoModelColumns);
    }

    let mut sessions = Vec::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let participant_id = get(c_pid).to_string();
        if participant_id.is_empty() {
            return Err(CohortError::EmptyParticipant { row });
        }
        let age_raw = get(c_age);
        let age = age_raw
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite() && *a > 0.0)
            .ok_or_else(|| CohortError::NonFiniteAge { row, value: age_raw.to_string() })?;
        let sex = get(c_sex)
            .parse::<Sex>()
            .map_err(|_| CohortError::UnknownSex { row, value: get(c_sex).to_string() })?;
        let diagnosis = get(c_dx).parse::<Diagnosis>().map_err(|_| {
            CohortError::UnknownDiagnosisLabel { row, value: get(c_dx).to_string() }
        })?;
        if !seen.insert((participant_id.clone(), age.to_bits())) {
            return Err(CohortError::DuplicateSession { row, participant_id, age });
        }
        let mut estimates = BTreeMap::new();
        for (c, model) in &model_cols {
            let raw = get(*c);
            if raw.is_empty() {
                continue;
            }
            let v = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CohortError::InvalidEstimate {
                    row,
                    column: header[*c].to_string(),
                    value: raw.to_string(),
                }
            })?;
            estimates.insert(model.clone(), v);
        }
        if estimates.is_empty() {
            return Err(CohortError::NoEstimates { row });
        }
        sessions.push(SessionRecord {
            dataset_id: c_ds.map(|c| get(c).to_string()).unwrap_or_default(),
            participant_id,
            age,
            sex,
            diagnosis,
            race: c_race.map(|c| get(c).to_string()).filter(|r| !r.is_empty()),
            estimates,
        });
    }
    Cohort::from_sessions(model_cols.into_iter().map(|(_, m)| m).collect(), sessions)
}

pub fn ingest_file(path: &Path, schema: &ColumnSchema) -> Result<Cohort, CohortError> {
    let f = std::fs::File::open(path)?;
    ingest_sessions(std::io::BufReader::new(f), schema)
}
