//! Greedy construction of sex-, age- and time-to-event-matched tuples.
//!
//! The group with the fewest eligible participants is the anchor group. Anchor
//! sessions are visited in ascending `(time to event, age, participant id)`
//! order; for each, every other group contributes the closest-in-age unused
//! session of the same sex within the age tolerance of the anchor. When both
//! stable-CN and CN* groups take part, their members must also agree on time
//! to event (time to last CN vs. time to first MCI) within the time tolerance.
//! An anchor session without a full tuple is skipped; the participant's other
//! sessions stay eligible.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, LabelGroup, Sex};

/// Slack applied to tolerance comparisons so decimal ages such as
/// 70.3 vs 71.3 count as exactly one year apart.
const TOL_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("invalid match spec: {0}")]
    InvalidSpec(String),
    #[error("group `{0}` has no eligible sessions")]
    EmptyGroup(String),
    #[error("no matched tuples could be formed")]
    NoMatches,
    #[error("tuple {tuple}: {reason}")]
    InvariantViolation { tuple: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Hash, Eq, Serialize, Deserialize)]
pub struct GroupSelector {
    pub group: LabelGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl GroupSelector {
    pub fn new(group: LabelGroup) -> Self {
        GroupSelector { group, dataset: None }
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.dataset {
            Some(d) => write!(f, "{}@{d}", self.group),
            None => write!(f, "{}", self.group),
        }
    }
}

impl FromStr for GroupSelector {
    type Err = MatchError;

    /// `GROUP` or `GROUP@dataset`.
    fn from_str(s: &str) -> Result<Self, MatchError> {
        let (g, d) = match s.split_once('@') {
            Some((g, d)) => (g, Some(d.to_string())),
            None => (s, None),
        };
        let group = g.parse::<LabelGroup>().map_err(MatchError::InvalidSpec)?;
        Ok(GroupSelector { group, dataset: d })
    }
}

/// How often a participant may appear in a matched set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantReuse {
    /// One data point per participant across the whole set.
    #[default]
    OncePerParticipant,
    /// Every anchor session may form a tuple; each session is used once and
    /// every partner participant is tied to a single anchor participant.
    /// Used by the global transition-prediction model.
    PerSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub groups: Vec<GroupSelector>,
    pub age_tolerance: f64,
    pub time_tolerance: Option<f64>,
    #[serde(default)]
    pub reuse: ParticipantReuse,
}

impl MatchSpec {
    /// Default tolerances: 1 year on age, and 1 year on time to event when
    /// both stable-CN and CN* groups are present (disabled otherwise).
    pub fn new(groups: Vec<GroupSelector>) -> Self {
        let has = |g| groups.iter().any(|s: &GroupSelector| s.group == g);
        let time_tolerance =
            (has(LabelGroup::CnStable) && has(LabelGroup::CnStar)).then_some(1.0);
        MatchSpec { groups, age_tolerance: 1.0, time_tolerance, reuse: ParticipantReuse::default() }
    }

    pub fn of_groups(groups: &[LabelGroup]) -> Self {
        Self::new(groups.iter().map(|&g| GroupSelector::new(g)).collect())
    }

    pub fn with_age_tolerance(mut self, tol: f64) -> Self {
        self.age_tolerance = tol;
        self
    }

    pub fn with_time_tolerance(mut self, tol: Option<f64>) -> Self {
        self.time_tolerance = tol;
        self
    }

    pub fn with_reuse(mut self, reuse: ParticipantReuse) -> Self {
        self.reuse = reuse;
        self
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if self.groups.len() < 2 {
            return Err(MatchError::InvalidSpec("at least two groups are required".into()));
        }
        if !(self.age_tolerance > 0.0 && self.age_tolerance.is_finite()) {
            return Err(MatchError::InvalidSpec("age tolerance must be positive".into()));
        }
        if let Some(t) = self.time_tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(MatchError::InvalidSpec("time tolerance must be positive".into()));
            }
        }
        let mut seen = HashSet::new();
        for g in &self.groups {
            if !seen.insert(g) {
                return Err(MatchError::InvalidSpec(format!("group `{g}` listed twice")));
            }
        }
        Ok(())
    }

    /// Index of the group whose members are time-paired with group `g`.
    fn time_partner(&self, g: usize) -> Option<usize> {
        self.time_tolerance?;
        let want = match self.groups[g].group {
            LabelGroup::CnStable => LabelGroup::CnStar,
            LabelGroup::CnStar => LabelGroup::CnStable,
            _ => return None,
        };
        self.groups.iter().position(|s| s.group == want)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMember {
    /// Index into `MatchSpec::groups`.
    pub group_index: usize,
    /// Session index into the cohort the set was built from.
    pub session: usize,
    pub participant_id: String,
    pub age: f64,
    pub sex: Sex,
    pub time_to_event: Option<f64>,
}

/// One member per group, ordered as `MatchSpec::groups`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTuple {
    pub members: Vec<MatchMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedSet {
    pub spec: MatchSpec,
    pub anchor_group: usize,
    pub tuples: Vec<MatchTuple>,
}

impl MatchedSet {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn anchor(&self, t: usize) -> &MatchMember {
        &self.tuples[t].members[self.anchor_group]
    }

    pub fn n_participants(&self) -> usize {
        self.tuples
            .iter()
            .flat_map(|t| t.members.iter().map(|m| m.participant_id.as_str()))
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Clone, Copy)]
struct Candidate<'a> {
    session: usize,
    pid: &'a str,
    age: f64,
    sex: Sex,
    tte: Option<f64>,
}

fn eligible<'a>(cohort: &'a Cohort, sel: &GroupSelector) -> Vec<Candidate<'a>> {
    (0..cohort.len())
        .filter(|&i| {
            cohort.label(i).group == sel.group
                && sel.dataset.as_ref().is_none_or(|d| &cohort.session(i).dataset_id == d)
        })
        .map(|i| {
            let s = cohort.session(i);
            Candidate {
                session: i,
                pid: &s.participant_id,
                age: s.age,
                sex: s.sex,
                tte: cohort.label(i).time_to_event(),
            }
        })
        .collect()
}

/// Greedy matching; see the module docs for the exact selection rule.
pub fn greedy_match(cohort: &Cohort, spec: &MatchSpec) -> Result<MatchedSet, MatchError> {
    greedy_match_filtered(cohort, spec, &|_, _| true)
}

/// As [`greedy_match`], with `keep(group_index, session)` further restricting
/// each group's eligible sessions (used for time-window subsets).
pub fn greedy_match_filtered(
    cohort: &Cohort,
    spec: &MatchSpec,
    keep: &dyn Fn(usize, usize) -> bool,
) -> Result<MatchedSet, MatchError> {
    spec.validate()?;
    let k = spec.groups.len();
    let pools: Vec<Vec<Candidate>> = spec
        .groups
        .iter()
        .enumerate()
        .map(|(g, sel)| eligible(cohort, sel).into_iter().filter(|c| keep(g, c.session)).collect())
        .collect();
    for (g, pool) in spec.groups.iter().zip(&pools) {
        if pool.is_empty() {
            return Err(MatchError::EmptyGroup(g.to_string()));
        }
    }
    let n_participants: Vec<usize> =
        pools.iter().map(|p| p.iter().map(|c| c.pid).collect::<HashSet<_>>().len()).collect();
    let anchor_group = (0..k).min_by_key(|&g| (n_participants[g], g)).unwrap();

    let mut anchors = pools[anchor_group].clone();
    let anchor_timed = spec.time_partner(anchor_group).is_some();
    anchors.sort_by(|a, b| {
        let t = if anchor_timed {
            a.tte.unwrap_or(f64::INFINITY).total_cmp(&b.tte.unwrap_or(f64::INFINITY))
        } else {
            std::cmp::Ordering::Equal
        };
        t.then(a.age.total_cmp(&b.age)).then(a.pid.cmp(b.pid))
    });

    // Per group and sex, candidates sorted by age for range lookups.
    let strata: Vec<BTreeMap<Sex, Vec<Candidate>>> = pools
        .iter()
        .map(|pool| {
            let mut m: BTreeMap<Sex, Vec<Candidate>> = BTreeMap::new();
            for c in pool {
                m.entry(c.sex).or_default().push(*c);
            }
            for v in m.values_mut() {
                v.sort_by(|a, b| a.age.total_cmp(&b.age).then(a.pid.cmp(b.pid)));
            }
            m
        })
        .collect();

    let mut used_participants: HashSet<&str> = HashSet::new();
    let mut used_sessions: HashSet<usize> = HashSet::new();
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut tuples = Vec::new();
    let tol = spec.age_tolerance + TOL_EPS;

    for a in &anchors {
        let available = |pid: &str, session: usize, owner: &HashMap<&str, &str>, used_p: &HashSet<&str>, used_s: &HashSet<usize>| match spec.reuse {
            ParticipantReuse::OncePerParticipant => !used_p.contains(pid),
            ParticipantReuse::PerSession => {
                !used_s.contains(&session) && owner.get(pid).is_none_or(|o| *o == a.pid)
            }
        };
        if !available(a.pid, a.session, &owner, &used_participants, &used_sessions) {
            continue;
        }
        let mut chosen: Vec<Option<Candidate>> = vec![None; k];
        chosen[anchor_group] = Some(*a);
        let mut complete = true;
        for g in (0..k).filter(|&g| g != anchor_group) {
            let partner = spec.time_partner(g).and_then(|p| chosen[p]);
            let Some(pool) = strata[g].get(&a.sex) else {
                complete = false;
                break;
            };
            let lo = pool.partition_point(|c| c.age < a.age - tol);
            let mut best: Option<(f64, f64, Candidate)> = None;
            for c in pool[lo..].iter().take_while(|c| c.age <= a.age + tol) {
                if !available(c.pid, c.session, &owner, &used_participants, &used_sessions)
                    || chosen.iter().flatten().any(|m| m.pid == c.pid)
                {
                    continue;
                }
                let time_gap = match (partner, spec.time_tolerance) {
                    (Some(p), Some(tt)) => {
                        let (Some(x), Some(y)) = (c.tte, p.tte) else { continue };
                        let gap = (x - y).abs();
                        if gap > tt + TOL_EPS {
                            continue;
                        }
                        gap
                    }
                    _ => 0.0,
                };
                let age_gap = (c.age - a.age).abs();
                let better = match &best {
                    None => true,
                    Some((bg, bt, b)) => age_gap
                        .total_cmp(bg)
                        .then(time_gap.total_cmp(bt))
                        .then(c.pid.cmp(b.pid))
                        .then(c.age.total_cmp(&b.age))
                        .is_lt(),
                };
                if better {
                    best = Some((age_gap, time_gap, *c));
                }
            }
            match best {
                Some((_, _, c)) => chosen[g] = Some(c),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        let members: Vec<MatchMember> = chosen
            .into_iter()
            .enumerate()
            .map(|(g, c)| {
                let c = c.expect("complete tuple");
                MatchMember {
                    group_index: g,
                    session: c.session,
                    participant_id: c.pid.to_string(),
                    age: c.age,
                    sex: c.sex,
                    time_to_event: c.tte,
                }
            })
            .collect();
        for m in &members {
            let pid = cohort.session(m.session).participant_id.as_str();
            used_participants.insert(pid);
            used_sessions.insert(m.session);
            owner.insert(pid, a.pid);
        }
        tuples.push(MatchTuple { members });
    }
    if tuples.is_empty() {
        return Err(MatchError::NoMatches);
    }
    Ok(MatchedSet { spec: spec.clone(), anchor_group, tuples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAudit {
    pub n_tuples: usize,
    pub n_participants: usize,
    /// Largest |age − anchor age| within each tuple.
    pub tuple_age_gaps: Vec<f64>,
    pub max_age_gap: f64,
    pub mean_age_gap: f64,
    /// Tuples per sex stratum.
    pub sex_counts: BTreeMap<String, usize>,
    /// |time to last CN − time to first MCI| per tuple, when time-matched.
    pub time_gaps: Vec<f64>,
    pub max_time_gap: Option<f64>,
}

/// Re-checks every matched-set invariant and summarizes gaps.
pub fn audit_match(set: &MatchedSet) -> Result<MatchAudit, MatchError> {
    let k = set.spec.groups.len();
    let violation = |tuple: usize, reason: String| MatchError::InvariantViolation { tuple, reason };
    let mut participants: HashMap<&str, usize> = HashMap::new();
    let mut sessions = HashSet::new();
    let mut owners: HashMap<&str, &str> = HashMap::new();
    let mut tuple_age_gaps = Vec::with_capacity(set.len());
    let mut time_gaps = Vec::new();
    let mut sex_counts = BTreeMap::new();
    let timed = set.spec.time_partner_pair();

    for (t, tuple) in set.tuples.iter().enumerate() {
        if tuple.members.len() != k {
            return Err(violation(t, format!("{} members for {k} groups", tuple.members.len())));
        }
        if tuple.members.iter().enumerate().any(|(g, m)| m.group_index != g) {
            return Err(violation(t, "members out of group order".into()));
        }
        let anchor = &tuple.members[set.anchor_group];
        if tuple.members.iter().any(|m| m.sex != anchor.sex) {
            return Err(violation(t, "mixed sexes".into()));
        }
        let gap = tuple.members.iter().map(|m| (m.age - anchor.age).abs()).fold(0.0, f64::max);
        if gap > set.spec.age_tolerance + TOL_EPS {
            return Err(violation(t, format!("age gap {gap} exceeds tolerance")));
        }
        tuple_age_gaps.push(gap);
        *sex_counts.entry(anchor.sex.as_str().to_string()).or_insert(0) += 1;
        if let (Some((a, b)), Some(tol)) = (timed, set.spec.time_tolerance) {
            let (Some(x), Some(y)) = (tuple.members[a].time_to_event, tuple.members[b].time_to_event)
            else {
                return Err(violation(t, "missing time to event".into()));
            };
            let tg = (x - y).abs();
            if tg > tol + TOL_EPS {
                return Err(violation(t, format!("time-to-event gap {tg} exceeds tolerance")));
            }
            time_gaps.push(tg);
        }
        let mut in_tuple = HashSet::new();
        for m in &tuple.members {
            if !in_tuple.insert(m.participant_id.as_str()) {
                return Err(violation(t, format!("participant `{}` twice in tuple", m.participant_id)));
            }
            if !sessions.insert(m.session) {
                return Err(violation(t, format!("session {} reused", m.session)));
            }
            match set.spec.reuse {
                ParticipantReuse::OncePerParticipant => {
                    if let Some(prev) = participants.insert(m.participant_id.as_str(), t) {
                        return Err(violation(
                            t,
                            format!("participant `{}` already in tuple {prev}", m.participant_id),
                        ));
                    }
                }
                ParticipantReuse::PerSession => {
                    let o = owners.entry(m.participant_id.as_str()).or_insert(anchor.participant_id.as_str());
                    if *o != anchor.participant_id {
                        return Err(violation(
                            t,
                            format!("participant `{}` tied to two anchors", m.participant_id),
                        ));
                    }
                }
            }
        }
    }
    let max_age_gap = tuple_age_gaps.iter().copied().fold(0.0, f64::max);
    let mean_age_gap = if tuple_age_gaps.is_empty() { 0.0 } else { crate::numeric::mean(&tuple_age_gaps) };
    Ok(MatchAudit {
        n_tuples: set.len(),
        n_participants: set.n_participants(),
        max_time_gap: (!time_gaps.is_empty()).then(|| time_gaps.iter().copied().fold(0.0, f64::max)),
        tuple_age_gaps,
        max_age_gap,
        mean_age_gap,
        sex_counts,
        time_gaps,
    })
}

impl MatchSpec {
    /// Indices of the time-paired (stable CN, CN*) groups, if time matching is on.
    fn time_partner_pair(&self) -> Option<(usize, usize)> {
        self.time_tolerance?;
        let a = self.groups.iter().position(|s| s.group == LabelGroup::CnStable)?;
        let b = self.groups.iter().position(|s| s.group == LabelGroup::CnStar)?;
        Some((a, b))
    }
}

