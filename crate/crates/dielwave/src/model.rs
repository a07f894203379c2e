use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hour-level annotation state. `Normal < Fuzzy < Abnormal` so that the worst
/// case of a set of labels is simply the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "N")]
    Normal,
    #[serde(rename = "F")]
    Fuzzy,
    #[serde(rename = "A")]
    Abnormal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Fuzzy => "fuzzy",
            Label::Abnormal => "abnormal",
        }
    }
}

/// Binary decision emitted by a detector for a window or an hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Normal,
    Abnormal,
}

impl Verdict {
    pub fn is_abnormal(self) -> bool {
        matches!(self, Verdict::Abnormal)
    }
}

/// Identifier of a monitored individual.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(String);

impl IndividualId {
    pub fn new(id: impl Into<String>) -> Self {
        IndividualId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for IndividualId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IndividualId {
    fn from(s: &str) -> Self {
        IndividualId::new(s)
    }
}

/// Kind of annotated condition. Open set: unknown kinds are carried through
/// as-is so new conditions only require a policy entry, not a code change.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateKind(String);

impl StateKind {
    pub fn new(kind: impl Into<String>) -> Self {
        StateKind(kind.into().to_ascii_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for StateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateKind {
    fn from(s: &str) -> Self {
        StateKind::new(s)
    }
}

/// One annotation row: either a physiological or health state covering a day,
/// or a husbandry event that invalidates a day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Annotation {
    State {
        individual: IndividualId,
        date: NaiveDate,
        kind: StateKind,
    },
    Event {
        individual: IndividualId,
        date: NaiveDate,
        kind: StateKind,
    },
}

impl Annotation {
    pub fn individual(&self) -> &IndividualId {
        match self {
            Annotation::State { individual, .. } | Annotation::Event { individual, .. } => {
                individual
            }
        }
    }

    pub fn date(&self) -> NaiveDate {
        match self {
            Annotation::State { date, .. } | Annotation::Event { date, .. } => *date,
        }
    }
}

/// Periodicity of the signal and the sliding window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodConfig {
    period_length: usize,
    window_size: usize,
}

impl PeriodConfig {
    pub fn new(period_length: usize, window_size: usize) -> Result<Self> {
        if period_length < 2 {
            return Err(Error::Config(format!(
                "period length must be at least 2, got {period_length}"
            )));
        }
        if window_size < 1 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        Ok(PeriodConfig {
            period_length,
            window_size,
        })
    }

    /// Number of samples in one period of the signal.
    pub fn period_length(self) -> usize {
        self.period_length
    }

    /// Number of samples per sliding window.
    pub fn window_size(self) -> usize {
        self.window_size
    }
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig {
            period_length: 24,
            window_size: 24,
        }
    }
}

/// An hourly series for one individual with per-hour labels. Missing hours are
/// `None` in `values` but still carry a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    individual: IndividualId,
    start: NaiveDateTime,
    values: Vec<Option<f64>>,
    labels: Vec<Label>,
}

impl LabeledSeries {
    pub fn new(
        individual: IndividualId,
        start: NaiveDateTime,
        values: Vec<Option<f64>>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "series for {individual} has {} values but {} labels",
                values.len(),
                labels.len()
            )));
        }
        if start.minute() != 0 || start.second() != 0 {
            return Err(Error::InvalidArgument(format!(
                "series for {individual} must start on a whole hour, got {start}"
            )));
        }
        Ok(LabeledSeries {
            individual,
            start,
            values,
            labels,
        })
    }

    pub fn individual(&self) -> &IndividualId {
        &self.individual
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Timestamp of sample `index`.
    pub fn instant(&self, index: usize) -> NaiveDateTime {
        self.start + chrono::Duration::hours(index as i64)
    }

    /// Phase of sample `index` within a period of `period_length` hours,
    /// anchored so that phase 0 is midnight for `period_length = 24`.
    pub fn phase(&self, index: usize, period_length: usize) -> usize {
        (self.start.hour() as usize + index) % period_length
    }
}

/// A contiguous, fully observed window of `q` samples cut from a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    individual: IndividualId,
    start_index: usize,
    start_phase: usize,
    start_instant: NaiveDateTime,
    values: Vec<f64>,
    label: Label,
}

impl Window {
    pub fn new(
        individual: IndividualId,
        start_index: usize,
        start_phase: usize,
        start_instant: NaiveDateTime,
        values: Vec<f64>,
        label: Label,
    ) -> Self {
        Window {
            individual,
            start_index,
            start_phase,
            start_instant,
            values,
            label,
        }
    }

    pub fn individual(&self) -> &IndividualId {
        &self.individual
    }

    /// Index of the first sample within the source series.
    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// Phase of the first sample within the period (0 = period-aligned).
    pub fn start_phase(&self) -> usize {
        self.start_phase
    }

    pub fn start_instant(&self) -> NaiveDateTime {
        self.start_instant
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label(&self) -> Label {
        self.label
    }

    /// Identity of a window within a dataset.
    pub fn key(&self) -> (IndividualId, usize) {
        (self.individual.clone(), self.start_index)
    }
}

/// Worst-case label of a non-empty collection: Abnormal beats Fuzzy beats Normal.
pub fn worst_case_label(labels: &[Label]) -> Result<Label> {
    labels
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidArgument("worst-case label of an empty set".into()))
}
