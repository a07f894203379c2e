use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Annotation, IndividualId, Label, LabeledSeries, StateKind};

/// Weights of Eq. "activity level" over minutes spent per zone within one hour.
const W_RESTING: f64 = -0.23;
const W_ALLEYS: f64 = 0.16;
const W_EATING: f64 = 0.42;

/// Slack for duration sums arriving through decimal text.
const DURATION_EPS: f64 = 1e-9;

/// One hour of activity for one individual, reduced to the activity level.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub individual: IndividualId,
    pub timestamp: NaiveDateTime,
    pub activity_level: f64,
}

/// Weighted combination of zone durations (minutes within one hour).
pub fn activity_level(resting: f64, alleys: f64, eating: f64) -> Result<f64> {
    for (name, v) in [("resting", resting), ("alleys", alleys), ("eating", eating)] {
        if !(0.0..=60.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "{name} duration {v} outside [0, 60] minutes"
            )));
        }
    }
    if resting + alleys + eating > 60.0 + DURATION_EPS {
        return Err(Error::InvalidArgument(format!(
            "durations sum to {} > 60 minutes",
            resting + alleys + eating
        )));
    }
    Ok(W_RESTING * resting + W_ALLEYS * alleys + W_EATING * eating)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    None
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Reads hourly records. The header decides the format:
/// `individual_id,timestamp_iso8601,resting_min,alleys_min,eating_min`
/// carries zone durations and goes through `activity_level`;
/// `individual_id,timestamp_iso8601,activity_level` carries the level as-is.
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<HourlyRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, path)
}

pub fn read_records<R: Read>(reader: R, path: impl AsRef<Path>) -> Result<Vec<HourlyRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let durations = match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["individual_id", "timestamp_iso8601", "resting_min", "alleys_min", "eating_min"] => true,
        ["individual_id", "timestamp_iso8601", "activity_level"] => false,
        other => {
            return Err(Error::data_at(
                path,
                1,
                format!("unrecognized records header {other:?}"),
            ))
        }
    };

    let mut out = Vec::new();
    let mut seen: BTreeSet<(IndividualId, NaiveDateTime)> = BTreeSet::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx as u64 + 2;
        let row = row?;
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| Error::data_at(path, line, format!("missing column {i}")))
        };
        let number = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse()
                .map_err(|_| Error::data_at(path, line, format!("bad number '{s}'")))
        };
        let individual = IndividualId::new(field(0)?);
        let ts_text = field(1)?;
        let timestamp = parse_timestamp(ts_text)
            .ok_or_else(|| Error::data_at(path, line, format!("bad timestamp '{ts_text}'")))?;
        if timestamp.minute() != 0 || timestamp.second() != 0 {
            return Err(Error::data_at(
                path,
                line,
                format!("timestamp '{ts_text}' is not on a whole hour"),
            ));
        }
        let activity = if durations {
            activity_level(number(2)?, number(3)?, number(4)?)
                .map_err(|e| Error::data_at(path, line, e.to_string()))?
        } else {
            number(2)?
        };
        if !seen.insert((individual.clone(), timestamp)) {
            return Err(Error::data_at(
                path,
                line,
                format!("duplicate record for {individual} at {timestamp}"),
            ));
        }
        out.push(HourlyRecord {
            individual,
            timestamp,
            activity_level: activity,
        });
    }
    Ok(out)
}

/// Reads the annotation calendar:
/// `individual_id,date_iso8601,kind,state_type` with kind `state` or `event`.
pub fn read_annotations_csv(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotations(file, path)
}

pub fn read_annotations<R: Read>(reader: R, path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if headers != ["individual_id", "date_iso8601", "kind", "state_type"] {
        return Err(Error::data_at(
            path,
            1,
            format!("unrecognized annotations header {headers:?}"),
        ));
    }
    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx as u64 + 2;
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let individual = IndividualId::new(get(0));
        let date_text = get(1);
        let date = parse_date(&date_text)
            .ok_or_else(|| Error::data_at(path, line, format!("bad date '{date_text}'")))?;
        let kind = StateKind::new(get(3));
        match get(2).to_ascii_lowercase().as_str() {
            "state" => {
                if kind.as_str().is_empty() {
                    return Err(Error::data_at(path, line, "state row without state_type"));
                }
                out.push(Annotation::State {
                    individual,
                    date,
                    kind,
                });
            }
            "event" => out.push(Annotation::Event {
                individual,
                date,
                kind,
            }),
            other => {
                return Err(Error::data_at(
                    path,
                    line,
                    format!("kind must be 'state' or 'event', got '{other}'"),
                ))
            }
        }
    }
    Ok(out)
}

/// Uncertainty margins around an annotated state day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyMargins {
    /// Days marked uncertain before the state day.
    pub before: u32,
    /// Days marked uncertain after it.
    pub after: u32,
}

impl FuzzyMargins {
    pub fn new(before: u32, after: u32) -> Self {
        FuzzyMargins { before, after }
    }
}

/// Per-state uncertainty margins. States missing from the map are a
/// configuration error when encountered, so silently mislabeled data cannot
/// slip through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FuzzyPolicy {
    margins: BTreeMap<StateKind, FuzzyMargins>,
}

impl FuzzyPolicy {
    pub fn empty() -> Self {
        FuzzyPolicy {
            margins: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, kind: StateKind, margins: FuzzyMargins) {
        self.margins.insert(kind, margins);
    }

    pub fn margins(&self, kind: &StateKind) -> Result<FuzzyMargins> {
        self.margins.get(kind).copied().ok_or_else(|| {
            Error::Config(format!("no fuzzy margins configured for state '{kind}'"))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKind, &FuzzyMargins)> {
        self.margins.iter()
    }
}

impl Default for FuzzyPolicy {
    fn default() -> Self {
        let mut p = FuzzyPolicy::empty();
        p.set("oestrus".into(), FuzzyMargins::new(2, 1));
        p.set("calving".into(), FuzzyMargins::new(2, 7));
        p.set("mastitis".into(), FuzzyMargins::new(2, 7));
        p.set("lameness".into(), FuzzyMargins::new(2, 7));
        p.set("other_disease".into(), FuzzyMargins::new(2, 7));
        p.set("accident".into(), FuzzyMargins::new(0, 7));
        p.set("lps_injection".into(), FuzzyMargins::new(0, 7));
        p.set("acidosis".into(), FuzzyMargins::new(1, 0));
        p
    }
}

/// Why an (individual, day) was dropped before windowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// A husbandry event was annotated on the day.
    Event,
    /// The day's mean activity level exceeded the sensor-fault cutoff.
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub individual: IndividualId,
    pub date: NaiveDate,
    pub reason: ExclusionReason,
}

/// Drops event days and sensor-fault days (mean activity level above
/// `al_cutoff`), logging each removal. Event removal wins when both apply.
pub fn filter_days(
    records: Vec<HourlyRecord>,
    calendar: &[Annotation],
    al_cutoff: f64,
) -> (Vec<HourlyRecord>, Vec<Exclusion>) {
    let event_days: BTreeSet<(IndividualId, NaiveDate)> = calendar
        .iter()
        .filter_map(|a| match a {
            Annotation::Event {
                individual, date, ..
            } => Some((individual.clone(), *date)),
            Annotation::State { .. } => None,
        })
        .collect();

    let mut day_sums: BTreeMap<(IndividualId, NaiveDate), (f64, u32)> = BTreeMap::new();
    for r in &records {
        let e = day_sums
            .entry((r.individual.clone(), r.timestamp.date()))
            .or_insert((0.0, 0));
        e.0 += r.activity_level;
        e.1 += 1;
    }

    let mut excluded: BTreeMap<(IndividualId, NaiveDate), ExclusionReason> = BTreeMap::new();
    for (key, (sum, count)) in &day_sums {
        if event_days.contains(key) {
            excluded.insert(key.clone(), ExclusionReason::Event);
        } else if sum / f64::from(*count) > al_cutoff {
            excluded.insert(key.clone(), ExclusionReason::Sensor);
        }
    }
    // event days without any record still deserve a log entry? They remove
    // nothing, so they are not exclusions of data; skip them.

    let retained = records
        .into_iter()
        .filter(|r| !excluded.contains_key(&(r.individual.clone(), r.timestamp.date())))
        .collect();
    let log = excluded
        .into_iter()
        .map(|((individual, date), reason)| Exclusion {
            individual,
            date,
            reason,
        })
        .collect();
    (retained, log)
}

/// Day-level label map from the state calendar: state days are Abnormal, the
/// configured margins around them Fuzzy, Abnormal always winning overlaps.
/// Days absent from the map are Normal.
pub fn expand_fuzzy(
    calendar: &[Annotation],
    policy: &FuzzyPolicy,
) -> Result<BTreeMap<(IndividualId, NaiveDate), Label>> {
    let mut map: BTreeMap<(IndividualId, NaiveDate), Label> = BTreeMap::new();
    let states: Vec<(&IndividualId, NaiveDate, &StateKind)> = calendar
        .iter()
        .filter_map(|a| match a {
            Annotation::State {
                individual,
                date,
                kind,
            } => Some((individual, *date, kind)),
            Annotation::Event { .. } => None,
        })
        .collect();

    for (individual, date, _) in &states {
        map.insert(((*individual).clone(), *date), Label::Abnormal);
    }
    for (individual, date, kind) in &states {
        let m = policy.margins(kind)?;
        let mut fuzzy_day = |d: NaiveDate| {
            map.entry(((*individual).clone(), d))
                .or_insert(Label::Fuzzy);
        };
        for off in 1..=i64::from(m.before) {
            fuzzy_day(*date - chrono::Duration::days(off));
        }
        for off in 1..=i64::from(m.after) {
            fuzzy_day(*date + chrono::Duration::days(off));
        }
    }
    Ok(map)
}

/// Everything ingest produces for the rest of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutput {
    pub series: Vec<LabeledSeries>,
    pub exclusions: Vec<Exclusion>,
}

/// Full ingest: filter days, expand the label calendar, and assemble one
/// hourly LabeledSeries per individual spanning its first to last retained
/// record. Hours without a retained record are missing values; labels come
/// from the day map and default to Normal.
pub fn build_series(
    records: Vec<HourlyRecord>,
    calendar: &[Annotation],
    policy: &FuzzyPolicy,
    al_cutoff: f64,
) -> Result<IngestOutput> {
    let (retained, exclusions) = filter_days(records, calendar, al_cutoff);
    let day_labels = expand_fuzzy(calendar, policy)?;

    let mut per_individual: BTreeMap<IndividualId, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    for r in retained {
        per_individual
            .entry(r.individual)
            .or_default()
            .push((r.timestamp, r.activity_level));
    }

    let mut series = Vec::with_capacity(per_individual.len());
    for (individual, mut rows) in per_individual {
        rows.sort_by_key(|(t, _)| *t);
        let start = rows[0].0;
        let end = rows[rows.len() - 1].0;
        let len = ((end - start).num_hours() + 1) as usize;
        let mut values: Vec<Option<f64>> = vec![None; len];
        for (t, v) in rows {
            values[(t - start).num_hours() as usize] = Some(v);
        }
        let labels: Vec<Label> = (0..len)
            .map(|i| {
                let date = (start + chrono::Duration::hours(i as i64)).date();
                day_labels
                    .get(&(individual.clone(), date))
                    .copied()
                    .unwrap_or(Label::Normal)
            })
            .collect();
        series.push(LabeledSeries::new(individual, start, values, labels)?);
    }
    Ok(IngestOutput { series, exclusions })
}

pub fn write_exclusions_csv(exclusions: &[Exclusion], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["individual_id", "date_iso8601", "reason"])?;
    for e in exclusions {
        let reason = match e.reason {
            ExclusionReason::Event => "event",
            ExclusionReason::Sensor => "sensor",
        };
        w.write_record([e.individual.as_str(), &e.date.to_string(), reason])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
