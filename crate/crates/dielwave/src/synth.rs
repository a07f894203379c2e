//! Synthetic zone-duration data with injected diel-pattern anomalies.
//!
//! Each individual gets a smooth 24 h base pattern of resting, alley and
//! eating minutes with its own amplitude scaling and phase offset, plus
//! hourly noise. Days drawn as anomalous shift the pattern by a quarter
//! period, destroying the usual shape of the day while preserving its
//! value distribution; they are annotated as states. A smaller share of
//! days are annotated as events (handling days) instead. Output matches
//! the ingestion CSV formats record for record.

use std::f64::consts::TAU;
use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Annotation, IndividualId, StateKind};
use crate::stats::mix_seed;

/// One generated hour of zone durations, all in minutes of the hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub individual: IndividualId,
    pub timestamp: NaiveDateTime,
    pub resting: f64,
    pub alleys: f64,
    pub eating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub individuals: usize,
    pub days: usize,
    pub start: NaiveDate,
    /// Uniform noise half-width added to each zone duration, in minutes.
    pub noise: f64,
    /// Probability that any given hour is dropped from the output.
    pub missing_rate: f64,
    /// Probability that a day is anomalous (annotated as a state).
    pub anomaly_rate: f64,
    /// Probability that a non-anomalous day is annotated as an event.
    pub event_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            individuals: 28,
            days: 90,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            noise: 1.5,
            missing_rate: 0.0,
            anomaly_rate: 0.022,
            event_rate: 0.004,
            seed: 0,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.individuals == 0 || self.days == 0 {
            return Err(Error::InvalidArgument(
                "need at least one individual and one day".into(),
            ));
        }
        for (name, rate) in [
            ("missing_rate", self.missing_rate),
            ("anomaly_rate", self.anomaly_rate),
            ("event_rate", self.event_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {rate}"
                )));
            }
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub records: Vec<ZoneRecord>,
    pub annotations: Vec<Annotation>,
}

const STATE_KINDS: [&str; 3] = ["oestrus", "mastitis", "lameness"];
const EVENT_KINDS: [&str; 2] = ["vet_visit", "weighing"];

/// Per-individual personality: zone scalings and a phase offset in hours.
struct Profile {
    resting_scale: f64,
    alleys_scale: f64,
    eating_scale: f64,
    phase_hours: f64,
}

impl Profile {
    fn draw(rng: &mut ChaCha8Rng) -> Profile {
        Profile {
            resting_scale: rng.gen_range(0.85..1.15),
            alleys_scale: rng.gen_range(0.85..1.15),
            eating_scale: rng.gen_range(0.85..1.15),
            phase_hours: rng.gen_range(-2.0..2.0),
        }
    }

    /// Smooth zone durations for an hour of day. Anomalous days shift the
    /// pattern by a quarter period, so the day keeps the same spread of
    /// values but loses its usual shape.
    fn zones(&self, hour: u32, anomalous: bool) -> (f64, f64, f64) {
        let shift = if anomalous { 6.0 } else { 0.0 };
        let theta = TAU * (hour as f64 + self.phase_hours + shift) / 24.0;
        let resting = self.resting_scale * (25.0 + 12.0 * theta.cos());
        let alleys = self.alleys_scale * (8.0 + 4.0 * (2.0 * theta).sin());
        let eating = self.eating_scale * (10.0 - 8.0 * theta.cos());
        (resting, alleys, eating)
    }
}

/// Generates records and annotations. Deterministic for a given set of
/// parameters; each individual owns an independent RNG stream.
pub fn generate(params: &SynthParams) -> Result<SynthOutput> {
    params.validate()?;
    let mut records = Vec::new();
    let mut annotations = Vec::new();
    for ind in 0..params.individuals {
        let individual = IndividualId::from(format!("cow-{:03}", ind + 1).as_str());
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, ind as u64));
        let profile = Profile::draw(&mut rng);
        for day in 0..params.days {
            let date = params.start + chrono::Duration::days(day as i64);
            let anomalous = rng.gen_bool(params.anomaly_rate);
            if anomalous {
                let kind = STATE_KINDS[rng.gen_range(0..STATE_KINDS.len())];
                annotations.push(Annotation::State {
                    individual: individual.clone(),
                    date,
                    kind: StateKind::new(kind),
                });
            } else if rng.gen_bool(params.event_rate) {
                let kind = EVENT_KINDS[rng.gen_range(0..EVENT_KINDS.len())];
                annotations.push(Annotation::Event {
                    individual: individual.clone(),
                    date,
                    kind: StateKind::new(kind),
                });
            }
            for hour in 0..24u32 {
                if params.missing_rate > 0.0 && rng.gen_bool(params.missing_rate) {
                    continue;
                }
                let (mut resting, mut alleys, mut eating) = profile.zones(hour, anomalous);
                if params.noise > 0.0 {
                    resting += rng.gen_range(-params.noise..params.noise);
                    alleys += rng.gen_range(-params.noise..params.noise);
                    eating += rng.gen_range(-params.noise..params.noise);
                }
                resting = resting.max(0.0);
                alleys = alleys.max(0.0);
                eating = eating.max(0.0);
                let total = resting + alleys + eating;
                if total > 60.0 {
                    let scale = 60.0 / total;
                    resting *= scale;
                    alleys *= scale;
                    eating *= scale;
                }
                records.push(ZoneRecord {
                    individual: individual.clone(),
                    timestamp: date.and_hms_opt(hour, 0, 0).expect("valid hour"),
                    resting,
                    alleys,
                    eating,
                });
            }
        }
    }
    Ok(SynthOutput {
        records,
        annotations,
    })
}

/// Writes records in the zone-duration ingestion format.
pub fn write_records_csv<W: Write>(writer: W, records: &[ZoneRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "individual_id",
        "timestamp_iso8601",
        "resting_min",
        "alleys_min",
        "eating_min",
    ])?;
    for r in records {
        csv.write_record([
            r.individual.to_string(),
            r.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            r.resting.to_string(),
            r.alleys.to_string(),
            r.eating.to_string(),
        ])?;
    }
    csv.flush()
        .map_err(|e| Error::io(std::path::Path::new("records.csv"), e))?;
    Ok(())
}

/// Writes annotations in the ingestion format.
pub fn write_annotations_csv<W: Write>(writer: W, annotations: &[Annotation]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["individual_id", "date_iso8601", "kind", "state_type"])?;
    for a in annotations {
        let (individual, date, row_kind, state_type) = match a {
            Annotation::State {
                individual,
                date,
                kind,
            } => (individual, date, "state", kind),
            Annotation::Event {
                individual,
                date,
                kind,
            } => (individual, date, "event", kind),
        };
        csv.write_record([
            individual.to_string(),
            date.format("%Y-%m-%d").to_string(),
            row_kind.to_string(),
            state_type.as_str().to_string(),
        ])?;
    }
    csv.flush()
        .map_err(|e| Error::io(std::path::Path::new("annotations.csv"), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{activity_level, read_annotations, read_records};
    use std::collections::BTreeSet;

    fn quick_params() -> SynthParams {
        SynthParams {
            individuals: 3,
            days: 10,
            noise: 1.0,
            missing_rate: 0.05,
            anomaly_rate: 0.1,
            event_rate: 0.05,
            seed: 7,
            ..SynthParams::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let params = quick_params();
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthParams {
            seed: 8,
            ..params
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_days_repeat_exactly() {
        let params = SynthParams {
            individuals: 2,
            days: 5,
            noise: 0.0,
            missing_rate: 0.0,
            anomaly_rate: 0.0,
            event_rate: 0.0,
            seed: 3,
            ..SynthParams::default()
        };
        let out = generate(&params).unwrap();
        assert!(out.annotations.is_empty());
        assert_eq!(out.records.len(), 2 * 5 * 24);
        for ind in 0..2 {
            let base = ind * 5 * 24;
            for day in 1..5 {
                for hour in 0..24 {
                    let a = &out.records[base + hour];
                    let b = &out.records[base + day * 24 + hour];
                    assert_eq!(a.resting, b.resting);
                    assert_eq!(a.alleys, b.alleys);
                    assert_eq!(a.eating, b.eating);
                }
            }
        }
    }

    #[test]
    fn zone_durations_stay_within_an_hour() {
        let out = generate(&SynthParams {
            individuals: 4,
            days: 20,
            noise: 4.0,
            seed: 11,
            ..SynthParams::default()
        })
        .unwrap();
        for r in &out.records {
            for zone in [r.resting, r.alleys, r.eating] {
                assert!((0.0..=60.0).contains(&zone));
            }
            assert!(r.resting + r.alleys + r.eating <= 60.0 + 1e-9);
            activity_level(r.resting, r.alleys, r.eating).unwrap();
        }
    }

    #[test]
    fn missing_rate_is_respected_at_scale() {
        let params = SynthParams {
            individuals: 28,
            days: 150,
            missing_rate: 0.124,
            anomaly_rate: 0.0,
            event_rate: 0.0,
            seed: 5,
            ..SynthParams::default()
        };
        let out = generate(&params).unwrap();
        let expected_hours = 28 * 150 * 24;
        assert!(expected_hours >= 100_000);
        let fraction = 1.0 - out.records.len() as f64 / expected_hours as f64;
        assert!(
            (fraction - 0.124).abs() < 0.01,
            "missing fraction {fraction}"
        );
    }

    #[test]
    fn anomaly_rate_is_respected_at_scale() {
        let params = SynthParams {
            individuals: 28,
            days: 150,
            anomaly_rate: 0.022,
            event_rate: 0.0,
            seed: 9,
            ..SynthParams::default()
        };
        let out = generate(&params).unwrap();
        let states = out
            .annotations
            .iter()
            .filter(|a| matches!(a, Annotation::State { .. }))
            .count();
        let fraction = states as f64 / (28.0 * 150.0);
        assert!(
            (fraction - 0.022).abs() < 0.01,
            "anomalous-day fraction {fraction}"
        );
    }

    #[test]
    fn anomalous_days_disturb_the_pattern() {
        let params = SynthParams {
            individuals: 1,
            days: 60,
            noise: 0.5,
            anomaly_rate: 0.15,
            event_rate: 0.0,
            seed: 13,
            ..SynthParams::default()
        };
        let out = generate(&params).unwrap();
        let abnormal_dates: BTreeSet<NaiveDate> = out
            .annotations
            .iter()
            .filter_map(|a| match a {
                Annotation::State { date, .. } => Some(*date),
                _ => None,
            })
            .collect();
        assert!(!abnormal_dates.is_empty());

        // Daily activity profiles: normal days track the individual's mean
        // shape closely, anomalous days decorrelate from it.
        let mut normal_profiles = Vec::new();
        let mut abnormal_profiles = Vec::new();
        for chunk in out.records.chunks(24) {
            let als: Vec<f64> = chunk
                .iter()
                .map(|r| activity_level(r.resting, r.alleys, r.eating).unwrap())
                .collect();
            if abnormal_dates.contains(&chunk[0].timestamp.date()) {
                abnormal_profiles.push(als);
            } else {
                normal_profiles.push(als);
            }
        }
        let mut reference = vec![0.0; 24];
        for p in &normal_profiles {
            for (r, v) in reference.iter_mut().zip(p) {
                *r += v / normal_profiles.len() as f64;
            }
        }
        let corr = |p: &[f64]| {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (mp, mr) = (mean(p), mean(&reference));
            let cov: f64 = p
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - mp) * (b - mr))
                .sum();
            let vp: f64 = p.iter().map(|a| (a - mp).powi(2)).sum();
            let vr: f64 = reference.iter().map(|b| (b - mr).powi(2)).sum();
            cov / (vp * vr).sqrt()
        };
        let mean_corr = |ps: &[Vec<f64>]| {
            ps.iter().map(|p| corr(p)).sum::<f64>() / ps.len() as f64
        };
        let normal_corr = mean_corr(&normal_profiles);
        let abnormal_corr = mean_corr(&abnormal_profiles);
        assert!(normal_corr > 0.9, "normal correlation {normal_corr}");
        assert!(
            abnormal_corr < 0.5,
            "abnormal days still correlate at {abnormal_corr}"
        );
    }

    #[test]
    fn output_round_trips_through_ingestion() {
        let out = generate(&quick_params()).unwrap();
        let mut records_csv = Vec::new();
        write_records_csv(&mut records_csv, &out.records).unwrap();
        let parsed = read_records(records_csv.as_slice(), "records.csv").unwrap();
        assert_eq!(parsed.len(), out.records.len());
        for (raw, rec) in out.records.iter().zip(&parsed) {
            assert_eq!(raw.individual, rec.individual);
            assert_eq!(raw.timestamp, rec.timestamp);
            let al = activity_level(raw.resting, raw.alleys, raw.eating).unwrap();
            assert!((al - rec.activity_level).abs() < 1e-9);
        }

        let mut ann_csv = Vec::new();
        write_annotations_csv(&mut ann_csv, &out.annotations).unwrap();
        let parsed = read_annotations(ann_csv.as_slice(), "annotations.csv").unwrap();
        assert_eq!(parsed, out.annotations);
    }

    #[test]
    fn invalid_params_rejected() {
        let base = SynthParams::default();
        assert!(generate(&SynthParams {
            individuals: 0,
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthParams {
            missing_rate: 1.2,
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthParams {
            noise: -1.0,
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthParams {
            anomaly_rate: -0.1,
            ..base
        })
        .is_err());
    }
}
