//! Experimental protocol, metrics and day-level detection analysis.
//!
//! The protocol re-splits the window sets `n_splits` times, fits a forest
//! per iteration until the running mean accuracy stabilizes, and
//! aggregates metrics across splits. Window verdicts are then folded
//! into per-hour predicted states, per-day verdicts, and signed
//! distances between detections and annotated abnormal days.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_reference, extract_features, prune_correlated, FeatureConfig};
use crate::iforest::{fit, ForestParams};
use crate::model::{IndividualId, Label, LabeledSeries, PeriodConfig, Verdict, Window};
use crate::stats::{self, mix_seed};
use crate::windowing::{build_train_test, WindowSets};

/// Window-level confusion counts. Fuzzy-labeled windows never enter any
/// of the four counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_count: usize) -> Self {
        ConfusionCounts {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_count,
        }
    }

    /// Tallies verdicts against window labels; abnormal labels are the
    /// positive class and fuzzy windows are skipped.
    pub fn from_outcomes(labels: &[Label], verdicts: &[Verdict]) -> Result<Self> {
        if labels.len() != verdicts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels vs {} verdicts",
                labels.len(),
                verdicts.len()
            )));
        }
        let mut counts = ConfusionCounts::default();
        for (label, verdict) in labels.iter().zip(verdicts) {
            match (label, verdict.is_abnormal()) {
                (Label::Fuzzy, _) => {}
                (Label::Abnormal, true) => counts.true_positives += 1,
                (Label::Abnormal, false) => counts.false_negatives += 1,
                (Label::Normal, true) => counts.false_positives += 1,
                (Label::Normal, false) => counts.true_negatives += 1,
            }
        }
        Ok(counts)
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

/// The four detection metrics. A metric whose denominator is zero is
/// absent rather than zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

/// Computes accuracy, recall, precision and F1 from confusion counts.
pub fn metrics(counts: &ConfusionCounts) -> MetricSet {
    let tp = counts.true_positives as f64;
    let fp = counts.false_positives as f64;
    let tn = counts.true_negatives as f64;
    let fn_count = counts.false_negatives as f64;
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    MetricSet {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_count),
        recall: ratio(tp, tp + fn_count),
        precision: ratio(tp, tp + fp),
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fn_count),
    }
}

/// Split/iteration schedule with the early-stop rule on the running
/// mean accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentProtocol {
    pub n_splits: usize,
    pub max_iterations: usize,
    pub stabilization_epsilon: f64,
    pub stabilization_window: usize,
}

impl Default for ExperimentProtocol {
    fn default() -> Self {
        ExperimentProtocol {
            n_splits: 70,
            max_iterations: 20,
            stabilization_epsilon: 0.001,
            stabilization_window: 5,
        }
    }
}

impl ExperimentProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_splits == 0 || self.max_iterations == 0 || self.stabilization_window == 0 {
            return Err(Error::InvalidArgument(
                "protocol sizes must all be positive".into(),
            ));
        }
        if self.stabilization_epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "stabilization epsilon must be non-negative, got {}",
                self.stabilization_epsilon
            )));
        }
        Ok(())
    }
}

/// Per-split pipeline knobs shared by every split of a protocol run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub features: FeatureConfig,
    /// Correlation threshold for feature pruning on the training matrix.
    pub prune_threshold: f64,
    /// Forest shape; its seed field is ignored in favor of per-iteration
    /// derived seeds.
    pub forest: ForestParams,
    /// When false every iteration of a split reuses the same forest
    /// seed, making the scorer deterministic across iterations.
    pub reseed_each_iteration: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            features: FeatureConfig::default(),
            prune_threshold: 0.9,
            forest: ForestParams::default(),
            reseed_each_iteration: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub iteration: usize,
    pub forest_seed: u64,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split_index: usize,
    pub seed: u64,
    pub balance_warning: bool,
    pub retained_features: usize,
    pub iterations: Vec<IterationOutcome>,
    /// Per-metric mean over this split's iterations.
    pub means: MetricSet,
}

/// Mean and population standard deviation of a metric across splits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AggregateMetric {
    pub mean: f64,
    pub std: f64,
    pub splits: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: Option<AggregateMetric>,
    pub recall: Option<AggregateMetric>,
    pub precision: Option<AggregateMetric>,
    pub f1: Option<AggregateMetric>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub with_wavelets: bool,
    pub splits: Vec<SplitOutcome>,
    pub aggregate: AggregateMetrics,
}

fn mean_of_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| stats::mean(&defined))
}

fn aggregate_metric(values: impl Iterator<Item = Option<f64>>) -> Option<AggregateMetric> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| AggregateMetric {
        mean: stats::mean(&defined),
        std: stats::std_dev(&defined),
        splits: defined.len(),
    })
}

fn run_split(
    sets: &WindowSets,
    period: &PeriodConfig,
    protocol: &ExperimentProtocol,
    options: &RunOptions,
    split_index: usize,
    split_seed: u64,
) -> Result<SplitOutcome> {
    let split = build_train_test(sets, split_seed)?;
    if split.train.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "split {split_index} leaves only {} training windows",
            split.train.len()
        )));
    }
    let reference = if options.features.wavelet_specs.is_empty() {
        None
    } else {
        Some(build_reference(&split.train, period, &options.features)?)
    };
    let train_full = extract_features(&split.train, reference.as_ref(), &options.features)?;
    let test_full = extract_features(&split.test, reference.as_ref(), &options.features)?;
    let prune = prune_correlated(&train_full, options.prune_threshold)?;
    let train = train_full.select(&prune.retained_indices);
    let test = test_full.select(&prune.retained_indices);
    let labels: Vec<Label> = test.meta.iter().map(|m| m.label).collect();

    let mut iterations = Vec::new();
    let mut accuracies = Vec::new();
    let mut running_means = Vec::new();
    for k in 1..=protocol.max_iterations {
        let salt = if options.reseed_each_iteration { k as u64 } else { 1 };
        let forest_seed = mix_seed(split_seed, salt);
        let params = ForestParams {
            seed: forest_seed,
            ..options.forest.clone()
        };
        let model = fit(&train, &params)?;
        let scores = model.score_matrix(&test)?;
        let verdicts = model.decide(&scores);
        let counts = ConfusionCounts::from_outcomes(&labels, &verdicts)?;
        let metric_set = metrics(&counts);
        let accuracy = metric_set.accuracy.ok_or_else(|| {
            Error::InvalidArgument(format!("split {split_index} has no scorable test windows"))
        })?;
        iterations.push(IterationOutcome {
            iteration: k,
            forest_seed,
            counts,
            metrics: metric_set,
        });
        accuracies.push(accuracy);
        running_means.push(stats::mean(&accuracies));
        if k >= protocol.stabilization_window {
            let tail = &running_means[k - protocol.stabilization_window..];
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= protocol.stabilization_epsilon {
                break;
            }
        }
    }

    let means = MetricSet {
        accuracy: mean_of_defined(iterations.iter().map(|i| i.metrics.accuracy)),
        recall: mean_of_defined(iterations.iter().map(|i| i.metrics.recall)),
        precision: mean_of_defined(iterations.iter().map(|i| i.metrics.precision)),
        f1: mean_of_defined(iterations.iter().map(|i| i.metrics.f1)),
    };
    Ok(SplitOutcome {
        split_index,
        seed: split_seed,
        balance_warning: split.balance_warning,
        retained_features: train.names.len(),
        iterations,
        means,
    })
}

/// Runs the full split/iteration protocol. Split `i` uses the seed
/// derived from (base_seed, i), so two runs with the same base seed see
/// identical splits whatever their feature catalog.
pub fn run_protocol(
    sets: &WindowSets,
    period: &PeriodConfig,
    protocol: &ExperimentProtocol,
    options: &RunOptions,
    base_seed: u64,
) -> Result<ProtocolOutcome> {
    protocol.validate()?;
    sets.validate()?;
    if sets.abnormal.is_empty() {
        return Err(Error::InvalidArgument(
            "protocol needs at least one abnormal window".into(),
        ));
    }
    let splits: Vec<SplitOutcome> = (0..protocol.n_splits)
        .into_par_iter()
        .map(|i| run_split(sets, period, protocol, options, i, mix_seed(base_seed, i as u64)))
        .collect::<Result<_>>()?;

    let aggregate = AggregateMetrics {
        accuracy: aggregate_metric(splits.iter().map(|s| s.means.accuracy)),
        recall: aggregate_metric(splits.iter().map(|s| s.means.recall)),
        precision: aggregate_metric(splits.iter().map(|s| s.means.precision)),
        f1: aggregate_metric(splits.iter().map(|s| s.means.f1)),
    };
    Ok(ProtocolOutcome {
        with_wavelets: !options.features.wavelet_specs.is_empty(),
        splits,
        aggregate,
    })
}

/// Runs the protocol twice on shared split seeds: once with the
/// configured feature catalog and once with its wavelet block removed.
/// Returns (with, without).
pub fn run_paired(
    sets: &WindowSets,
    period: &PeriodConfig,
    protocol: &ExperimentProtocol,
    options: &RunOptions,
    base_seed: u64,
) -> Result<(ProtocolOutcome, ProtocolOutcome)> {
    if options.features.wavelet_specs.is_empty() {
        return Err(Error::InvalidArgument(
            "paired run needs a wavelet catalog to toggle".into(),
        ));
    }
    let with = run_protocol(sets, period, protocol, options, base_seed)?;
    let without_options = RunOptions {
        features: options.features.without_wavelets(),
        ..options.clone()
    };
    let without = run_protocol(sets, period, protocol, &without_options, base_seed)?;
    Ok((with, without))
}

/// Per-hour predicted-state values and verdicts for one individual,
/// with per-day verdicts from the abnormal-hour quorum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictedStateSeries {
    pub individual: IndividualId,
    pub start: NaiveDateTime,
    pub theta: f64,
    pub quorum: usize,
    /// One entry per hour; None where no window covers the hour.
    pub values: Vec<Option<f64>>,
    pub hour_verdicts: Vec<Option<Verdict>>,
    pub day_verdicts: BTreeMap<NaiveDate, Verdict>,
}

impl PredictedStateSeries {
    pub fn detected_abnormal_days(&self) -> Vec<NaiveDate> {
        self.day_verdicts
            .iter()
            .filter(|(_, v)| v.is_abnormal())
            .map(|(d, _)| *d)
            .collect()
    }
}

/// Folds window verdicts into per-hour values: for every covered hour,
/// (normal coverers − abnormal coverers) / coverers, in [−1, 1]. An
/// hour is abnormal when its value is strictly below `theta`; a day is
/// abnormal when at least `quorum` of its hours are.
pub fn predicted_states(
    series: &LabeledSeries,
    windows: &[Window],
    verdicts: &[Verdict],
    theta: f64,
    quorum: usize,
) -> Result<PredictedStateSeries> {
    if windows.len() != verdicts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} windows vs {} verdicts",
            windows.len(),
            verdicts.len()
        )));
    }
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [-1, 1], got {theta}"
        )));
    }
    if quorum == 0 {
        return Err(Error::InvalidArgument("quorum must be positive".into()));
    }
    let len = series.len();
    let mut normal = vec![0usize; len];
    let mut abnormal = vec![0usize; len];
    for (window, verdict) in windows.iter().zip(verdicts) {
        if window.individual() != series.individual() {
            return Err(Error::InvalidArgument(format!(
                "window for {} mixed into series for {}",
                window.individual(),
                series.individual()
            )));
        }
        let end = window.start_index() + window.len();
        if end > len {
            return Err(Error::InvalidArgument(format!(
                "window [{}, {end}) exceeds series length {len}",
                window.start_index()
            )));
        }
        let bucket = if verdict.is_abnormal() {
            &mut abnormal
        } else {
            &mut normal
        };
        for slot in &mut bucket[window.start_index()..end] {
            *slot += 1;
        }
    }

    let mut values = Vec::with_capacity(len);
    let mut hour_verdicts = Vec::with_capacity(len);
    let mut covered_per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut abnormal_per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for i in 0..len {
        let covering = normal[i] + abnormal[i];
        if covering == 0 {
            values.push(None);
            hour_verdicts.push(None);
            continue;
        }
        let value = (normal[i] as f64 - abnormal[i] as f64) / covering as f64;
        let verdict = if value < theta {
            Verdict::Abnormal
        } else {
            Verdict::Normal
        };
        let date = series.instant(i).date();
        *covered_per_day.entry(date).or_insert(0) += 1;
        if verdict.is_abnormal() {
            *abnormal_per_day.entry(date).or_insert(0) += 1;
        }
        values.push(Some(value));
        hour_verdicts.push(Some(verdict));
    }

    let day_verdicts = covered_per_day
        .keys()
        .map(|date| {
            let flagged = abnormal_per_day.get(date).copied().unwrap_or(0);
            let verdict = if flagged >= quorum {
                Verdict::Abnormal
            } else {
                Verdict::Normal
            };
            (*date, verdict)
        })
        .collect();

    Ok(PredictedStateSeries {
        individual: series.individual().clone(),
        start: series.start(),
        theta,
        quorum,
        values,
        hour_verdicts,
        day_verdicts,
    })
}

/// Worst label among the hours of each date of the series.
pub fn day_labels(series: &LabeledSeries) -> BTreeMap<NaiveDate, Label> {
    let mut out: BTreeMap<NaiveDate, Label> = BTreeMap::new();
    for (i, label) in series.labels().iter().enumerate() {
        let date = series.instant(i).date();
        let entry = out.entry(date).or_insert(Label::Normal);
        *entry = (*entry).max(*label);
    }
    out
}

/// Dates of the series labeled abnormal.
pub fn abnormal_days(series: &LabeledSeries) -> Vec<NaiveDate> {
    day_labels(series)
        .into_iter()
        .filter(|(_, l)| *l == Label::Abnormal)
        .map(|(d, _)| d)
        .collect()
}

/// Signed day offset from `day` to its nearest annotated day; negative
/// means `day` is earlier. Equidistant ties resolve to the negative
/// offset. None when there are no annotated days.
pub fn offset_to_nearest(day: NaiveDate, annotated: &[NaiveDate]) -> Option<i64> {
    annotated
        .iter()
        .map(|a| day.signed_duration_since(*a).num_days())
        .min_by(|x, y| x.abs().cmp(&y.abs()).then(x.cmp(y)))
}

/// Distances between detected days and their nearest annotations;
/// detections with no annotation to match land in `unmatched`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionDistances {
    pub offsets: Vec<i64>,
    pub unmatched: usize,
}

pub fn distance_of_detection(
    detected: &[NaiveDate],
    annotated: &[NaiveDate],
) -> DetectionDistances {
    let mut distances = DetectionDistances::default();
    for day in detected {
        match offset_to_nearest(*day, annotated) {
            Some(offset) => distances.offsets.push(offset),
            None => distances.unmatched += 1,
        }
    }
    distances
}

/// Number of days of the observed universe sitting at each offset from
/// their nearest annotated day.
pub fn availability(days: &[NaiveDate], annotated: &[NaiveDate]) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for day in days {
        if let Some(offset) = offset_to_nearest(*day, annotated) {
            *counts.entry(offset).or_insert(0) += 1;
        }
    }
    counts
}

pub fn count_offsets(offsets: &[i64]) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for o in offsets {
        *counts.entry(*o).or_insert(0) += 1;
    }
    counts
}

/// Detections at each offset divided by the days available at that
/// offset. Offsets without availability are omitted.
pub fn normalized_histogram(
    detections: &BTreeMap<i64, usize>,
    availability: &BTreeMap<i64, usize>,
) -> BTreeMap<i64, f64> {
    availability
        .iter()
        .filter(|(_, &avail)| avail > 0)
        .map(|(&offset, &avail)| {
            let hits = detections.get(&offset).copied().unwrap_or(0);
            (offset, hits as f64 / avail as f64)
        })
        .collect()
}

/// Mean and spread of per-individual normalized histograms. Individuals
/// without a bin at an offset do not contribute to that offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub mean: f64,
    pub std: f64,
    pub individuals: usize,
}

pub fn mean_histogram(per_individual: &[BTreeMap<i64, f64>]) -> BTreeMap<i64, HistogramBin> {
    let mut grouped: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for hist in per_individual {
        for (&offset, &value) in hist {
            grouped.entry(offset).or_default().push(value);
        }
    }
    grouped
        .into_iter()
        .map(|(offset, values)| {
            (
                offset,
                HistogramBin {
                    mean: stats::mean(&values),
                    std: stats::std_dev(&values),
                    individuals: values.len(),
                },
            )
        })
        .collect()
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn verdict_str(v: Verdict) -> &'static str {
    if v.is_abnormal() {
        "abnormal"
    } else {
        "normal"
    }
}

/// Writes one row per (split, iteration) of each outcome:
/// split, iteration, with_wavelets, accuracy, recall, precision, f1.
pub fn write_metrics_csv<W: Write>(writer: W, outcomes: &[&ProtocolOutcome]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "split",
        "iteration",
        "with_wavelets",
        "accuracy",
        "recall",
        "precision",
        "f1",
    ])?;
    for outcome in outcomes {
        for split in &outcome.splits {
            for iteration in &split.iterations {
                csv.write_record([
                    split.split_index.to_string(),
                    iteration.iteration.to_string(),
                    outcome.with_wavelets.to_string(),
                    fmt_opt(iteration.metrics.accuracy),
                    fmt_opt(iteration.metrics.recall),
                    fmt_opt(iteration.metrics.precision),
                    fmt_opt(iteration.metrics.f1),
                ])?;
            }
        }
    }
    csv.flush()
        .map_err(|e| Error::io(std::path::Path::new("metrics.csv"), e))?;
    Ok(())
}

/// Writes one row per hour of each predicted-state series:
/// individual, hour, predicted_state_value, hour_verdict, day_verdict,
/// annotated_label.
pub fn write_detection_states_csv<W: Write>(
    writer: W,
    entries: &[(&PredictedStateSeries, &LabeledSeries)],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "individual_id",
        "hour",
        "predicted_state_value",
        "hour_verdict",
        "day_verdict",
        "annotated_label",
    ])?;
    for (states, series) in entries {
        if states.individual != *series.individual() {
            return Err(Error::InvalidArgument(format!(
                "states for {} paired with series for {}",
                states.individual,
                series.individual()
            )));
        }
        for i in 0..series.len() {
            let instant = series.instant(i);
            let day_verdict = states.day_verdicts.get(&instant.date());
            csv.write_record([
                states.individual.to_string(),
                instant.format("%Y-%m-%dT%H:%M:%S").to_string(),
                fmt_opt(states.values[i]),
                states.hour_verdicts[i].map(verdict_str).unwrap_or("").to_string(),
                day_verdict.map(|v| verdict_str(*v)).unwrap_or("").to_string(),
                match series.labels()[i] {
                    Label::Normal => "N",
                    Label::Fuzzy => "F",
                    Label::Abnormal => "A",
                }
                .to_string(),
            ])?;
        }
    }
    csv.flush()
        .map_err(|e| Error::io(std::path::Path::new("detection_states.csv"), e))?;
    Ok(())
}

/// Writes offset_days, normalized_frequency, std per histogram bin.
pub fn write_distance_histogram_csv<W: Write>(
    writer: W,
    histogram: &BTreeMap<i64, HistogramBin>,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["offset_days", "normalized_frequency", "std"])?;
    for (offset, bin) in histogram {
        csv.write_record([
            offset.to_string(),
            bin.mean.to_string(),
            bin.std.to_string(),
        ])?;
    }
    csv.flush()
        .map_err(|e| Error::io(std::path::Path::new("distance_histogram.csv"), e))?;
    Ok(())
}
