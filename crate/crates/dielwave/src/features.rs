use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IndividualId, Label, PeriodConfig, Window};
use crate::stats;
use crate::wavelet::{approx_reconstruction, dwt_approx, BoundaryMode, WaveletSpec};

/// Which representation of a window the wavelet distance compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletOutput {
    /// Approximation coefficients at the requested level.
    #[default]
    Coefficients,
    /// Signal reconstructed from the approximation band alone.
    Reconstruction,
}

impl WaveletOutput {
    pub fn name(self) -> &'static str {
        match self {
            WaveletOutput::Coefficients => "coefficients",
            WaveletOutput::Reconstruction => "reconstruction",
        }
    }

    pub fn parse(s: &str) -> Result<WaveletOutput> {
        match s {
            "coefficients" => Ok(WaveletOutput::Coefficients),
            "reconstruction" => Ok(WaveletOutput::Reconstruction),
            other => Err(Error::InvalidArgument(format!(
                "unknown wavelet output '{other}'"
            ))),
        }
    }
}

/// Catalog settings for feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Wavelet distance features; empty disables the wavelet block.
    pub wavelet_specs: Vec<WaveletSpec>,
    /// Include the 27 descriptive statistics (requires 24-sample windows).
    pub include_stats: bool,
    pub output: WaveletOutput,
    pub boundary: BoundaryMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            wavelet_specs: crate::wavelet::standard_specs(24),
            include_stats: true,
            output: WaveletOutput::default(),
            boundary: BoundaryMode::default(),
        }
    }
}

impl FeatureConfig {
    /// Same catalog without the wavelet block.
    pub fn without_wavelets(&self) -> FeatureConfig {
        FeatureConfig {
            wavelet_specs: Vec::new(),
            ..self.clone()
        }
    }

    pub fn catalog_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.wavelet_specs.iter().map(WaveletSpec::name).collect();
        if self.include_stats {
            names.extend(STAT_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }
}

/// The learned normal period: a mean profile anchored at phase 0 plus, for
/// every spec, the transform of each of its cyclic shifts so any window
/// phase can be compared directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePeriod {
    mean_profile: Vec<f64>,
    output: WaveletOutput,
    boundary: BoundaryMode,
    transforms: BTreeMap<WaveletSpec, Vec<Vec<f64>>>,
}

impl ReferencePeriod {
    pub fn mean_profile(&self) -> &[f64] {
        &self.mean_profile
    }

    pub fn period_length(&self) -> usize {
        self.mean_profile.len()
    }

    pub fn output(&self) -> WaveletOutput {
        self.output
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn transform(&self, spec: WaveletSpec, phase: usize) -> Result<&[f64]> {
        let shifts = self.transforms.get(&spec).ok_or_else(|| {
            Error::InvalidArgument(format!("spec {spec} not present in the reference period"))
        })?;
        shifts
            .get(phase)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "phase {phase} outside the reference period of {} hours",
                    self.mean_profile.len()
                ))
            })
    }
}

fn rotate_left(values: &[f64], shift: usize) -> Vec<f64> {
    let n = values.len();
    (0..n).map(|i| values[(i + shift) % n]).collect()
}

fn window_representation(
    values: &[f64],
    spec: WaveletSpec,
    output: WaveletOutput,
    boundary: BoundaryMode,
) -> Result<Vec<f64>> {
    match output {
        WaveletOutput::Coefficients => dwt_approx(values, spec, boundary),
        WaveletOutput::Reconstruction => approx_reconstruction(values, spec, boundary),
    }
}

/// Averages the phase-aligned (phase 0) training windows into the mean
/// profile and precomputes the transform of every cyclic shift per spec.
pub fn build_reference(
    train_windows: &[Window],
    period: &PeriodConfig,
    cfg: &FeatureConfig,
) -> Result<ReferencePeriod> {
    let dt = period.period_length();
    if period.window_size() != dt {
        return Err(Error::Config(format!(
            "wavelet reference requires window size = period length, got {} vs {dt}",
            period.window_size()
        )));
    }
    let aligned: Vec<&Window> = train_windows
        .iter()
        .filter(|w| w.start_phase() == 0)
        .collect();
    if aligned.is_empty() {
        return Err(Error::Config(
            "no phase-aligned training window to build the reference period from".into(),
        ));
    }
    let mut mean_profile = vec![0.0; dt];
    for w in &aligned {
        if w.len() != dt {
            return Err(Error::InvalidArgument(format!(
                "training window of {} samples in a {dt}-hour period",
                w.len()
            )));
        }
        for (slot, v) in mean_profile.iter_mut().zip(w.values()) {
            *slot += v;
        }
    }
    let count = aligned.len() as f64;
    mean_profile.iter_mut().for_each(|v| *v /= count);

    let mut transforms = BTreeMap::new();
    for &spec in &cfg.wavelet_specs {
        let shifts: Vec<Vec<f64>> = (0..dt)
            .map(|s| window_representation(&rotate_left(&mean_profile, s), spec, cfg.output, cfg.boundary))
            .collect::<Result<_>>()?;
        transforms.insert(spec, shifts);
    }
    Ok(ReferencePeriod {
        mean_profile,
        output: cfg.output,
        boundary: cfg.boundary,
        transforms,
    })
}

/// Euclidean distance between the window's transform and the reference
/// transform aligned to the window's phase.
pub fn wavelet_feature(
    window: &Window,
    reference: &ReferencePeriod,
    spec: WaveletSpec,
) -> Result<f64> {
    let expected = reference.transform(spec, window.start_phase())?;
    let got = window_representation(window.values(), spec, reference.output, reference.boundary)?;
    if got.len() != expected.len() {
        return Err(Error::InvalidArgument(format!(
            "window transform for {spec} has {} coefficients, reference stores {}",
            got.len(),
            expected.len()
        )));
    }
    Ok(got
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Names of the descriptive statistics, in catalog order.
pub const STAT_NAMES: [&str; 27] = [
    "Minimum",
    "Maximum",
    "Mean",
    "RMS",
    "STD",
    "MeanSTD6h",
    "STDMean6h",
    "RMSSD",
    "Mode",
    "Q10",
    "Q25",
    "Median",
    "Q75",
    "Q90",
    "Skewness",
    "Kurtosis",
    "Autocorr1",
    "Autocorr2",
    "Autocorr3",
    "Autocorr4",
    "Autocorr5",
    "Autocorr6",
    "Autocorr7",
    "Autocorr8",
    "Autocorr9",
    "Autocorr10",
    "Autocorr11",
];

fn all_equal(xs: &[f64]) -> bool {
    xs.windows(2).all(|p| p[0] == p[1])
}

/// Most frequent value after rounding to the nearest integer unit; frequency
/// ties go to the smallest rounded bin, and the reported value is the
/// smallest raw value inside the winning bin.
fn mode(values: &[f64]) -> f64 {
    let mut bins: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for &v in values {
        let key = v.round() as i64;
        let e = bins.entry(key).or_insert((0, v));
        e.0 += 1;
        if v < e.1 {
            e.1 = v;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (count, min_value) in bins.values() {
        if best.is_none_or(|(c, _)| *count > c) {
            best = Some((*count, *min_value));
        }
    }
    best.expect("mode of non-empty window").1
}

fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    let head = &values[..values.len() - lag];
    let tail = &values[lag..];
    if all_equal(head) || all_equal(tail) {
        return 0.0;
    }
    stats::pearson(head, tail).unwrap_or(0.0)
}

/// The 27 descriptive statistics of one 24-sample window, aligned with
/// `STAT_NAMES`.
pub fn statistical_features(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != 24 {
        return Err(Error::InvalidArgument(format!(
            "descriptive statistics are defined on 24-sample windows, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in window values"));
    let constant = all_equal(&sorted);

    let mean = stats::mean(values);
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let (m2, m3, m4) = if constant {
        (0.0, 0.0, 0.0)
    } else {
        let mut acc = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            acc.0 += d * d;
            acc.1 += d * d * d;
            acc.2 += d * d * d * d;
        }
        (acc.0 / n, acc.1 / n, acc.2 / n)
    };
    let std = m2.sqrt();

    let block_stats: Vec<(f64, f64)> = values
        .chunks_exact(6)
        .map(|b| {
            let bm = stats::mean(b);
            let bs = if all_equal(b) { 0.0 } else { stats::std_dev(b) };
            (bm, bs)
        })
        .collect();
    let block_means: Vec<f64> = block_stats.iter().map(|(m, _)| *m).collect();
    let mean_std6 = stats::mean(&block_stats.iter().map(|(_, s)| *s).collect::<Vec<_>>());
    let std_mean6 = if all_equal(&block_means) {
        0.0
    } else {
        stats::std_dev(&block_means)
    };

    let rmssd = (values
        .windows(2)
        .map(|p| (p[1] - p[0]) * (p[1] - p[0]))
        .sum::<f64>()
        / (n - 1.0))
        .sqrt();

    let skewness = if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) };
    let kurtosis = if m2 == 0.0 { 0.0 } else { m4 / (m2 * m2) };

    let mut out = vec![
        sorted[0],
        sorted[sorted.len() - 1],
        mean,
        rms,
        std,
        mean_std6,
        std_mean6,
        rmssd,
        mode(values),
        stats::quantile(&sorted, 0.10),
        stats::quantile(&sorted, 0.25),
        stats::quantile(&sorted, 0.50),
        stats::quantile(&sorted, 0.75),
        stats::quantile(&sorted, 0.90),
        skewness,
        kurtosis,
    ];
    out.extend((1..=11).map(|d| autocorrelation(values, d)));
    debug_assert_eq!(out.len(), STAT_NAMES.len());
    Ok(out)
}

/// Identity and label of the window a feature row came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub individual: IndividualId,
    pub start_index: usize,
    pub start_phase: usize,
    pub start_instant: NaiveDateTime,
    pub label: Label,
}

impl From<&Window> for WindowMeta {
    fn from(w: &Window) -> Self {
        WindowMeta {
            individual: w.individual().clone(),
            start_index: w.start_index(),
            start_phase: w.start_phase(),
            start_instant: w.start_instant(),
            label: w.label(),
        }
    }
}

/// Feature rows over a set of windows, column names shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub meta: Vec<WindowMeta>,
}

impl FeatureMatrix {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Project onto the given column indices, in the given order.
    pub fn select(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: keep.iter().map(|&i| self.names[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i]).collect())
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn named_row(&self, row: usize) -> BTreeMap<&str, f64> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.rows[row].iter().copied())
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![
            "individual_id".to_string(),
            "start_index".to_string(),
            "start_phase".to_string(),
            "start_instant".to_string(),
            "label".to_string(),
        ];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (meta, row) in self.meta.iter().zip(&self.rows) {
            let mut rec = vec![
                meta.individual.to_string(),
                meta.start_index.to_string(),
                meta.start_phase.to_string(),
                meta.start_instant.format("%Y-%m-%dT%H:%M:%S").to_string(),
                meta.label.as_str().to_string(),
            ];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Computes the full active catalog for every window, in window order.
pub fn extract_features(
    windows: &[Window],
    reference: Option<&ReferencePeriod>,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix> {
    let names = cfg.catalog_names();
    if names.is_empty() {
        return Err(Error::Config("feature catalog is empty".into()));
    }
    if !cfg.wavelet_specs.is_empty() && reference.is_none() {
        return Err(Error::InvalidArgument(
            "wavelet features requested without a reference period".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = windows
        .par_iter()
        .map(|w| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(names.len());
            if let Some(reference) = reference {
                for &spec in &cfg.wavelet_specs {
                    row.push(wavelet_feature(w, reference, spec)?);
                }
            }
            if cfg.include_stats {
                row.extend(statistical_features(w.values())?);
            }
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!(
                    "NaN feature for window {}@{}",
                    w.individual(),
                    w.start_index()
                )));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(FeatureMatrix {
        names,
        rows,
        meta: windows.iter().map(WindowMeta::from).collect(),
    })
}

/// One dropped feature and the pair that condemned it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub dropped: String,
    pub partner: String,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    /// Names surviving the pruning, in catalog order.
    pub retained: Vec<String>,
    /// Their column indices in the input matrix.
    pub retained_indices: Vec<usize>,
    pub removals: Vec<Removal>,
    /// Constant columns, kept but reported.
    pub constant: Vec<String>,
}

/// Iteratively removes one member of the most correlated remaining pair
/// (|rho| above `threshold`): the member with the highest mean absolute
/// correlation to the other retained features, names breaking ties.
/// Constant columns correlate with nothing and are never dropped.
pub fn prune_correlated(matrix: &FeatureMatrix, threshold: f64) -> Result<PruneOutcome> {
    if !(0.0 < threshold && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if matrix.rows.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation pruning needs at least two samples".into(),
        ));
    }
    let n = matrix.names.len();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| matrix.column(i)).collect();
    let constant: Vec<String> = (0..n)
        .filter(|&i| all_equal(&columns[i]))
        .map(|i| matrix.names[i].clone())
        .collect();
    let mut corr = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = stats::pearson(&columns[i], &columns[j]).unwrap_or(0.0).abs();
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }

    let mut active: Vec<bool> = vec![true; n];
    let mut removals = Vec::new();
    loop {
        let mut worst: Option<(usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] || corr[i][j] <= threshold {
                    continue;
                }
                let better = match worst {
                    None => true,
                    Some((wi, wj)) => {
                        corr[i][j] > corr[wi][wj]
                            || (corr[i][j] == corr[wi][wj]
                                && pair_names(matrix, i, j) < pair_names(matrix, wi, wj))
                    }
                };
                if better {
                    worst = Some((i, j));
                }
            }
        }
        let Some((i, j)) = worst else { break };
        let mean_abs = |k: usize| -> f64 {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (other, flag) in active.iter().enumerate() {
                if *flag && other != k {
                    sum += corr[k][other];
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        let drop = if mi > mj {
            i
        } else if mj > mi {
            j
        } else if matrix.names[i] > matrix.names[j] {
            i
        } else {
            j
        };
        let keep = if drop == i { j } else { i };
        active[drop] = false;
        removals.push(Removal {
            dropped: matrix.names[drop].clone(),
            partner: matrix.names[keep].clone(),
            correlation: corr[i][j],
        });
    }

    for i in 0..n {
        for j in i + 1..n {
            debug_assert!(
                !(active[i] && active[j]) || corr[i][j] <= threshold,
                "retained pair above threshold"
            );
        }
    }

    let retained_indices: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    Ok(PruneOutcome {
        retained: retained_indices
            .iter()
            .map(|&i| matrix.names[i].clone())
            .collect(),
        retained_indices,
        removals,
        constant,
    })
}

fn pair_names(matrix: &FeatureMatrix, i: usize, j: usize) -> (&str, &str) {
    let (a, b) = (matrix.names[i].as_str(), matrix.names[j].as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
