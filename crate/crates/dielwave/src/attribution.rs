//! Per-feature contribution estimates for forest scores.
//!
//! Shapley values are estimated by Monte-Carlo permutation sampling
//! against a background set: for each sampled permutation one background
//! row is drawn, features are switched from the background value to the
//! explained point's value in permutation order, and each feature is
//! credited with the score change it causes. Per-run contribution
//! magnitudes are then ranked and compared across runs with a Nemenyi
//! critical difference.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::iforest::ForestModel;
use crate::stats::{self, mix_seed};

/// Critical-difference q constants for significance level 0.05, derived
/// from the studentized range distribution with infinite degrees of
/// freedom (q(k, inf) / sqrt(2)), for k = 2..=60 compared groups.
const Q_ALPHA_05: [f64; 59] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684,
    3.218654, 3.268004, 3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073,
    3.543799, 3.569040, 3.592946, 3.615646, 3.637252, 3.657861, 3.677556, 3.696413, 3.714498,
    3.731869, 3.748578, 3.764672, 3.780193, 3.795179, 3.809664, 3.823680, 3.837254, 3.850413,
    3.863181, 3.875579, 3.887627, 3.899344, 3.910747, 3.921852, 3.932673, 3.943224, 3.953518,
    3.963566, 3.973379, 3.982969, 3.992343, 4.001512, 4.010485, 4.019268, 4.027869, 4.036297,
    4.044556, 4.052654, 4.060597, 4.068390, 4.076038,
];

/// Same constants for significance level 0.10.
const Q_ALPHA_10: [f64; 59] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889,
    2.977768, 3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224,
    3.319233, 3.345676, 3.370712, 3.394477, 3.417089, 3.438651, 3.459253, 3.478971, 3.497878,
    3.516033, 3.533492, 3.550305, 3.566516, 3.582165, 3.597288, 3.611917, 3.626084, 3.639814,
    3.653134, 3.666066, 3.678631, 3.690848, 3.702736, 3.714312, 3.725590, 3.736584, 3.747310,
    3.757778, 3.768000, 3.777987, 3.787750, 3.797297, 3.806638, 3.815781, 3.824735, 3.833505,
    3.842101, 3.850527, 3.858790, 3.866897, 3.874853,
];

/// Nemenyi q constant for `k` compared groups at level `alpha`
/// (0.05 or 0.10).
pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    let table: &[f64; 59] = if alpha == 0.05 {
        &Q_ALPHA_05
    } else if alpha == 0.10 {
        &Q_ALPHA_10
    } else {
        return Err(Error::InvalidArgument(format!(
            "unsupported significance level {alpha}; use 0.05 or 0.10"
        )));
    };
    if !(2..=60).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "critical-difference table covers 2..=60 groups, got {k}"
        )));
    }
    Ok(table[k - 2])
}

/// Nemenyi critical difference for rank comparisons over `n_runs`
/// repetitions of `n_features` ranked items.
pub fn critical_difference(n_runs: usize, n_features: usize, alpha: f64) -> Result<f64> {
    if n_runs < 2 {
        return Err(Error::InvalidArgument(format!(
            "critical difference needs at least 2 runs, got {n_runs}"
        )));
    }
    let q = nemenyi_q(n_features, alpha)?;
    let k = n_features as f64;
    Ok(q * (k * (k + 1.0) / (6.0 * n_runs as f64)).sqrt())
}

/// Ranks with 1 assigned to the largest value; ties share the average of
/// the ranks they span.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    stats::average_ranks(&negated)
}

/// Per-feature mean rank across runs, where each run ranks features by
/// descending value. Rows must all have the same length.
pub fn average_ranks(per_run: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_run.first() else {
        return Err(Error::InvalidArgument("no runs to rank".into()));
    };
    let width = first.len();
    if width == 0 {
        return Err(Error::InvalidArgument("runs have no features".into()));
    }
    let mut totals = vec![0.0; width];
    for run in per_run {
        if run.len() != width {
            return Err(Error::InvalidArgument(format!(
                "ragged run matrix: expected {width} features, got {}",
                run.len()
            )));
        }
        for (t, r) in totals.iter_mut().zip(rank_descending(run)) {
            *t += r;
        }
    }
    let n = per_run.len() as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}

/// Shapley estimates for the forest score of `x`, one value per model
/// feature in model order. `x` and `background` rows are in model
/// feature order.
pub fn shapley_vector(
    model: &ForestModel,
    x: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let width = model.features.len();
    if x.len() != width {
        return Err(Error::InvalidArgument(format!(
            "expected {width} feature values, got {}",
            x.len()
        )));
    }
    if background.is_empty() {
        return Err(Error::InvalidArgument("background set is empty".into()));
    }
    if background.iter().any(|row| row.len() != width) {
        return Err(Error::InvalidArgument(
            "background row width does not match model features".into(),
        ));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidArgument(
            "need at least one permutation".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..width).collect();
    let mut totals = vec![0.0; width];
    for _ in 0..n_permutations {
        let base = &background[rng.gen_range(0..background.len())];
        perm.shuffle(&mut rng);
        let mut hybrid = base.clone();
        let mut previous = model.anomaly_score(&hybrid)?;
        for &f in &perm {
            hybrid[f] = x[f];
            let current = model.anomaly_score(&hybrid)?;
            totals[f] += current - previous;
            previous = current;
        }
    }
    Ok(totals
        .into_iter()
        .map(|t| t / n_permutations as f64)
        .collect())
}

/// Same estimate keyed by feature name.
pub fn shapley_scores(
    model: &ForestModel,
    x: &[f64],
    background: &FeatureMatrix,
    n_permutations: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let cols = model.align(background)?;
    let rows: Vec<Vec<f64>> = background
        .rows
        .iter()
        .map(|row| cols.iter().map(|&c| row[c]).collect())
        .collect();
    let values = shapley_vector(model, x, &rows, n_permutations, seed)?;
    Ok(model
        .features
        .iter()
        .cloned()
        .zip(values)
        .collect())
}

/// Mean absolute and mean signed Shapley value per model feature over
/// all rows of `windows`, explained against `background`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunAttribution {
    pub features: Vec<String>,
    pub mean_abs_shap: Vec<f64>,
    pub mean_signed_shap: Vec<f64>,
}

/// Estimates Shapley values for every row of `windows` in parallel and
/// aggregates them into per-feature means. Window `w` uses the RNG
/// stream derived from (seed, w).
pub fn mean_shap_over_windows(
    model: &ForestModel,
    windows: &FeatureMatrix,
    background: &FeatureMatrix,
    n_permutations: usize,
    seed: u64,
) -> Result<RunAttribution> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no windows to attribute".into()));
    }
    let window_cols = model.align(windows)?;
    let bg_cols = model.align(background)?;
    if background.is_empty() {
        return Err(Error::InvalidArgument("background set is empty".into()));
    }
    let bg_rows: Vec<Vec<f64>> = background
        .rows
        .iter()
        .map(|row| bg_cols.iter().map(|&c| row[c]).collect())
        .collect();

    let per_window: Vec<Vec<f64>> = windows
        .rows
        .par_iter()
        .enumerate()
        .map(|(w, row)| {
            let x: Vec<f64> = window_cols.iter().map(|&c| row[c]).collect();
            shapley_vector(model, &x, &bg_rows, n_permutations, mix_seed(seed, w as u64))
        })
        .collect::<Result<_>>()?;

    let width = model.features.len();
    let n = per_window.len() as f64;
    let mut mean_abs = vec![0.0; width];
    let mut mean_signed = vec![0.0; width];
    for shap in &per_window {
        for f in 0..width {
            mean_abs[f] += shap[f].abs() / n;
            mean_signed[f] += shap[f] / n;
        }
    }
    Ok(RunAttribution {
        features: model.features.clone(),
        mean_abs_shap: mean_abs,
        mean_signed_shap: mean_signed,
    })
}

/// Aggregated attribution over repeated runs: mean contribution
/// magnitudes, per-run ranks, average ranks and the Nemenyi critical
/// difference with its rank cliques.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionResult {
    pub features: Vec<String>,
    pub mean_abs_shap: Vec<f64>,
    pub per_run_ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    #[serde(rename = "cd")]
    pub critical_difference: f64,
    pub alpha: f64,
    /// Maximal groups (size >= 2) of feature indices whose average ranks
    /// are within one critical difference of each other.
    pub cliques: Vec<Vec<usize>>,
}

impl AttributionResult {
    /// Builds the aggregate from one mean-|shap| vector per run.
    pub fn from_runs(features: &[String], runs: &[Vec<f64>], alpha: f64) -> Result<Self> {
        if runs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "rank aggregation needs at least 2 runs, got {}",
                runs.len()
            )));
        }
        let width = features.len();
        for run in runs {
            if run.len() != width {
                return Err(Error::InvalidArgument(format!(
                    "run has {} values for {width} features",
                    run.len()
                )));
            }
            if run.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "run contains a non-finite contribution".into(),
                ));
            }
        }
        let per_run_ranks: Vec<Vec<f64>> = runs.iter().map(|r| rank_descending(r)).collect();
        let avg = average_ranks(runs)?;
        let cd = critical_difference(runs.len(), width, alpha)?;
        let n = runs.len() as f64;
        let mean_abs: Vec<f64> = (0..width)
            .map(|f| runs.iter().map(|r| r[f]).sum::<f64>() / n)
            .collect();
        let cliques = rank_cliques(&avg, cd);
        Ok(AttributionResult {
            features: features.to_vec(),
            mean_abs_shap: mean_abs,
            per_run_ranks,
            average_ranks: avg,
            critical_difference: cd,
            alpha,
            cliques,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Maximal groups of size >= 2 whose average ranks span at most `cd`.
/// Each group lists feature indices ordered by rank (best first).
pub fn rank_cliques(average_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..average_ranks.len()).collect();
    order.sort_by(|&a, &b| average_ranks[a].total_cmp(&average_ranks[b]));
    let mut cliques = Vec::new();
    let mut widest = 0usize;
    let mut j = 0usize;
    for i in 0..order.len() {
        if j < i + 1 {
            j = i + 1;
        }
        while j < order.len() && average_ranks[order[j]] - average_ranks[order[i]] <= cd {
            j += 1;
        }
        // The clique is order[i..j]; emit only maximal groups, which are
        // exactly those whose right edge advances past every earlier one.
        if j - i >= 2 && j > widest {
            cliques.push(order[i..j].to_vec());
            widest = j;
        }
    }
    cliques
}
