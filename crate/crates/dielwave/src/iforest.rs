//! From-scratch Isolation Forest.
//!
//! Trains an ensemble of randomized binary trees on feature vectors and
//! scores new vectors by how quickly they isolate. Short average path
//! lengths mean easy isolation, which maps to anomaly scores near 1 via
//! `s(x) = 2^(-E[h(x)] / c(psi))` where `psi` is the subsample size used
//! to grow each tree.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::Verdict;
use crate::stats::{mix_seed, quantile};

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search depth of a binary search tree with `m`
/// nodes. Used both to terminate path lengths at multi-sample leaves and
/// to normalize scores.
fn average_depth(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = m as f64;
            2.0 * ((m - 1.0).ln() + EULER_MASCHERONI) - 2.0 * (m - 1.0) / m
        }
    }
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        (n - 1).ilog2() + 1
    }
}

/// One node of an isolation tree, stored in a flat arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        count: usize,
    },
}

/// A single isolation tree. Node 0 is the root; children are referenced
/// by arena index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<TreeNode>,
}

impl IsolationTree {
    /// Path length of `x` through this tree: edges traversed plus the
    /// average-depth adjustment for the sample count at the leaf.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { count } => return depth as f64 + average_depth(*count),
                TreeNode::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    idx = if x[*feature] < *split { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }

    fn max_depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize, depth: usize) -> usize {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => depth,
                TreeNode::Internal { left, right, .. } => {
                    walk(nodes, *left, depth + 1).max(walk(nodes, *right, depth + 1))
                }
            }
        }
        walk(&self.nodes, 0, 0)
    }
}

/// Training parameters for [`fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub subsample_fraction: f64,
    /// Quantile of the training scores used to calibrate the decision
    /// threshold.
    pub threshold_quantile: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            subsample_fraction: 1.0,
            threshold_quantile: 0.95,
            seed: 0,
        }
    }
}

/// A trained isolation forest together with the decision threshold and
/// the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub features: Vec<String>,
    pub trees: Vec<IsolationTree>,
    pub n_trees: usize,
    pub subsample_fraction: f64,
    /// Rows used to grow each tree.
    pub subsample_size: usize,
    /// Total training rows the forest was fitted on.
    pub trained_on: usize,
    pub score_threshold: f64,
    pub rng_seed: u64,
}

impl ForestModel {
    /// Checks the structural invariants of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.trees.len() != self.n_trees {
            return Err(Error::InvalidArgument(format!(
                "model declares {} trees but carries {}",
                self.n_trees,
                self.trees.len()
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "subsample fraction {} outside (0, 1]",
                self.subsample_fraction
            )));
        }
        if self.subsample_size < 2 || self.subsample_size > self.trained_on {
            return Err(Error::InvalidArgument(format!(
                "subsample size {} invalid for {} training rows",
                self.subsample_size, self.trained_on
            )));
        }
        if self.features.is_empty() {
            return Err(Error::InvalidArgument("model has no features".into()));
        }
        let cap = ceil_log2(self.subsample_size) as usize;
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidArgument(format!("tree {t} is empty")));
            }
            if tree.max_depth() > cap {
                return Err(Error::InvalidArgument(format!(
                    "tree {t} exceeds depth cap {cap}"
                )));
            }
            for node in &tree.nodes {
                if let TreeNode::Internal { feature, split, .. } = node {
                    if *feature >= self.features.len() {
                        return Err(Error::InvalidArgument(format!(
                            "tree {t} splits on unknown feature index {feature}"
                        )));
                    }
                    if !split.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "tree {t} has a non-finite split"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Average path length of `x` over all trees. `x` must be in model
    /// feature order.
    pub fn path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.features.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} feature values, got {}",
                self.features.len(),
                x.len()
            )));
        }
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Anomaly score in (0, 1); larger means more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        let path = self.path_length(x)?;
        Ok(self.score_from_path(path))
    }

    fn score_from_path(&self, path: f64) -> f64 {
        2f64.powf(-path / average_depth(self.subsample_size))
    }

    /// Column indices of the model's features inside `matrix`, in model
    /// order. Errors if any model feature is missing.
    pub fn align(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        self.features
            .iter()
            .map(|name| {
                matrix
                    .names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::InvalidArgument(format!("missing feature `{name}`")))
            })
            .collect()
    }

    /// Scores every row of `matrix`, matching features by name.
    pub fn score_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let cols = self.align(matrix)?;
        Ok(matrix
            .rows
            .par_iter()
            .map(|row| {
                let x: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
                let total: f64 = self.trees.iter().map(|t| t.path_length(&x)).sum();
                self.score_from_path(total / self.trees.len() as f64)
            })
            .collect())
    }

    /// Thresholds scores into verdicts: abnormal iff score exceeds the
    /// model threshold.
    pub fn decide(&self, scores: &[f64]) -> Vec<Verdict> {
        scores
            .iter()
            .map(|&s| {
                if s > self.score_threshold {
                    Verdict::Abnormal
                } else {
                    Verdict::Normal
                }
            })
            .collect()
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.score_threshold = threshold;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<ForestModel> {
        let model: ForestModel = serde_json::from_str(json)?;
        model.validate()?;
        Ok(model)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<ForestModel> {
        let model: ForestModel = serde_json::from_reader(reader)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_json(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<ForestModel> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        ForestModel::read_json(BufReader::new(file))
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    depth_cap: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        if depth >= self.depth_cap || indices.len() <= 1 {
            return self.leaf(indices.len());
        }
        let n_features = self.rows[0].len();
        let mut candidates = Vec::new();
        for f in 0..n_features {
            let (min, max) = self.column_range(indices, f);
            if min < max {
                candidates.push((f, min, max));
            }
        }
        if candidates.is_empty() {
            return self.leaf(indices.len());
        }
        let (feature, min, max) = candidates[rng.gen_range(0..candidates.len())];
        let Some(split) = draw_split(min, max, rng) else {
            return self.leaf(indices.len());
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][feature] < split);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { count: 0 });
        let left = self.build(&left_idx, depth + 1, rng);
        let right = self.build(&right_idx, depth + 1, rng);
        self.nodes[slot] = TreeNode::Internal {
            feature,
            split,
            left,
            right,
        };
        slot
    }

    fn column_range(&self, indices: &[usize], feature: usize) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &i in indices {
            let v = self.rows[i][feature];
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }

    fn leaf(&mut self, count: usize) -> usize {
        self.nodes.push(TreeNode::Leaf { count });
        self.nodes.len() - 1
    }
}

/// Draws a split strictly inside (min, max). Returns None when the open
/// interval contains no representable value.
fn draw_split(min: f64, max: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    for _ in 0..8 {
        let s = rng.gen_range(min..max);
        if s > min {
            return Some(s);
        }
    }
    let mid = min + (max - min) / 2.0;
    (mid > min && mid < max).then_some(mid)
}

fn build_tree(rows: &[Vec<f64>], subsample_size: usize, seed: u64) -> IsolationTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = sample(&mut rng, rows.len(), subsample_size).into_vec();
    let mut builder = TreeBuilder {
        rows,
        depth_cap: ceil_log2(subsample_size) as usize,
        nodes: Vec::new(),
    };
    let root = builder.build(&indices, 0, &mut rng);
    debug_assert_eq!(root, 0);
    IsolationTree {
        nodes: builder.nodes,
    }
}

/// Fits an isolation forest on the rows of `matrix` and calibrates the
/// decision threshold on the training scores.
pub fn fit(matrix: &FeatureMatrix, params: &ForestParams) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
    }
    if !(params.subsample_fraction > 0.0 && params.subsample_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction {} outside (0, 1]",
            params.subsample_fraction
        )));
    }
    if !(0.0..=1.0).contains(&params.threshold_quantile) {
        return Err(Error::InvalidArgument(format!(
            "threshold quantile {} outside [0, 1]",
            params.threshold_quantile
        )));
    }
    let n = matrix.rows.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 training samples, got {n}"
        )));
    }
    if matrix.names.is_empty() {
        return Err(Error::InvalidArgument("feature matrix has no columns".into()));
    }
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "training row {i} contains a non-finite value"
            )));
        }
    }
    let subsample_size = ((params.subsample_fraction * n as f64).ceil() as usize).min(n);
    if subsample_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction {} of {n} rows leaves fewer than 2 samples",
            params.subsample_fraction
        )));
    }

    let trees: Vec<IsolationTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| build_tree(&matrix.rows, subsample_size, mix_seed(params.seed, t as u64)))
        .collect();

    let mut model = ForestModel {
        features: matrix.names.clone(),
        trees,
        n_trees: params.n_trees,
        subsample_fraction: params.subsample_fraction,
        subsample_size,
        trained_on: n,
        score_threshold: 1.0,
        rng_seed: params.seed,
    };
    let mut train_scores = model.score_matrix(matrix)?;
    train_scores.sort_by(|a, b| a.total_cmp(b));
    model.score_threshold = quantile(&train_scores, params.threshold_quantile);
    Ok(model)
}
