//! TOML run configuration with every pipeline parameter defaulted to the
//! values the library documents. A missing config file means "all defaults";
//! command-line flags override individual fields after parsing.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use dielwave::evaluation::{ExperimentProtocol, RunOptions};
use dielwave::features::{FeatureConfig, WaveletOutput};
use dielwave::iforest::ForestParams;
use dielwave::ingest::FuzzyPolicy;
use dielwave::model::PeriodConfig;
use dielwave::wavelet::{standard_specs, BoundaryMode, WaveletSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Hourly zone-duration or activity-level records.
    pub records: PathBuf,
    /// State and event annotations.
    pub annotations: PathBuf,
    /// Directory all artifacts are written to.
    pub out_dir: PathBuf,

    /// Hours per diel cycle.
    pub period_length: usize,
    /// Hours per sliding window.
    pub window_size: usize,
    /// Hours between consecutive window starts.
    pub step: usize,
    /// Daily mean activity level above which a day is a sensor fault.
    pub al_cutoff: f64,
    /// Uncertainty margins per annotated state.
    pub fuzzy: FuzzyPolicy,

    /// Wavelet distance features as `family|level` entries.
    pub wavelets: Vec<WaveletSpec>,
    pub boundary: BoundaryMode,
    pub wavelet_output: WaveletOutput,
    /// Include the 27 descriptive statistics.
    pub include_stats: bool,
    /// Correlation magnitude above which one feature of a pair is dropped.
    pub prune_threshold: f64,

    pub n_trees: usize,
    pub subsample_fraction: f64,
    /// Train-score quantile that becomes the anomaly threshold.
    pub threshold_quantile: f64,

    pub n_splits: usize,
    pub max_iterations: usize,
    pub stabilization_epsilon: f64,
    pub stabilization_window: usize,
    pub reseed_each_iteration: bool,

    /// Predicted-state cutoff: hours strictly below it are abnormal.
    pub theta: f64,
    /// Abnormal hours needed before a day is flagged.
    pub quorum: usize,

    pub seed: u64,

    /// Permutations per window for Shapley attribution.
    pub shap_permutations: usize,
    /// Independent attribution repeats entering the rank comparison.
    pub attribution_runs: usize,
    /// Significance level for the critical difference.
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            records: PathBuf::from("records.csv"),
            annotations: PathBuf::from("annotations.csv"),
            out_dir: PathBuf::from("out"),
            period_length: 24,
            window_size: 24,
            step: 1,
            al_cutoff: 1000.0,
            fuzzy: FuzzyPolicy::default(),
            wavelets: standard_specs(24),
            boundary: BoundaryMode::Symmetric,
            wavelet_output: WaveletOutput::Coefficients,
            include_stats: true,
            prune_threshold: 0.9,
            n_trees: 100,
            subsample_fraction: 1.0,
            threshold_quantile: 0.95,
            n_splits: 70,
            max_iterations: 20,
            stabilization_epsilon: 0.001,
            stabilization_window: 5,
            reseed_each_iteration: true,
            theta: 0.0,
            quorum: 12,
            seed: 0,
            shap_permutations: 200,
            attribution_runs: 10,
            alpha: 0.05,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        Ok(toml::from_str(text)?)
    }

    pub fn emit(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn period(&self) -> dielwave::Result<PeriodConfig> {
        PeriodConfig::new(self.period_length, self.window_size)
    }

    pub fn feature_config(&self, with_wavelets: bool) -> FeatureConfig {
        FeatureConfig {
            wavelet_specs: if with_wavelets {
                self.wavelets.clone()
            } else {
                Vec::new()
            },
            include_stats: self.include_stats,
            output: self.wavelet_output,
            boundary: self.boundary,
        }
    }

    pub fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            subsample_fraction: self.subsample_fraction,
            threshold_quantile: self.threshold_quantile,
            seed,
        }
    }

    pub fn protocol(&self) -> ExperimentProtocol {
        ExperimentProtocol {
            n_splits: self.n_splits,
            max_iterations: self.max_iterations,
            stabilization_epsilon: self.stabilization_epsilon,
            stabilization_window: self.stabilization_window,
        }
    }

    pub fn run_options(&self, with_wavelets: bool) -> RunOptions {
        RunOptions {
            features: self.feature_config(with_wavelets),
            prune_threshold: self.prune_threshold,
            forest: self.forest_params(self.seed),
            reseed_each_iteration: self.reseed_each_iteration,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.period_length, 24);
        assert_eq!(c.window_size, 24);
        assert_eq!(c.wavelets.len(), 23);
        assert_eq!(c.prune_threshold, 0.9);
        assert_eq!(c.n_trees, 100);
        assert_eq!(c.n_splits, 70);
        assert_eq!(c.max_iterations, 20);
        assert_eq!(c.stabilization_epsilon, 0.001);
        assert_eq!(c.stabilization_window, 5);
        assert_eq!(c.theta, 0.0);
        assert_eq!(c.quorum, 12);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = RunConfig::default();
        let text = c.emit().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);

        let custom = RunConfig {
            seed: 42,
            n_splits: 3,
            stabilization_epsilon: 0.25,
            out_dir: PathBuf::from("elsewhere"),
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&custom.emit().unwrap()).unwrap();
        assert_eq!(back, custom);
    }

    #[test]
    fn partial_config_fills_in_defaults() {
        let c = RunConfig::parse("seed = 9\nn_trees = 50\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.n_trees, 50);
        assert_eq!(c.n_splits, 70);
        assert_eq!(c.wavelets, standard_specs(24));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::parse("seed = 9\nmystery_knob = 3\n").is_err());
    }

    #[test]
    fn wavelet_entries_parse_as_family_level_strings() {
        let c = RunConfig::parse("wavelets = [\"haar|4\", \"db2|1\"]\n").unwrap();
        assert_eq!(c.wavelets.len(), 2);
        assert_eq!(c.wavelets[0].name(), "haar|4");
        assert!(RunConfig::parse("wavelets = [\"nosuch|2\"]\n").is_err());
    }
}
