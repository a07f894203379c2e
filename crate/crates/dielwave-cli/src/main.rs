//! Pipeline driver: synthetic data, ingestion, feature extraction, the
//! split/iteration protocol, attribution and day-level detection, each as a
//! subcommand persisting its artifacts so later stages can re-run alone.
//! Every command is deterministic for a given config and seed; artifacts
//! carry no timestamps, so reruns are byte-identical.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;

use dielwave::attribution::AttributionResult;
use dielwave::evaluation::{
    self, abnormal_days, availability, count_offsets, distance_of_detection, mean_histogram,
    normalized_histogram, predicted_states, run_protocol, PredictedStateSeries,
};
use dielwave::features::{
    build_reference, extract_features, prune_correlated, FeatureConfig, ReferencePeriod,
};
use dielwave::iforest::ForestModel;
use dielwave::ingest;
use dielwave::model::{LabeledSeries, PeriodConfig, Window};
use dielwave::stats::mix_seed;
use dielwave::synth;
use dielwave::windowing::{build_train_test, extract_all, extract_windows, WindowSets};

use config::RunConfig;

/// Stage salt separating attribution RNG streams from split seeds.
const ATTRIBUTION_SALT: u64 = 0x6174_7472;

#[derive(Parser)]
#[command(
    name = "dielwave",
    version,
    about = "Anomaly detection in periodic activity series"
)]
struct Cli {
    /// TOML run configuration; all fields default to the documented values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic records and annotations at the configured paths.
    Synth(SynthArgs),
    /// Read raw CSVs into the labeled hourly series store.
    Ingest,
    /// Extract the feature matrix for every window.
    Features(FeatureToggle),
    /// Run the split/iteration protocol and train the final model.
    Run(FeatureToggle),
    /// Attribute the model's scores on abnormal windows to features.
    Attr,
    /// Score every window and map verdicts back to days.
    DetectDays,
}

#[derive(Args)]
struct FeatureToggle {
    /// Include the wavelet distance block (the default).
    #[arg(long, overrides_with = "no_wavelets")]
    with_wavelets: bool,
    /// Use the descriptive statistics only.
    #[arg(long)]
    no_wavelets: bool,
}

impl FeatureToggle {
    fn with_wavelets(&self) -> bool {
        !self.no_wavelets
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 28)]
    individuals: usize,
    #[arg(long, default_value_t = 90)]
    days: usize,
    #[arg(long, default_value = "2021-01-01")]
    start: NaiveDate,
    /// Uniform noise half-width per zone, in minutes.
    #[arg(long, default_value_t = 1.5)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    #[arg(long, default_value_t = 0.022)]
    anomaly_rate: f64,
    #[arg(long, default_value_t = 0.004)]
    event_rate: f64,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    log::debug!("effective config:\n{}", cfg.emit()?);

    match &cli.command {
        Command::Synth(args) => cmd_synth(&cfg, args),
        Command::Ingest => cmd_ingest(&cfg),
        Command::Features(toggle) => cmd_features(&cfg, toggle.with_wavelets()),
        Command::Run(toggle) => cmd_run(&cfg, toggle.with_wavelets()),
        Command::Attr => cmd_attr(&cfg),
        Command::DetectDays => cmd_detect_days(&cfg),
    }
}

fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> anyhow::Result<()> {
    let params = synth::SynthParams {
        individuals: args.individuals,
        days: args.days,
        start: args.start,
        noise: args.noise,
        missing_rate: args.missing_rate,
        anomaly_rate: args.anomaly_rate,
        event_rate: args.event_rate,
        seed: cfg.seed,
    };
    let output = synth::generate(&params)?;
    for path in [&cfg.records, &cfg.annotations] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
        }
    }
    synth::write_records_csv(create(&cfg.records)?, &output.records)?;
    synth::write_annotations_csv(create(&cfg.annotations)?, &output.annotations)?;
    info!(
        "wrote {} records and {} annotations ({} individuals, {} days)",
        output.records.len(),
        output.annotations.len(),
        args.individuals,
        args.days
    );
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig) -> anyhow::Result<()> {
    let records = ingest::read_records_csv(&cfg.records)?;
    let calendar = ingest::read_annotations_csv(&cfg.annotations)?;
    let n_records = records.len();
    let output = ingest::build_series(records, &calendar, &cfg.fuzzy, cfg.al_cutoff)?;
    write_json(&cfg.out_dir.join("series.json"), &output.series)?;
    ingest::write_exclusions_csv(&output.exclusions, cfg.out_dir.join("exclusions.csv"))?;
    info!(
        "ingested {} records into {} series, {} day exclusions",
        n_records,
        output.series.len(),
        output.exclusions.len()
    );
    Ok(())
}

fn cmd_features(cfg: &RunConfig, with_wavelets: bool) -> anyhow::Result<()> {
    let series = load_series(cfg)?;
    let period = cfg.period()?;
    let sets = extract_all(&series, &period, cfg.step)?;
    let fcfg = cfg.feature_config(with_wavelets);
    // The stage-level matrix measures wavelet distances against the mean
    // period of every normal window; protocol runs rebuild the reference
    // per training split instead.
    let reference = build_reference_if_needed(&sets.normal, &period, &fcfg)?;
    let windows = sorted_windows(&sets);
    let matrix = extract_features(&windows, reference.as_ref(), &fcfg)?;
    matrix.write_csv(cfg.out_dir.join("features.csv"))?;
    info!(
        "extracted {} features for {} windows",
        matrix.names.len(),
        matrix.len()
    );
    Ok(())
}

fn cmd_run(cfg: &RunConfig, with_wavelets: bool) -> anyhow::Result<()> {
    let series = load_series(cfg)?;
    let period = cfg.period()?;
    let sets = extract_all(&series, &period, cfg.step)?;
    let options = cfg.run_options(with_wavelets);
    let outcome = run_protocol(&sets, &period, &cfg.protocol(), &options, cfg.seed)?;
    evaluation::write_metrics_csv(create(&cfg.out_dir.join("metrics.csv"))?, &[&outcome])?;
    write_json(&cfg.out_dir.join("summary.json"), &outcome)?;
    if let Some(acc) = &outcome.aggregate.accuracy {
        info!(
            "protocol done over {} splits, mean accuracy {:.3}",
            outcome.splits.len(),
            acc.mean
        );
    }

    // One representative model for the attribution and day-detection
    // stages, trained exactly like the protocol's first split.
    let split = build_train_test(&sets, mix_seed(cfg.seed, 0))?;
    let fcfg = cfg.feature_config(with_wavelets);
    let reference = build_reference_if_needed(&split.train, &period, &fcfg)?;
    let train = extract_features(&split.train, reference.as_ref(), &fcfg)?;
    let prune = prune_correlated(&train, cfg.prune_threshold)?;
    let train = train.select(&prune.retained_indices);
    let model = dielwave::iforest::fit(&train, &cfg.forest_params(mix_seed(split.seed, 1)))?;
    model.save(&cfg.out_dir.join("model.json"))?;
    write_json(&cfg.out_dir.join("reference.json"), &reference)?;
    info!(
        "saved model over {} features (threshold {:.4})",
        model.features.len(),
        model.score_threshold
    );
    Ok(())
}

fn cmd_attr(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.attribution_runs < 2 {
        bail!("attribution_runs must be at least 2 for rank comparison");
    }
    let series = load_series(cfg)?;
    let period = cfg.period()?;
    let sets = extract_all(&series, &period, cfg.step)?;
    let (model, reference) = load_model(cfg)?;
    if sets.abnormal.is_empty() {
        bail!("no abnormal windows to attribute");
    }
    let fcfg = cfg.feature_config(reference.is_some());
    let split = build_train_test(&sets, mix_seed(cfg.seed, 0))?;
    let background = extract_features(&split.train, reference.as_ref(), &fcfg)?;
    let targets = extract_features(&sorted(&sets.abnormal), reference.as_ref(), &fcfg)?;

    let attr_seed = mix_seed(cfg.seed, ATTRIBUTION_SALT);
    let mut runs = Vec::with_capacity(cfg.attribution_runs);
    for r in 0..cfg.attribution_runs {
        let run = dielwave::attribution::mean_shap_over_windows(
            &model,
            &targets,
            &background,
            cfg.shap_permutations,
            mix_seed(attr_seed, r as u64),
        )?;
        runs.push(run.mean_abs_shap);
    }
    let result = AttributionResult::from_runs(&model.features, &runs, cfg.alpha)?;
    result.write_json(create(&cfg.out_dir.join("attribution.json"))?)?;
    info!(
        "attributed {} abnormal windows over {} runs, {} indistinguishable groups",
        targets.len(),
        cfg.attribution_runs,
        result.cliques.len()
    );
    Ok(())
}

fn cmd_detect_days(cfg: &RunConfig) -> anyhow::Result<()> {
    let series = load_series(cfg)?;
    let period = cfg.period()?;
    let (model, reference) = load_model(cfg)?;
    let fcfg = cfg.feature_config(reference.is_some());

    let mut states: Vec<(PredictedStateSeries, &LabeledSeries)> = Vec::new();
    for s in &series {
        let sets = extract_windows(s, &period, cfg.step)?;
        let windows = sorted_windows(&sets);
        if windows.is_empty() {
            info!("{}: too short for any window, skipped", s.individual());
            continue;
        }
        let matrix = extract_features(&windows, reference.as_ref(), &fcfg)?;
        let scores = model.score_matrix(&matrix)?;
        let verdicts = model.decide(&scores);
        let predicted = predicted_states(s, &windows, &verdicts, cfg.theta, cfg.quorum)?;
        states.push((predicted, s));
    }
    let entries: Vec<(&PredictedStateSeries, &LabeledSeries)> =
        states.iter().map(|(p, s)| (p, *s)).collect();
    evaluation::write_detection_states_csv(
        create(&cfg.out_dir.join("detection_states.csv"))?,
        &entries,
    )?;

    // Detection-distance histogram over individuals that have annotated
    // abnormal days; offsets are measured over days carrying a verdict.
    let mut histograms = Vec::new();
    let mut detected_total = 0usize;
    for (predicted, s) in &states {
        let annotated = abnormal_days(s);
        let detected = predicted.detected_abnormal_days();
        detected_total += detected.len();
        if annotated.is_empty() {
            continue;
        }
        let days: Vec<NaiveDate> = predicted.day_verdicts.keys().copied().collect();
        let avail = availability(&days, &annotated);
        let distances = distance_of_detection(&detected, &annotated);
        histograms.push(normalized_histogram(
            &count_offsets(&distances.offsets),
            &avail,
        ));
    }
    evaluation::write_distance_histogram_csv(
        create(&cfg.out_dir.join("distance_histogram.csv"))?,
        &mean_histogram(&histograms),
    )?;
    info!(
        "flagged {} abnormal days across {} individuals",
        detected_total,
        states.len()
    );
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn load_series(cfg: &RunConfig) -> anyhow::Result<Vec<LabeledSeries>> {
    let path = cfg.out_dir.join("series.json");
    let file = File::open(&path)
        .with_context(|| format!("opening {} (run `ingest` first)", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<(ForestModel, Option<ReferencePeriod>)> {
    let model_path = cfg.out_dir.join("model.json");
    let model = ForestModel::load(&model_path)
        .with_context(|| format!("loading {} (run `run` first)", model_path.display()))?;
    let reference_path = cfg.out_dir.join("reference.json");
    let file = File::open(&reference_path)
        .with_context(|| format!("opening {} (run `run` first)", reference_path.display()))?;
    let reference: Option<ReferencePeriod> = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", reference_path.display()))?;
    Ok((model, reference))
}

fn build_reference_if_needed(
    train: &[Window],
    period: &PeriodConfig,
    fcfg: &FeatureConfig,
) -> anyhow::Result<Option<ReferencePeriod>> {
    if fcfg.wavelet_specs.is_empty() {
        Ok(None)
    } else {
        Ok(Some(build_reference(train, period, fcfg)?))
    }
}

fn sorted(windows: &[Window]) -> Vec<Window> {
    let mut out = windows.to_vec();
    out.sort_by_key(|w| w.key());
    out
}

fn sorted_windows(sets: &WindowSets) -> Vec<Window> {
    let mut out = Vec::with_capacity(sets.len());
    out.extend(sets.normal.iter().cloned());
    out.extend(sets.abnormal.iter().cloned());
    out.extend(sets.fuzzy.iter().cloned());
    out.sort_by_key(|w| w.key());
    out
}
