//! Acceptance gate for the whole pipeline. Each check prints one
//! [PASS]/[FAIL] line (visible with --nocapture, or in the panic message on
//! failure) and pins its tolerance explicitly.
//!
//! Check 05 pins externally reported metric triples and is expected to stay
//! red: one reported F1 cannot be reproduced from its own precision/recall
//! within rounding, and the check documents that by failing.

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dielwave::attribution::shapley_vector;
use dielwave::evaluation::{
    abnormal_days, distance_of_detection, offset_to_nearest, predicted_states, run_paired,
    run_protocol, ExperimentProtocol, RunOptions,
};
use dielwave::features::{FeatureConfig, FeatureMatrix, WindowMeta};
use dielwave::iforest::{fit, ForestModel, ForestParams};
use dielwave::ingest::{self, activity_level, FuzzyPolicy, HourlyRecord};
use dielwave::model::{Label, LabeledSeries, PeriodConfig, Verdict};
use dielwave::synth::{self, SynthParams};
use dielwave::wavelet::{
    dwt_approx, dwt_full, idwt, max_level, standard_specs, BoundaryMode, Family, WaveletSpec,
};
use dielwave::windowing::{build_train_test, extract_all, extract_windows, group_consecutive};

fn pass(check: &str, detail: String) {
    println!("[PASS] {check}: {detail}");
}

fn fail(check: &str, detail: String) -> ! {
    panic!("[FAIL] {check}: {detail}");
}

fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 3, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn period() -> PeriodConfig {
    PeriodConfig::new(24, 24).unwrap()
}

#[test]
fn check_01_transform_round_trip() {
    let t0 = Instant::now();
    let specs = standard_specs(24);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-10.0..10.0)).collect();
        for &spec in &specs {
            let d = dwt_full(&x, spec, BoundaryMode::Symmetric).unwrap();
            let y = idwt(&d).unwrap();
            let err = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if worst >= 1e-9 {
        fail("check 01", format!("round-trip error {worst:.3e} >= 1e-9"));
    }
    if secs >= 10.0 {
        fail("check 01", format!("took {secs:.1}s, budget 10s"));
    }
    pass(
        "check 01",
        format!(
            "{} spec round-trips on 1000 signals, max error {worst:.3e} < 1e-9, {secs:.2}s"
        , specs.len()),
    );
}

/// Half-sample symmetric index: ... x1 x0 | x0 x1 ... xn-1 | xn-1 ...
fn reflect(k: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut m = k % period;
    if m < 0 {
        m += period;
    }
    (if m < n { m } else { period - 1 - m }) as usize
}

/// One pad-convolve-decimate stage written independently of the library:
/// full convolution against the reflected extension, keeping odd indices.
fn oracle_stage(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let n = x.len() as i64;
    let out_len = ((x.len() + filter.len() - 1) / 2) as i64;
    (0..out_len)
        .map(|i| {
            filter
                .iter()
                .enumerate()
                .map(|(j, &f)| f * x[reflect(2 * i + 1 - j as i64, n)])
                .sum()
        })
        .collect()
}

fn oracle_approx(x: &[f64], spec: WaveletSpec) -> Vec<f64> {
    let dec_lo = spec.family.filter_bank().dec_lo;
    let mut cur = x.to_vec();
    for _ in 0..spec.level {
        cur = oracle_stage(&cur, &dec_lo);
    }
    cur
}

#[test]
fn check_02_decomposition_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst = 0.0f64;
    for &spec in &standard_specs(24) {
        for _ in 0..100 {
            let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let got = dwt_approx(&x, spec, BoundaryMode::Symmetric).unwrap();
            let want = oracle_approx(&x, spec);
            assert_eq!(got.len(), want.len(), "length mismatch for {spec}");
            let err = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    if worst >= 1e-12 {
        fail("check 02", format!("oracle deviation {worst:.3e} >= 1e-12"));
    }
    pass(
        "check 02",
        format!("independent convolve-decimate oracle agrees, max deviation {worst:.3e} < 1e-12"),
    );
}

#[test]
fn check_03_feasible_levels_for_24_samples() {
    let expected = [
        (Family::Haar, 4usize),
        (Family::Db2, 3),
        (Family::Db3, 2),
        (Family::Coif1, 2),
        (Family::Bior1_3, 2),
        (Family::Bior2_2, 2),
        (Family::Bior3_1, 3),
        (Family::Rbio2_2, 2),
        (Family::Rbio3_1, 3),
    ];
    for (family, levels) in expected {
        let got = max_level(family, 24);
        if got != levels {
            fail(
                "check 03",
                format!("{} admits {got} levels, expected {levels}", family.name()),
            );
        }
    }
    let total = standard_specs(24).len();
    if total != 23 {
        fail("check 03", format!("{total} specs enumerated, expected 23"));
    }
    pass(
        "check 03",
        "all nine families admit the expected depth at 24 samples, 23 specs total".into(),
    );
}

#[test]
fn check_04_feature_catalog_counts() {
    let full = FeatureConfig::default().catalog_names();
    let stats_only = FeatureConfig::default().without_wavelets().catalog_names();
    if full.len() != 50 || stats_only.len() != 27 {
        fail(
            "check 04",
            format!(
                "catalog sizes {} full / {} stats-only, expected 50 / 27",
                full.len(),
                stats_only.len()
            ),
        );
    }
    pass(
        "check 04",
        "23 wavelet + 27 statistical = 50 features before pruning".into(),
    );
}

#[test]
fn check_05_reference_metric_consistency() {
    // (recall, precision, reported F1) per condition; tolerance ±0.01.
    let cells = [
        ("set 1, statistics only", 0.12, 0.54, 0.17),
        ("set 1, with wavelets", 0.13, 0.67, 0.22),
        ("set 2, statistics only", 0.14, 0.64, 0.22),
        ("set 2, with wavelets", 0.12, 0.68, 0.21),
    ];
    let mut failures = Vec::new();
    for (name, recall, precision, reported) in cells {
        let f1 = 2.0 * precision * recall / (precision + recall);
        let delta: f64 = f1 - reported;
        let status = if delta.abs() <= 0.01 + 1e-12 {
            "consistent"
        } else {
            failures.push(format!(
                "{name}: recomputed F1 {f1:.5} vs reported {reported} (|delta| {:.3} > 0.01)",
                delta.abs()
            ));
            "INCONSISTENT"
        };
        println!("  {name}: recomputed F1 {f1:.5}, reported {reported}, {status}");
    }
    if !failures.is_empty() {
        fail(
            "check 05",
            format!(
                "{} of 4 reported F1 values cannot be derived from their own precision/recall: {}",
                failures.len(),
                failures.join("; ")
            ),
        );
    }
    pass(
        "check 05",
        "all four reported F1 values consistent with their precision/recall within 0.01".into(),
    );
}

fn random_labeled_dataset(seed: u64) -> Vec<LabeledSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_individuals = rng.gen_range(1..=3);
    (0..n_individuals)
        .map(|i| {
            let days = rng.gen_range(3..=10);
            let len = days * 24;
            let values: Vec<Option<f64>> = (0..len)
                .map(|_| (!rng.gen_bool(0.05)).then(|| rng.gen_range(0.0..30.0)))
                .collect();
            let labels: Vec<Label> = (0..days)
                .flat_map(|_| {
                    let label = match rng.gen_range(0..10) {
                        0..=6 => Label::Normal,
                        7 | 8 => Label::Fuzzy,
                        _ => Label::Abnormal,
                    };
                    vec![label; 24]
                })
                .collect();
            LabeledSeries::new(format!("ind-{i}").as_str().into(), start(), values, labels)
                .unwrap()
        })
        .collect()
}

#[test]
fn check_06_split_invariants_hold() {
    let period = period();
    let mut balanced = 0usize;
    for seed in 0..100u64 {
        let series = random_labeled_dataset(seed);
        let sets = extract_all(&series, &period, 1).unwrap();
        let split = build_train_test(&sets, seed).unwrap();

        let train_keys: BTreeSet<_> = split.train.iter().map(|w| w.key()).collect();
        let test_keys: BTreeSet<_> = split.test.iter().map(|w| w.key()).collect();
        for w in sets.abnormal.iter().chain(&sets.fuzzy) {
            if !test_keys.contains(&w.key()) {
                fail(
                    "check 06",
                    format!("seed {seed}: non-normal window missing from test"),
                );
            }
        }
        if !train_keys.is_disjoint(&test_keys) {
            fail("check 06", format!("seed {seed}: train and test overlap"));
        }
        if split.train.iter().any(|w| w.label() != Label::Normal) {
            fail("check 06", format!("seed {seed}: non-normal window in train"));
        }
        for run in group_consecutive(&sets.normal) {
            let in_test = run
                .windows()
                .iter()
                .filter(|w| test_keys.contains(&w.key()))
                .count();
            if in_test != 0 && in_test != run.len() {
                fail(
                    "check 06",
                    format!("seed {seed}: a consecutive run straddles the split"),
                );
            }
        }
        let attainable = sets.normal.len() >= sets.abnormal.len();
        if attainable {
            if split.test_normal_count() < sets.abnormal.len() {
                fail(
                    "check 06",
                    format!(
                        "seed {seed}: test holds {} normal windows, fewer than {} abnormal",
                        split.test_normal_count(),
                        sets.abnormal.len()
                    ),
                );
            }
            balanced += 1;
        }
    }
    pass(
        "check 06",
        format!("all invariants over 100 random datasets ({balanced} with attainable balance)"),
    );
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn plain_matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let width = rows[0].len();
    FeatureMatrix {
        names: (0..width).map(|i| format!("f{i}")).collect(),
        meta: rows
            .iter()
            .enumerate()
            .map(|(i, _)| WindowMeta {
                individual: "synthetic".into(),
                start_index: i,
                start_phase: 0,
                start_instant: start(),
                label: Label::Normal,
            })
            .collect(),
        rows,
    }
}

#[test]
fn check_07_forest_separates_outliers() {
    let t0 = Instant::now();
    let n_inliers = 256;
    let n_outliers = 8;
    let mut separated = 0;
    let mut auc_sum = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let mut rows: Vec<Vec<f64>> = (0..n_inliers)
            .map(|_| vec![gauss(&mut rng), gauss(&mut rng)])
            .collect();
        for _ in 0..n_outliers {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = rng.gen_range(9.0..12.0);
            rows.push(vec![radius * angle.cos(), radius * angle.sin()]);
        }
        let matrix = plain_matrix(rows);
        let model = fit(&matrix, &ForestParams { seed, ..ForestParams::default() }).unwrap();
        let scores = model.score_matrix(&matrix).unwrap();
        let (inlier, outlier) = scores.split_at(n_inliers);

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        if mean(outlier) > mean(inlier) {
            separated += 1;
        }
        let mut pairs = 0.0;
        for &o in outlier {
            for &i in inlier {
                if o > i {
                    pairs += 1.0;
                } else if o == i {
                    pairs += 0.5;
                }
            }
        }
        auc_sum += pairs / (n_inliers as f64 * n_outliers as f64);
    }
    let mean_auc = auc_sum / 20.0;
    let secs = t0.elapsed().as_secs_f64();
    if separated < 19 {
        fail(
            "check 07",
            format!("outlier mean beat inlier mean in only {separated}/20 seeds (need 19)"),
        );
    }
    if mean_auc < 0.95 {
        fail("check 07", format!("mean AUC {mean_auc:.4} < 0.95"));
    }
    if secs >= 30.0 {
        fail("check 07", format!("took {secs:.1}s, budget 30s"));
    }
    pass(
        "check 07",
        format!("separation in {separated}/20 seeds, mean AUC {mean_auc:.4} >= 0.95, {secs:.1}s"),
    );
}

/// Exact Shapley values by enumerating all 2^F coalitions; the value of a
/// coalition is the mean model score over background rows with the
/// coalition's features taken from `x`.
fn exact_shapley(model: &ForestModel, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let n_features = x.len();
    let n_masks = 1usize << n_features;
    let mut coalition_value = vec![0.0; n_masks];
    for (mask, value) in coalition_value.iter_mut().enumerate() {
        let mut total = 0.0;
        for row in background {
            let hybrid: Vec<f64> = (0..n_features)
                .map(|f| if mask & (1 << f) != 0 { x[f] } else { row[f] })
                .collect();
            total += model.anomaly_score(&hybrid).unwrap();
        }
        *value = total / background.len() as f64;
    }
    let factorial = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let denom = factorial(n_features);
    (0..n_features)
        .map(|f| {
            let mut phi = 0.0;
            for mask in 0..n_masks {
                if mask & (1 << f) != 0 {
                    continue;
                }
                let size = mask.count_ones() as usize;
                let weight = factorial(size) * factorial(n_features - size - 1) / denom;
                phi += weight * (coalition_value[mask | (1 << f)] - coalition_value[mask]);
            }
            phi
        })
        .collect()
}

#[test]
fn check_08_shapley_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let rows: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let matrix = plain_matrix(rows);
    let model = fit(
        &matrix,
        &ForestParams {
            n_trees: 40,
            seed: 8,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let x = vec![0.9, -0.8, 0.7, 0.2, -0.1, 0.95];
    let background: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let n_permutations = 10_000;
    let estimate = shapley_vector(&model, &x, &background, n_permutations, 88).unwrap();
    let exact = exact_shapley(&model, &x, &background);
    let worst = estimate
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst >= 0.01 {
        fail(
            "check 08",
            format!("Monte-Carlo deviates from enumeration by {worst:.4} >= 0.01"),
        );
    }

    let bg_scores: Vec<f64> = background
        .iter()
        .map(|r| model.anomaly_score(r).unwrap())
        .collect();
    let bg_mean = bg_scores.iter().sum::<f64>() / bg_scores.len() as f64;
    let bg_std = (bg_scores.iter().map(|s| (s - bg_mean).powi(2)).sum::<f64>()
        / bg_scores.len() as f64)
        .sqrt();
    let standard_error = bg_std / (n_permutations as f64).sqrt();
    let efficiency_gap =
        (estimate.iter().sum::<f64>() - (model.anomaly_score(&x).unwrap() - bg_mean)).abs();
    if efficiency_gap > 3.0 * standard_error {
        fail(
            "check 08",
            format!("efficiency gap {efficiency_gap:.2e} > 3 SE ({standard_error:.2e})"),
        );
    }
    pass(
        "check 08",
        format!(
            "10k-permutation estimate within {worst:.4} of 2^6 enumeration, efficiency gap {efficiency_gap:.2e} <= 3 SE"
        ),
    );
}

#[test]
fn check_09_detection_distances_exact() {
    let period = period();

    // Seven days, the fifth annotated abnormal; the detector fires on the
    // third, two days early.
    let len = 7 * 24;
    let values: Vec<Option<f64>> = (0..len).map(|i| Some((i % 24) as f64)).collect();
    let labels: Vec<Label> = (0..len)
        .map(|i| {
            if (96..120).contains(&i) {
                Label::Abnormal
            } else {
                Label::Normal
            }
        })
        .collect();
    let series = LabeledSeries::new("ind-d".into(), start(), values, labels).unwrap();
    let sets = extract_windows(&series, &period, 24).unwrap();
    let mut windows = sets.normal.clone();
    windows.extend(sets.abnormal.iter().cloned());
    windows.sort_by_key(|w| w.key());
    assert_eq!(windows.len(), 7);
    let verdicts: Vec<Verdict> = (0..7)
        .map(|d| if d == 2 { Verdict::Abnormal } else { Verdict::Normal })
        .collect();
    let predicted = predicted_states(&series, &windows, &verdicts, 0.0, 12).unwrap();
    let detected = predicted.detected_abnormal_days();
    let annotated = abnormal_days(&series);
    assert_eq!(annotated, vec![start().date() + chrono::Duration::days(4)]);
    let distances = distance_of_detection(&detected, &annotated);
    if distances.offsets != vec![-2] || distances.unmatched != 0 {
        fail(
            "check 09",
            format!("early detection gave offsets {:?}", distances.offsets),
        );
    }

    // Equidistant detections resolve to the early (negative) side.
    let d = |n: i64| start().date() + chrono::Duration::days(n);
    if offset_to_nearest(d(2), &[d(0), d(4)]) != Some(-2) {
        fail("check 09", "equidistant tie did not pick the negative offset".into());
    }

    // Strict theta: a predicted state of exactly 0 stays Normal at theta 0
    // and flips once theta moves above it.
    let len = 25;
    let values: Vec<Option<f64>> = (0..len).map(|i| Some(i as f64)).collect();
    let series =
        LabeledSeries::new("ind-b".into(), start(), values, vec![Label::Normal; len]).unwrap();
    let sets = extract_windows(&series, &period, 1).unwrap();
    let mut windows = sets.normal.clone();
    windows.sort_by_key(|w| w.key());
    assert_eq!(windows.len(), 2);
    let verdicts = vec![Verdict::Normal, Verdict::Abnormal];
    let boundary = predicted_states(&series, &windows, &verdicts, 0.0, 12).unwrap();
    assert_eq!(boundary.values[1], Some(0.0));
    if !boundary.detected_abnormal_days().is_empty() {
        fail("check 09", "value 0 flagged abnormal at theta 0".into());
    }
    let nudged = predicted_states(&series, &windows, &verdicts, 1e-9, 12).unwrap();
    if nudged.detected_abnormal_days() != vec![start().date()] {
        fail("check 09", "value 0 not abnormal once theta exceeds it".into());
    }

    pass(
        "check 09",
        "offsets enumerate exactly (early -2, tie -> negative) and theta is strict".into(),
    );
}

fn synth_window_sets(seed: u64, days: usize, noise: f64) -> dielwave::windowing::WindowSets {
    let data = synth::generate(&SynthParams {
        individuals: 6,
        days,
        noise,
        missing_rate: 0.0,
        anomaly_rate: 0.05,
        event_rate: 0.0,
        seed,
        ..SynthParams::default()
    })
    .unwrap();
    let records: Vec<HourlyRecord> = data
        .records
        .iter()
        .map(|r| HourlyRecord {
            individual: r.individual.clone(),
            timestamp: r.timestamp,
            activity_level: activity_level(r.resting, r.alleys, r.eating).unwrap(),
        })
        .collect();
    let out = ingest::build_series(records, &data.annotations, &FuzzyPolicy::default(), 1000.0)
        .unwrap();
    extract_all(&out.series, &period(), 1).unwrap()
}

#[test]
fn check_10_wavelets_do_not_hurt_precision() {
    let t0 = Instant::now();
    let protocol = ExperimentProtocol {
        n_splits: 2,
        max_iterations: 4,
        stabilization_epsilon: 0.01,
        stabilization_window: 3,
    };
    let options = RunOptions::default();
    // Noisy enough that plain statistics miss a good share of the shifted
    // days; with low noise every detector saturates and precision is
    // decided by false positives alone.
    let results: Vec<(Option<f64>, Option<f64>)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let sets = synth_window_sets(3000 + s, 45, 5.0);
            let (with, without) =
                run_paired(&sets, &period(), &protocol, &options, 4000 + s).unwrap();
            (
                with.aggregate.precision.map(|m| m.mean),
                without.aggregate.precision.map(|m| m.mean),
            )
        })
        .collect();
    let defined: Vec<(f64, f64)> = results
        .iter()
        .filter_map(|(w, wo)| w.zip(*wo))
        .collect();
    assert!(
        defined.len() >= 15,
        "precision undefined in {} of 20 paired runs",
        20 - defined.len()
    );
    let mean_with = defined.iter().map(|p| p.0).sum::<f64>() / defined.len() as f64;
    let mean_without = defined.iter().map(|p| p.1).sum::<f64>() / defined.len() as f64;
    let gap = mean_with - mean_without;
    let secs = t0.elapsed().as_secs_f64();
    if gap < -0.02 {
        fail(
            "check 10",
            format!(
                "wavelet features cost {:.3} precision (with {mean_with:.3} vs without {mean_without:.3})",
                -gap
            ),
        );
    }
    if secs >= 300.0 {
        fail("check 10", format!("took {secs:.0}s, budget 300s"));
    }
    let verdict = if gap.abs() <= 0.02 {
        format!("gap {gap:+.3} within the ±0.02 noise band (reported, not failed)")
    } else {
        format!("precision improves by {gap:+.3}")
    };
    pass(
        "check 10",
        format!(
            "with {mean_with:.3} vs without {mean_without:.3} over {} paired seeds, {verdict}, {secs:.0}s",
            defined.len()
        ),
    );
}

#[test]
fn check_11_stabilization_stops_on_schedule() {
    // High noise keeps per-iteration accuracy genuinely fluctuating, so
    // the epsilon = 0 arm cannot stabilize by accident.
    let sets = synth_window_sets(77, 30, 5.0);
    let protocol = ExperimentProtocol {
        n_splits: 2,
        max_iterations: 20,
        stabilization_epsilon: 0.001,
        stabilization_window: 5,
    };

    let deterministic = RunOptions {
        reseed_each_iteration: false,
        ..RunOptions::default()
    };
    let outcome = run_protocol(&sets, &period(), &protocol, &deterministic, 7).unwrap();
    for split in &outcome.splits {
        if split.iterations.len() != protocol.stabilization_window {
            fail(
                "check 11",
                format!(
                    "deterministic scorer ran {} iterations on split {}, expected exactly {}",
                    split.iterations.len(),
                    split.split_index,
                    protocol.stabilization_window
                ),
            );
        }
    }

    let zero_epsilon = ExperimentProtocol {
        stabilization_epsilon: 0.0,
        ..protocol.clone()
    };
    let stochastic = RunOptions::default();
    let outcome = run_protocol(&sets, &period(), &zero_epsilon, &stochastic, 7).unwrap();
    let mut varied = false;
    for split in &outcome.splits {
        if split.iterations.len() != protocol.max_iterations {
            fail(
                "check 11",
                format!(
                    "epsilon 0 stopped after {} iterations on split {}, expected all {}",
                    split.iterations.len(),
                    split.split_index,
                    protocol.max_iterations
                ),
            );
        }
        let accuracies: Vec<Option<f64>> =
            split.iterations.iter().map(|i| i.metrics.accuracy).collect();
        varied |= accuracies.windows(2).any(|w| w[0] != w[1]);
    }
    if !varied {
        fail(
            "check 11",
            "reseeded scorer produced identical accuracy in every iteration".into(),
        );
    }
    pass(
        "check 11",
        format!(
            "deterministic scorer stops at exactly {} iterations, epsilon 0 runs all {}",
            protocol.stabilization_window, protocol.max_iterations
        ),
    );
}
