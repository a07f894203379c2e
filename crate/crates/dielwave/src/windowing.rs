use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{worst_case_label, Label, LabeledSeries, PeriodConfig, Window};

/// All materialized windows of a dataset, partitioned by label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowSets {
    pub normal: Vec<Window>,
    pub abnormal: Vec<Window>,
    pub fuzzy: Vec<Window>,
}

impl WindowSets {
    pub fn len(&self) -> usize {
        self.normal.len() + self.abnormal.len() + self.fuzzy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn merge(&mut self, other: WindowSets) {
        self.normal.extend(other.normal);
        self.abnormal.extend(other.abnormal);
        self.fuzzy.extend(other.fuzzy);
    }

    /// Checks the partition property: labels match the set each window is
    /// in, and no window key appears twice.
    pub fn validate(&self) -> Result<()> {
        let mut keys = std::collections::BTreeSet::new();
        let groups = [
            (&self.normal, Label::Normal),
            (&self.abnormal, Label::Abnormal),
            (&self.fuzzy, Label::Fuzzy),
        ];
        for (set, label) in groups {
            for w in set {
                if w.label() != label {
                    return Err(Error::InvalidArgument(format!(
                        "window {}@{} labeled {:?} stored in the {:?} set",
                        w.individual(),
                        w.start_index(),
                        w.label(),
                        label
                    )));
                }
                if !keys.insert(w.key()) {
                    return Err(Error::InvalidArgument(format!(
                        "window {}@{} appears twice",
                        w.individual(),
                        w.start_index()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A maximal chain of windows from one individual whose start indices
/// increase by exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsecutiveRun {
    windows: Vec<Window>,
}

impl ConsecutiveRun {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// One train/test separation. Training holds only Normal windows; the test
/// side always holds every Abnormal and Fuzzy window plus the normal runs
/// drawn to balance it.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub seed: u64,
    /// Set when the normal pool was fully consumed, leaving nothing to train
    /// on (tiny or extremely abnormal datasets).
    pub balance_warning: bool,
}

impl Split {
    /// Number of normal windows on the test side.
    pub fn test_normal_count(&self) -> usize {
        self.test
            .iter()
            .filter(|w| w.label() == Label::Normal)
            .count()
    }
}

/// Materializes every fully observed window of `q` consecutive samples,
/// stepping the start by `step`, and buckets it by its worst-case label.
pub fn extract_windows(
    series: &LabeledSeries,
    config: &PeriodConfig,
    step: usize,
) -> Result<WindowSets> {
    if step == 0 {
        return Err(Error::InvalidArgument("window step must be at least 1".into()));
    }
    let q = config.window_size();
    let mut sets = WindowSets::default();
    if series.len() < q {
        return Ok(sets);
    }
    let values = series.values();
    let labels = series.labels();
    for start in (0..=series.len() - q).step_by(step) {
        let slice = &values[start..start + q];
        if slice.iter().any(Option::is_none) {
            continue;
        }
        let observed: Vec<f64> = slice.iter().map(|v| v.expect("checked above")).collect();
        let label = worst_case_label(&labels[start..start + q])?;
        let window = Window::new(
            series.individual().clone(),
            start,
            series.phase(start, config.period_length()),
            series.instant(start),
            observed,
            label,
        );
        match label {
            Label::Normal => sets.normal.push(window),
            Label::Abnormal => sets.abnormal.push(window),
            Label::Fuzzy => sets.fuzzy.push(window),
        }
    }
    Ok(sets)
}

/// Windows of a whole dataset, merged over individuals.
pub fn extract_all(
    series: &[LabeledSeries],
    config: &PeriodConfig,
    step: usize,
) -> Result<WindowSets> {
    let mut sets = WindowSets::default();
    for s in series {
        sets.merge(extract_windows(s, config, step)?);
    }
    Ok(sets)
}

/// Partition into maximal consecutive runs, per individual, ordered by
/// (individual, first start index).
pub fn group_consecutive(windows: &[Window]) -> Vec<ConsecutiveRun> {
    let mut sorted: Vec<&Window> = windows.iter().collect();
    sorted.sort_by_key(|w| w.key());
    let mut runs: Vec<ConsecutiveRun> = Vec::new();
    for w in sorted {
        let extends = runs.last().is_some_and(|run| {
            let last = run.windows.last().expect("runs are non-empty");
            last.individual() == w.individual() && last.start_index() + 1 == w.start_index()
        });
        if extends {
            runs.last_mut().expect("just checked").windows.push(w.clone());
        } else {
            runs.push(ConsecutiveRun {
                windows: vec![w.clone()],
            });
        }
    }
    runs
}

/// Balanced separation: the test set starts as Abnormal plus Fuzzy, then
/// whole normal runs are drawn uniformly without replacement until the test
/// side holds at least as many Normal windows as there are Abnormal ones
/// (fuzzy windows do not count toward the balance). Whatever normal windows
/// remain form the training set.
pub fn build_train_test(sets: &WindowSets, seed: u64) -> Result<Split> {
    sets.validate()?;
    let mut test: Vec<Window> = Vec::with_capacity(sets.abnormal.len() + sets.fuzzy.len());
    test.extend(sets.abnormal.iter().cloned());
    test.extend(sets.fuzzy.iter().cloned());

    let mut pool = group_consecutive(&sets.normal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal_in_test = 0usize;
    while normal_in_test < sets.abnormal.len() && !pool.is_empty() {
        let pick = rng.gen_range(0..pool.len());
        let run = pool.swap_remove(pick);
        normal_in_test += run.len();
        test.extend(run.windows);
    }

    let mut remaining: Vec<ConsecutiveRun> = pool;
    remaining.sort_by_key(|r| r.windows[0].key());
    let train: Vec<Window> = remaining
        .into_iter()
        .flat_map(|r| r.windows)
        .collect();

    Ok(Split {
        balance_warning: train.is_empty(),
        train,
        test,
        seed,
    })
}
