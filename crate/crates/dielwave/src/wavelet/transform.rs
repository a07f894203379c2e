use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::wavelet::filters::{Family, FilterBank};

/// How the signal is extended past its ends during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Half-sample mirror: ... x1 x0 | x0 x1 ... xn-1 | xn-1 xn-2 ...
    #[default]
    Symmetric,
    /// Circular wrap; odd-length signals are first evened out by repeating
    /// the last sample. Keeps the total coefficient count at the signal
    /// length for even inputs.
    Periodic,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Symmetric => "symmetric",
            BoundaryMode::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Result<BoundaryMode> {
        match s {
            "symmetric" => Ok(BoundaryMode::Symmetric),
            "periodic" => Ok(BoundaryMode::Periodic),
            other => Err(Error::InvalidArgument(format!(
                "unknown boundary mode '{other}' (expected 'symmetric' or 'periodic')"
            ))),
        }
    }
}

impl std::fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A wavelet family together with a decomposition depth. Rendered as
/// `family|level`, e.g. `haar|3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WaveletSpec {
    pub family: Family,
    pub level: usize,
}

impl WaveletSpec {
    pub fn new(family: Family, level: usize) -> Self {
        WaveletSpec { family, level }
    }

    pub fn name(&self) -> String {
        format!("{}|{}", self.family.name(), self.level)
    }

    pub fn parse(s: &str) -> Result<WaveletSpec> {
        let (family, level) = s
            .split_once('|')
            .ok_or_else(|| Error::InvalidArgument(format!("malformed wavelet spec '{s}'")))?;
        let level: usize = level
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad level in wavelet spec '{s}'")))?;
        Ok(WaveletSpec::new(Family::parse(family)?, level))
    }
}

impl std::fmt::Display for WaveletSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for WaveletSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for WaveletSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        WaveletSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Deepest decomposition level for which at least one full filter application
/// fits: floor(log2(n / (L - 1))).
pub fn max_level(family: Family, signal_len: usize) -> usize {
    let l = family.filter_length();
    let ratio = signal_len / (l - 1);
    if ratio == 0 {
        0
    } else {
        ratio.ilog2() as usize
    }
}

/// Every feasible (family, level) pair for a signal of `signal_len` samples,
/// in family order, shallow levels first.
pub fn standard_specs(signal_len: usize) -> Vec<WaveletSpec> {
    Family::ALL
        .into_iter()
        .flat_map(|family| (1..=max_level(family, signal_len)).map(move |l| WaveletSpec::new(family, l)))
        .collect()
}

/// Length of one analysis stage's output for an input of `n` samples.
fn stage_len(n: usize, filter_len: usize, mode: BoundaryMode) -> usize {
    match mode {
        BoundaryMode::Symmetric => (n + filter_len - 1) / 2,
        BoundaryMode::Periodic => n.div_ceil(2),
    }
}

/// Mirror an out-of-range index into [0, n): half-sample symmetry, period 2n.
fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let mut i = i.rem_euclid(p);
    if i >= n as isize {
        i = p - 1 - i;
    }
    i as usize
}

/// One analysis stage: convolve with both filters and keep every second
/// output, starting at signal position 1.
fn analyze_stage(x: &[f64], fb: &FilterBank, mode: BoundaryMode) -> (Vec<f64>, Vec<f64>) {
    let l = fb.len();
    match mode {
        BoundaryMode::Symmetric => {
            let n = x.len();
            let m = stage_len(n, l, mode);
            let mut approx = vec![0.0; m];
            let mut detail = vec![0.0; m];
            for i in 0..m {
                let mut a = 0.0;
                let mut d = 0.0;
                for j in 0..l {
                    let v = x[reflect(2 * i as isize + 1 - j as isize, n)];
                    a += fb.dec_lo[j] * v;
                    d += fb.dec_hi[j] * v;
                }
                approx[i] = a;
                detail[i] = d;
            }
            (approx, detail)
        }
        BoundaryMode::Periodic => {
            let padded;
            let x = if x.len() % 2 == 1 {
                padded = {
                    let mut p = x.to_vec();
                    p.push(*x.last().expect("non-empty signal"));
                    p
                };
                &padded[..]
            } else {
                x
            };
            let n = x.len();
            let m = n / 2;
            let mut approx = vec![0.0; m];
            let mut detail = vec![0.0; m];
            for i in 0..m {
                let mut a = 0.0;
                let mut d = 0.0;
                for j in 0..l {
                    let v = x[(2 * i as isize + 1 - j as isize).rem_euclid(n as isize) as usize];
                    a += fb.dec_lo[j] * v;
                    d += fb.dec_hi[j] * v;
                }
                approx[i] = a;
                detail[i] = d;
            }
            (approx, detail)
        }
    }
}

/// One synthesis stage, undoing `analyze_stage` exactly for the recorded
/// input length.
fn synthesize_stage(
    approx: &[f64],
    detail: &[f64],
    fb: &FilterBank,
    mode: BoundaryMode,
    input_len: usize,
) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::InvalidArgument(format!(
            "approximation and detail lengths differ: {} vs {}",
            approx.len(),
            detail.len()
        )));
    }
    let m = approx.len();
    let l = fb.len();
    match mode {
        BoundaryMode::Symmetric => {
            let mut full = vec![0.0; 2 * m + l - 2];
            for i in 0..m {
                for j in 0..l {
                    full[2 * i + j] += approx[i] * fb.rec_lo[j] + detail[i] * fb.rec_hi[j];
                }
            }
            let start = l - 2;
            let take = 2 * m + 2 - l;
            if take < input_len {
                return Err(Error::InvalidArgument(format!(
                    "coefficient vectors of length {m} cannot reconstruct {input_len} samples"
                )));
            }
            Ok(full[start..start + input_len].to_vec())
        }
        BoundaryMode::Periodic => {
            let n = 2 * m;
            if input_len > n {
                return Err(Error::InvalidArgument(format!(
                    "coefficient vectors of length {m} cannot reconstruct {input_len} samples"
                )));
            }
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..l {
                    let idx = (2 * i + j) as isize - (l as isize - 2);
                    out[idx.rem_euclid(n as isize) as usize] +=
                        approx[i] * fb.rec_lo[j] + detail[i] * fb.rec_hi[j];
                }
            }
            out.truncate(input_len);
            Ok(out)
        }
    }
}

/// Multi-level wavelet decomposition. `details[0]` is the finest level;
/// `input_lengths[k]` is the number of samples fed into stage `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub spec: WaveletSpec,
    pub mode: BoundaryMode,
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    input_lengths: Vec<usize>,
}

impl Decomposition {
    pub fn input_lengths(&self) -> &[usize] {
        &self.input_lengths
    }

    /// Total number of coefficients across the approximation and all details.
    pub fn coefficient_count(&self) -> usize {
        self.approx.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }
}

fn validate_request(signal: &[f64], spec: WaveletSpec) -> Result<()> {
    if signal.is_empty() {
        return Err(Error::InvalidArgument("cannot transform an empty signal".into()));
    }
    let feasible = max_level(spec.family, signal.len());
    if spec.level > feasible {
        return Err(Error::InvalidArgument(format!(
            "level {} of {} exceeds the maximum {} for {} samples",
            spec.level,
            spec.family,
            feasible,
            signal.len()
        )));
    }
    Ok(())
}

/// Full decomposition to `spec.level` levels. Level 0 is the identity.
pub fn dwt_full(signal: &[f64], spec: WaveletSpec, mode: BoundaryMode) -> Result<Decomposition> {
    validate_request(signal, spec)?;
    let fb = spec.family.filter_bank();
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(spec.level);
    let mut input_lengths = Vec::with_capacity(spec.level);
    for _ in 0..spec.level {
        input_lengths.push(approx.len());
        let (a, d) = analyze_stage(&approx, &fb, mode);
        approx = a;
        details.push(d);
    }
    Ok(Decomposition {
        spec,
        mode,
        approx,
        details,
        input_lengths,
    })
}

/// Approximation coefficients at `spec.level` only.
pub fn dwt_approx(signal: &[f64], spec: WaveletSpec, mode: BoundaryMode) -> Result<Vec<f64>> {
    Ok(dwt_full(signal, spec, mode)?.approx)
}

/// Inverse transform; exact for untouched coefficient sets.
pub fn idwt(decomposition: &Decomposition) -> Result<Vec<f64>> {
    let Decomposition {
        spec,
        mode,
        approx,
        details,
        input_lengths,
    } = decomposition;
    if details.len() != spec.level || input_lengths.len() != spec.level {
        return Err(Error::InvalidArgument(format!(
            "decomposition for level {} carries {} detail bands and {} stage lengths",
            spec.level,
            details.len(),
            input_lengths.len()
        )));
    }
    let fb = spec.family.filter_bank();
    for (stage, (&n_in, detail)) in input_lengths.iter().zip(details).enumerate() {
        let expect = stage_len(n_in, fb.len(), *mode);
        if detail.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "stage {stage} detail has {} coefficients, expected {expect}",
                detail.len()
            )));
        }
    }
    if let Some(&deepest) = input_lengths.last() {
        let expect = stage_len(deepest, fb.len(), *mode);
        if approx.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "approximation has {} coefficients, expected {expect}",
                approx.len()
            )));
        }
    }
    let mut current = approx.clone();
    for stage in (0..spec.level).rev() {
        current = synthesize_stage(&current, &details[stage], &fb, *mode, input_lengths[stage])?;
    }
    Ok(current)
}

/// Smooth version of the signal: reconstruction with all detail bands zeroed.
pub fn approx_reconstruction(
    signal: &[f64],
    spec: WaveletSpec,
    mode: BoundaryMode,
) -> Result<Vec<f64>> {
    let mut d = dwt_full(signal, spec, mode)?;
    for band in &mut d.details {
        band.iter_mut().for_each(|v| *v = 0.0);
    }
    idwt(&d)
}
