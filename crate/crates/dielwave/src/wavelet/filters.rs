use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Daubechies 3 scaling filter (synthesis low-pass). Solved to 40 digits from
/// the defining equations: sum = sqrt(2), double-shift orthonormality, and
/// three vanishing moments. Digits beyond f64 keep the rounding correct.
#[allow(clippy::excessive_precision)]
const DB3_REC_LO: [f64; 6] = [
    0.33267055295008261673,
    0.80689150931109257637,
    0.45987750211849156969,
    -0.13501102001025458870,
    -0.08544127388202666166,
    0.03522629188570953667,
];

/// Coiflet 1 scaling filter, same derivation with the Coifman moment
/// condition on the scaling function.
#[allow(clippy::excessive_precision)]
const COIF1_REC_LO: [f64; 6] = [
    -0.07273261951252644802,
    0.33789766245748176967,
    0.85257202021160042045,
    0.38486484686485774725,
    -0.07273261951252644802,
    -0.01565572813579199253,
];

/// Wavelet families available for the distance features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Haar,
    Db2,
    Db3,
    Coif1,
    Bior1_3,
    Bior2_2,
    Bior3_1,
    Rbio2_2,
    Rbio3_1,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Haar,
        Family::Db2,
        Family::Db3,
        Family::Coif1,
        Family::Bior1_3,
        Family::Bior2_2,
        Family::Bior3_1,
        Family::Rbio2_2,
        Family::Rbio3_1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Haar => "haar",
            Family::Db2 => "db2",
            Family::Db3 => "db3",
            Family::Coif1 => "coif1",
            Family::Bior1_3 => "bior1.3",
            Family::Bior2_2 => "bior2.2",
            Family::Bior3_1 => "bior3.1",
            Family::Rbio2_2 => "rbio2.2",
            Family::Rbio3_1 => "rbio3.1",
        }
    }

    pub fn filter_bank(self) -> FilterBank {
        match self {
            Family::Haar => FilterBank::orthogonal(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]),
            Family::Db2 => {
                let s3 = 3.0f64.sqrt();
                let d = 4.0 * std::f64::consts::SQRT_2;
                FilterBank::orthogonal(&[
                    (1.0 + s3) / d,
                    (3.0 + s3) / d,
                    (3.0 - s3) / d,
                    (1.0 - s3) / d,
                ])
            }
            Family::Db3 => FilterBank::orthogonal(&DB3_REC_LO),
            Family::Coif1 => FilterBank::orthogonal(&COIF1_REC_LO),
            Family::Bior1_3 => {
                let h = FRAC_1_SQRT_2;
                let e = 0.125 * FRAC_1_SQRT_2;
                FilterBank::biorthogonal(
                    &[-e, e, 8.0 * e, 8.0 * e, e, -e],
                    &[0.0, 0.0, h, h, 0.0, 0.0],
                )
            }
            Family::Bior2_2 => {
                let q = 0.25 * FRAC_1_SQRT_2;
                FilterBank::biorthogonal(
                    &[0.0, -q, 2.0 * q, 6.0 * q, 2.0 * q, -q],
                    &[0.0, 2.0 * q, 4.0 * q, 2.0 * q, 0.0, 0.0],
                )
            }
            Family::Bior3_1 => {
                let h = 0.5 * FRAC_1_SQRT_2;
                let q = 0.25 * FRAC_1_SQRT_2;
                FilterBank::biorthogonal(
                    &[-h, 3.0 * h, 3.0 * h, -h],
                    &[q, 3.0 * q, 3.0 * q, q],
                )
            }
            Family::Rbio2_2 => Family::Bior2_2.filter_bank().swapped(),
            Family::Rbio3_1 => Family::Bior3_1.filter_bank().swapped(),
        }
    }

    /// Common (zero-padded) length of the four filters.
    pub fn filter_length(self) -> usize {
        match self {
            Family::Haar => 2,
            Family::Db2 | Family::Bior3_1 | Family::Rbio3_1 => 4,
            _ => 6,
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown wavelet family '{s}'")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        Family::parse(s)
    }
}

/// Analysis (`dec_*`) and synthesis (`rec_*`) filter pairs, all padded to a
/// common length.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl FilterBank {
    /// Orthogonal bank from a scaling filter: synthesis low-pass is the
    /// scaling filter itself, analysis low-pass its reverse.
    fn orthogonal(scaling: &[f64]) -> FilterBank {
        let rec_lo = scaling.to_vec();
        let dec_lo: Vec<f64> = scaling.iter().rev().copied().collect();
        FilterBank::from_lowpass(dec_lo, rec_lo)
    }

    /// Biorthogonal bank from an analysis/synthesis low-pass pair.
    fn biorthogonal(dec_lo: &[f64], rec_lo: &[f64]) -> FilterBank {
        FilterBank::from_lowpass(dec_lo.to_vec(), rec_lo.to_vec())
    }

    /// High-pass filters by quadrature mirroring: the analysis high-pass
    /// alternates signs of the synthesis low-pass and vice versa.
    fn from_lowpass(dec_lo: Vec<f64>, rec_lo: Vec<f64>) -> FilterBank {
        assert_eq!(dec_lo.len(), rec_lo.len());
        let dec_hi: Vec<f64> = rec_lo
            .iter()
            .enumerate()
            .map(|(k, &v)| if k % 2 == 0 { -v } else { v })
            .collect();
        let rec_hi: Vec<f64> = dec_lo
            .iter()
            .enumerate()
            .map(|(k, &v)| if k % 2 == 0 { v } else { -v })
            .collect();
        FilterBank {
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }

    /// Reverse bank: analysis and synthesis roles exchanged, filters reversed.
    fn swapped(self) -> FilterBank {
        let rev = |v: Vec<f64>| -> Vec<f64> { v.into_iter().rev().collect() };
        FilterBank {
            dec_lo: rev(self.rec_lo),
            dec_hi: rev(self.rec_hi),
            rec_lo: rev(self.dec_lo),
            rec_hi: rev(self.dec_hi),
        }
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn all_lowpass_filters_sum_to_sqrt2() {
        for family in Family::ALL {
            let fb = family.filter_bank();
            let sum_dec: f64 = fb.dec_lo.iter().sum();
            let sum_rec: f64 = fb.rec_lo.iter().sum();
            assert!((sum_dec - std::f64::consts::SQRT_2).abs() < TOL, "{family}");
            assert!((sum_rec - std::f64::consts::SQRT_2).abs() < TOL, "{family}");
        }
    }

    #[test]
    fn all_highpass_filters_sum_to_zero() {
        for family in Family::ALL {
            let fb = family.filter_bank();
            assert!(fb.dec_hi.iter().sum::<f64>().abs() < TOL, "{family}");
            assert!(fb.rec_hi.iter().sum::<f64>().abs() < TOL, "{family}");
        }
    }

    #[test]
    fn orthogonal_families_satisfy_shift_orthonormality() {
        for family in [Family::Haar, Family::Db2, Family::Db3, Family::Coif1] {
            let h = family.filter_bank().rec_lo;
            let l = h.len();
            for shift in 0..l / 2 {
                let dot: f64 = (0..l - 2 * shift).map(|k| h[k] * h[k + 2 * shift]).sum();
                let want = if shift == 0 { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < TOL, "{family} shift {shift}: {dot}");
            }
        }
    }

    #[test]
    fn product_filter_is_halfband() {
        for family in Family::ALL {
            let fb = family.filter_bank();
            let l = fb.len();
            let mut p = vec![0.0; 2 * l - 1];
            for i in 0..l {
                for j in 0..l {
                    p[i + j] += fb.dec_lo[i] * fb.rec_lo[j];
                }
            }
            let center = l - 1;
            assert!((p[center] - 1.0).abs() < TOL, "{family}: center {}", p[center]);
            for (k, &v) in p.iter().enumerate() {
                if k != center && (k as isize - center as isize) % 2 == 0 {
                    assert!(v.abs() < TOL, "{family}: tap {k} = {v}");
                }
            }
        }
    }

    #[test]
    fn db3_has_three_vanishing_moments() {
        let fb = Family::Db3.filter_bank();
        for p in 0..3 {
            let m: f64 = fb
                .rec_lo
                .iter()
                .enumerate()
                .map(|(k, &v)| (k as f64).powi(p) * if k % 2 == 0 { v } else { -v })
                .sum();
            assert!(m.abs() < 1e-10, "moment {p}: {m}");
        }
    }

    #[test]
    fn filter_lengths_match_declared() {
        for family in Family::ALL {
            let fb = family.filter_bank();
            assert_eq!(fb.len(), family.filter_length(), "{family}");
            assert_eq!(fb.dec_hi.len(), fb.len());
            assert_eq!(fb.rec_lo.len(), fb.len());
            assert_eq!(fb.rec_hi.len(), fb.len());
        }
    }

    #[test]
    fn family_names_round_trip() {
        for family in Family::ALL {
            assert_eq!(Family::parse(family.name()).unwrap(), family);
        }
        assert!(Family::parse("db17").is_err());
    }
}
