//! Chi-square comparison of two grouped count distributions and the
//! Wilson-Hilferty normal deviate of the result.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcp::GcpDistribution;

/// A bin is valid when the count-bearing side holds more than this many counts.
pub const MIN_BIN_COUNT: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinDifference {
    pub index: Vec<usize>,
    /// `(a − b) / σ` with `σ² = σ_a² + σ_b²`.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquare {
    pub chi_square: f64,
    pub k: usize,
    pub per_bin: Vec<BinDifference>,
}

/// Which bins enter the statistic.
fn valid_bins(a: &GcpDistribution, b: &GcpDistribution) -> Vec<bool> {
    let n = a.probabilities.len();
    match (&a.raw_counts, &b.raw_counts) {
        (_, Some(counts)) | (Some(counts), None) => {
            counts.iter().map(|&c| c > MIN_BIN_COUNT).collect()
        }
        (None, None) => (0..n).map(|i| b.probabilities[i] > 0.0).collect(),
    }
}

/// `χ² = Σ_i (a_i − b_i)² / (σ_{a,i}² + σ_{b,i}²)` over valid bins.
///
/// Validity follows the raw counts of whichever side carries them (`b` when
/// both do). With no counts on either side, bins where `b` is positive are
/// used. Bins with zero combined variance are skipped.
pub fn chi_square_test(a: &GcpDistribution, b: &GcpDistribution) -> Result<ChiSquare> {
    if a.shape != b.spec.shape() || a.spec.canonical_subsets() != b.spec.canonical_subsets() {
        return Err(Error::mismatch(
            format!("grid {:?}", b.shape),
            format!("grid {:?}", a.shape),
        ));
    }
    let valid = valid_bins(a, b);
    let mut chi_square = 0.0;
    let mut per_bin = Vec::new();
    for (i, ok) in valid.into_iter().enumerate() {
        let var = a.sigma[i].powi(2) + b.sigma[i].powi(2);
        if !ok || var <= 0.0 {
            continue;
        }
        let diff = a.probabilities[i] - b.probabilities[i];
        chi_square += diff * diff / var;
        per_bin.push(BinDifference {
            index: a.spec.grid_index(i),
            normalized: diff / var.sqrt(),
        });
    }
    if per_bin.is_empty() {
        return Err(Error::NoValidBins);
    }
    Ok(ChiSquare {
        chi_square,
        k: per_bin.len(),
        per_bin,
    })
}

/// Wilson-Hilferty deviate `((χ²/k)^{1/3} − (1 − 2/9k)) / √(2/9k)`.
pub fn z_score(chi_square: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::NoValidBins);
    }
    let var = 2.0 / (9.0 * k as f64);
    Ok(((chi_square / k as f64).cbrt() - (1.0 - var)) / var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub labels: (String, String),
    pub chi_square: f64,
    pub k: usize,
    pub z_score: f64,
    pub per_bin: Vec<BinDifference>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestReport {
    /// `Z_EI`, `Z_CT`, ... from the two source labels.
    pub fn name(&self) -> String {
        format!("Z_{}{}", self.labels.0, self.labels.1)
    }

    pub fn chi_square_per_bin(&self) -> f64 {
        self.chi_square / self.k as f64
    }
}

pub fn compare_report(
    a: &GcpDistribution,
    b: &GcpDistribution,
    labels: (&str, &str),
) -> Result<TestReport> {
    let cs = chi_square_test(a, b)?;
    let z = z_score(cs.chi_square, cs.k)?;
    let mut warnings = Vec::new();
    if cs.k < 10 {
        warnings.push(format!(
            "only {} valid bins; the normal approximation is unreliable below 10",
            cs.k
        ));
    }
    Ok(TestReport {
        labels: (labels.0.to_string(), labels.1.to_string()),
        chi_square: cs.chi_square,
        k: cs.k,
        z_score: z,
        per_bin: cs.per_bin,
        warnings,
    })
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>14} {:>6} {:>10} {:>10}",
            "test", "chi2", "k", "chi2/k", "Z"
        )?;
        write!(
            f,
            "{:<8} {:>14.4} {:>6} {:>10.4} {:>10.4}",
            self.name(),
            self.chi_square,
            self.k,
            self.chi_square_per_bin(),
            self.z_score
        )?;
        for w in &self.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcp::{partition_modes, GcpSource};
    use proptest::prelude::*;

    fn dist(probs: Vec<f64>, sigma: Vec<f64>, counts: Option<Vec<u64>>) -> GcpDistribution {
        let modes = probs.len() - 1;
        let spec = partition_modes(modes, 1, None).unwrap();
        GcpDistribution {
            shape: spec.shape(),
            spec,
            probabilities: probs,
            sigma,
            source: if counts.is_some() {
                GcpSource::Patterns
            } else {
                GcpSource::PhaseSpace
            },
            raw_counts: counts,
            samples: 1,
        }
    }

    #[test]
    fn identical_distributions() {
        let a = dist(vec![0.2, 0.5, 0.3], vec![0.01; 3], Some(vec![20, 50, 30]));
        let cs = chi_square_test(&a, &a).unwrap();
        assert_eq!(cs.chi_square, 0.0);
        assert_eq!(cs.k, 3);
        let r = compare_report(&a, &a, ("C", "T")).unwrap();
        assert!(r.per_bin.iter().all(|b| b.normalized == 0.0));
        assert!(
            r.z_score.abs() > 0.1,
            "k=3 gives a large negative Z at chi2=0"
        );
    }

    #[test]
    fn one_sigma_shift_per_bin() {
        let n = 50;
        let sigma_a = vec![0.003; n + 1];
        let sigma_b = vec![0.004; n + 1];
        let pa: Vec<f64> = (0..=n).map(|i| 0.01 + 1e-4 * i as f64).collect();
        let pb: Vec<f64> = pa.iter().map(|p| p + 0.005).collect();
        let mut counts = vec![100u64; n + 1];
        counts[n] = 5;
        let a = dist(pa, sigma_a, Some(counts));
        let b = dist(pb, sigma_b, None);
        let cs = chi_square_test(&a, &b).unwrap();
        assert_eq!(cs.k, 50);
        assert!((cs.chi_square - 50.0).abs() < 1e-9);
    }

    #[test]
    fn bins_at_threshold_are_invalid() {
        let a = dist(vec![0.5, 0.5], vec![0.1; 2], Some(vec![10, 11]));
        let b = dist(vec![0.4, 0.6], vec![0.1; 2], None);
        assert_eq!(chi_square_test(&a, &b).unwrap().k, 1);
        let none = dist(vec![0.5, 0.5], vec![0.1; 2], Some(vec![3, 10]));
        assert!(matches!(
            chi_square_test(&none, &b),
            Err(Error::NoValidBins)
        ));
    }

    #[test]
    fn mismatched_grids() {
        let a = dist(vec![0.5, 0.5], vec![0.1; 2], None);
        let b = dist(vec![0.3, 0.3, 0.4], vec![0.1; 3], None);
        assert!(matches!(
            chi_square_test(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn z_score_anchors() {
        let z = z_score(63.0, 63).unwrap();
        assert!((z - (2.0f64 / 567.0).sqrt()).abs() < 1e-12);
        assert!((z - 0.0594).abs() < 1e-4);
        let z0 = z_score(0.0, 63).unwrap();
        let expect = -(1.0 - 2.0 / 567.0) / (2.0f64 / 567.0).sqrt();
        assert!((z0 - expect).abs() < 1e-12);
        assert!((z0 + 16.778).abs() < 1e-3);
        assert!(z_score(1.0, 0).is_err());
    }

    #[test]
    fn small_k_warns() {
        let a = dist(vec![0.5, 0.5], vec![0.1; 2], None);
        let r = compare_report(&a, &a, ("E", "I")).unwrap();
        assert_eq!(r.name(), "Z_EI");
        assert_eq!(r.warnings.len(), 1);
        assert!(r.to_string().contains("Z_EI"));
    }

    proptest! {
        #[test]
        fn symmetric_when_validity_fixed(
            pa in proptest::collection::vec(0.01f64..1.0, 6),
            pb in proptest::collection::vec(0.01f64..1.0, 6),
            sa in proptest::collection::vec(0.001f64..0.1, 6),
            sb in proptest::collection::vec(0.001f64..0.1, 6),
        ) {
            let a = dist(pa, sa, Some(vec![50; 6]));
            let b = dist(pb, sb, None);
            let ab = chi_square_test(&a, &b).unwrap();
            let ba = chi_square_test(&b, &a).unwrap();
            prop_assert!((ab.chi_square - ba.chi_square).abs() <= 1e-12 * ab.chi_square.max(1.0));
        }

        #[test]
        fn sigma_scaling(c in 0.1f64..10.0, pa in proptest::collection::vec(0.01f64..1.0, 5)) {
            let pb: Vec<f64> = pa.iter().map(|p| p * 0.9 + 0.01).collect();
            let a = dist(pa.clone(), vec![0.02; 5], None);
            let b = dist(pb.clone(), vec![0.03; 5], None);
            let a2 = dist(pa, vec![0.02 * c; 5], None);
            let b2 = dist(pb, vec![0.03 * c; 5], None);
            let x = chi_square_test(&a, &b).unwrap().chi_square;
            let y = chi_square_test(&a2, &b2).unwrap().chi_square;
            prop_assert!((x / (c * c) - y).abs() <= 1e-10 * x.max(1.0));
        }

        #[test]
        fn z_monotone_in_chi_square(k in 1usize..2000, x in 0.0f64..1e4, dx in 1e-6f64..100.0) {
            prop_assert!(z_score(x + dx, k).unwrap() > z_score(x, k).unwrap());
        }
    }
}
