//! Exact threshold-detector statistics for small networks.
//!
//! The output state is tracked by its quadrature covariance in symmetric
//! units (vacuum = identity, quadratures `x = a + a†`, `y = −i(a − a†)`,
//! ordered `x_1..x_M, y_1..y_M`). The no-click probability on a set of
//! modes is the Gaussian overlap with vacuum, and click-pattern
//! probabilities follow by inclusion–exclusion over the clicked modes.
//! Nothing here uses Monte Carlo; it is the reference the phase-space
//! simulation is checked against.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcp::{GcpDistribution, GcpSource, GcpSpec};
use crate::network::TransmissionMatrix;
use crate::states::GaussianModeMoments;

/// Largest clicked-mode count accepted by [`pattern_probability`].
pub const MAX_CLICKED_MODES: usize = 20;
/// Largest network accepted by [`exact_gcp`].
pub const MAX_EXACT_MODES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureCovariance {
    modes: usize,
    v: DMatrix<f64>,
}

impl QuadratureCovariance {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        let n = v.nrows();
        if n == 0 || !n.is_multiple_of(2) || v.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "covariance must be 2M x 2M, got {}x{}",
                n,
                v.ncols()
            )));
        }
        let asym = (&v - v.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::Domain(format!(
                "covariance is not symmetric (defect {asym:e})"
            )));
        }
        let min_eig = v.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(Error::Domain(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { modes: n / 2, v })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }
}

/// `V_out = I + S (V_in − I) Sᵀ`, i.e. `S V_in Sᵀ + (I − S Sᵀ)` with vacuum
/// filling the loss complement.
pub fn output_covariance(
    m: &GaussianModeMoments,
    t: &TransmissionMatrix,
) -> Result<QuadratureCovariance> {
    let (mo, ni) = (t.dim_out(), t.dim_in());
    if m.modes() != ni {
        return Err(Error::mismatch(
            format!("{ni} input modes"),
            format!("{} moments", m.modes()),
        ));
    }
    let mut s = DMatrix::<f64>::zeros(2 * mo, 2 * ni);
    for i in 0..mo {
        for j in 0..ni {
            let z = t.entries()[(i, j)];
            s[(i, j)] = z.re;
            s[(i, ni + j)] = -z.im;
            s[(mo + i, j)] = z.im;
            s[(mo + i, ni + j)] = z.re;
        }
    }
    let loss = DMatrix::<f64>::identity(2 * mo, 2 * mo) - &s * s.transpose();
    let min_eig = loss.symmetric_eigenvalues().min();
    if min_eig < -1e-10 {
        return Err(Error::Domain(format!(
            "transmission matrix is unphysical (I - SS^T eigenvalue {min_eig:e})"
        )));
    }
    let mut excess = DMatrix::<f64>::zeros(2 * ni, 2 * ni);
    for j in 0..ni {
        excess[(j, j)] = m.var_x()[j];
        excess[(ni + j, ni + j)] = m.var_y()[j];
    }
    let mut v = &s * excess * s.transpose();
    for i in 0..2 * mo {
        v[(i, i)] += 1.0;
    }
    // symmetrize away rounding in the triple product
    let v = (&v + v.transpose()) * 0.5;
    QuadratureCovariance::new(v)
}

fn vacuum_probability_unchecked(v: &QuadratureCovariance, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(1.0);
    }
    let (m, z) = (v.modes, subset.len());
    let rows: Vec<usize> = subset
        .iter()
        .copied()
        .chain(subset.iter().map(|&j| j + m))
        .collect();
    let sigma = DMatrix::<f64>::from_fn(2 * z, 2 * z, |a, b| {
        let delta = if a == b { 1.0 } else { 0.0 };
        0.5 * (v.v[(rows[a], rows[b])] + delta)
    });
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::NumericalGuard("singular vacuum-overlap matrix".into()))?;
    let sqrt_det: f64 = chol.l_dirty().diagonal().iter().product();
    Ok(1.0 / sqrt_det)
}

/// Probability that no mode of `subset` clicks: `1/√det((V+I)/2)` on the
/// subset's quadrature block.
pub fn vacuum_probability(v: &QuadratureCovariance, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidDimension(
            "vacuum probability needs a non-empty subset".into(),
        ));
    }
    let mut seen = vec![false; v.modes];
    for &j in subset {
        if j >= v.modes || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidDimension(format!(
                "invalid or repeated mode {j}"
            )));
        }
    }
    vacuum_probability_unchecked(v, subset)
}

fn clamp_probability(p: f64) -> Result<f64> {
    if !(-1e-10..=1.0 + 1e-10).contains(&p) {
        return Err(Error::NumericalGuard(format!(
            "pattern probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Exact threshold-detector pattern probability by inclusion–exclusion
/// over the clicked modes.
pub fn pattern_probability(v: &QuadratureCovariance, c: &[bool]) -> Result<f64> {
    if c.len() != v.modes {
        return Err(Error::mismatch(v.modes, c.len()));
    }
    let clicked: Vec<usize> = (0..c.len()).filter(|&j| c[j]).collect();
    let quiet: Vec<usize> = (0..c.len()).filter(|&j| !c[j]).collect();
    if clicked.len() > MAX_CLICKED_MODES {
        return Err(Error::CostGuard(format!(
            "{} clicked modes exceed the inclusion-exclusion limit of {MAX_CLICKED_MODES}",
            clicked.len()
        )));
    }
    let mut total = 0.0;
    let mut subset = Vec::with_capacity(c.len());
    for mask in 0u32..(1 << clicked.len()) {
        subset.clear();
        subset.extend_from_slice(&quiet);
        subset.extend(
            (0..clicked.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| clicked[b]),
        );
        let q = vacuum_probability_unchecked(v, &subset)?;
        if mask.count_ones() % 2 == 0 {
            total += q;
        } else {
            total -= q;
        }
    }
    clamp_probability(total)
}

/// All `2^M` pattern probabilities, indexed by click mask (bit `j` = mode `j`).
pub fn all_pattern_probabilities(v: &QuadratureCovariance) -> Result<Vec<f64>> {
    let m = v.modes;
    if m > MAX_EXACT_MODES {
        return Err(Error::CostGuard(format!(
            "exact enumeration limited to {MAX_EXACT_MODES} modes, got {m}"
        )));
    }
    let full = (1usize << m) - 1;
    // h[U] = no-click probability on the complement of U
    let mut h: Vec<f64> = (0..=full)
        .into_par_iter()
        .map(|u| {
            let quiet: Vec<usize> = (0..m).filter(|j| (full ^ u) >> j & 1 == 1).collect();
            vacuum_probability_unchecked(v, &quiet)
        })
        .collect::<Result<_>>()?;
    // Möbius transform over subsets: P(C) = Σ_{U⊆C} (−1)^{|C∖U|} h(U)
    for j in 0..m {
        let bit = 1 << j;
        for mask in 0..=full {
            if mask & bit != 0 {
                h[mask] -= h[mask ^ bit];
            }
        }
    }
    h.into_iter().map(clamp_probability).collect()
}

/// Grouped count distribution from exhaustive pattern enumeration.
pub fn exact_gcp(v: &QuadratureCovariance, spec: &GcpSpec) -> Result<GcpDistribution> {
    spec.validate()?;
    if spec.modes() != v.modes {
        return Err(Error::mismatch(
            format!("{} modes", spec.modes()),
            format!("{} modes", v.modes),
        ));
    }
    let probs = all_pattern_probabilities(v)?;
    let masks: Vec<usize> = spec
        .subsets()
        .iter()
        .map(|s| s.iter().map(|&j| 1usize << j).sum())
        .collect();
    let shape = spec.shape();
    let mut grid = vec![0.0; spec.bins()];
    for (c, p) in probs.into_iter().enumerate() {
        let flat = masks.iter().zip(&shape).fold(0, |acc, (mask, &n)| {
            acc * n + (c & mask).count_ones() as usize
        });
        grid[flat] += p;
    }
    Ok(GcpDistribution {
        spec: spec.clone(),
        sigma: vec![0.0; grid.len()],
        shape,
        probabilities: grid,
        source: GcpSource::Exact,
        raw_counts: None,
        samples: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcp::partition_modes;
    use crate::network::{generate_haar_unitary, make_transmission};
    use crate::states::{derive_moments, squeezing_for_photons, GaussianInputSpec, StateKind};
    use approx::assert_abs_diff_eq;

    fn cov(kind: StateKind, r: f64, modes: usize, t: f64, seed: u64) -> QuadratureCovariance {
        let m =
            derive_moments(&GaussianInputSpec::uniform(kind, r, modes).with_epsilon(0.1)).unwrap();
        let tm = make_transmission(&generate_haar_unitary(modes, seed).unwrap(), t).unwrap();
        output_covariance(&m, &tm).unwrap()
    }

    fn bits(mask: usize, m: usize) -> Vec<bool> {
        (0..m).map(|j| mask >> j & 1 == 1).collect()
    }

    #[test]
    fn vacuum_is_loss_invariant() {
        let tm = make_transmission(&generate_haar_unitary(4, 1).unwrap(), 0.3).unwrap();
        let v = output_covariance(&GaussianModeMoments::vacuum(4), &tm).unwrap();
        assert_eq!(v.matrix(), &DMatrix::identity(8, 8));
        assert_eq!(vacuum_probability(&v, &[0, 2, 3]).unwrap(), 1.0);
        assert_eq!(pattern_probability(&v, &[false; 4]).unwrap(), 1.0);
        assert_eq!(
            pattern_probability(&v, &[false, true, false, false]).unwrap(),
            0.0
        );
    }

    #[test]
    fn thermal_single_mode() {
        let n = 1.0;
        let m = derive_moments(&GaussianInputSpec::uniform(
            StateKind::Thermal,
            squeezing_for_photons(n),
            1,
        ))
        .unwrap();
        let v = output_covariance(&m, &TransmissionMatrix::identity(1)).unwrap();
        assert_abs_diff_eq!(v.matrix()[(0, 0)], 1.0 + 2.0 * n, epsilon = 1e-12);
        assert_abs_diff_eq!(v.matrix()[(1, 1)], 1.0 + 2.0 * n, epsilon = 1e-12);
        assert_abs_diff_eq!(vacuum_probability(&v, &[0]).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pattern_probability(&v, &[true]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let g = exact_gcp(&v, &partition_modes(1, 1, None).unwrap()).unwrap();
        assert_abs_diff_eq!(g.probabilities[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.probabilities[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn squeezed_single_mode() {
        let r = 0.5;
        let m = derive_moments(&GaussianInputSpec::uniform(StateKind::PureSqueezed, r, 1)).unwrap();
        let v = output_covariance(&m, &TransmissionMatrix::identity(1)).unwrap();
        assert_abs_diff_eq!(v.matrix()[(0, 0)], (2.0 * r).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v.matrix()[(1, 1)], (-2.0 * r).exp(), epsilon = 1e-12);
        let p0 = vacuum_probability(&v, &[0]).unwrap();
        assert_abs_diff_eq!(p0, 1.0 / r.cosh(), epsilon = 1e-9);
        assert_abs_diff_eq!(p0, 0.8868, epsilon = 1e-4);
        // Fock expansion: |<0|S(r)|0>|² = 1/cosh r
        let fock_vacuum_weight = 1.0 / r.cosh();
        assert_abs_diff_eq!(p0, fock_vacuum_weight, epsilon = 1e-12);
    }

    #[test]
    fn two_mode_completeness() {
        let v = cov(StateKind::PureSqueezed, 0.5, 2, 0.5, 3);
        let total: f64 = (0..4)
            .map(|c| pattern_probability(&v, &bits(c, 2)).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fast_enumeration_matches_direct() {
        for kind in [
            StateKind::PureSqueezed,
            StateKind::Thermal,
            StateKind::Thermalized,
            StateKind::Squashed,
        ] {
            let v = cov(kind, 0.8, 5, 0.6, 11);
            let fast = all_pattern_probabilities(&v).unwrap();
            for (c, p) in fast.iter().enumerate() {
                let direct = pattern_probability(&v, &bits(c, 5)).unwrap();
                assert_abs_diff_eq!(*p, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn completeness_up_to_ten_modes() {
        for m in [1, 3, 6, 10] {
            let v = cov(StateKind::PureSqueezed, 0.9, m, 0.7, m as u64);
            let total: f64 = all_pattern_probabilities(&v).unwrap().iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            let g = exact_gcp(&v, &partition_modes(m, 1, None).unwrap()).unwrap();
            assert_abs_diff_eq!(g.total_probability(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn loss_lowers_mean_clicks() {
        let mean_clicks = |t: f64| {
            let v = cov(StateKind::PureSqueezed, 1.0, 6, t, 5);
            (0..6)
                .map(|j| 1.0 - vacuum_probability(&v, &[j]).unwrap())
                .sum::<f64>()
        };
        let mut last = f64::INFINITY;
        for t in [1.0, 0.8, 0.5, 0.3, 0.1, 0.0] {
            let c = mean_clicks(t);
            assert!(c <= last + 1e-12);
            last = c;
        }
        assert_abs_diff_eq!(last, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn guards() {
        let v = output_covariance(
            &GaussianModeMoments::vacuum(21),
            &TransmissionMatrix::identity(21),
        )
        .unwrap();
        assert!(matches!(
            pattern_probability(&v, &[true; 21]),
            Err(Error::CostGuard(_))
        ));
        assert!(matches!(
            exact_gcp(&v, &partition_modes(21, 1, None).unwrap()),
            Err(Error::CostGuard(_))
        ));
        assert!(vacuum_probability(&v, &[]).is_err());
        assert!(vacuum_probability(&v, &[1, 1]).is_err());
        let u = generate_haar_unitary(2, 0).unwrap();
        let amp = make_transmission(&u, 1.2).unwrap();
        assert!(output_covariance(&GaussianModeMoments::vacuum(2), &amp).is_err());
    }
}
