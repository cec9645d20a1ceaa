//! Linear network maps: Haar-random unitaries and lossy transmission matrices.
//!
//! Loss is uniform and expressed as an intensity transmission `t`, so
//! amplitudes scale by `√t`. The loss-mode coupling that completes `T` to a
//! unitary on the enlarged space is never built; vacuum entering through loss
//! channels adds no noise to normally ordered quantities.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub type CMatrix = DMatrix<Complex64>;

/// Tolerance on `‖UU† − I‖_max` for generated unitaries.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Smallest eigenvalue of `I − TT†` still accepted as physical.
pub const PHYSICAL_EIG_TOL: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    entries: CMatrix,
    seed: Option<u64>,
}

impl UnitaryMatrix {
    /// Wraps a matrix after checking it is square and unitary to `tol`.
    pub fn from_matrix(entries: CMatrix, tol: f64) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::InvalidDimension(format!(
                "unitary must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let defect = max_defect(&entries);
        if defect > tol {
            return Err(Error::Domain(format!(
                "matrix is not unitary (defect {defect:e})"
            )));
        }
        Ok(Self {
            entries,
            seed: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Draws an `m × m` Haar-random unitary.
///
/// A complex Ginibre matrix is QR-factored and the columns of `Q` are
/// rephased by `R_ii / |R_ii|`; without the rephasing the result is not
/// Haar distributed.
pub fn generate_haar_unitary(m: usize, seed: u64) -> Result<UnitaryMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension(
            "unitary dimension must be at least 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, Domain::Haar, 0);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // column-major fill, same order as nalgebra storage
    let ginibre = CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 {
            d / norm
        } else {
            Complex64::new(1.0, 0.0)
        };
        col *= phase;
    }
    Ok(UnitaryMatrix {
        entries: q,
        seed: Some(seed),
    })
}

/// Network transmission map `T` (outputs × inputs), possibly lossy.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionMatrix {
    entries: CMatrix,
    intensity_transmission: Option<f64>,
    haar_seed: Option<u64>,
}

impl TransmissionMatrix {
    /// Wraps an arbitrary matrix (e.g. an ingested experimental map).
    /// Requires at least as many outputs as inputs.
    pub fn from_matrix(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidDimension(
                "transmission matrix is empty".into(),
            ));
        }
        if entries.ncols() > entries.nrows() {
            return Err(Error::InvalidDimension(format!(
                "transmission matrix has more inputs ({}) than outputs ({})",
                entries.ncols(),
                entries.nrows()
            )));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Domain(
                "transmission matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            entries,
            intensity_transmission: None,
            haar_seed: None,
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            entries: CMatrix::identity(m, m),
            intensity_transmission: Some(1.0),
            haar_seed: None,
        }
    }

    pub fn dim_out(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn intensity_transmission(&self) -> Option<f64> {
        self.intensity_transmission
    }

    pub fn haar_seed(&self) -> Option<u64> {
        self.haar_seed
    }

    /// Applies a further uniform intensity transmission `t`.
    pub fn attenuate(&self, t: f64) -> Result<Self> {
        check_transmission(t)?;
        let amp = Complex64::new(t.sqrt(), 0.0);
        let out = Self {
            entries: self.entries.map(|z| z * amp),
            intensity_transmission: self.intensity_transmission.map(|t0| t0 * t),
            haar_seed: self.haar_seed,
        };
        if t > 1.0 {
            out.warn_if_unphysical();
        }
        Ok(out)
    }

    /// Singular values of `T`, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self
            .entries
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Row-major `(re, im)` entries.
    pub fn row_major(&self) -> Vec<Complex64> {
        let (m, n) = self.entries.shape();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }

    fn warn_if_unphysical(&self) {
        let eig = loss_min_eigenvalue(self);
        if eig < PHYSICAL_EIG_TOL {
            log::warn!(
                "transmission matrix amplifies (min eigenvalue of I - TT^dagger = {eig:e}); \
                 accepted as a fit correction"
            );
        }
    }
}

fn check_transmission(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "intensity transmission must be >= 0, got {t}"
        )));
    }
    Ok(())
}

/// `T = √t · U`. Values of `t` above one are accepted with a warning.
pub fn make_transmission(u: &UnitaryMatrix, t: f64) -> Result<TransmissionMatrix> {
    check_transmission(t)?;
    let amp = Complex64::new(t.sqrt(), 0.0);
    let entries = if t == 1.0 {
        u.entries.clone()
    } else {
        u.entries.map(|z| z * amp)
    };
    let out = TransmissionMatrix {
        entries,
        intensity_transmission: Some(t),
        haar_seed: u.seed,
    };
    // √t·U can only amplify when t > 1
    if t > 1.0 {
        out.warn_if_unphysical();
    }
    Ok(out)
}

fn max_defect(m: &CMatrix) -> f64 {
    let g = m * m.adjoint();
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// `‖TT† − I‖_max`.
pub fn unitarity_defect(t: &TransmissionMatrix) -> f64 {
    max_defect(&t.entries)
}

/// Smallest eigenvalue of `I − TT†`; negative means the map amplifies.
pub fn loss_min_eigenvalue(t: &TransmissionMatrix) -> f64 {
    let m = t.dim_out();
    let loss = CMatrix::identity(m, m) - &t.entries * t.entries.adjoint();
    loss.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_physical(t: &TransmissionMatrix) -> bool {
    loss_min_eigenvalue(t) >= PHYSICAL_EIG_TOL
}
