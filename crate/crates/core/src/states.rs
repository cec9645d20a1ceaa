//! Gaussian input states reduced to per-mode moments.
//!
//! All variances here are normally ordered (vacuum = 0). The symmetric
//! convention (vacuum = 1) is one unit higher; see [`GaussianModeMoments::symmetric_var_x`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    PureSqueezed,
    Thermalized,
    Thermal,
    Squashed,
    Squished,
    Vacuum,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::PureSqueezed => "pure_squeezed",
            StateKind::Thermalized => "thermalized",
            StateKind::Thermal => "thermal",
            StateKind::Squashed => "squashed",
            StateKind::Squished => "squished",
            StateKind::Vacuum => "vacuum",
        }
    }
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pure_squeezed" => StateKind::PureSqueezed,
            "thermalized" => StateKind::Thermalized,
            "thermal" => StateKind::Thermal,
            "squashed" => StateKind::Squashed,
            "squished" => StateKind::Squished,
            "vacuum" => StateKind::Vacuum,
            other => return Err(Error::Config(format!("unknown state kind '{other}'"))),
        })
    }
}

/// Input description: `r.len()` driven modes followed by vacuum up to `modes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianInputSpec {
    pub kind: StateKind,
    pub r: Vec<f64>,
    /// Thermalized fraction; only read for [`StateKind::Thermalized`].
    #[serde(default)]
    pub epsilon: f64,
    pub modes: usize,
    /// Explicit photon numbers for squashed states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photons: Option<Vec<f64>>,
}

impl GaussianInputSpec {
    pub fn new(kind: StateKind, r: Vec<f64>, modes: usize) -> Self {
        Self {
            kind,
            r,
            epsilon: 0.0,
            modes,
            photons: None,
        }
    }

    /// Same squeezing `r` on every one of `modes` modes.
    pub fn uniform(kind: StateKind, r: f64, modes: usize) -> Self {
        Self::new(kind, vec![r; modes], modes)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_photons(mut self, photons: Vec<f64>) -> Self {
        self.photons = Some(photons);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::InvalidDimension(
                "state needs at least one mode".into(),
            ));
        }
        if self.r.len() > self.modes {
            return Err(Error::InvalidDimension(format!(
                "{} squeezing parameters for {} modes",
                self.r.len(),
                self.modes
            )));
        }
        if self.r.iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("squeezing parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Domain(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if let Some(p) = &self.photons {
            if self.kind != StateKind::Squashed {
                return Err(Error::Config(
                    "photon-number override is only valid for squashed states".into(),
                ));
            }
            if p.len() != self.r.len() {
                return Err(Error::mismatch(self.r.len(), p.len()));
            }
            if p.iter().any(|n| !n.is_finite() || *n < 0.0) {
                return Err(Error::Domain(
                    "photon numbers must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Squeezing parameter whose squeezed vacuum carries `n` photons.
pub fn squeezing_for_photons(n: f64) -> f64 {
    n.sqrt().asinh()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianModeMoments {
    n: Vec<f64>,
    m_tilde: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
}

impl GaussianModeMoments {
    /// Builds moments from photon numbers and coherences.
    pub fn from_parts(n: Vec<f64>, m_tilde: Vec<f64>) -> Result<Self> {
        if n.len() != m_tilde.len() {
            return Err(Error::mismatch(n.len(), m_tilde.len()));
        }
        if n.is_empty() {
            return Err(Error::InvalidDimension("no modes".into()));
        }
        for (&nj, &mj) in n.iter().zip(&m_tilde) {
            if !(nj.is_finite() && nj >= 0.0 && mj.is_finite() && mj >= 0.0) {
                return Err(Error::Domain(format!("invalid moments n={nj}, m={mj}")));
            }
            if mj > (nj * (nj + 1.0)).sqrt() + 1e-12 {
                return Err(Error::Domain(format!(
                    "coherence {mj} exceeds the Gaussian bound for n={nj}"
                )));
            }
        }
        let var_x = n.iter().zip(&m_tilde).map(|(a, b)| 2.0 * (a + b)).collect();
        let var_y = n.iter().zip(&m_tilde).map(|(a, b)| 2.0 * (a - b)).collect();
        Ok(Self {
            n,
            m_tilde,
            var_x,
            var_y,
        })
    }

    pub fn vacuum(modes: usize) -> Self {
        Self {
            n: vec![0.0; modes],
            m_tilde: vec![0.0; modes],
            var_x: vec![0.0; modes],
            var_y: vec![0.0; modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn m_tilde(&self) -> &[f64] {
        &self.m_tilde
    }

    pub fn var_x(&self) -> &[f64] {
        &self.var_x
    }

    pub fn var_y(&self) -> &[f64] {
        &self.var_y
    }

    pub fn symmetric_var_x(&self) -> Vec<f64> {
        self.var_x.iter().map(|v| v + 1.0).collect()
    }

    pub fn symmetric_var_y(&self) -> Vec<f64> {
        self.var_y.iter().map(|v| v + 1.0).collect()
    }

    pub fn total_photons(&self) -> f64 {
        self.n.iter().sum()
    }
}

pub fn derive_moments(spec: &GaussianInputSpec) -> Result<GaussianModeMoments> {
    spec.validate()?;
    let driven = spec.r.len();
    let mut n = vec![0.0; spec.modes];
    let mut m_tilde = vec![0.0; spec.modes];
    for j in 0..driven {
        let sh = spec.r[j].sinh();
        let nj = sh * sh;
        let coherence = (nj * (nj + 1.0)).sqrt();
        let (nj, mj) = match spec.kind {
            StateKind::PureSqueezed => (nj, coherence),
            StateKind::Thermalized => (nj, (1.0 - spec.epsilon) * coherence),
            StateKind::Thermal => (nj, 0.0),
            StateKind::Squished => (nj, nj),
            StateKind::Squashed => {
                let nj = spec.photons.as_ref().map_or(nj, |p| p[j]);
                (nj, nj)
            }
            StateKind::Vacuum => (0.0, 0.0),
        };
        n[j] = nj;
        m_tilde[j] = mj;
    }
    GaussianModeMoments::from_parts(n, m_tilde)
}

/// Per mode: true when neither normally ordered variance is negative.
pub fn is_classical(m: &GaussianModeMoments) -> Vec<bool> {
    m.var_x
        .iter()
        .zip(&m.var_y)
        .map(|(&vx, &vy)| vx >= -1e-12 && vy >= -1e-12)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single(kind: StateKind, r: f64) -> GaussianModeMoments {
        derive_moments(&GaussianInputSpec::uniform(kind, r, 1)).unwrap()
    }

    #[test]
    fn zero_squeezing_is_vacuum() {
        let m = single(StateKind::PureSqueezed, 0.0);
        assert_eq!(m.n(), &[0.0]);
        assert_eq!(m.m_tilde(), &[0.0]);
        assert_eq!(m.var_x(), &[0.0]);
        assert_eq!(m.var_y(), &[0.0]);
    }

    #[test]
    fn pure_squeezed_closed_forms() {
        let m = single(StateKind::PureSqueezed, 1.0);
        let e2 = 2.0f64.exp();
        assert_abs_diff_eq!(m.n()[0], 1.0f64.sinh().powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(m.m_tilde()[0], 2.0f64.sinh() / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_x()[0], e2 - 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m.var_y()[0], 1.0 / e2 - 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m.n()[0], 1.3811, epsilon = 1e-4);
        assert_abs_diff_eq!(m.m_tilde()[0], 1.8134, epsilon = 1e-4);
        assert_abs_diff_eq!(m.var_x()[0], 6.3891, epsilon = 1e-4);
        assert_abs_diff_eq!(m.var_y()[0], -0.8647, epsilon = 1e-4);
    }

    #[test]
    fn fully_thermalized_is_thermal() {
        let spec = GaussianInputSpec::uniform(StateKind::Thermalized, 1.0, 1).with_epsilon(1.0);
        let m = derive_moments(&spec).unwrap();
        assert_eq!(m.m_tilde()[0], 0.0);
        assert_eq!(m.var_x()[0], m.var_y()[0]);
        assert_abs_diff_eq!(m.var_x()[0], 2.7622, epsilon = 1e-4);
        assert_eq!(m, single(StateKind::Thermal, 1.0));
    }

    #[test]
    fn squished_sits_at_vacuum_level() {
        let m = single(StateKind::Squished, 1.0);
        assert_abs_diff_eq!(m.n()[0], 1.3811, epsilon = 1e-4);
        assert_eq!(m.m_tilde()[0], m.n()[0]);
        assert_eq!(m.var_y()[0], 0.0);
        assert_abs_diff_eq!(m.var_x()[0], 4.0 * m.n()[0], epsilon = 1e-14);
    }

    #[test]
    fn squashed_accepts_photon_override() {
        let spec =
            GaussianInputSpec::uniform(StateKind::Squashed, 1.0, 2).with_photons(vec![0.5, 2.0]);
        let m = derive_moments(&spec).unwrap();
        assert_eq!(m.n(), &[0.5, 2.0]);
        assert_eq!(m.var_y(), &[0.0, 0.0]);
        // the override is squashed-only
        let bad =
            GaussianInputSpec::uniform(StateKind::Thermal, 1.0, 2).with_photons(vec![0.5, 2.0]);
        assert!(derive_moments(&bad).is_err());
    }

    #[test]
    fn vacuum_padding() {
        let spec = GaussianInputSpec::new(StateKind::PureSqueezed, vec![0.5, 0.5], 5);
        let m = derive_moments(&spec).unwrap();
        assert_eq!(m.modes(), 5);
        assert!(m.n()[2..].iter().all(|&n| n == 0.0));
        assert!(m.n()[..2].iter().all(|&n| n > 0.0));
    }

    #[test]
    fn epsilon_out_of_range() {
        for eps in [-0.1, 1.1, f64::NAN] {
            let spec = GaussianInputSpec::uniform(StateKind::Thermalized, 1.0, 1).with_epsilon(eps);
            assert!(matches!(derive_moments(&spec), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn too_many_squeezers() {
        let spec = GaussianInputSpec::new(StateKind::Thermal, vec![1.0; 3], 2);
        assert!(derive_moments(&spec).is_err());
    }

    #[test]
    fn classicality() {
        assert_eq!(
            is_classical(&single(StateKind::PureSqueezed, 1.0)),
            vec![false]
        );
        assert_eq!(is_classical(&single(StateKind::Thermal, 1.0)), vec![true]);
        assert_eq!(is_classical(&single(StateKind::Squished, 1.0)), vec![true]);
        let spec = GaussianInputSpec::uniform(StateKind::Thermalized, 1.0, 1).with_epsilon(0.0932);
        let m = derive_moments(&spec).unwrap();
        assert_abs_diff_eq!(m.m_tilde()[0], 1.6444, epsilon = 1e-4);
        assert!(m.var_y()[0] < 0.0);
        assert_eq!(is_classical(&m), vec![false]);
    }

    #[test]
    fn symmetric_units_shift() {
        let m = single(StateKind::PureSqueezed, 0.3);
        assert_abs_diff_eq!(m.symmetric_var_x()[0], 0.6f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(m.symmetric_var_y()[0], (-0.6f64).exp(), epsilon = 1e-14);
    }

    fn any_kind() -> impl Strategy<Value = StateKind> {
        prop_oneof![
            Just(StateKind::PureSqueezed),
            Just(StateKind::Thermalized),
            Just(StateKind::Thermal),
            Just(StateKind::Squashed),
            Just(StateKind::Squished),
            Just(StateKind::Vacuum),
        ]
    }

    proptest! {
        #[test]
        fn variance_product_bounded(kind in any_kind(), r in 0.0f64..2.0, eps in 0.0f64..=1.0) {
            let m = derive_moments(&GaussianInputSpec::uniform(kind, r, 1).with_epsilon(eps)).unwrap();
            let (vx, vy, n) = (m.var_x()[0], m.var_y()[0], m.n()[0]);
            let bound = (2.0 * n).powi(2);
            prop_assert!(vx * vy <= bound * (1.0 + 1e-12) + 1e-12);
            if m.m_tilde()[0] == 0.0 {
                prop_assert!((vx * vy - bound).abs() <= 1e-12 * bound.max(1.0));
            }
        }

        #[test]
        fn pure_squeezing_is_minimum_uncertainty(r in 0.0f64..3.0) {
            let m = single(StateKind::PureSqueezed, r);
            let prod = (m.var_x()[0] + 1.0) * (m.var_y()[0] + 1.0);
            prop_assert!((prod - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn var_y_monotone_in_epsilon(r in 0.0f64..2.0, e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = derive_moments(&GaussianInputSpec::uniform(StateKind::Thermalized, r, 1).with_epsilon(lo)).unwrap();
            let b = derive_moments(&GaussianInputSpec::uniform(StateKind::Thermalized, r, 1).with_epsilon(hi)).unwrap();
            prop_assert!(a.var_y()[0] <= b.var_y()[0]);
        }
    }
}
