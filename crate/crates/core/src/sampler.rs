//! Phase-space ensembles: drawing input amplitudes from Gaussian moments,
//! propagating them through a network and forming click observables.
//!
//! Input amplitudes follow
//!
//! ```text
//! α_j = ½(Δx_j w_j + iΔy_j w_{j+M}),   β_j = ½(Δx_j w_j − iΔy_j w_{j+M})
//! ```
//!
//! with `Δy_j` the principal square root of `var_y`, so a negative normally
//! ordered variance makes `iΔy_j` real and `α`, `β` independent real numbers
//! (positive-P). For classical states `β = α*` (diagonal P).
//!
//! Every trajectory draws its noise from its own counter-keyed stream, so
//! trajectory `i` is identical whether the ensemble is materialized in full
//! or regenerated on the fly by [`OutputSampler`].

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels;
use crate::network::TransmissionMatrix;
use crate::rng::{self, Domain};
use crate::states::{is_classical, GaussianModeMoments};

/// Largest `|n′|` accepted before the run is declared divergent.
pub const EXPONENT_GUARD: f64 = 700.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    PositiveP,
    DiagonalP,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::PositiveP => "positive_p",
            Representation::DiagonalP => "diagonal_p",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Output,
}

/// `trajectories × modes` amplitudes, row-major by trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceEnsemble {
    pub(crate) representation: Representation,
    pub(crate) stage: Stage,
    pub(crate) modes: usize,
    pub(crate) alpha: Vec<Complex64>,
    pub(crate) beta: Vec<Complex64>,
    pub(crate) seed: u64,
}

impl PhaseSpaceEnsemble {
    pub fn from_parts(
        representation: Representation,
        stage: Stage,
        modes: usize,
        alpha: Vec<Complex64>,
        beta: Vec<Complex64>,
        seed: u64,
    ) -> Result<Self> {
        if modes == 0 || alpha.is_empty() || !alpha.len().is_multiple_of(modes) {
            return Err(Error::InvalidDimension(format!(
                "{} amplitudes do not tile {} modes",
                alpha.len(),
                modes
            )));
        }
        if alpha.len() != beta.len() {
            return Err(Error::mismatch(alpha.len(), beta.len()));
        }
        if representation == Representation::DiagonalP
            && alpha.iter().zip(&beta).any(|(a, b)| a.conj() != *b)
        {
            return Err(Error::RepresentationViolation(
                "diagonal-P ensemble requires beta = conj(alpha)".into(),
            ));
        }
        Ok(Self {
            representation,
            stage,
            modes,
            alpha,
            beta,
            seed,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn trajectories(&self) -> usize {
        self.alpha.len() / self.modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    pub fn alpha_row(&self, traj: usize) -> &[Complex64] {
        &self.alpha[traj * self.modes..(traj + 1) * self.modes]
    }

    pub fn beta_row(&self, traj: usize) -> &[Complex64] {
        &self.beta[traj * self.modes..(traj + 1) * self.modes]
    }
}

/// Per-mode input generator derived from Gaussian moments.
#[derive(Clone, Debug)]
pub struct InputSampler {
    representation: Representation,
    seed: u64,
    // ½Δx_j and ½·iΔy_j
    half_dx: Vec<f64>,
    half_idy: Vec<Complex64>,
}

impl InputSampler {
    pub fn new(
        moments: &GaussianModeMoments,
        representation: Representation,
        seed: u64,
    ) -> Result<Self> {
        if representation == Representation::DiagonalP {
            if let Some(j) = is_classical(moments).iter().position(|c| !c) {
                return Err(Error::RepresentationViolation(format!(
                    "mode {j} is non-classical (var_y = {}); the diagonal P function is not a density",
                    moments.var_y()[j]
                )));
            }
        }
        let half_dx = moments
            .var_x()
            .iter()
            .map(|&v| 0.5 * v.max(0.0).sqrt())
            .collect();
        let half_idy = moments
            .var_y()
            .iter()
            .map(|&v| {
                let dy = Complex64::new(v, 0.0).sqrt();
                0.5 * Complex64::i() * dy
            })
            .collect();
        Ok(Self {
            representation,
            seed,
            half_dx,
            half_idy,
        })
    }

    pub fn modes(&self) -> usize {
        self.half_dx.len()
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Writes trajectory `traj` into `alpha`/`beta`. `noise` is scratch of
    /// length `2 * modes`.
    pub fn fill(
        &self,
        traj: u64,
        noise: &mut [f64],
        alpha: &mut [Complex64],
        beta: &mut [Complex64],
    ) {
        let m = self.modes();
        let mut rng = rng::stream(self.seed, Domain::Ensemble, traj);
        for w in noise.iter_mut().take(2 * m) {
            *w = StandardNormal.sample(&mut rng);
        }
        for j in 0..m {
            let x = self.half_dx[j] * noise[j];
            let y = self.half_idy[j] * noise[j + m];
            alpha[j] = Complex64::new(x, 0.0) + y;
            beta[j] = match self.representation {
                Representation::DiagonalP => alpha[j].conj(),
                Representation::PositiveP => Complex64::new(x, 0.0) - y,
            };
        }
    }
}

pub fn draw_input_ensemble(
    moments: &GaussianModeMoments,
    representation: Representation,
    trajectories: usize,
    seed: u64,
) -> Result<PhaseSpaceEnsemble> {
    if trajectories == 0 {
        return Err(Error::InvalidDimension(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    let sampler = InputSampler::new(moments, representation, seed)?;
    let m = sampler.modes();
    let zero = Complex64::new(0.0, 0.0);
    let mut alpha = vec![zero; trajectories * m];
    let mut beta = vec![zero; trajectories * m];
    alpha
        .par_chunks_mut(m)
        .zip(beta.par_chunks_mut(m))
        .enumerate()
        .for_each_init(
            || vec![0.0; 2 * m],
            |noise, (traj, (a, b))| sampler.fill(traj as u64, noise, a, b),
        );
    Ok(PhaseSpaceEnsemble {
        representation,
        stage: Stage::Input,
        modes: m,
        alpha,
        beta,
        seed,
    })
}

/// Column-major split copy of `T` for the per-trajectory product.
#[derive(Clone, Debug)]
pub struct Propagator {
    dim_out: usize,
    dim_in: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Propagator {
    pub fn new(t: &TransmissionMatrix) -> Self {
        let (dim_out, dim_in) = (t.dim_out(), t.dim_in());
        let mut re = Vec::with_capacity(dim_out * dim_in);
        let mut im = Vec::with_capacity(dim_out * dim_in);
        for j in 0..dim_in {
            for i in 0..dim_out {
                let z = t.entries()[(i, j)];
                re.push(z.re);
                im.push(z.im);
            }
        }
        Self {
            dim_out,
            dim_in,
            re,
            im,
        }
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    /// `out = T·input` (or `conj(T)·input` when `conjugate`) for each row
    /// of `input` (`rows × dim_in`), written as split real/imaginary parts
    /// (`rows × dim_out`). Each column of `T` is read once for all rows;
    /// every output element sees the same operation sequence whatever the
    /// number of rows.
    pub fn apply(
        &self,
        input: &[Complex64],
        conjugate: bool,
        out_re: &mut [f64],
        out_im: &mut [f64],
    ) {
        let (m, n) = (self.dim_out, self.dim_in);
        let rows = input.len() / n;
        let out_re = &mut out_re[..rows * m];
        let out_im = &mut out_im[..rows * m];
        out_re.fill(0.0);
        out_im.fill(0.0);
        let sign = if conjugate { -1.0 } else { 1.0 };
        for j in 0..n {
            let col_re = &self.re[j * m..(j + 1) * m];
            let col_im = &self.im[j * m..(j + 1) * m];
            for b in 0..rows {
                let a = input[b * n + j];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                // conj(T)·a == conj(T·conj(a)) for the imaginary sign flip
                let (ar, ai) = (a.re, sign * a.im);
                kernels::complex_axpy(
                    &mut out_re[b * m..(b + 1) * m],
                    &mut out_im[b * m..(b + 1) * m],
                    col_re,
                    col_im,
                    ar,
                    ai,
                    sign,
                );
            }
        }
    }
}

/// Propagates a batch of trajectories. `re`/`im` scratch hold
/// `rows × dim_out` values.
#[allow(clippy::too_many_arguments)]
fn propagate_rows(
    prop: &Propagator,
    representation: Representation,
    alpha: &[Complex64],
    beta: &[Complex64],
    re: &mut [f64],
    im: &mut [f64],
    alpha_out: &mut [Complex64],
    beta_out: &mut [Complex64],
) {
    let len = alpha.len() / prop.dim_in * prop.dim_out;
    prop.apply(alpha, false, re, im);
    for i in 0..len {
        alpha_out[i] = Complex64::new(re[i], im[i]);
    }
    match representation {
        Representation::DiagonalP => {
            for i in 0..len {
                beta_out[i] = alpha_out[i].conj();
            }
        }
        Representation::PositiveP => {
            prop.apply(beta, true, re, im);
            for i in 0..len {
                beta_out[i] = Complex64::new(re[i], im[i]);
            }
        }
    }
}

/// Trajectories propagated together; sized so a batch of outputs stays in cache.
pub const BATCH: usize = 16;

/// `α′ = Tα`, `β′ = T*β` per trajectory.
pub fn propagate(e: &PhaseSpaceEnsemble, t: &TransmissionMatrix) -> Result<PhaseSpaceEnsemble> {
    if e.stage != Stage::Input {
        return Err(Error::Config("ensemble has already been propagated".into()));
    }
    if t.dim_in() != e.modes {
        return Err(Error::mismatch(
            format!("{} input modes", e.modes),
            format!("{} matrix columns", t.dim_in()),
        ));
    }
    let prop = Propagator::new(t);
    let m_out = prop.dim_out;
    let zero = Complex64::new(0.0, 0.0);
    let n = e.trajectories();
    let mut alpha = vec![zero; n * m_out];
    let mut beta = vec![zero; n * m_out];
    let m_in = e.modes;
    alpha
        .par_chunks_mut(BATCH * m_out)
        .zip(beta.par_chunks_mut(BATCH * m_out))
        .enumerate()
        .for_each_init(
            || (vec![0.0; BATCH * m_out], vec![0.0; BATCH * m_out]),
            |(re, im), (batch, (a, b))| {
                let rows = a.len() / m_out;
                let src = batch * BATCH * m_in..(batch * BATCH + rows) * m_in;
                propagate_rows(
                    &prop,
                    e.representation,
                    &e.alpha[src.clone()],
                    &e.beta[src],
                    re,
                    im,
                    a,
                    b,
                )
            },
        );
    Ok(PhaseSpaceEnsemble {
        representation: e.representation,
        stage: Stage::Output,
        modes: m_out,
        alpha,
        beta,
        seed: e.seed,
    })
}

/// Output photon numbers `n′ = α′β′` and one-click observables
/// `π(1) = 1 − e^{−n′}` per trajectory and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickMoments {
    pub(crate) modes: usize,
    pub(crate) n_prime: Vec<Complex64>,
    pub(crate) pi1: Vec<Complex64>,
}

impl ClickMoments {
    /// Builds click moments from explicit output photon numbers.
    pub fn from_n_prime(modes: usize, n_prime: Vec<Complex64>) -> Result<Self> {
        if modes == 0 || n_prime.is_empty() || !n_prime.len().is_multiple_of(modes) {
            return Err(Error::InvalidDimension(
                "photon numbers do not tile the modes".into(),
            ));
        }
        let mut pi1 = vec![Complex64::new(0.0, 0.0); n_prime.len()];
        for (p, n) in pi1.iter_mut().zip(&n_prime) {
            *p = click_observable(*n)?;
        }
        Ok(Self {
            modes,
            n_prime,
            pi1,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn trajectories(&self) -> usize {
        self.n_prime.len() / self.modes
    }

    pub fn n_prime(&self) -> &[Complex64] {
        &self.n_prime
    }

    pub fn pi1(&self) -> &[Complex64] {
        &self.pi1
    }

    pub fn pi1_row(&self, traj: usize) -> &[Complex64] {
        &self.pi1[traj * self.modes..(traj + 1) * self.modes]
    }
}

#[inline]
fn click_observable(n: Complex64) -> Result<Complex64> {
    let size = n.norm();
    if size.is_nan() || size > EXPONENT_GUARD {
        return Err(Error::NumericalGuard(format!(
            "output photon number {n} exceeds the exponent guard; sampling diverged"
        )));
    }
    Ok(Complex64::new(1.0, 0.0) - (-n).exp())
}

fn click_row(
    alpha: &[Complex64],
    beta: &[Complex64],
    n_prime: &mut [Complex64],
    pi1: &mut [Complex64],
) -> Result<()> {
    for i in 0..alpha.len() {
        n_prime[i] = alpha[i] * beta[i];
        pi1[i] = click_observable(n_prime[i])?;
    }
    Ok(())
}

pub fn click_moments(e: &PhaseSpaceEnsemble) -> Result<ClickMoments> {
    if e.stage != Stage::Output {
        return Err(Error::Config(
            "click moments need a propagated ensemble".into(),
        ));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut n_prime = vec![zero; e.alpha.len()];
    let mut pi1 = vec![zero; e.alpha.len()];
    let m = e.modes;
    n_prime
        .par_chunks_mut(m)
        .zip(pi1.par_chunks_mut(m))
        .enumerate()
        .try_for_each(|(traj, (n, p))| click_row(e.alpha_row(traj), e.beta_row(traj), n, p))?;
    Ok(ClickMoments {
        modes: m,
        n_prime,
        pi1,
    })
}

/// Regenerates output trajectories on demand: draw, propagate and form
/// click observables without materializing the ensemble. Trajectory `i`
/// is bit-identical to row `i` of
/// `click_moments(propagate(draw_input_ensemble(..)))`.
#[derive(Clone, Debug)]
pub struct OutputSampler {
    input: InputSampler,
    prop: Propagator,
}

/// Per-worker buffers for [`OutputSampler`], holding up to [`BATCH`]
/// trajectories row-major.
#[derive(Clone, Debug)]
pub struct TrajectoryScratch {
    rows: usize,
    modes: usize,
    noise: Vec<f64>,
    alpha_in: Vec<Complex64>,
    beta_in: Vec<Complex64>,
    re: Vec<f64>,
    im: Vec<f64>,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
    n_prime: Vec<Complex64>,
    pi1: Vec<Complex64>,
}

impl TrajectoryScratch {
    /// Trajectories currently held.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn alpha_row(&self, row: usize) -> &[Complex64] {
        &self.alpha[row * self.modes..(row + 1) * self.modes]
    }

    pub fn beta_row(&self, row: usize) -> &[Complex64] {
        &self.beta[row * self.modes..(row + 1) * self.modes]
    }

    pub fn n_prime_row(&self, row: usize) -> &[Complex64] {
        &self.n_prime[row * self.modes..(row + 1) * self.modes]
    }

    pub fn pi1_row(&self, row: usize) -> &[Complex64] {
        &self.pi1[row * self.modes..(row + 1) * self.modes]
    }
}

impl OutputSampler {
    pub fn new(
        moments: &GaussianModeMoments,
        representation: Representation,
        t: &TransmissionMatrix,
        seed: u64,
    ) -> Result<Self> {
        if t.dim_in() != moments.modes() {
            return Err(Error::mismatch(
                format!("{} input modes", moments.modes()),
                format!("{} matrix columns", t.dim_in()),
            ));
        }
        Ok(Self {
            input: InputSampler::new(moments, representation, seed)?,
            prop: Propagator::new(t),
        })
    }

    pub fn representation(&self) -> Representation {
        self.input.representation
    }

    pub fn output_modes(&self) -> usize {
        self.prop.dim_out
    }

    pub fn scratch(&self) -> TrajectoryScratch {
        let (n_in, n_out) = (self.prop.dim_in, self.prop.dim_out);
        let zero = Complex64::new(0.0, 0.0);
        TrajectoryScratch {
            rows: 0,
            modes: n_out,
            noise: vec![0.0; 2 * n_in],
            alpha_in: vec![zero; BATCH * n_in],
            beta_in: vec![zero; BATCH * n_in],
            re: vec![0.0; BATCH * n_out],
            im: vec![0.0; BATCH * n_out],
            alpha: vec![zero; BATCH * n_out],
            beta: vec![zero; BATCH * n_out],
            n_prime: vec![zero; BATCH * n_out],
            pi1: vec![zero; BATCH * n_out],
        }
    }

    /// Output amplitudes of trajectories `first..first + count`
    /// (`count <= BATCH`) into the scratch rows.
    pub fn amplitudes(&self, first: u64, count: usize, s: &mut TrajectoryScratch) {
        assert!(count <= BATCH, "batch of {count} exceeds {BATCH}");
        let n_in = self.prop.dim_in;
        for r in 0..count {
            let rows = r * n_in..(r + 1) * n_in;
            self.input.fill(
                first + r as u64,
                &mut s.noise,
                &mut s.alpha_in[rows.clone()],
                &mut s.beta_in[rows],
            );
        }
        let len_in = count * n_in;
        propagate_rows(
            &self.prop,
            self.input.representation,
            &s.alpha_in[..len_in],
            &s.beta_in[..len_in],
            &mut s.re,
            &mut s.im,
            &mut s.alpha,
            &mut s.beta,
        );
        s.rows = count;
    }

    /// Amplitudes plus `n′` and `π(1)` for trajectories `first..first + count`.
    pub fn clicks(&self, first: u64, count: usize, s: &mut TrajectoryScratch) -> Result<()> {
        self.amplitudes(first, count, s);
        let len = count * self.prop.dim_out;
        click_row(
            &s.alpha[..len],
            &s.beta[..len],
            &mut s.n_prime[..len],
            &mut s.pi1[..len],
        )
    }

    /// Calls `f(trajectory, scratch_row)` for every trajectory in `range`, in order.
    pub fn for_each_clicks(
        &self,
        range: std::ops::Range<usize>,
        s: &mut TrajectoryScratch,
        mut f: impl FnMut(usize, &TrajectoryScratch, usize),
    ) -> Result<()> {
        let mut start = range.start;
        while start < range.end {
            let count = BATCH.min(range.end - start);
            self.clicks(start as u64, count, s)?;
            for r in 0..count {
                f(start + r, s, r);
            }
            start += count;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_haar_unitary, make_transmission};
    use crate::states::{derive_moments, GaussianInputSpec, StateKind};

    fn moments(kind: StateKind, r: f64, modes: usize) -> GaussianModeMoments {
        derive_moments(&GaussianInputSpec::uniform(kind, r, modes)).unwrap()
    }

    fn mean_and_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn vacuum_amplitudes_are_zero() {
        let e = draw_input_ensemble(
            &GaussianModeMoments::vacuum(3),
            Representation::PositiveP,
            50,
            1,
        )
        .unwrap();
        assert!(e
            .alpha()
            .iter()
            .chain(e.beta())
            .all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn squeezed_positive_p_is_real_and_doubled() {
        let m = moments(StateKind::PureSqueezed, 0.8, 2);
        let e = draw_input_ensemble(&m, Representation::PositiveP, 1000, 3).unwrap();
        assert!(e
            .alpha()
            .iter()
            .chain(e.beta())
            .all(|z| z.im.abs() <= 1e-14));
        assert!(e
            .alpha()
            .iter()
            .zip(e.beta())
            .any(|(a, b)| (a - b).norm() > 1e-3));
    }

    #[test]
    fn squeezed_photon_number_and_coherence() {
        let m = moments(StateKind::PureSqueezed, 1.0, 1);
        let e = draw_input_ensemble(&m, Representation::PositiveP, 1_000_000, 17).unwrap();
        let (n, se) = mean_and_se(e.alpha().iter().zip(e.beta()).map(|(a, b)| (a * b).re));
        assert!(
            (n - 1.0f64.sinh().powi(2)).abs() < 5.0 * se,
            "n={n} se={se}"
        );
        let (a2, se2) = mean_and_se(e.alpha().iter().map(|a| (a * a).re));
        assert!((a2 - m.m_tilde()[0]).abs() < 5.0 * se2, "a2={a2} se={se2}");
    }

    #[test]
    fn thermal_diagonal_p_intensity() {
        let r = crate::states::squeezing_for_photons(1.0);
        let m = moments(StateKind::Thermal, r, 1);
        let e = draw_input_ensemble(&m, Representation::DiagonalP, 1_000_000, 5).unwrap();
        assert!(e.alpha().iter().zip(e.beta()).all(|(a, b)| a.conj() == *b));
        let (n, se) = mean_and_se(e.alpha().iter().map(|a| a.norm_sqr()));
        assert!((n - 1.0).abs() < 5.0 * se, "n={n} se={se}");
    }

    #[test]
    fn diagonal_p_rejects_nonclassical() {
        let m = moments(StateKind::PureSqueezed, 0.5, 2);
        assert!(matches!(
            draw_input_ensemble(&m, Representation::DiagonalP, 10, 0),
            Err(Error::RepresentationViolation(_))
        ));
    }

    #[test]
    fn identity_propagation_is_exact() {
        let m = moments(StateKind::Thermalized, 0.7, 4);
        let e = draw_input_ensemble(&m, Representation::PositiveP, 100, 2).unwrap();
        let out = propagate(&e, &TransmissionMatrix::identity(4)).unwrap();
        assert_eq!(out.alpha(), e.alpha());
        assert_eq!(out.beta(), e.beta());
        assert_eq!(out.stage(), Stage::Output);
        assert!(propagate(&out, &TransmissionMatrix::identity(4)).is_err());
    }

    #[test]
    fn half_loss_halves_intensity() {
        let r = crate::states::squeezing_for_photons(1.0);
        let m = moments(StateKind::Thermal, r, 1);
        let e = draw_input_ensemble(&m, Representation::DiagonalP, 1_000_000, 8).unwrap();
        let t = TransmissionMatrix::identity(1).attenuate(0.5).unwrap();
        let out = propagate(&e, &t).unwrap();
        let (n, se) = mean_and_se(out.alpha().iter().map(|a| a.norm_sqr()));
        assert!((n - 0.5).abs() < 5.0 * se);
    }

    #[test]
    fn dimension_mismatch() {
        let e = draw_input_ensemble(
            &GaussianModeMoments::vacuum(3),
            Representation::PositiveP,
            5,
            1,
        )
        .unwrap();
        assert!(matches!(
            propagate(&e, &TransmissionMatrix::identity(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unitary_conserves_photon_number() {
        let m = moments(StateKind::PureSqueezed, 0.6, 6);
        let u = generate_haar_unitary(6, 4).unwrap();
        let t = make_transmission(&u, 1.0).unwrap();
        let e = propagate(
            &draw_input_ensemble(&m, Representation::PositiveP, 400_000, 9).unwrap(),
            &t,
        )
        .unwrap();
        let per_traj = (0..e.trajectories()).map(|k| {
            e.alpha_row(k)
                .iter()
                .zip(e.beta_row(k))
                .map(|(a, b)| (a * b).re)
                .sum::<f64>()
        });
        let (total, se) = mean_and_se(per_traj);
        assert!(
            (total - m.total_photons()).abs() < 5.0 * se,
            "{total} vs {}",
            m.total_photons()
        );
    }

    #[test]
    fn click_observable_values() {
        let cm = ClickMoments::from_n_prime(
            2,
            vec![Complex64::new(0.0, 0.0), Complex64::new(2f64.ln(), 0.0)],
        )
        .unwrap();
        assert_eq!(cm.pi1()[0], Complex64::new(0.0, 0.0));
        assert_eq!(cm.pi1()[1], Complex64::new(0.5, 0.0));
        let big = ClickMoments::from_n_prime(1, vec![Complex64::new(-800.0, 0.0)]);
        assert!(matches!(big, Err(Error::NumericalGuard(_))));
    }

    #[test]
    fn diagonal_p_clicks_are_real_probabilities() {
        let m = moments(StateKind::Thermal, 1.0, 5);
        let u = generate_haar_unitary(5, 2).unwrap();
        let t = make_transmission(&u, 0.5).unwrap();
        let e = propagate(
            &draw_input_ensemble(&m, Representation::DiagonalP, 2000, 1).unwrap(),
            &t,
        )
        .unwrap();
        let cm = click_moments(&e).unwrap();
        for (n, p) in cm.n_prime().iter().zip(cm.pi1()) {
            assert!(n.im.abs() <= 1e-12 && n.re >= 0.0);
            assert!(p.im.abs() <= 1e-12 && (0.0..=1.0).contains(&p.re));
            let direct = Complex64::new(1.0, 0.0) - (-n).exp();
            assert!((direct - p).norm() <= 1e-14);
        }
    }

    #[test]
    fn streaming_matches_materialized_bitwise() {
        for (kind, repr) in [
            (StateKind::PureSqueezed, Representation::PositiveP),
            (StateKind::Thermal, Representation::DiagonalP),
        ] {
            let m = moments(kind, 0.9, 7);
            let t = make_transmission(&generate_haar_unitary(7, 12).unwrap(), 0.6).unwrap();
            let cm = click_moments(
                &propagate(&draw_input_ensemble(&m, repr, 300, 77).unwrap(), &t).unwrap(),
            )
            .unwrap();
            let s = OutputSampler::new(&m, repr, &t, 77).unwrap();
            let mut scratch = s.scratch();
            for traj in [0usize, 1, 150, 299] {
                s.clicks(traj as u64, 1, &mut scratch).unwrap();
                assert_eq!(scratch.pi1_row(0), cm.pi1_row(traj));
            }
            // batch boundaries do not matter
            s.for_each_clicks(37..300, &mut scratch, |traj, sc, row| {
                assert_eq!(sc.pi1_row(row), cm.pi1_row(traj));
            })
            .unwrap();
        }
    }
}
