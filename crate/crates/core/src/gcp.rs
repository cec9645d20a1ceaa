//! Grouped count probabilities (GCPs).
//!
//! A [`GcpSpec`] splits (some of) the output modes into `d` disjoint
//! subsets; the grouped count of a click pattern is the vector of click
//! totals per subset. Distributions live on the dense grid
//! `(M_1+1) × … × (M_d+1)`, flattened row-major (last subset fastest).
//!
//! Phase-space distributions are computed from the Fourier observable
//!
//! ```text
//! G̃(k) = ⟨ Π_j Π_{i∈S_j} (π_i(0) + π_i(1) e^{−i k_j θ_j}) ⟩,   θ_j = 2π/(M_j+1)
//! ```
//!
//! followed by a multi-dimensional inverse DFT and the real part.

use std::f64::consts::TAU;

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faker::PatternSet;
use crate::kernels;
use crate::rng::{self, Domain};
use crate::sampler::{ClickMoments, OutputSampler};

/// Largest supported number of subsets.
pub const MAX_DIMENSION: usize = 4;
pub const DEFAULT_BLOCKS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcpSpec {
    modes: usize,
    subsets: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    permutation_seed: Option<u64>,
}

impl GcpSpec {
    /// Explicit subsets over `modes` output modes.
    pub fn new(modes: usize, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let spec = Self {
            modes,
            subsets,
            permutation_seed: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.subsets.len();
        if d == 0 || d > MAX_DIMENSION {
            return Err(Error::InvalidDimension(format!(
                "GCP dimension must be in 1..={MAX_DIMENSION}, got {d}"
            )));
        }
        let mut seen = vec![false; self.modes];
        for s in &self.subsets {
            if s.is_empty() {
                return Err(Error::InvalidDimension("empty mode subset".into()));
            }
            for &i in s {
                if i >= self.modes {
                    return Err(Error::InvalidDimension(format!(
                        "mode {i} out of range for {} modes",
                        self.modes
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidDimension(format!(
                        "mode {i} appears in more than one subset"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dimension(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn permutation_seed(&self) -> Option<u64> {
        self.permutation_seed
    }

    /// Grid extent per subset, `M_j + 1`.
    pub fn shape(&self) -> Vec<usize> {
        self.subsets.iter().map(|s| s.len() + 1).collect()
    }

    pub fn bins(&self) -> usize {
        self.shape().iter().product()
    }

    /// Row-major flat index of a grouped count.
    pub fn flat_index(&self, counts: &[usize]) -> usize {
        counts
            .iter()
            .zip(self.shape())
            .fold(0, |acc, (&c, n)| acc * n + c)
    }

    /// Inverse of [`GcpSpec::flat_index`].
    pub fn grid_index(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut out = vec![0; shape.len()];
        for (o, n) in out.iter_mut().zip(&shape).rev() {
            *o = flat % n;
            flat /= n;
        }
        out
    }

    /// Subsets as an unordered set of sorted lists, for comparing partitions.
    pub fn canonical_subsets(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .subsets
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s
            })
            .collect();
        out.sort();
        out
    }
}

/// Splits `modes` into `d` equal subsets: contiguous blocks when `seed` is
/// `None`, otherwise a uniformly random partition determined by `seed`.
pub fn partition_modes(modes: usize, d: usize, seed: Option<u64>) -> Result<GcpSpec> {
    if d == 0 || d > modes {
        return Err(Error::InvalidDimension(format!(
            "cannot split {modes} modes into {d} subsets"
        )));
    }
    if !modes.is_multiple_of(d) {
        return Err(Error::InvalidDimension(format!(
            "equal split needs d to divide the mode count ({modes} % {d} != 0); pass explicit subsets instead"
        )));
    }
    let mut order: Vec<usize> = (0..modes).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut rng::stream(seed, Domain::Partition, 0));
    }
    let size = modes / d;
    let subsets = order
        .chunks(size)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect();
    let spec = GcpSpec {
        modes,
        subsets,
        permutation_seed: seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Number of distinct equal-size permutation tests, `C(M, M/d) / d`.
pub fn permutation_count(modes: usize, d: usize) -> Result<BigUint> {
    if d == 0 || d > modes || !modes.is_multiple_of(d) {
        return Err(Error::InvalidDimension(format!(
            "{d} does not evenly divide {modes} modes"
        )));
    }
    let k = modes / d;
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c = c * BigUint::from(modes - i) / BigUint::from(i + 1);
    }
    Ok(c / BigUint::from(d))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcpSource {
    PhaseSpace,
    Patterns,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcpDistribution {
    pub spec: GcpSpec,
    pub shape: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub sigma: Vec<f64>,
    pub source: GcpSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_counts: Option<Vec<u64>>,
    /// Trajectories (phase space) or patterns behind the estimate.
    pub samples: u64,
}

impl GcpDistribution {
    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn get(&self, counts: &[usize]) -> f64 {
        self.probabilities[self.spec.flat_index(counts)]
    }

    /// Sums out every subset except `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[axis]];
        for (flat, p) in self.probabilities.iter().enumerate() {
            out[self.spec.grid_index(flat)[axis]] += p;
        }
        out
    }
}

/// Per-subset Fourier factor tables: `z_k − 1` with `z_k = e^{−ikθ}`.
struct SubsetKernel {
    modes: Vec<usize>,
    zm1_re: Vec<f64>,
    zm1_im: Vec<f64>,
}

impl SubsetKernel {
    fn new(modes: &[usize]) -> Self {
        let n = modes.len() + 1;
        let (mut re, mut im) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let (s, c) = (TAU * k as f64 / n as f64).sin_cos();
            // exact zero at k = 0 keeps the normalization exact
            re.push(if k == 0 { 0.0 } else { c - 1.0 });
            im.push(if k == 0 { 0.0 } else { -s });
        }
        Self {
            modes: modes.to_vec(),
            zm1_re: re,
            zm1_im: im,
        }
    }

    fn len(&self) -> usize {
        self.zm1_re.len()
    }

    /// `f(k) = Π_i (1 + π_i(1)(z_k − 1))` for one trajectory.
    fn evaluate(&self, pi1: &[Complex64], f_re: &mut [f64], f_im: &mut [f64]) {
        let n = self.len();
        let real = self.modes.iter().all(|&i| pi1[i].im == 0.0);
        // real click probabilities give f(n − k) = conj f(k)
        let upto = if real { n / 2 + 1 } else { n };
        let (zr, zi) = (&self.zm1_re[..upto], &self.zm1_im[..upto]);
        {
            let (f_re, f_im) = (&mut f_re[..upto], &mut f_im[..upto]);
            f_re.fill(1.0);
            f_im.fill(0.0);
            for &i in &self.modes {
                let (pr, pi) = (pi1[i].re, pi1[i].im);
                if pr == 0.0 && pi == 0.0 {
                    continue;
                }
                kernels::complex_mul_affine(f_re, f_im, zr, zi, pr, pi);
            }
        }
        if real {
            for k in upto..n {
                f_re[k] = f_re[n - k];
                f_im[k] = -f_im[n - k];
            }
        }
    }
}

/// Accumulates `Σ_traj Π_j f_j(k_j)` on the flattened Fourier grid.
struct FourierAccumulator {
    kernels: Vec<SubsetKernel>,
    shape: Vec<usize>,
    f_re: Vec<Vec<f64>>,
    f_im: Vec<Vec<f64>>,
    outer_re: Vec<f64>,
    outer_im: Vec<f64>,
    sum_re: Vec<f64>,
    sum_im: Vec<f64>,
    count: u64,
}

impl FourierAccumulator {
    fn new(spec: &GcpSpec) -> Self {
        let kernels: Vec<SubsetKernel> =
            spec.subsets.iter().map(|s| SubsetKernel::new(s)).collect();
        let shape = spec.shape();
        let bins = spec.bins();
        Self {
            f_re: shape.iter().map(|&n| vec![0.0; n]).collect(),
            f_im: shape.iter().map(|&n| vec![0.0; n]).collect(),
            kernels,
            shape,
            outer_re: vec![0.0; bins],
            outer_im: vec![0.0; bins],
            sum_re: vec![0.0; bins],
            sum_im: vec![0.0; bins],
            count: 0,
        }
    }

    fn add(&mut self, pi1: &[Complex64]) {
        for (j, kernel) in self.kernels.iter().enumerate() {
            kernel.evaluate(pi1, &mut self.f_re[j], &mut self.f_im[j]);
        }
        if self.kernels.len() == 1 {
            for k in 0..self.shape[0] {
                self.sum_re[k] += self.f_re[0][k];
                self.sum_im[k] += self.f_im[0][k];
            }
        } else {
            // outer product built axis by axis
            self.outer_re[0] = 1.0;
            self.outer_im[0] = 0.0;
            let mut len = 1;
            for j in 0..self.shape.len() {
                let n = self.shape[j];
                for p in (0..len).rev() {
                    let (xr, xi) = (self.outer_re[p], self.outer_im[p]);
                    for k in (0..n).rev() {
                        let (fr, fi) = (self.f_re[j][k], self.f_im[j][k]);
                        self.outer_re[p * n + k] = xr * fr - xi * fi;
                        self.outer_im[p * n + k] = xr * fi + xi * fr;
                    }
                }
                len *= n;
            }
            for b in 0..len {
                self.sum_re[b] += self.outer_re[b];
                self.sum_im[b] += self.outer_im[b];
            }
        }
        self.count += 1;
    }

    fn finish(self) -> BlockSum {
        BlockSum {
            re: self.sum_re,
            im: self.sum_im,
            count: self.count,
        }
    }
}

#[derive(Clone, Debug)]
struct BlockSum {
    re: Vec<f64>,
    im: Vec<f64>,
    count: u64,
}

impl BlockSum {
    fn merge(mut self, other: BlockSum) -> BlockSum {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += b;
        }
        self.count += other.count;
        self
    }
}

/// Fixed-shape pairwise reduction; the result depends only on `parts`.
fn tree_reduce(mut parts: Vec<BlockSum>) -> BlockSum {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

/// Real part of the inverse DFT of the mean Fourier observable.
fn invert(shape: &[usize], sum: &BlockSum) -> Vec<f64> {
    let inv = 1.0 / sum.count as f64;
    let mut re: Vec<f64> = sum.re.iter().map(|x| x * inv).collect();
    let mut im: Vec<f64> = sum.im.iter().map(|x| x * inv).collect();
    let total: usize = shape.iter().product();
    let mut stride = total;
    for &n in shape {
        stride /= n;
        // e^{+2πi·q/n} for q = (k·m) mod n
        let tw: Vec<(f64, f64)> = (0..n)
            .map(|q| {
                let (s, c) = (TAU * q as f64 / n as f64).sin_cos();
                (c, s)
            })
            .collect();
        let (mut lr, mut li) = (vec![0.0; n], vec![0.0; n]);
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for m in 0..n {
                    let (mut ar, mut ai) = (0.0, 0.0);
                    for k in 0..n {
                        let (c, sn) = tw[(k * m) % n];
                        let (xr, xi) = (re[base + k * stride], im[base + k * stride]);
                        ar += xr * c - xi * sn;
                        ai += xr * sn + xi * c;
                    }
                    lr[m] = ar / n as f64;
                    li[m] = ai / n as f64;
                }
                for m in 0..n {
                    re[base + m * stride] = lr[m];
                    im[base + m * stride] = li[m];
                }
            }
        }
    }
    re
}

fn block_ranges(trajectories: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    (0..blocks)
        .map(|b| (b * trajectories / blocks)..((b + 1) * trajectories / blocks))
        .collect()
}

fn check_blocks(trajectories: usize, blocks: usize) -> Result<()> {
    if blocks < 2 {
        return Err(Error::Config(format!(
            "need at least 2 blocks for error estimation, got {blocks}"
        )));
    }
    if trajectories < blocks {
        return Err(Error::Config(format!(
            "{trajectories} trajectories cannot fill {blocks} blocks"
        )));
    }
    Ok(())
}

fn assemble(spec: &GcpSpec, blocks: Vec<BlockSum>) -> GcpDistribution {
    let shape = spec.shape();
    let per_block: Vec<Vec<f64>> = blocks.iter().map(|b| invert(&shape, b)).collect();
    let total = tree_reduce(blocks);
    let probabilities = invert(&shape, &total);
    let nb = per_block.len() as f64;
    let sigma = (0..probabilities.len())
        .map(|i| {
            let mean = per_block.iter().map(|g| g[i]).sum::<f64>() / nb;
            let var = per_block.iter().map(|g| (g[i] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            (var / nb).sqrt()
        })
        .collect();
    GcpDistribution {
        spec: spec.clone(),
        shape,
        probabilities,
        sigma,
        source: GcpSource::PhaseSpace,
        raw_counts: None,
        samples: total.count,
    }
}

/// GCP from materialized click moments. `sigma` is the standard error of
/// the `blocks` contiguous sub-ensemble estimates.
pub fn simulate_gcp(cm: &ClickMoments, spec: &GcpSpec, blocks: usize) -> Result<GcpDistribution> {
    spec.validate()?;
    if cm.modes() != spec.modes() {
        return Err(Error::mismatch(
            format!("{} modes", spec.modes()),
            format!("{} modes", cm.modes()),
        ));
    }
    let n = cm.trajectories();
    check_blocks(n, blocks)?;
    let sums: Vec<BlockSum> = block_ranges(n, blocks)
        .into_par_iter()
        .map(|range| {
            let mut acc = FourierAccumulator::new(spec);
            for traj in range {
                acc.add(cm.pi1_row(traj));
            }
            acc.finish()
        })
        .collect();
    Ok(assemble(spec, sums))
}

/// Same result as [`simulate_gcp`] on the materialized ensemble, with
/// trajectories regenerated on the fly so memory stays independent of the
/// ensemble size.
pub fn simulate_gcp_streaming(
    sampler: &OutputSampler,
    spec: &GcpSpec,
    trajectories: usize,
    blocks: usize,
) -> Result<GcpDistribution> {
    spec.validate()?;
    if sampler.output_modes() != spec.modes() {
        return Err(Error::mismatch(
            format!("{} modes", spec.modes()),
            format!("{} modes", sampler.output_modes()),
        ));
    }
    check_blocks(trajectories, blocks)?;
    let sums = block_ranges(trajectories, blocks)
        .into_par_iter()
        .map(|range| {
            let mut acc = FourierAccumulator::new(spec);
            let mut scratch = sampler.scratch();
            sampler.for_each_clicks(range, &mut scratch, |_, s, row| acc.add(s.pi1_row(row)))?;
            Ok(acc.finish())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(spec, sums))
}

/// Histograms click patterns by grouped count.
pub fn bin_patterns(p: &PatternSet, spec: &GcpSpec) -> Result<GcpDistribution> {
    spec.validate()?;
    if p.modes() != spec.modes() {
        return Err(Error::mismatch(
            format!("patterns of length {}", spec.modes()),
            p.modes(),
        ));
    }
    if p.is_empty() {
        return Err(Error::Data("empty pattern set".into()));
    }
    let masks: Vec<Vec<u64>> = spec.subsets().iter().map(|s| p.mask(s)).collect();
    let shape = spec.shape();
    let mut counts = vec![0u64; spec.bins()];
    for words in p.iter_words() {
        let mut flat = 0;
        for (mask, &n) in masks.iter().zip(&shape) {
            let c: u32 = words
                .iter()
                .zip(mask)
                .map(|(w, m)| (w & m).count_ones())
                .sum();
            flat = flat * n + c as usize;
        }
        counts[flat] += 1;
    }
    let total = p.len() as f64;
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let sigma = probabilities
        .iter()
        .map(|&q| (q * (1.0 - q) / total).sqrt())
        .collect();
    Ok(GcpDistribution {
        spec: spec.clone(),
        shape,
        probabilities,
        sigma,
        source: GcpSource::Patterns,
        raw_counts: Some(counts),
        samples: p.len() as u64,
    })
}
