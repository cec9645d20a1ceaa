//! Classical click patterns drawn from diagonal-P output ensembles.
//!
//! Each trajectory yields exactly one pattern; bit `j` is an independent
//! Bernoulli draw with success probability `1 − e^{−|α′_j|²}`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::sampler::{
    click_moments, OutputSampler, PhaseSpaceEnsemble, Representation, Stage, BATCH,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSource {
    Experiment,
    ClassicalFake,
}

/// Binary click patterns packed `words_per_pattern` u64 words per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternSet {
    modes: usize,
    words: Vec<u64>,
    len: usize,
    pub source: PatternSource,
    pub metadata: BTreeMap<String, String>,
}

impl PatternSet {
    pub fn new(modes: usize, source: PatternSource) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidDimension(
                "patterns need at least one mode".into(),
            ));
        }
        Ok(Self {
            modes,
            words: Vec::new(),
            len: 0,
            source,
            metadata: BTreeMap::new(),
        })
    }

    pub fn from_bools(modes: usize, rows: &[Vec<bool>]) -> Result<Self> {
        let mut p = Self::new(modes, PatternSource::Experiment)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != modes {
                return Err(Error::Data(format!(
                    "pattern {i} has length {} instead of {modes}",
                    row.len()
                )));
            }
            p.push_bits(row.iter().copied());
        }
        Ok(p)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words_per_pattern(&self) -> usize {
        self.modes.div_ceil(64)
    }

    pub(crate) fn push_bits(&mut self, bits: impl Iterator<Item = bool>) {
        let w = self.words_per_pattern();
        let start = self.words.len();
        self.words.resize(start + w, 0);
        for (j, b) in bits.enumerate() {
            if b {
                self.words[start + j / 64] |= 1 << (j % 64);
            }
        }
        self.len += 1;
    }

    pub fn bit(&self, pattern: usize, mode: usize) -> bool {
        let w = self.words_per_pattern();
        self.words[pattern * w + mode / 64] >> (mode % 64) & 1 == 1
    }

    pub fn pattern(&self, index: usize) -> Vec<bool> {
        (0..self.modes).map(|j| self.bit(index, j)).collect()
    }

    pub fn iter_words(&self) -> std::slice::ChunksExact<'_, u64> {
        self.words.chunks_exact(self.words_per_pattern())
    }

    /// Bit mask selecting `modes` in the packed layout.
    pub fn mask(&self, modes: &[usize]) -> Vec<u64> {
        let mut m = vec![0u64; self.words_per_pattern()];
        for &j in modes {
            m[j / 64] |= 1 << (j % 64);
        }
        m
    }

    /// Per-mode click frequency.
    pub fn click_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.modes];
        for words in self.iter_words() {
            for (j, c) in counts.iter_mut().enumerate() {
                *c += words[j / 64] >> (j % 64) & 1;
            }
        }
        counts.iter().map(|&c| c as f64 / self.len as f64).collect()
    }

    pub fn row_string(&self, index: usize) -> String {
        (0..self.modes)
            .map(|j| if self.bit(index, j) { '1' } else { '0' })
            .collect()
    }
}

fn draw_pattern(probabilities: impl Iterator<Item = f64>, seed: u64, traj: u64, row: &mut [u64]) {
    let mut rng = rng::stream(seed, Domain::Faker, traj);
    row.fill(0);
    for (j, p) in probabilities.enumerate() {
        let u: f64 = rng.random();
        if u < p {
            row[j / 64] |= 1 << (j % 64);
        }
    }
}

fn fake_set(modes: usize, trajectories: usize, seed: u64) -> PatternSet {
    let mut set = PatternSet {
        modes,
        words: vec![0; trajectories * modes.div_ceil(64)],
        len: trajectories,
        source: PatternSource::ClassicalFake,
        metadata: BTreeMap::new(),
    };
    set.metadata.insert("faker_seed".into(), seed.to_string());
    set
}

/// One pattern per trajectory of a propagated diagonal-P ensemble.
pub fn generate_classical_patterns(e: &PhaseSpaceEnsemble, seed: u64) -> Result<PatternSet> {
    if e.representation() != Representation::DiagonalP {
        return Err(Error::RepresentationViolation(
            "classical patterns can only be drawn from a diagonal-P ensemble".into(),
        ));
    }
    if e.stage() != Stage::Output {
        return Err(Error::Config(
            "classical patterns need a propagated ensemble".into(),
        ));
    }
    let cm = click_moments(e)?;
    let mut set = fake_set(e.modes(), e.trajectories(), seed);
    set.metadata
        .insert("ensemble_seed".into(), e.seed().to_string());
    let w = set.words_per_pattern();
    set.words
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(traj, row)| {
            draw_pattern(
                cm.pi1_row(traj).iter().map(|p| p.re),
                seed,
                traj as u64,
                row,
            )
        });
    Ok(set)
}

/// Same patterns as [`generate_classical_patterns`] on the materialized
/// ensemble, without storing amplitudes.
pub fn generate_classical_patterns_streaming(
    sampler: &OutputSampler,
    trajectories: usize,
    seed: u64,
) -> Result<PatternSet> {
    if sampler.representation() != Representation::DiagonalP {
        return Err(Error::RepresentationViolation(
            "classical patterns can only be drawn from a diagonal-P ensemble".into(),
        ));
    }
    let mut set = fake_set(sampler.output_modes(), trajectories, seed);
    let w = set.words_per_pattern();
    set.words
        .par_chunks_mut(w * BATCH)
        .enumerate()
        .try_for_each_init(
            || sampler.scratch(),
            |scratch, (batch, rows)| {
                let first = batch * BATCH;
                let range = first..first + rows.len() / w;
                sampler.for_each_clicks(range, scratch, |traj, s, r| {
                    let out = &mut rows[(traj - first) * w..(traj - first + 1) * w];
                    draw_pattern(s.pi1_row(r).iter().map(|p| p.re), seed, traj as u64, out);
                })
            },
        )?;
    Ok(set)
}
