//! End-to-end runs driven by a [`RunConfig`], writing artifacts to the
//! configured output directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::faker::{generate_classical_patterns_streaming, PatternSet};
use crate::gcp::{bin_patterns, partition_modes, simulate_gcp_streaming, GcpDistribution, GcpSpec};
use crate::io;
use crate::network::TransmissionMatrix;
use crate::oracle::{exact_gcp, output_covariance};
use crate::sampler::{OutputSampler, Representation};
use crate::states::{GaussianModeMoments, StateKind};
use crate::stats::{compare_report, TestReport};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Fake,
    Compare,
    Oracle,
    Permtest,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "fake" => Mode::Fake,
            "compare" => Mode::Compare,
            "oracle" => Mode::Oracle,
            "permtest" => Mode::Permtest,
            other => return Err(Error::Config(format!("unknown mode '{other}'"))),
        })
    }
}

/// What a run produced.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub reports: Vec<TestReport>,
    pub distribution: Option<GcpDistribution>,
}

#[derive(Serialize)]
struct PermtestSummary<'a> {
    config_hash: &'a str,
    tests: usize,
    partitions: Vec<Vec<Vec<usize>>>,
    z_scores: Vec<f64>,
    z_mean: f64,
    z_std: f64,
    z_min: f64,
    z_max: f64,
}

struct Context<'a> {
    cfg: &'a RunConfig,
    hash: String,
    moments: GaussianModeMoments,
    t: TransmissionMatrix,
    summary: RunSummary,
}

impl Context<'_> {
    fn write_gcp(&mut self, stem: &str, g: &GcpDistribution) -> Result<()> {
        io::write_gcp(&self.cfg.outputs, stem, g, Some(&self.hash))?;
        self.summary
            .files
            .push(self.cfg.outputs.join(format!("{stem}.json")));
        self.summary
            .files
            .push(self.cfg.outputs.join(format!("{stem}.csv")));
        Ok(())
    }

    fn write_report(&mut self, name: &str, r: &TestReport) -> Result<()> {
        let path = self.cfg.outputs.join(name);
        io::write_report(&path, r, Some(&self.hash))?;
        self.summary.files.push(path);
        Ok(())
    }

    fn sampler(&self, seed: u64, force_classical: bool) -> Result<OutputSampler> {
        let repr = if force_classical {
            Representation::DiagonalP
        } else {
            self.cfg.representation(&self.moments)
        };
        OutputSampler::new(&self.moments, repr, &self.t, seed)
    }

    fn simulate(&self, spec: &GcpSpec) -> Result<GcpDistribution> {
        let sampler = self.sampler(self.cfg.seeds.ensemble, false)?;
        let g = simulate_gcp_streaming(&sampler, spec, self.cfg.ensembles, self.cfg.blocks)?;
        let total = g.total_probability();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NumericalGuard(format!(
                "simulated GCP sums to {total}"
            )));
        }
        log::info!(
            "simulated {} trajectories, {} bins",
            g.samples,
            g.probabilities.len()
        );
        Ok(g)
    }

    fn fakes(&self) -> Result<PatternSet> {
        // amplitudes and bits both keyed by the faker seed, in separate domains
        let sampler = self.sampler(self.cfg.seeds.faker, true)?;
        let mut p = generate_classical_patterns_streaming(
            &sampler,
            self.cfg.fake_patterns(),
            self.cfg.seeds.faker,
        )?;
        p.metadata
            .insert("state_kind".into(), self.cfg.state.kind.as_str().into());
        Ok(p)
    }

    /// Experimental patterns when configured, classical fakes otherwise.
    fn data(&self, modes: usize) -> Result<(PatternSet, &'static str)> {
        match &self.cfg.data.patterns {
            Some(path) => Ok((io::load_patterns(path, Some(modes))?, "E")),
            None => Ok((self.fakes()?, "C")),
        }
    }

    fn theory_label(&self) -> &'static str {
        if self.cfg.state.kind == StateKind::PureSqueezed {
            "I"
        } else {
            "T"
        }
    }
}

/// Runs one pipeline mode. Output files embed the config hash; repeated
/// runs of the same config write identical bytes whatever the thread count.
pub fn run_pipeline(cfg: &RunConfig, mode: Mode) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.outputs).map_err(|e| Error::io(&cfg.outputs, e))?;
    let t = cfg.transmission()?;
    let modes_out = t.dim_out();
    let mut ctx = Context {
        cfg,
        hash: cfg.hash(),
        moments: cfg.moments()?,
        t,
        summary: RunSummary::default(),
    };
    match mode {
        Mode::Simulate => {
            let spec = cfg.gcp_spec(modes_out)?;
            let g = ctx.simulate(&spec)?;
            ctx.write_gcp("simulate", &g)?;
            ctx.summary.distribution = Some(g);
        }
        Mode::Fake => {
            let p = ctx.fakes()?;
            let path = cfg.outputs.join("fake_patterns.txt");
            io::write_patterns(&path, &p, &[("config_hash".into(), ctx.hash.clone())])?;
            ctx.summary.files.push(path);
        }
        Mode::Compare => {
            let spec = cfg.gcp_spec(modes_out)?;
            let (data, label) = ctx.data(modes_out)?;
            let binned = bin_patterns(&data, &spec)?;
            let theory = ctx.simulate(&spec)?;
            let report = compare_report(&binned, &theory, (label, ctx.theory_label()))?;
            ctx.write_gcp("compare_data", &binned)?;
            ctx.write_gcp("compare_theory", &theory)?;
            ctx.write_report("compare_report.json", &report)?;
            ctx.summary.reports.push(report);
        }
        Mode::Oracle => {
            let spec = cfg.gcp_spec(modes_out)?;
            let v = output_covariance(&ctx.moments, &ctx.t)?;
            let g = exact_gcp(&v, &spec)?;
            ctx.write_gcp("oracle", &g)?;
            ctx.summary.distribution = Some(g);
        }
        Mode::Permtest => permtest(&mut ctx, modes_out)?,
    }
    Ok(ctx.summary)
}

/// Distinct random equal partitions drawn from the partition seed.
pub fn permutation_partitions(
    modes: usize,
    d: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<GcpSpec>> {
    let available = crate::gcp::permutation_count(modes, d)?;
    if available < num_bigint::BigUint::from(count) {
        return Err(Error::Config(format!(
            "only {available} distinct partitions exist, {count} requested"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        if attempt > 1000 * count as u64 + 1000 {
            return Err(Error::Config(
                "could not draw enough distinct partitions".into(),
            ));
        }
        let spec = partition_modes(modes, d, Some(seed.wrapping_add(attempt)))?;
        attempt += 1;
        if seen.insert(spec.canonical_subsets()) {
            out.push(spec);
        }
    }
    Ok(out)
}

fn permtest(ctx: &mut Context<'_>, modes_out: usize) -> Result<()> {
    let cfg = ctx.cfg;
    let specs = permutation_partitions(
        modes_out,
        cfg.gcp.d,
        cfg.seeds.partition,
        cfg.gcp.n_permutation_tests,
    )?;
    let (data, label) = ctx.data(modes_out)?;
    let mut z = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let binned = bin_patterns(&data, spec)?;
        let theory = ctx.simulate(spec)?;
        let report = compare_report(&binned, &theory, (label, ctx.theory_label()))?;
        ctx.write_report(&format!("permtest_{i:03}.json"), &report)?;
        z.push(report.z_score);
        ctx.summary.reports.push(report);
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = if z.len() > 1 {
        (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let summary = PermtestSummary {
        config_hash: &ctx.hash,
        tests: z.len(),
        partitions: specs.iter().map(|s| s.subsets().to_vec()).collect(),
        z_mean: mean,
        z_std: std,
        z_min: z.iter().copied().fold(f64::INFINITY, f64::min),
        z_max: z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        z_scores: z,
    };
    let path = cfg.outputs.join("permtest_summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    ctx.summary.files.push(path);
    Ok(())
}

/// Runs `f` on a dedicated pool of `threads` workers (global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
