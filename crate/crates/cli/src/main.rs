use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcpsim::config::RunConfig;
use gcpsim::pipeline::{run_pipeline, with_threads, Mode};
use gcpsim::Error;

/// Phase-space simulation and validation of threshold-detected Gaussian boson sampling.
#[derive(Parser, Debug)]
#[command(name = "gcpsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grouped count distribution from a phase-space ensemble.
    Simulate(Common),
    /// Classical click patterns from a diagonal-P ensemble.
    Fake(Common),
    /// Chi-square / Z-score test of binned patterns against simulation.
    Compare(Common),
    /// Exact grouped count distribution (small networks only).
    Oracle(Common),
    /// Comparisons over randomly permuted mode subsets.
    Permtest(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Replace a seed, e.g. `--seed-override ensemble=7`. Repeatable.
    #[arg(long = "seed-override", value_name = "K=V")]
    seed_override: Vec<String>,
}

fn run(mode: Mode, args: &Common) -> Result<(), Error> {
    let mut cfg = RunConfig::load(&args.config)?;
    for s in &args.seed_override {
        cfg.apply_seed_override(s)?;
    }
    if let Some(out) = &args.out {
        cfg.outputs = out.clone();
    }
    let summary = with_threads(args.threads, || run_pipeline(&cfg, mode))??;
    for report in &summary.reports {
        println!("{report}");
    }
    if let Some(g) = &summary.distribution {
        println!(
            "bins: {}  total probability: {:.12}",
            g.probabilities.len(),
            g.total_probability()
        );
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Fake(a) => (Mode::Fake, a),
        Command::Compare(a) => (Mode::Compare, a),
        Command::Oracle(a) => (Mode::Oracle, a),
        Command::Permtest(a) => (Mode::Permtest, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            eprintln!("error[{}]: {e}", kind.as_str());
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
