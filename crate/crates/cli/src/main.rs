//! `anderson`: configuration-driven runner for the lattice experiments.

mod config;
mod experiments;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{check_command, parse_sweep, Command, Config};
use experiments::Budget;
use output::{emit, Manifest};

/// Output directory used when `--out` is not given.
const OUT_ENV: &str = "ANDERSON_OUT";

#[derive(Parser)]
#[command(name = "anderson", version, about = "Lattice experiments for the Anderson Hamiltonian with white-noise potential")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample lattice white noise and its mollification.
    Sample(RunArgs),
    /// Renormalization-constant sweeps in 2D and 3D.
    Renorm(RunArgs),
    /// Enhanced-noise convergence and algebraic identities.
    Enhance(RunArgs),
    /// Semigroup symmetry and composition.
    Solve(RunArgs),
    /// Two-route oracle and spectrum coverage.
    Spectrum(RunArgs),
    /// Weyl-sequence probes.
    Weyl(RunArgs),
    /// Resonance fixed-point sweep.
    Resonance(RunArgs),
    /// Any experiment, or a list of them under `runs`.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config, or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $ANDERSON_OUT, else the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(path: &Path) -> Result<Vec<Config>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    // a manifest carries its resolved config
    let text = match value.get("config") {
        Some(cfg) if value.get("rng").is_some() => cfg.to_string(),
        _ => text,
    };
    Ok(parse_sweep(&text).with_context(|| format!("in {}", path.display()))?.runs)
}

/// Runs one experiment and returns whether all of its checks passed.
fn run_one(cfg: &Config, out: &Path) -> Result<bool> {
    let manifest = Manifest::begin(out, cfg)?;
    let stem = manifest.stem().to_string();
    let budget = Budget::new(cfg.budget_seconds);
    let outcome = match experiments::run(cfg, &budget) {
        Ok(o) => o,
        Err(e) => {
            manifest.finish("failed", &[], Some(format!("{e:#}")))?;
            return Err(e.context(format!("experiment {stem}")));
        }
    };
    let files = emit(out, &stem, cfg.experiment.name(), &cfg.formats, &outcome)?;
    let pass = outcome.all_pass();
    for c in &outcome.checks {
        println!("{} {stem} {}: {:.3e} (bound {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    println!("wrote {} files and {}", files.len(), manifest.path().display());
    manifest.finish(if pass { "passed" } else { "checks_failed" }, &files, None)?;
    Ok(pass)
}

fn execute(cmd: Command, args: &RunArgs) -> Result<bool> {
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut runs = load(&args.config)?;
    if cmd != Command::Sweep && runs.len() != 1 {
        anyhow::bail!("only `sweep` accepts a list of runs");
    }
    for cfg in &mut runs {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        check_command(cmd, cfg)?;
    }
    let mut all = true;
    for cfg in &runs {
        all &= run_one(cfg, &out)?;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Sub::Sample(a) => (Command::Sample, a),
        Sub::Renorm(a) => (Command::Renorm, a),
        Sub::Enhance(a) => (Command::Enhance, a),
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Weyl(a) => (Command::Weyl, a),
        Sub::Resonance(a) => (Command::Resonance, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    match execute(cmd, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
