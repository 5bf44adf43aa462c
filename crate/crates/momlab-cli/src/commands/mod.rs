//! Subcommand definitions and dispatch.

mod counterexample;
mod logreg;
mod sgdfs;
mod sweep;
mod theory;
mod validate;

use std::collections::BTreeSet;

use clap::{Args, Parser, Subcommand};
use momlab::theory::SpectrumBounds;

pub enum CommandOutcome {
    Success,
    ValidationFailed,
}

pub type CmdError = Box<dyn std::error::Error>;
pub type CmdResult = Result<CommandOutcome, CmdError>;

#[derive(Parser)]
#[command(
    name = "momlab",
    version,
    about = "Momentum laboratory: rate theory and experiments for accelerated stochastic gradient methods"
)]
pub struct Cli {
    /// Worker threads for cell-parallel experiments (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Closed-form rate, stability, and variance-neighborhood report.
    Theory(theory::TheoryArgs),
    /// Step-size/momentum heatmap sweep with theory overlays.
    Sweep(sweep::SweepArgs),
    /// Finite-sum divergence example with batch annotations.
    Counterexample(counterexample::CounterexampleArgs),
    /// Finite-sum SGD bound-tightness experiment.
    Sgdfs(sgdfs::SgdfsArgs),
    /// Logistic-regression sweep with tracked curvature estimates.
    Logreg(logreg::LogregArgs),
    /// Run the numerical validation suites (exit 2 on any failure).
    Validate(validate::ValidateArgs),
}

pub fn dispatch(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        // Ignore the error when a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match cli.command {
        Command::Theory(args) => theory::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Counterexample(args) => counterexample::run(args),
        Command::Sgdfs(args) => sgdfs::run(args),
        Command::Logreg(args) => logreg::run(args),
        Command::Validate(args) => validate::run(args),
    }
}

/// Report a post-parse usage error and exit with code 1.
pub fn usage_bail(msg: &str) -> ! {
    eprintln!("usage error: {msg}");
    std::process::exit(1);
}

/// Spectrum selection shared by several subcommands: either `--mu`/`--L`
/// explicitly, or `--Q` (with `--L` defaulting to 1).
#[derive(Args, Clone, Debug)]
pub struct SpectrumArgs {
    /// Strong-convexity modulus (smallest curvature).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Smoothness constant (largest curvature).
    #[arg(long = "L")]
    pub l: Option<f64>,
    /// Condition number; with `--L` (default 1) this sets `mu = L / Q`.
    #[arg(long = "Q")]
    pub q: Option<f64>,
}

impl SpectrumArgs {
    pub fn resolve(&self) -> SpectrumBounds {
        let bounds = match (self.mu, self.l, self.q) {
            (Some(mu), Some(l), None) => SpectrumBounds::new(mu, l),
            (None, l, Some(q)) => {
                let l = l.unwrap_or(1.0);
                if q < 1.0 {
                    usage_bail("--Q must be at least 1");
                }
                SpectrumBounds::new(l / q, l)
            }
            (Some(_), None, None) | (None, Some(_), None) => {
                usage_bail("--mu and --L must be given together (or use --Q)")
            }
            (None, None, None) => usage_bail("specify the spectrum via --mu/--L or --Q"),
            _ => usage_bail("--Q conflicts with --mu; use --Q [--L] or --mu --L"),
        };
        match bounds {
            Ok(b) => b,
            Err(e) => usage_bail(&e.to_string()),
        }
    }
}

/// Resolve the run seed: `--seed` wins, then `MOMLAB_SEED`, then 42.
pub fn resolve_seed(seed: Option<u64>) -> u64 {
    if let Some(s) = seed {
        return s;
    }
    if let Ok(env) = std::env::var("MOMLAB_SEED") {
        match env.parse() {
            Ok(s) => return s,
            Err(_) => usage_bail("MOMLAB_SEED must be an unsigned integer"),
        }
    }
    42
}

/// Parse `WxH` grid dimensions.
pub fn parse_grid(spec: &str) -> (usize, usize) {
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() != 2 {
        usage_bail("--grid expects WxH, e.g. 32x32");
    }
    let w = parts[0].parse().unwrap_or(0);
    let h = parts[1].parse().unwrap_or(0);
    if w < 2 || h < 1 {
        usage_bail("--grid needs at least 2x1 cells");
    }
    (w, h)
}

/// Parse `lo:hi` ranges.
pub fn parse_range(spec: &str) -> (f64, f64) {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        usage_bail("range expects lo:hi, e.g. 0.01:1.99");
    }
    match (parts[0].parse::<f64>(), parts[1].parse::<f64>()) {
        (Ok(lo), Ok(hi)) if lo < hi => (lo, hi),
        _ => usage_bail("range endpoints must be numbers with lo < hi"),
    }
}

/// Parse a comma-separated list of numbers.
pub fn parse_f64_list(spec: &str) -> Vec<f64> {
    spec.split(',')
        .map(|s| match s.trim().parse::<f64>() {
            Ok(v) => v,
            Err(_) => usage_bail(&format!("not a number in list: {s}")),
        })
        .collect()
}

/// Output formats gated by `--format`.
#[derive(Clone, Debug, PartialEq)]
pub struct Formats(BTreeSet<String>);

impl Formats {
    pub fn parse(spec: &str) -> Self {
        let set: BTreeSet<String> = spec.split(',').map(|s| s.trim().to_string()).collect();
        for f in &set {
            if !matches!(f.as_str(), "csv" | "json" | "pgm") {
                usage_bail(&format!("unknown format: {f} (expected csv, json, pgm)"));
            }
        }
        Formats(set)
    }

    pub fn csv(&self) -> bool {
        self.0.contains("csv")
    }

    pub fn json(&self) -> bool {
        self.0.contains("json")
    }

    pub fn pgm(&self) -> bool {
        self.0.contains("pgm")
    }
}
