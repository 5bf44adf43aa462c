//! `momlab sgdfs`: the finite-sum SGD bound-tightness experiment.

use std::path::PathBuf;

use clap::Args;
use momlab::experiments::{sgd_finite_sum_experiment, SgdFiniteSumConfig};
use serde::{Deserialize, Serialize};

use super::{parse_f64_list, resolve_seed, usage_bail, CmdResult, CommandOutcome, Formats};
use crate::output::{sgdfs_plot_script, OutputDir};

#[derive(Args, Debug)]
pub struct SgdfsArgs {
    /// Condition numbers, comma separated.
    #[arg(long = "Q")]
    pub q: Option<String>,
    /// `fig3` is the default protocol (Q in {16, 32, 64}).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub seeds: u32,
    #[arg(long, default_value_t = 600)]
    pub iters: usize,
    /// Use the full 25000-sample protocol instead of the 2500-sample
    /// desk-scale variant.
    #[arg(long)]
    pub full_scale: bool,
    /// Per-batch minimizer spread (0 gives an interpolating sum).
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "csv,json")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay a previous run from its meta.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
pub struct SgdfsMeta {
    pub command: String,
    pub config: SgdFiniteSumConfig,
}

fn resolve_config(args: &SgdfsArgs) -> SgdFiniteSumConfig {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| usage_bail(&format!("cannot read --config: {e}")));
        let meta: SgdfsMeta = serde_json::from_str(&text)
            .unwrap_or_else(|e| usage_bail(&format!("malformed --config: {e}")));
        if meta.command != "sgdfs" {
            usage_bail("--config file was written by a different subcommand");
        }
        return meta.config;
    }
    if let Some(p) = args.preset.as_deref() {
        if p != "fig3" {
            usage_bail("sgdfs supports --preset fig3");
        }
    }
    let q_values = args
        .q
        .as_deref()
        .map(parse_f64_list)
        .unwrap_or_else(|| vec![16.0, 32.0, 64.0]);
    for &q in &q_values {
        if q < 1.0 {
            usage_bail("condition numbers must be at least 1");
        }
    }
    if args.seeds == 0 || args.iters == 0 {
        usage_bail("--seeds and --iters must be at least 1");
    }
    if let Some(s) = args.spread {
        if !(s >= 0.0) {
            usage_bail("--spread must be nonnegative");
        }
    }
    let seed = resolve_seed(args.seed);
    let mut cfg = if args.full_scale {
        SgdFiniteSumConfig::full_scale(q_values, args.seeds, seed)
    } else {
        SgdFiniteSumConfig::desk_scale(q_values, args.seeds, seed)
    };
    cfg.iters = args.iters;
    if let Some(s) = args.spread {
        cfg.spread = s;
    }
    cfg
}

pub fn run(args: SgdfsArgs) -> CmdResult {
    let formats = Formats::parse(&args.format);
    let cfg = resolve_config(&args);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| usage_bail("sgdfs needs --out DIR"));

    let results = sgd_finite_sum_experiment(&cfg)?;

    let out = OutputDir::create(&out_dir)?;
    out.write_json(
        "meta.json",
        &SgdfsMeta {
            command: "sgdfs".into(),
            config: cfg.clone(),
        },
    )?;
    for r in &results {
        println!(
            "Q = {}: theoretical rate {:.6}, fitted {:?}, sigma* {:.3e}, bound violations {}/{}",
            r.q,
            r.theoretical_rate,
            r.fitted_rate,
            r.sigma_star,
            r.violations,
            r.checks.len()
        );
        if formats.csv() {
            out.write_with(&format!("bounds_q{}.csv", r.q), |w| r.write_csv(w))?;
        }
    }
    if formats.json() {
        out.write_json("summary.json", &results)?;
    }
    out.write_bytes("plots.gp", sgdfs_plot_script(&cfg.q_values).as_bytes())?;
    Ok(CommandOutcome::Success)
}
