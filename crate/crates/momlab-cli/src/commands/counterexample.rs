//! `momlab counterexample`: the finite-sum divergence example.

use std::path::PathBuf;

use clap::Args;
use momlab::experiments::{divergence_experiment, DivergenceConfig, EXPERIMENT_GUARD_RATIO};
use momlab::problems::counterexample_finite_sum;
use momlab::theory::nesterov_defaults;
use serde::{Deserialize, Serialize};

use super::{resolve_seed, usage_bail, CmdResult, CommandOutcome, Formats};
use crate::output::{counterexample_plot_script, OutputDir};

#[derive(Args, Debug)]
pub struct CounterexampleArgs {
    /// Number of finite-sum components.
    #[arg(long)]
    pub n: Option<usize>,
    /// `fig2` runs the n = 50, 250, 1000 family.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub mu: f64,
    #[arg(long = "L", default_value_t = 100.0)]
    pub l: f64,
    #[arg(long, default_value_t = 20)]
    pub seeds: u32,
    /// Mini-batch size (must stay below n).
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Base iteration budget (runs get at least 3n iterations).
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
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

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleConfig {
    pub n_values: Vec<usize>,
    pub mu: f64,
    pub l: f64,
    pub seeds: u32,
    pub minibatch_size: usize,
    pub base_iters: usize,
    pub seed: u64,
    pub guard_ratio: f64,
}

#[derive(Serialize, Deserialize)]
pub struct CounterexampleMeta {
    pub command: String,
    pub config: CounterexampleConfig,
}

#[derive(Serialize)]
struct NSummary {
    n: usize,
    iters: usize,
    predicted_factor: f64,
    predicted_log_factor: f64,
    diverged: u32,
    converged: u32,
    seeds: u32,
    mean_growth_exponent: f64,
}

fn resolve_config(args: &CounterexampleArgs) -> CounterexampleConfig {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| usage_bail(&format!("cannot read --config: {e}")));
        let meta: CounterexampleMeta = serde_json::from_str(&text)
            .unwrap_or_else(|e| usage_bail(&format!("malformed --config: {e}")));
        if meta.command != "counterexample" {
            usage_bail("--config file was written by a different subcommand");
        }
        return meta.config;
    }
    let n_values = match (args.preset.as_deref(), args.n) {
        (Some("fig2"), None) => vec![50, 250, 1000],
        (Some("fig2"), Some(_)) => usage_bail("--preset fig2 conflicts with --n"),
        (Some(other), _) => usage_bail(&format!("counterexample supports --preset fig2, not {other}")),
        (None, Some(n)) => {
            if n < 3 {
                usage_bail("--n must be at least 3");
            }
            vec![n]
        }
        (None, None) => vec![50],
    };
    if args.m == 0 || n_values.iter().any(|&n| args.m >= n) {
        usage_bail("--m must satisfy 1 <= m < n");
    }
    if !(args.mu > 0.0) || !(args.l >= args.mu) {
        usage_bail("need 0 < --mu <= --L");
    }
    if args.seeds == 0 || args.iters == 0 {
        usage_bail("--seeds and --iters must be at least 1");
    }
    CounterexampleConfig {
        n_values,
        mu: args.mu,
        l: args.l,
        seeds: args.seeds,
        minibatch_size: args.m,
        base_iters: args.iters,
        seed: resolve_seed(args.seed),
        guard_ratio: EXPERIMENT_GUARD_RATIO,
    }
}

pub fn run(args: CounterexampleArgs) -> CmdResult {
    let formats = Formats::parse(&args.format);
    let cfg = resolve_config(&args);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| usage_bail("counterexample needs --out DIR"));

    let mut div_cfg = DivergenceConfig::new(
        cfg.n_values.clone(),
        cfg.mu,
        cfg.l,
        cfg.seeds,
        cfg.seed,
    );
    div_cfg.base_iters = cfg.base_iters;
    div_cfg.guard_ratio = cfg.guard_ratio;
    div_cfg.minibatch_size = cfg.minibatch_size;
    let runs = divergence_experiment(&div_cfg)?;

    let out = OutputDir::create(&out_dir)?;
    out.write_json(
        "meta.json",
        &CounterexampleMeta {
            command: "counterexample".into(),
            config: cfg.clone(),
        },
    )?;

    let mut summaries = Vec::new();
    for run in &runs {
        let summary = NSummary {
            n: run.n,
            iters: run.iters,
            predicted_factor: run.predicted_factor,
            predicted_log_factor: run.predicted_factor.ln(),
            diverged: run.diverged_count,
            converged: run.converged_count,
            seeds: cfg.seeds,
            mean_growth_exponent: run.mean_growth_exponent,
        };
        println!(
            "n = {}: {}/{} seeds hit the divergence guard within {} iterations; mean growth exponent {:.5} vs predicted log-factor {:.5}",
            run.n, run.diverged_count, cfg.seeds, run.iters, run.mean_growth_exponent,
            run.predicted_factor.ln()
        );
        if formats.csv() {
            out.write_with(&format!("traces/trace_n{}.csv", run.n), |w| {
                run.write_trace_csv(w)
            })?;
        }
        if formats.json() {
            let problem = counterexample_finite_sum(run.n, cfg.mu, cfg.l)?;
            let params = nesterov_defaults(&problem.aggregate().bounds());
            out.write_json(
                &format!("traces/trace_n{}.json", run.n),
                &run.trace.to_json(&params, &problem.aggregate().meta.digest()),
            )?;
        }
        summaries.push(summary);
    }
    if formats.json() {
        out.write_json("summary.json", &summaries)?;
    }
    out.write_bytes(
        "plots.gp",
        counterexample_plot_script(&cfg.n_values).as_bytes(),
    )?;
    Ok(CommandOutcome::Success)
}
