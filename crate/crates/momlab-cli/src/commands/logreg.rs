//! `momlab logreg`: accelerated-vs-plain sweep on regularized multinomial
//! logistic regression with tracked curvature estimates.

use std::io::Write as IoWrite;
use std::path::PathBuf;

use clap::Args;
use momlab::experiments::{logreg_sweep, LogregSweepConfig};
use momlab::problems::logreg_problem;
use serde::{Deserialize, Serialize};

use super::{resolve_seed, usage_bail, CmdResult, CommandOutcome, Formats};
use crate::output::{logreg_plot_script, OutputDir};

#[derive(Args, Debug)]
pub struct LogregArgs {
    /// `f2` is the default protocol (5 classes, 100 samples, 10 features,
    /// 5 informative).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 21)]
    pub problem_seed: u64,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 5)]
    pub informative: usize,
    /// Cluster separation (tunes the condition number together with
    /// --reg; the defaults track Q near 45).
    #[arg(long, default_value_t = 1.5)]
    pub cluster_sep: f64,
    /// Ridge coefficient.
    #[arg(long, default_value_t = 0.01)]
    pub reg: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1500)]
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
pub struct LogregConfig {
    pub problem_seed: u64,
    pub classes: usize,
    pub samples: usize,
    pub features: usize,
    pub informative: usize,
    pub cluster_sep: f64,
    pub reg: f64,
    pub sigma: f64,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
pub struct LogregMeta {
    pub command: String,
    pub config: LogregConfig,
}

#[derive(Serialize)]
struct Estimates {
    tracked_mu: f64,
    tracked_l: f64,
    tracked_q: f64,
    gradient_norm_at_estimate: f64,
    best_accelerated_rate: Option<f64>,
    best_plain_rate: Option<f64>,
}

fn resolve_config(args: &LogregArgs) -> LogregConfig {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| usage_bail(&format!("cannot read --config: {e}")));
        let meta: LogregMeta = serde_json::from_str(&text)
            .unwrap_or_else(|e| usage_bail(&format!("malformed --config: {e}")));
        if meta.command != "logreg" {
            usage_bail("--config file was written by a different subcommand");
        }
        return meta.config;
    }
    if let Some(p) = args.preset.as_deref() {
        if p != "f2" {
            usage_bail("logreg supports --preset f2");
        }
    }
    LogregConfig {
        problem_seed: args.problem_seed,
        classes: args.classes,
        samples: args.samples,
        features: args.features,
        informative: args.informative,
        cluster_sep: args.cluster_sep,
        reg: args.reg,
        sigma: args.sigma,
        iters: args.iters,
        seed: resolve_seed(args.seed),
    }
}

pub fn run(args: LogregArgs) -> CmdResult {
    let formats = Formats::parse(&args.format);
    let cfg = resolve_config(&args);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| usage_bail("logreg needs --out DIR"));

    let problem = logreg_problem(
        cfg.problem_seed,
        cfg.classes,
        cfg.samples,
        cfg.features,
        cfg.informative,
        cfg.cluster_sep,
        cfg.reg,
    )?;
    let sweep_cfg = LogregSweepConfig {
        sigma: cfg.sigma,
        iters: cfg.iters,
        master_seed: cfg.seed,
        ..LogregSweepConfig::default()
    };
    let result = logreg_sweep(&problem, &sweep_cfg);

    let out = OutputDir::create(&out_dir)?;
    out.write_json(
        "meta.json",
        &LogregMeta {
            command: "logreg".into(),
            config: cfg.clone(),
        },
    )?;
    println!(
        "tracked curvature window: mu {:.6}, L {:.6}, Q {:.2}",
        result.tracked_mu, result.tracked_l, result.tracked_q
    );
    match (&result.best_accelerated, &result.best_plain) {
        (Some(acc), Some(plain)) => println!(
            "best accelerated cell: rate {:.4} (alpha {:.4}, beta {:.2}); best plain cell: rate {:.4} (alpha {:.4})",
            acc.fitted_rate.unwrap(),
            acc.alpha,
            acc.beta,
            plain.fitted_rate.unwrap(),
            plain.alpha
        ),
        _ => println!("no fitted cells (all diverged or too noisy)"),
    }

    if formats.csv() {
        out.write_with("grid.csv", |w: &mut dyn IoWrite| {
            writeln!(w, "alpha,beta,fitted_rate,diverged")?;
            for c in &result.cells {
                writeln!(
                    w,
                    "{},{},{},{}",
                    c.alpha,
                    c.beta,
                    c.fitted_rate.map(|r| r.to_string()).unwrap_or_default(),
                    c.diverged
                )?;
            }
            Ok(())
        })?;
    }
    if formats.json() {
        out.write_json(
            "estimates.json",
            &Estimates {
                tracked_mu: result.tracked_mu,
                tracked_l: result.tracked_l,
                tracked_q: result.tracked_q,
                gradient_norm_at_estimate: result.gradient_norm_at_estimate,
                best_accelerated_rate: result.best_accelerated.as_ref().and_then(|c| c.fitted_rate),
                best_plain_rate: result.best_plain.as_ref().and_then(|c| c.fitted_rate),
            },
        )?;
    }
    out.write_bytes("plots.gp", logreg_plot_script().as_bytes())?;
    Ok(CommandOutcome::Success)
}
