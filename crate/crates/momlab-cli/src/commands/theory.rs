//! `momlab theory`: print the closed-form report for one parameter cell.

use clap::Args;
use momlab::theory::{
    divergence_factor, nesterov_defaults, rate_report, sgd_finite_sum_rate, OptimizerParams,
};
use serde::{Deserialize, Serialize};

use super::{resolve_seed, usage_bail, CmdResult, CommandOutcome, SpectrumArgs};
use crate::output::OutputDir;

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub spectrum: SpectrumArgs,

    /// Step-size (requires --beta; exclusive with --nesterov).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Momentum in (-1, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Use the accelerated defaults 1/L and (sqrt(Q)-1)/(sqrt(Q)+1).
    #[arg(long)]
    pub nesterov: bool,

    /// Also report the finite-sum divergence factor for `--n` components.
    #[arg(long)]
    pub divergence_factor: bool,
    /// Number of finite-sum components for --divergence-factor.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,
    /// Write theory.json into this directory.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct TheoryReportFile {
    mu: f64,
    l: f64,
    q: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
    stable: bool,
    spectral_norm_rate: f64,
    variance_coeff: Option<f64>,
    c_epsilon: Option<f64>,
    neighborhood: Option<f64>,
    sgd_rate: Option<f64>,
    divergence_factor: Option<f64>,
    seed: u64,
}

pub fn run(args: TheoryArgs) -> CmdResult {
    let bounds = args.spectrum.resolve();
    let params = if args.nesterov {
        if args.alpha.is_some() || args.beta.is_some() {
            usage_bail("--nesterov conflicts with --alpha/--beta");
        }
        nesterov_defaults(&bounds)
    } else {
        let alpha = args
            .alpha
            .unwrap_or_else(|| usage_bail("need --alpha (or --nesterov)"));
        let beta = args.beta.unwrap_or(0.0);
        match OptimizerParams::new(alpha, beta) {
            Ok(p) => p,
            Err(e) => usage_bail(&e.to_string()),
        }
    };

    let report = rate_report(&bounds, &params);
    let sgd_rate = if params.beta == 0.0 {
        sgd_finite_sum_rate(&bounds, params.alpha).ok()
    } else {
        None
    };
    let factor = if args.divergence_factor {
        let n = args
            .n
            .unwrap_or_else(|| usage_bail("--divergence-factor needs --n"));
        if n < 2 {
            usage_bail("--n must be at least 2");
        }
        Some(divergence_factor(&bounds, n))
    } else {
        None
    };

    println!("spectrum            mu = {}, L = {}, Q = {}", bounds.mu, bounds.l, bounds.q());
    println!("parameters          alpha = {}, beta = {}", params.alpha, params.beta);
    println!("rate rho            {}", report.rho);
    println!("stable              {}", report.stable);
    println!("spectral-norm rate  {}", report.spectral_norm_rate);
    match report.variance_coeff {
        Some(v) => println!("variance coeff      {v}"),
        None => println!("variance coeff      (unstable)"),
    }
    match report.c_epsilon {
        Some(c) => println!("C_eps estimate      {c}"),
        None => println!("C_eps estimate      (unstable)"),
    }
    match report.neighborhood() {
        Some(nb) => println!("neighborhood/sigma  {nb}"),
        None => println!("neighborhood/sigma  (unstable)"),
    }
    if let Some(r) = sgd_rate {
        println!("sgd finite-sum rate {r}");
    }
    if let Some(f) = factor {
        println!("divergence factor   {f} ({})", if f > 1.0 { "divergent regime" } else { "convergent regime" });
    }

    if let Some(dir) = &args.out {
        let out = OutputDir::create(dir)?;
        out.write_json(
            "theory.json",
            &TheoryReportFile {
                mu: bounds.mu,
                l: bounds.l,
                q: bounds.q(),
                alpha: params.alpha,
                beta: params.beta,
                rho: report.rho,
                stable: report.stable,
                spectral_norm_rate: report.spectral_norm_rate,
                variance_coeff: report.variance_coeff,
                c_epsilon: report.c_epsilon,
                neighborhood: report.neighborhood(),
                sgd_rate,
                divergence_factor: factor,
                seed: resolve_seed(args.seed),
            },
        )?;
    }
    Ok(CommandOutcome::Success)
}
