//! `momlab sweep`: step-size/momentum heatmap over a quadratic problem.

use std::path::PathBuf;

use clap::Args;
use momlab::experiments::{heatmap_sweep, stability_contour, write_contour_csv, GridSpec, HeatmapConfig};
use momlab::problems::{random_least_squares, worst_case_quadratic, Quadratic};
use momlab::theory::SpectrumBounds;
use serde::{Deserialize, Serialize};

use super::{parse_grid, parse_range, resolve_seed, usage_bail, CmdResult, CommandOutcome, Formats, SpectrumArgs};
use crate::output::{sweep_plot_script, OutputDir};
use crate::pgm;

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub spectrum: SpectrumArgs,

    /// Problem preset: `fig1` (worst-case quadratic, d=100, sigma^2 =
    /// 0.0025, 32x32 grid) or `f1` (random least squares 500x10,
    /// sigma = 0.25).
    #[arg(long)]
    pub preset: Option<String>,

    /// Problem dimension (worst-case quadratic).
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    /// Grid resolution `WxH` (step-sizes x momenta).
    #[arg(long)]
    pub grid: Option<String>,
    /// Step-size range `lo:hi` (log-spaced; default 0.01/L : 1.99/L).
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Momentum range `lo:hi` (linear; default -0.95 : 0.95).
    #[arg(long)]
    pub beta_range: Option<String>,
    /// Gradient-noise scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "csv,json,pgm")]
    pub format: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay a previous run from its meta.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SweepProblem {
    WorstCaseQuadratic { dim: usize },
    RandomLeastSquares { n_samples: usize, n_features: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub problem: SweepProblem,
    pub mu: f64,
    pub l: f64,
    pub grid_alphas: usize,
    pub grid_betas: usize,
    pub alpha_range: Option<(f64, f64)>,
    pub beta_range: Option<(f64, f64)>,
    pub sigma: f64,
    pub iters: usize,
    pub trials: u32,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
pub struct SweepMeta {
    pub command: String,
    pub config: SweepConfig,
}

fn resolve_config(args: &SweepArgs) -> SweepConfig {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| usage_bail(&format!("cannot read --config: {e}")));
        let meta: SweepMeta = serde_json::from_str(&text)
            .unwrap_or_else(|e| usage_bail(&format!("malformed --config: {e}")));
        if meta.command != "sweep" {
            usage_bail("--config file was written by a different subcommand");
        }
        return meta.config;
    }

    let bounds = args.spectrum.resolve();
    let preset = args.preset.as_deref();
    if let Some(p) = preset {
        if !matches!(p, "fig1" | "f1") {
            usage_bail("sweep supports --preset fig1 or f1");
        }
    }
    let (grid_alphas, grid_betas) = args
        .grid
        .as_deref()
        .map(parse_grid)
        .unwrap_or((32, 32));
    let problem = match preset {
        Some("f1") => SweepProblem::RandomLeastSquares {
            n_samples: 500,
            n_features: 10,
        },
        _ => SweepProblem::WorstCaseQuadratic { dim: args.dim },
    };
    let sigma = args.sigma.unwrap_or(match preset {
        Some("f1") => 0.25,
        _ => 0.05, // sigma^2 = 0.0025
    });
    if args.dim < 2 {
        usage_bail("--dim must be at least 2");
    }
    if !(sigma >= 0.0) {
        usage_bail("--sigma must be nonnegative");
    }
    let iters = args.iters.unwrap_or(2000);
    let trials = args.trials.unwrap_or(3);
    if iters == 0 || trials == 0 {
        usage_bail("--iters and --trials must be at least 1");
    }
    if let Some((lo, _)) = args.alpha_range.as_deref().map(parse_range) {
        if lo <= 0.0 {
            usage_bail("--alpha-range must start above 0");
        }
    }
    if let Some((lo, hi)) = args.beta_range.as_deref().map(parse_range) {
        if lo <= -1.0 || hi >= 1.0 {
            usage_bail("--beta-range must stay inside (-1, 1)");
        }
    }
    SweepConfig {
        problem,
        mu: bounds.mu,
        l: bounds.l,
        grid_alphas,
        grid_betas,
        alpha_range: args.alpha_range.as_deref().map(parse_range),
        beta_range: args.beta_range.as_deref().map(parse_range),
        sigma,
        iters,
        trials,
        seed: resolve_seed(args.seed),
    }
}

fn build_problem(cfg: &SweepConfig) -> Result<Quadratic, super::CmdError> {
    Ok(match cfg.problem {
        SweepProblem::WorstCaseQuadratic { dim } => worst_case_quadratic(dim, cfg.mu, cfg.l)?,
        SweepProblem::RandomLeastSquares {
            n_samples,
            n_features,
        } => random_least_squares(cfg.seed, n_samples, n_features, cfg.l / cfg.mu, cfg.mu)?,
    })
}

fn build_grid(cfg: &SweepConfig) -> GridSpec {
    let alphas = match cfg.alpha_range {
        Some((lo, hi)) => {
            let ratio: f64 = hi / lo;
            (0..cfg.grid_alphas)
                .map(|i| lo * ratio.powf(i as f64 / (cfg.grid_alphas - 1) as f64))
                .collect()
        }
        None => GridSpec::log_alphas(cfg.l, cfg.grid_alphas),
    };
    let betas = match cfg.beta_range {
        Some((lo, hi)) => (0..cfg.grid_betas)
            .map(|i| {
                if cfg.grid_betas == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (cfg.grid_betas - 1) as f64
                }
            })
            .collect(),
        None => GridSpec::linear_betas(cfg.grid_betas),
    };
    GridSpec::new(alphas, betas)
}

pub fn run(args: SweepArgs) -> CmdResult {
    let formats = Formats::parse(&args.format);
    let cfg = resolve_config(&args);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| usage_bail("sweep needs --out DIR"));

    let bounds = SpectrumBounds::new(cfg.mu, cfg.l).map_err(|e| e.to_string())?;
    let problem = build_problem(&cfg)?;
    let grid = build_grid(&cfg);
    let heat_cfg = HeatmapConfig::new(bounds, grid, cfg.sigma, cfg.iters, cfg.trials, cfg.seed);
    let sweep = heatmap_sweep(&problem, &heat_cfg);
    let contour = stability_contour(&bounds, &heat_cfg.grid);

    let out = OutputDir::create(&out_dir)?;
    out.write_json(
        "meta.json",
        &SweepMeta {
            command: "sweep".into(),
            config: cfg.clone(),
        },
    )?;
    if formats.csv() {
        out.write_with("grid.csv", |w| sweep.write_csv(w))?;
        out.write_with("contour.csv", |w| write_contour_csv(&contour, w))?;
    }
    if formats.json() {
        out.write_json("grid.json", &sweep)?;
    }
    if formats.pgm() {
        let (w, h) = (sweep.alphas.len(), sweep.betas.len());
        let rate_pixels: Vec<u8> = sweep
            .cells
            .iter()
            .map(|c| pgm::rate_pixel(c.empirical_rate))
            .collect();
        out.write_with("heatmap_rate.pgm", |o| pgm::write_pgm(o, w, h, &rate_pixels))?;
        let max_nb = sweep
            .cells
            .iter()
            .filter_map(|c| c.empirical_neighborhood)
            .fold(0.0_f64, f64::max);
        let var_pixels: Vec<u8> = sweep
            .cells
            .iter()
            .map(|c| pgm::magnitude_pixel(c.empirical_neighborhood, max_nb))
            .collect();
        out.write_with("heatmap_var.pgm", |o| pgm::write_pgm(o, w, h, &var_pixels))?;
    }
    out.write_bytes("plots.gp", sweep_plot_script().as_bytes())?;

    let stable = sweep.cells.iter().filter(|c| c.theory.stable).count();
    let divergent = sweep.cells.iter().filter(|c| c.diverged).count();
    println!(
        "sweep complete: {} cells ({} theoretically stable, {} empirically divergent) -> {}",
        sweep.cells.len(),
        stable,
        divergent,
        out_dir.display()
    );
    Ok(CommandOutcome::Success)
}
