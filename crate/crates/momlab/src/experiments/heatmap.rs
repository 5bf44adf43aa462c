//! Parameter-sweep heatmaps: per-cell theory (rate, stability, variance
//! neighborhood) next to empirical measurements from independent noisy
//! runs, plus the stability contour on the sweep grid.

use std::io::Write as IoWrite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiments::fits::{estimate_neighborhood, fit_linear_rate_trimmed};
use crate::optim::{run, DistanceNorm, GradientSource, RecordOptions, RunSpec};
use crate::problems::Quadratic;
use crate::rng::fnv1a64;
use crate::theory::{rate_report, OptimizerParams, RateReport, SpectrumBounds};

/// Rectangular sweep grid over step-sizes and momenta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl GridSpec {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Self {
        assert!(!alphas.is_empty() && !betas.is_empty(), "grid must be nonempty");
        Self { alphas, betas }
    }

    /// Log-spaced step-sizes spanning `[0.01/L, 1.99/L]`.
    pub fn log_alphas(l: f64, count: usize) -> Vec<f64> {
        assert!(count >= 2);
        let lo = 0.01 / l;
        let hi = 1.99 / l;
        let ratio = hi / lo;
        (0..count)
            .map(|i| lo * ratio.powf(i as f64 / (count - 1) as f64))
            .collect()
    }

    /// Linearly spaced momenta spanning `[-0.95, 0.95]`.
    pub fn linear_betas(count: usize) -> Vec<f64> {
        assert!(count >= 2);
        (0..count)
            .map(|i| -0.95 + 1.9 * i as f64 / (count - 1) as f64)
            .collect()
    }

    /// The default sweep resolution: `count x count` over the standard
    /// ranges.
    pub fn default_for(bounds: &SpectrumBounds, count: usize) -> Self {
        Self::new(Self::log_alphas(bounds.l, count), Self::linear_betas(count))
    }
}

/// One sweep pixel: theory plus trial-averaged empirical measurements.
/// A cell marked diverged carries no empirical fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub beta: f64,
    pub theory: RateReport,
    pub empirical_rate: Option<f64>,
    pub empirical_neighborhood: Option<f64>,
    pub diverged: bool,
    /// How many of the trials hit the divergence guard.
    pub diverged_trials: u32,
    pub trials: u32,
}

/// Completed sweep: cells stored row-major with the momentum index outer
/// and the step-size index inner.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub cells: Vec<CellResult>,
    pub bounds: SpectrumBounds,
    pub sigma: f64,
    pub iters: usize,
    pub trials: u32,
    pub seed: u64,
}

impl SweepGrid {
    pub fn cell(&self, alpha_idx: usize, beta_idx: usize) -> &CellResult {
        &self.cells[beta_idx * self.alphas.len() + alpha_idx]
    }

    /// CSV rows `alpha,beta,theory_rho,theory_R,theory_neighborhood,emp_rate,emp_neighborhood,diverged`.
    pub fn write_csv(&self, out: &mut dyn IoWrite) -> std::io::Result<()> {
        writeln!(
            out,
            "alpha,beta,theory_rho,theory_R,theory_neighborhood,emp_rate,emp_neighborhood,diverged"
        )?;
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for cell in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                cell.alpha,
                cell.beta,
                cell.theory.rho,
                cell.theory.spectral_norm_rate,
                fmt_opt(cell.theory.neighborhood()),
                fmt_opt(cell.empirical_rate),
                fmt_opt(cell.empirical_neighborhood),
                cell.diverged
            )?;
        }
        Ok(())
    }
}

/// Fraction of the trajectory used for neighborhood estimation.
pub const TAIL_FRACTION: f64 = 0.25;

/// Leading fraction of the decay segment excluded from the rate fit: the
/// transient mixes decay modes and biases the slope toward the fastest
/// one, while the tail of the segment is governed by the worst-case rate
/// that the theory predicts.
pub const FIT_BURN_IN: f64 = 0.25;

/// Starting distance of every sweep run. Large enough that even the most
/// contractive stable cell keeps twenty post-burn-in decay points above
/// its noise plateau, which the rate fit requires.
pub const SWEEP_INITIAL_DISTANCE: f64 = 1e20;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatmapConfig {
    pub bounds: SpectrumBounds,
    pub grid: GridSpec,
    pub sigma: f64,
    pub iters: usize,
    pub trials: u32,
    pub seed: u64,
    pub initial_distance: f64,
}

impl HeatmapConfig {
    pub fn new(
        bounds: SpectrumBounds,
        grid: GridSpec,
        sigma: f64,
        iters: usize,
        trials: u32,
        seed: u64,
    ) -> Self {
        Self {
            bounds,
            grid,
            sigma,
            iters,
            trials,
            seed,
            initial_distance: SWEEP_INITIAL_DISTANCE,
        }
    }
}

/// Stream id of a sweep run, derived from the cell parameters rather than
/// grid indices so that the same `(alpha, beta, trial)` reproduces the
/// same run regardless of grid shape.
fn cell_stream(alpha: f64, beta: f64, trial: u32) -> u64 {
    let mut bytes = Vec::with_capacity(20);
    bytes.extend_from_slice(&alpha.to_bits().to_le_bytes());
    bytes.extend_from_slice(&beta.to_bits().to_le_bytes());
    bytes.extend_from_slice(&trial.to_le_bytes());
    fnv1a64(&bytes)
}

fn measure_cell(problem: &Quadratic, cfg: &HeatmapConfig, alpha: f64, beta: f64) -> CellResult {
    let params = OptimizerParams::new(alpha, beta).expect("grid cell parameters are valid");
    let theory = rate_report(&cfg.bounds, &params);

    let d = problem.dim();
    let direction = 1.0 / (d as f64).sqrt();
    let x0: Vec<f64> = problem
        .x_star()
        .iter()
        .map(|s| s + cfg.initial_distance * direction)
        .collect();

    // A stationary-tail reading is only meaningful when the decay from
    // the starting distance down to the predicted plateau fits inside the
    // pre-tail part of the run; a near-unit rate decays slowly enough to
    // masquerade as a plateau under any finite-window slope test.
    let neighborhood_reachable = theory.stable && {
        let plateau = theory
            .neighborhood()
            .map(|nb| (nb * cfg.sigma).max(1e-12))
            .unwrap_or(1e-12);
        let d0_inf = cfg.initial_distance / (d as f64).sqrt();
        let decay_per_iter = -theory.rho.ln();
        let needed = (d0_inf.ln() - plateau.ln()) / decay_per_iter;
        needed.is_finite() && needed <= cfg.iters as f64 * (1.0 - TAIL_FRACTION)
    };

    let mut diverged_trials = 0u32;
    let mut rates = Vec::new();
    let mut neighborhoods = Vec::new();
    for trial in 0..cfg.trials {
        let spec = RunSpec {
            source: GradientSource::Gaussian {
                objective: problem,
                sigma: cfg.sigma,
            },
            params,
            iters: cfg.iters,
            seed: cfg.seed ^ cell_stream(alpha, beta, trial),
            x0: x0.clone(),
            reference: problem.x_star().to_vec(),
            record: RecordOptions {
                norm: DistanceNorm::Linf,
                ..RecordOptions::default()
            },
        };
        let trajectory = run(&spec).expect("sweep run cannot fail on a valid quadratic");
        if trajectory.diverged_at.is_some() {
            diverged_trials += 1;
            continue;
        }
        let n = trajectory.distances.len();
        let tail = &trajectory.distances[n - (n / 4).max(1)..];
        let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let floor = (5.0 * tail_mean).max(1e-12);
        if let Ok(rate) = fit_linear_rate_trimmed(&trajectory, floor, FIT_BURN_IN) {
            rates.push(rate);
        }
        if neighborhood_reachable {
            if let Ok(nb) = estimate_neighborhood(&trajectory, cfg.sigma, TAIL_FRACTION) {
                neighborhoods.push(nb);
            }
        }
    }

    let diverged = diverged_trials * 2 > cfg.trials;
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    CellResult {
        alpha,
        beta,
        theory,
        empirical_rate: if diverged { None } else { mean(&rates) },
        empirical_neighborhood: if diverged { None } else { mean(&neighborhoods) },
        diverged,
        diverged_trials,
        trials: cfg.trials,
    }
}

/// Run the full sweep: every cell gets its theory report and
/// trial-averaged empirical rate and neighborhood (or a divergence flag).
/// Cells are independent and evaluated in parallel; per-cell random
/// streams derive from the cell parameters, so results do not depend on
/// scheduling or grid shape.
pub fn heatmap_sweep(problem: &Quadratic, cfg: &HeatmapConfig) -> SweepGrid {
    let mut jobs = Vec::with_capacity(cfg.grid.alphas.len() * cfg.grid.betas.len());
    for &beta in &cfg.grid.betas {
        for &alpha in &cfg.grid.alphas {
            jobs.push((alpha, beta));
        }
    }
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(alpha, beta)| measure_cell(problem, cfg, alpha, beta))
        .collect();
    SweepGrid {
        alphas: cfg.grid.alphas.clone(),
        betas: cfg.grid.betas.clone(),
        cells,
        bounds: cfg.bounds,
        sigma: cfg.sigma,
        iters: cfg.iters,
        trials: cfg.trials,
        seed: cfg.seed,
    }
}

/// Points where the theoretical stability boundary (`rho = 1`) crosses
/// grid edges, found by linear interpolation along adjacent node pairs.
pub fn stability_contour(bounds: &SpectrumBounds, grid: &GridSpec) -> Vec<(f64, f64)> {
    let rho_at = |alpha: f64, beta: f64| {
        let p = OptimizerParams::new(alpha, beta).expect("grid parameters valid");
        crate::theory::rho(bounds, &p)
    };
    let mut points = Vec::new();
    let levels: Vec<Vec<f64>> = grid
        .betas
        .iter()
        .map(|&b| grid.alphas.iter().map(|&a| rho_at(a, b)).collect())
        .collect();
    for (j, &beta) in grid.betas.iter().enumerate() {
        for (i, &alpha) in grid.alphas.iter().enumerate() {
            let here = levels[j][i];
            // Edge toward the next step-size.
            if i + 1 < grid.alphas.len() {
                let there = levels[j][i + 1];
                if (here - 1.0) * (there - 1.0) < 0.0 {
                    let t = (1.0 - here) / (there - here);
                    points.push((alpha + t * (grid.alphas[i + 1] - alpha), beta));
                }
            }
            // Edge toward the next momentum.
            if j + 1 < grid.betas.len() {
                let there = levels[j + 1][i];
                if (here - 1.0) * (there - 1.0) < 0.0 {
                    let t = (1.0 - here) / (there - here);
                    points.push((alpha, beta + t * (grid.betas[j + 1] - beta)));
                }
            }
        }
    }
    points
}

/// Write the contour points as `alpha,beta` CSV rows.
pub fn write_contour_csv(points: &[(f64, f64)], out: &mut dyn IoWrite) -> std::io::Result<()> {
    writeln!(out, "alpha,beta")?;
    for (a, b) in points {
        writeln!(out, "{a},{b}")?;
    }
    Ok(())
}
