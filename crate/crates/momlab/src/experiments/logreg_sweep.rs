//! Accelerated-vs-plain sweep on regularized multinomial logistic
//! regression. The problem is smooth and strongly convex but not
//! quadratic, so curvature bounds are estimated by tracking the Hessian's
//! extreme eigenvalues along a reference training trajectory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiments::fits::fit_linear_rate;
use crate::linalg::{norm2, sym_eigen_default};
use crate::optim::{
    asg_step, peek_y, run, DistanceNorm, GradientSource, OptState, RecordOptions, RunSpec,
};
use crate::problems::{grad_exact, LogRegProblem, Objective};
use crate::rng::fnv1a64;
use crate::theory::OptimizerParams;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogregSweepConfig {
    /// Step-sizes as multiples of `1/L_0`, where `L_0` is the largest
    /// Hessian eigenvalue at the starting point.
    pub alphas_rel: Vec<f64>,
    pub betas: Vec<f64>,
    /// Gaussian gradient-noise scale of the sweep runs.
    pub sigma: f64,
    pub iters: usize,
    pub master_seed: u64,
    /// Evaluate the Hessian every this many reference iterations.
    pub hessian_every: usize,
    /// Length of the deterministic reference run used to estimate the
    /// minimizer and track curvature.
    pub reference_iters: usize,
    /// Hessian tracking stops after this many reference iterations.
    pub track_iters: usize,
}

impl Default for LogregSweepConfig {
    fn default() -> Self {
        Self {
            alphas_rel: vec![0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.3],
            betas: vec![0.0, 0.3, 0.5, 0.7, 0.85, 0.93],
            sigma: 1e-3,
            iters: 1500,
            master_seed: 0,
            hessian_every: 10,
            reference_iters: 20_000,
            track_iters: 2_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogregCell {
    pub alpha: f64,
    pub beta: f64,
    pub fitted_rate: Option<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogregSweepResult {
    pub cells: Vec<LogregCell>,
    /// Smallest Hessian eigenvalue seen along the reference trajectory.
    pub tracked_mu: f64,
    /// Largest Hessian eigenvalue seen along the reference trajectory.
    pub tracked_l: f64,
    pub tracked_q: f64,
    pub x_star_estimate: Vec<f64>,
    pub gradient_norm_at_estimate: f64,
    /// Fastest fitted cell with strictly positive momentum.
    pub best_accelerated: Option<LogregCell>,
    /// Fastest fitted cell with zero momentum.
    pub best_plain: Option<LogregCell>,
}

/// Deterministic reference training run: accelerated steps from zero with
/// parameters derived from the initial Hessian, tracking the extreme
/// Hessian eigenvalues along the way. Returns the minimizer estimate and
/// the tracked `(mu, L)` window.
fn reference_run(
    problem: &LogRegProblem,
    cfg: &LogregSweepConfig,
) -> (Vec<f64>, f64, f64, f64) {
    let d = problem.dim();
    let w0 = vec![0.0; d];
    let h0 = sym_eigen_default(&problem.hessian(&w0)).expect("hessian decomposes");
    let l0 = h0.values[d - 1];
    let mu0 = h0.values[0].max(problem.reg());
    let q0 = (l0 / mu0).max(1.0);
    let params = OptimizerParams::new(1.0 / l0, (q0.sqrt() - 1.0) / (q0.sqrt() + 1.0))
        .expect("reference parameters valid");

    let mut tracked_mu = h0.values[0];
    let mut tracked_l = l0;
    let mut state = OptState::new(w0);
    let mut y = state.x_curr.clone();
    let mut grad_norm = f64::INFINITY;
    for k in 1..=cfg.reference_iters {
        let g = grad_exact(problem, &y);
        grad_norm = norm2(&g.value);
        if grad_norm < 1e-13 {
            break;
        }
        state = asg_step(&state, &g, &params).expect("reference step is well formed");
        y = peek_y(&state, &params);
        if k <= cfg.track_iters && k % cfg.hessian_every == 0 {
            let eig = sym_eigen_default(&problem.hessian(&y)).expect("hessian decomposes");
            tracked_mu = tracked_mu.min(eig.values[0]);
            tracked_l = tracked_l.max(eig.values[d - 1]);
        }
    }
    (state.x_curr, tracked_mu, tracked_l, grad_norm)
}

/// Sweep `(alpha, beta)` cells with noisy gradients, fit per-cell rates
/// against the estimated minimizer, and report the tracked curvature
/// window along with the fastest accelerated and plain cells.
pub fn logreg_sweep(problem: &LogRegProblem, cfg: &LogregSweepConfig) -> LogregSweepResult {
    let (x_star, tracked_mu, tracked_l, grad_norm) = reference_run(problem, cfg);
    let d = problem.dim();
    let h0 = sym_eigen_default(&problem.hessian(&vec![0.0; d])).expect("hessian decomposes");
    let l0 = h0.values[d - 1];

    let mut jobs = Vec::new();
    for &beta in &cfg.betas {
        for &rel in &cfg.alphas_rel {
            jobs.push((rel / l0, beta));
        }
    }
    let cells: Vec<LogregCell> = jobs
        .par_iter()
        .map(|&(alpha, beta)| {
            let params = OptimizerParams::new(alpha, beta).expect("grid parameters valid");
            let spec = RunSpec {
                source: GradientSource::Gaussian {
                    objective: problem,
                    sigma: cfg.sigma,
                },
                params,
                iters: cfg.iters,
                seed: cfg.master_seed
                    ^ fnv1a64(
                        [alpha.to_bits().to_le_bytes(), beta.to_bits().to_le_bytes()]
                            .concat()
                            .as_slice(),
                    ),
                x0: vec![0.0; d],
                reference: x_star.clone(),
                record: RecordOptions {
                    norm: DistanceNorm::L2,
                    ..RecordOptions::default()
                },
            };
            let t = run(&spec).expect("sweep run is well formed");
            if t.diverged_at.is_some() {
                return LogregCell {
                    alpha,
                    beta,
                    fitted_rate: None,
                    diverged: true,
                };
            }
            let n = t.distances.len();
            let tail = &t.distances[n - (n / 4).max(1)..];
            let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
            LogregCell {
                alpha,
                beta,
                fitted_rate: fit_linear_rate(&t, (5.0 * tail_mean).max(1e-12)).ok(),
                diverged: false,
            }
        })
        .collect();

    let best_in = |pred: &dyn Fn(&LogregCell) -> bool| {
        cells
            .iter()
            .filter(|c| pred(c) && c.fitted_rate.is_some())
            .min_by(|a, b| {
                a.fitted_rate
                    .unwrap()
                    .partial_cmp(&b.fitted_rate.unwrap())
                    .unwrap()
            })
            .cloned()
    };
    let best_accelerated = best_in(&|c: &LogregCell| c.beta > 0.0);
    let best_plain = best_in(&|c: &LogregCell| c.beta == 0.0);

    LogregSweepResult {
        cells,
        tracked_mu,
        tracked_l,
        tracked_q: tracked_l / tracked_mu,
        x_star_estimate: x_star,
        gradient_norm_at_estimate: grad_norm,
        best_accelerated,
        best_plain,
    }
}
