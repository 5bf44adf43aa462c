//! Momentum-free finite-sum experiment: mini-batch gradient descent on
//! partitioned least squares, with the per-iteration distance bound
//! `rate^k d_0 + sigma*/mu` checked pointwise against seed-averaged
//! trajectories.

use std::io::Write as IoWrite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiments::fits::fit_linear_rate;
use crate::optim::{run, DistanceNorm, GradientSource, RecordOptions, RunSpec, Trajectory};
use crate::problems::{
    partitioned_least_squares_with_spread, FiniteSumProblem, ProblemError,
    PARTITIONED_DEFAULT_SPREAD,
};
use crate::rng::fnv1a64;
use crate::theory::{sgd_finite_sum_rate, sigma_star, OptimizerParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgdFiniteSumConfig {
    pub q_values: Vec<f64>,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_batches: usize,
    pub seeds: u32,
    pub iters: usize,
    pub master_seed: u64,
    /// Spread of per-batch minimizers; zero gives an interpolating sum.
    pub spread: f64,
}

impl SgdFiniteSumConfig {
    /// Desk-scale defaults: 2500 samples in 50 batches of 2-feature data.
    pub fn desk_scale(q_values: Vec<f64>, seeds: u32, master_seed: u64) -> Self {
        Self {
            q_values,
            n_samples: 2500,
            n_features: 2,
            n_batches: 50,
            seeds,
            iters: 600,
            master_seed,
            spread: PARTITIONED_DEFAULT_SPREAD,
        }
    }

    /// The full-size protocol (25000 samples).
    pub fn full_scale(q_values: Vec<f64>, seeds: u32, master_seed: u64) -> Self {
        Self {
            n_samples: 25_000,
            ..Self::desk_scale(q_values, seeds, master_seed)
        }
    }
}

/// One point of the bound comparison.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub k: usize,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgdFiniteSumResult {
    pub q: f64,
    pub theoretical_rate: f64,
    pub sigma_star: f64,
    pub checks: Vec<BoundCheck>,
    pub fitted_rate: Option<f64>,
    /// Iterations at which the seed-averaged distance exceeded the bound.
    pub violations: usize,
    pub final_mean_distance: f64,
}

impl SgdFiniteSumResult {
    /// CSV rows `k,empirical,bound`.
    pub fn write_csv(&self, out: &mut dyn IoWrite) -> std::io::Result<()> {
        writeln!(out, "k,empirical,bound")?;
        for c in &self.checks {
            writeln!(out, "{},{},{}", c.k, c.empirical, c.bound)?;
        }
        Ok(())
    }
}

fn mean_trajectory(trajectories: &[Trajectory]) -> Vec<f64> {
    let len = trajectories
        .iter()
        .map(|t| t.distances.len())
        .min()
        .expect("at least one trajectory");
    (0..len)
        .map(|k| {
            trajectories.iter().map(|t| t.distances[k]).sum::<f64>() / trajectories.len() as f64
        })
        .collect()
}

/// Run the experiment for one problem instance.
pub fn sgd_finite_sum_single(
    problem: &FiniteSumProblem,
    q: f64,
    seeds: u32,
    iters: usize,
    master_seed: u64,
) -> SgdFiniteSumResult {
    let bounds = problem.aggregate().bounds();
    let alpha = 2.0 / (bounds.mu + bounds.l);
    let rate = sgd_finite_sum_rate(&bounds, alpha).expect("balanced step is admissible");
    let params = OptimizerParams::new(alpha, 0.0).expect("valid parameters");
    let sigma = sigma_star(problem);

    let d = problem.dim();
    let direction = 1.0 / (d as f64).sqrt();
    let x0: Vec<f64> = problem
        .aggregate()
        .x_star()
        .iter()
        .map(|s| s + direction)
        .collect();
    let d0 = 1.0;

    let trajectories: Vec<Trajectory> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let spec = RunSpec {
                source: GradientSource::Minibatch { problem },
                params,
                iters,
                seed: master_seed ^ fnv1a64(format!("sgdfs:{q}:{s}").as_bytes()),
                x0: x0.clone(),
                reference: problem.aggregate().x_star().to_vec(),
                record: RecordOptions {
                    norm: DistanceNorm::L2,
                    ..RecordOptions::default()
                },
            };
            run(&spec).expect("finite-sum run is well formed")
        })
        .collect();

    let mean = mean_trajectory(&trajectories);
    let floor_term = sigma / bounds.mu;
    let checks: Vec<BoundCheck> = mean
        .iter()
        .enumerate()
        .map(|(k, &empirical)| BoundCheck {
            k,
            empirical,
            bound: rate.powi(k as i32) * d0 + floor_term,
        })
        .collect();
    let violations = checks.iter().filter(|c| c.empirical > c.bound).count();

    let mean_traj = Trajectory {
        distances: mean.clone(),
        sampled_batches: None,
        axis_trace: None,
        coords: None,
        state_norms: None,
        diverged_at: None,
        seed: master_seed,
        grad_evals: 0,
        norm: DistanceNorm::L2,
    };
    let tail = &mean[mean.len() - (mean.len() / 4).max(1)..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let fitted_rate = fit_linear_rate(&mean_traj, (5.0 * tail_mean).max(1e-12)).ok();

    SgdFiniteSumResult {
        q,
        theoretical_rate: rate,
        sigma_star: sigma,
        checks,
        fitted_rate,
        violations,
        final_mean_distance: *mean.last().expect("nonempty"),
    }
}

/// Full experiment over the configured condition numbers.
pub fn sgd_finite_sum_experiment(
    cfg: &SgdFiniteSumConfig,
) -> Result<Vec<SgdFiniteSumResult>, ProblemError> {
    cfg.q_values
        .iter()
        .map(|&q| {
            let problem = partitioned_least_squares_with_spread(
                cfg.master_seed ^ fnv1a64(format!("sgdfs-problem:{q}").as_bytes()),
                cfg.n_samples,
                cfg.n_features,
                cfg.n_batches,
                q,
                cfg.spread,
            )?;
            Ok(sgd_finite_sum_single(
                &problem,
                q,
                cfg.seeds,
                cfg.iters,
                cfg.master_seed,
            ))
        })
        .collect()
}
