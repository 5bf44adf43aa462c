//! Rate fitting and stationary-neighborhood estimation from recorded
//! trajectories.

use thiserror::Error;

use crate::optim::Trajectory;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("trajectory diverged; no rate to fit")]
    Diverged,
    #[error("pre-plateau segment has {points} points, need at least {needed}")]
    TooFewPoints { points: usize, needed: usize },
    #[error("tail is not stationary: fitted tail slope {slope:.3e} per iteration")]
    NonStationaryTail { slope: f64 },
}

/// Minimum number of decay points required for a meaningful rate fit.
pub const MIN_FIT_POINTS: usize = 20;

fn log_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let mean_log = values.iter().map(|d| d.max(1e-300).ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, d) in values.iter().enumerate() {
        let dk = k as f64 - mean_k;
        num += dk * (d.max(1e-300).ln() - mean_log);
        den += dk * dk;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Fit the per-iteration linear convergence rate of a trajectory as
/// `exp(slope)` of the least-squares line through `log(distance)` vs
/// iteration, restricted to the iterations before the distance first
/// drops below `floor`. Callers typically set
/// `floor = max(5 * neighborhood_estimate, 1e-12)`.
pub fn fit_linear_rate(t: &Trajectory, floor: f64) -> Result<f64, FitError> {
    fit_linear_rate_trimmed(t, floor, 0.0)
}

/// [`fit_linear_rate`] with the leading `burn_in` fraction of the
/// pre-plateau segment discarded. Sweep protocols use this to fit the
/// asymptotic rate: when two decay modes have nearby rates, the early
/// mixture biases the full-segment slope toward the faster mode.
pub fn fit_linear_rate_trimmed(
    t: &Trajectory,
    floor: f64,
    burn_in: f64,
) -> Result<f64, FitError> {
    assert!((0.0..1.0).contains(&burn_in), "burn-in fraction in [0, 1)");
    if t.diverged_at.is_some() {
        return Err(FitError::Diverged);
    }
    let cut = t
        .distances
        .iter()
        .position(|&d| d < floor)
        .unwrap_or(t.distances.len());
    let skip = (cut as f64 * burn_in) as usize;
    if cut - skip < MIN_FIT_POINTS {
        return Err(FitError::TooFewPoints {
            points: cut - skip,
            needed: MIN_FIT_POINTS,
        });
    }
    Ok(log_slope(&t.distances[skip..cut]).exp())
}

/// Tolerance on the tail log-slope below which the tail counts as
/// stationary.
pub const STATIONARY_SLOPE_TOL: f64 = 0.002;

/// Distances below this level count as converged-to-zero; the
/// neighborhood is then reported as exactly 0.
pub const ZERO_TAIL_LEVEL: f64 = 1e-10;

/// Mean distance over the final `tail_fraction` of the trajectory,
/// divided by the noise scale `sigma`. Requires the tail to be
/// stationary (log-slope within [`STATIONARY_SLOPE_TOL`] of zero); a
/// tail that has decayed below [`ZERO_TAIL_LEVEL`] reports 0.
pub fn estimate_neighborhood(
    t: &Trajectory,
    sigma: f64,
    tail_fraction: f64,
) -> Result<f64, FitError> {
    if t.diverged_at.is_some() {
        return Err(FitError::Diverged);
    }
    assert!(
        tail_fraction > 0.0 && tail_fraction <= 1.0,
        "tail fraction must be in (0, 1]"
    );
    let n = t.distances.len();
    let tail_len = ((n as f64 * tail_fraction).ceil() as usize).clamp(2, n);
    let tail = &t.distances[n - tail_len..];
    if tail.iter().all(|&d| d < ZERO_TAIL_LEVEL) {
        return Ok(0.0);
    }
    let slope = log_slope(tail);
    if slope.abs() > STATIONARY_SLOPE_TOL {
        return Err(FitError::NonStationaryTail { slope });
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(mean / sigma)
}
