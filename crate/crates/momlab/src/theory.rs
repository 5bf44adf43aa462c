//! Closed-form rate functions, stability regions, variance-neighborhood
//! coefficients, and the finite-sum counterexample algebra.
//!
//! Everything here is a pure function of the step-size `alpha`, momentum
//! `beta`, and a curvature interval `[mu, L]`. The 2x2 reduction in
//! [`crate::linalg`] provides the independent numerical route used by the
//! test suite to cross-check every formula.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat2;
use crate::problems::{grad_exact, FiniteSumProblem};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parameters are outside the stable region (rho = {rho})")]
    Unstable { rho: f64 },
    #[error("step-size {alpha} is outside the admissible region (need 0 < alpha < 2/L = {limit})")]
    OutOfRegion { alpha: f64, limit: f64 },
}

/// Constant step-size and momentum of the accelerated iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub alpha: f64,
    pub beta: f64,
}

impl OptimizerParams {
    /// Requires `alpha > 0` and `|beta| < 1`; negative momentum is allowed.
    pub fn new(alpha: f64, beta: f64) -> Result<Self, TheoryError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(TheoryError::InvalidParameter(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if !(beta.abs() < 1.0) {
            return Err(TheoryError::InvalidParameter(format!(
                "momentum must satisfy |beta| < 1, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Curvature interval `0 < mu <= L` with condition number `Q = L / mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBounds {
    pub mu: f64,
    pub l: f64,
}

impl SpectrumBounds {
    pub fn new(mu: f64, l: f64) -> Result<Self, TheoryError> {
        if !(mu > 0.0) || !(l >= mu) || !l.is_finite() {
            return Err(TheoryError::InvalidParameter(format!(
                "need 0 < mu <= L, got mu = {mu}, L = {l}"
            )));
        }
        Ok(Self { mu, l })
    }

    pub fn q(&self) -> f64 {
        self.l / self.mu
    }
}

/// One (alpha, beta, mu, L) cell's theoretical summary.
///
/// Out-of-region parameters (`rho >= 1`) carry `None` in the variance
/// fields instead of infinities so serialized grids stay portable.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateReport {
    /// Spectral-radius convergence rate bound.
    pub rho: f64,
    /// `rho < 1`.
    pub stable: bool,
    /// Spectral-norm rate `R(alpha, beta)` (finite-sum contraction bound).
    pub spectral_norm_rate: f64,
    /// Coefficient multiplying `sigma^2` in the squared-distance
    /// neighborhood; `None` when unstable.
    pub variance_coeff: Option<f64>,
    /// Estimated transient constant; `None` when unstable.
    pub c_epsilon: Option<f64>,
}

impl RateReport {
    /// Predicted stationary `E||y - x*|| / sigma` (any norm), the square
    /// root of `c_epsilon * variance_coeff`.
    pub fn neighborhood(&self) -> Option<f64> {
        match (self.c_epsilon, self.variance_coeff) {
            (Some(c), Some(v)) => Some((c * v).sqrt()),
            _ => None,
        }
    }
}

/// Lengths of the consecutive slow-curvature runs between visits to the
/// high-curvature component in the counterexample product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentPattern {
    segments: Vec<usize>,
}

impl SegmentPattern {
    /// Every run length must be at least 1 (the high-curvature component is
    /// never sampled twice in a row) and there must be at least one run.
    pub fn new(segments: Vec<usize>) -> Result<Self, TheoryError> {
        if segments.is_empty() {
            return Err(TheoryError::InvalidParameter(
                "pattern needs at least one segment".into(),
            ));
        }
        if segments.iter().any(|&k| k == 0) {
            return Err(TheoryError::InvalidParameter(
                "every segment length must be >= 1".into(),
            ));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    /// Number of slow runs `s`.
    pub fn s(&self) -> usize {
        self.segments.len()
    }

    /// Total product length `k = k_1 + .. + k_s + s`.
    pub fn k_total(&self) -> usize {
        self.segments.iter().sum::<usize>() + self.segments.len()
    }
}

// ---------------------------------------------------------------------------
// Spectral-radius rate
// ---------------------------------------------------------------------------

/// Relative threshold below which the damping discriminant is treated as
/// exactly critical. Keeps the rate accurate to machine precision at the
/// critically damped parameter choices, where the exact discriminant is an
/// algebraic zero that floating-point evaluation misses by ~1e-16.
const CRITICAL_EPS: f64 = 1e-12;

/// Damping discriminant `(1+b)^2 (1-a l)^2 - 4 b (1-a l)` of the 2x2 block
/// at curvature `l`.
pub fn damping_discriminant(lambda: f64, p: &OptimizerParams) -> f64 {
    let t = 1.0 - p.alpha * lambda;
    let one_plus_beta = 1.0 + p.beta;
    one_plus_beta * one_plus_beta * t * t - 4.0 * p.beta * t
}

fn delta_scale(lambda: f64, p: &OptimizerParams) -> f64 {
    let t = 1.0 - p.alpha * lambda;
    let one_plus_beta = 1.0 + p.beta;
    one_plus_beta * one_plus_beta * t * t + (4.0 * p.beta * t).abs()
}

/// Modulus of the largest eigenvalue of the 2x2 block at curvature
/// `lambda`: overdamped branch `|(1+b)(1-a l)|/2 + sqrt(Delta)/2` when the
/// discriminant is nonnegative, underdamped branch `sqrt(b (1-a l))`
/// otherwise.
pub fn rho_lambda(lambda: f64, p: &OptimizerParams) -> f64 {
    let t = 1.0 - p.alpha * lambda;
    let disc = damping_discriminant(lambda, p);
    let scale = delta_scale(lambda, p);
    let base = 0.5 * ((1.0 + p.beta) * t).abs();
    if disc > CRITICAL_EPS * scale {
        base + 0.5 * disc.sqrt()
    } else if disc < -CRITICAL_EPS * scale {
        let bt = p.beta * t;
        // A negative discriminant forces beta * (1 - alpha*lambda) > 0.
        assert!(
            bt > 0.0,
            "underdamped branch with beta*(1-alpha*lambda) = {bt} <= 0"
        );
        bt.sqrt()
    } else {
        // Critically damped: both branches coincide at |(1+b)t| / 2.
        base
    }
}

/// Worst-case rate over the curvature interval: the per-curvature rate is
/// quasi-convex in the curvature, so the maximum sits at an endpoint.
pub fn rho(b: &SpectrumBounds, p: &OptimizerParams) -> f64 {
    rho_lambda(b.mu, p).max(rho_lambda(b.l, p))
}

/// Coefficient multiplying `sigma^2` in the stationary squared-distance
/// neighborhood: `alpha^2 ((1+beta)^2 + 1) / (1 - rho^2)`.
pub fn variance_coeff(b: &SpectrumBounds, p: &OptimizerParams) -> Result<f64, TheoryError> {
    let r = rho(b, p);
    if r >= 1.0 {
        return Err(TheoryError::Unstable { rho: r });
    }
    let one_plus_beta = 1.0 + p.beta;
    Ok(p.alpha * p.alpha * (one_plus_beta * one_plus_beta + 1.0) / (1.0 - r * r))
}

/// Transient-constant estimate `1 + (1 - rho^2)(||A||^2 - rho^2)`, where
/// `||A||` is the spectral norm of the state-transition matrix and `rho`
/// its spectral radius.
pub fn c_epsilon_estimate(norm_a: f64, rho: f64) -> f64 {
    1.0 + (1.0 - rho * rho) * (norm_a * norm_a - rho * rho)
}

/// The classic accelerated parameter choice: step-size `1/L` and momentum
/// `(sqrt(Q)-1)/(sqrt(Q)+1)`.
pub fn nesterov_defaults(b: &SpectrumBounds) -> OptimizerParams {
    let sq = b.q().sqrt();
    OptimizerParams {
        alpha: 1.0 / b.l,
        beta: (sq - 1.0) / (sq + 1.0),
    }
}

// ---------------------------------------------------------------------------
// Spectral-norm rate
// ---------------------------------------------------------------------------

/// Spectral norm of the 2x2 block at curvature `lambda`, in closed form:
/// `sqrt((C + sqrt(C^2 - 4 b^2 (1-a l)^2)) / 2)` with
/// `C = (1 - a(1+b)l)^2 + a^2 l^2 + b^2 (b^2 + 1)`.
pub fn norm_rate_at(lambda: f64, p: &OptimizerParams) -> f64 {
    let al = p.alpha * lambda;
    let u = 1.0 - (1.0 + p.beta) * al;
    let c = u * u + al * al + p.beta * p.beta * (p.beta * p.beta + 1.0);
    let t = 1.0 - al;
    let mut disc = c * c - 4.0 * p.beta * p.beta * t * t;
    // C >= 2|b(1-a l)| by AM-GM, so the discriminant is nonnegative up to
    // rounding; clamp the ulp-level negative residue.
    debug_assert!(disc > -1e-10 * c * c, "negative norm discriminant {disc}");
    if disc < 0.0 {
        disc = 0.0;
    }
    (0.5 * (c + disc.sqrt())).sqrt()
}

/// Number of interior samples used when maximizing the spectral-norm rate
/// over the curvature interval. Quasi-convexity of the norm in the
/// curvature is not established, so the maximum is taken over a log-spaced
/// grid plus both endpoints.
pub const SPECTRAL_NORM_GRID: usize = 1024;

/// Worst-case spectral-norm rate over `[mu, L]`.
pub fn norm_rate(b: &SpectrumBounds, p: &OptimizerParams) -> f64 {
    if b.l == b.mu {
        return norm_rate_at(b.mu, p);
    }
    let ratio = b.l / b.mu;
    let mut best = norm_rate_at(b.mu, p).max(norm_rate_at(b.l, p));
    for i in 1..SPECTRAL_NORM_GRID - 1 {
        let frac = i as f64 / (SPECTRAL_NORM_GRID - 1) as f64;
        best = best.max(norm_rate_at(b.mu * ratio.powf(frac), p));
    }
    best
}

/// Momentum-free finite-sum contraction factor `max(|1-a mu|, |1-a L|)`,
/// valid for `0 < alpha < 2/L`.
pub fn sgd_finite_sum_rate(b: &SpectrumBounds, alpha: f64) -> Result<f64, TheoryError> {
    let limit = 2.0 / b.l;
    if !(alpha > 0.0) || alpha >= limit {
        return Err(TheoryError::OutOfRegion { alpha, limit });
    }
    Ok((1.0 - alpha * b.mu).abs().max((1.0 - alpha * b.l).abs()))
}

/// Full theoretical summary of one parameter cell.
pub fn rate_report(b: &SpectrumBounds, p: &OptimizerParams) -> RateReport {
    let r = rho(b, p);
    let norm_rate = norm_rate(b, p);
    let stable = r < 1.0;
    let (variance, c_eps) = if stable {
        let v = variance_coeff(b, p).expect("stable cell has a variance coefficient");
        (Some(v), Some(c_epsilon_estimate(norm_rate, r)))
    } else {
        (None, None)
    };
    RateReport {
        rho: r,
        stable,
        spectral_norm_rate: norm_rate,
        variance_coeff: variance,
        c_epsilon: c_eps,
    }
}

// ---------------------------------------------------------------------------
// Counterexample algebra
// ---------------------------------------------------------------------------

/// The 2x2 block `[[1 - a(1+b)l, b^2], [-a l, b]]` at curvature `lambda`.
pub fn curvature_block(lambda: f64, p: &OptimizerParams) -> Mat2 {
    Mat2::asg_block(lambda, p.alpha, p.beta)
}

/// Closed-form `k`-th power of the slow block at the accelerated parameter
/// choice, via its Jordan form. With `r = (sqrt(Q)-1)/sqrt(Q)`:
///
/// ```text
/// [ (1 + k/(sqrt(Q)+1)) r^k      k ((sqrt(Q)-1)/(sqrt(Q)+1))^2 r^(k-1) ]
/// [ -(k/Q) r^(k-1)               (1 - k/(sqrt(Q)+1)) r^k               ]
/// ```
///
/// `r^(k-1)` follows the `0^0 = 1` convention (as `powi` does), so `k = 1`
/// reproduces the block itself even when `Q = 1` makes `r = 0`.
pub fn slow_block_power(b: &SpectrumBounds, k: usize) -> Mat2 {
    assert!(k >= 1, "power must be >= 1");
    let q = b.q();
    let sq = q.sqrt();
    let r = (sq - 1.0) / sq;
    let beta = (sq - 1.0) / (sq + 1.0);
    let kf = k as f64;
    let r_k = r.powi(k as i32);
    let r_km1 = r.powi(k as i32 - 1);
    Mat2::new(
        (1.0 + kf / (sq + 1.0)) * r_k,
        kf * beta * beta * r_km1,
        -(kf / q) * r_km1,
        (1.0 - kf / (sq + 1.0)) * r_k,
    )
}

/// Spectral radius of the alternating product
/// `B(L) B(mu)^{k_1} B(L) B(mu)^{k_2} .. B(L) B(mu)^{k_s}` at the
/// accelerated parameter choice: `r^k * k_1 k_2 .. k_s` with
/// `r = (sqrt(Q)-1)/sqrt(Q)` and `k` the total product length.
pub fn alternating_product_radius(b: &SpectrumBounds, pattern: &SegmentPattern) -> f64 {
    let sq = b.q().sqrt();
    let r = (sq - 1.0) / sq;
    let product: f64 = pattern.segments().iter().map(|&k| k as f64).product();
    r.powi(pattern.k_total() as i32) * product
}

/// Expected per-iteration growth factor of the counterexample with `n`
/// components: `r * (n-1)^(1/n)`. Values above 1 predict divergence.
pub fn divergence_factor(b: &SpectrumBounds, n: usize) -> f64 {
    assert!(n >= 2, "divergence factor needs n >= 2");
    let sq = b.q().sqrt();
    let r = (sq - 1.0) / sq;
    r * ((n - 1) as f64).powf(1.0 / n as f64)
}

/// Average component-gradient norm at the shared minimizer:
/// `(1/n) sum_i ||grad f_i(x*)||`. Vanishes under interpolation.
pub fn sigma_star(fs: &FiniteSumProblem) -> f64 {
    let x_star = fs.aggregate().x_star();
    let n = fs.n() as f64;
    fs.components()
        .iter()
        .map(|c| {
            let g = grad_exact(c, x_star);
            g.value.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .sum::<f64>()
        / n
}
