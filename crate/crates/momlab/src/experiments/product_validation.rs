//! Numerical validation of the closed-form spectral radius of alternating
//! block products against explicit matrix multiplication.

use serde::{Deserialize, Serialize};

use crate::linalg::{spectral_radius2, Mat2};
use crate::rng::Rng;
use crate::theory::{curvature_block, alternating_product_radius, nesterov_defaults, SegmentPattern, SpectrumBounds};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductRadiusReport {
    pub q_values: Vec<f64>,
    pub patterns_per_q: usize,
    /// Worst relative error of the closed-form product radius against the
    /// numerically multiplied product.
    pub max_relative_error: f64,
    /// Worst entrywise residual of the sandwich identity
    /// `B(L) B(mu)^k B(L) = -r^(k+1) k B(L)` for `k <= 10`.
    pub identity_max_residual: f64,
}

impl ProductRadiusReport {
    pub fn passes(&self) -> bool {
        self.max_relative_error < 1e-8 && self.identity_max_residual < 1e-10
    }
}

fn pattern_product(bounds: &SpectrumBounds, pattern: &SegmentPattern) -> Mat2 {
    let p = nesterov_defaults(bounds);
    let fast = curvature_block(bounds.l, &p);
    let slow = curvature_block(bounds.mu, &p);
    let mut out = Mat2::identity();
    for &k in pattern.segments() {
        out = out.mul(&fast).mul(&slow.pow(k));
    }
    out
}

/// Compare the closed-form product radius against explicit multiplication
/// over random segment patterns (`s <= 5`, segment lengths `<= 6`), and
/// verify the sandwich identity entrywise.
pub fn validate_product_radius(q_values: &[f64], patterns_per_q: usize, seed: u64) -> ProductRadiusReport {
    let mut rng = Rng::labeled_substream(seed, b"product-radius-validation");
    let mut max_relative_error: f64 = 0.0;
    for &q in q_values {
        let bounds = SpectrumBounds::new(1.0 / q, 1.0).expect("valid bounds");
        for _ in 0..patterns_per_q {
            let s = 1 + rng.index(5);
            let segments: Vec<usize> = (0..s).map(|_| 1 + rng.index(6)).collect();
            let pattern = SegmentPattern::new(segments).expect("valid pattern");
            let closed = alternating_product_radius(&bounds, &pattern);
            let numeric = spectral_radius2(&pattern_product(&bounds, &pattern));
            let rel = (closed - numeric).abs() / numeric.max(1e-300);
            max_relative_error = max_relative_error.max(rel);
        }
    }

    let mut identity_max_residual: f64 = 0.0;
    let bounds = SpectrumBounds::new(1.0 / 16.0, 1.0).expect("valid bounds");
    let p = nesterov_defaults(&bounds);
    let fast = curvature_block(bounds.l, &p);
    let slow = curvature_block(bounds.mu, &p);
    let r = (bounds.q().sqrt() - 1.0) / bounds.q().sqrt();
    for k in 1..=10 {
        let lhs = fast.mul(&slow.pow(k)).mul(&fast);
        let rhs = fast.scale(-r.powi(k as i32 + 1) * k as f64);
        identity_max_residual = identity_max_residual.max(lhs.max_abs_diff(&rhs));
    }

    ProductRadiusReport {
        q_values: q_values.to_vec(),
        patterns_per_q,
        max_relative_error,
        identity_max_residual,
    }
}
