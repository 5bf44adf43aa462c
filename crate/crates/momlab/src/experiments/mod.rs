//! Experiment harness: parameter-sweep heatmaps with theory overlays, the
//! finite-sum divergence example, SGD bound-tightness checks, logistic
//! regression sweeps, and numerical validation of the product-rate
//! formula.

mod divergence;
mod fits;
mod heatmap;
mod product_validation;
mod logreg_sweep;
mod sgd_finite_sum;

pub use divergence::*;
pub use fits::*;
pub use heatmap::*;
pub use product_validation::*;
pub use logreg_sweep::*;
pub use sgd_finite_sum::*;
