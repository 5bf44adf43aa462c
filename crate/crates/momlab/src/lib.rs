//! Momentum laboratory: a small numerical-optimization lab for studying
//! Nesterov's accelerated stochastic gradient (ASG) method and SGD with
//! constant step-size and momentum on smooth strongly convex problems.
//!
//! The crate is organized around five building blocks:
//!
//! * [`linalg`] — dense symmetric eigendecomposition (cyclic Jacobi), 2x2
//!   spectral tools, and the permutation that block-diagonalizes the
//!   optimizer's state-transition matrix.
//! * [`theory`] — closed-form convergence rates, stability regions,
//!   variance-neighborhood coefficients, and the finite-sum counterexample
//!   algebra as executable functions.
//! * [`problems`] — objective constructors (worst-case quadratic, random
//!   least squares, counterexample finite sums, logistic regression),
//!   gradient oracles, and mini-batch sampling schedules.
//! * [`optim`] — the ASG/SGD iteration, the equivalent state-space
//!   recursion used for validation, and trajectory recording.
//! * [`experiments`] — parameter-sweep heatmaps, the divergence example,
//!   SGD finite-sum bound checks, logistic-regression sweeps, and rate
//!   fitting utilities.
//!
//! All randomness flows through [`rng::Rng`], a seeded ChaCha stream with
//! Box-Muller Gaussian variates, so every experiment is reproducible
//! bit-for-bit from its seed.

pub mod experiments;
pub mod linalg;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod theory;
