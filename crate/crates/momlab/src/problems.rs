//! Objective constructors, gradient oracles, and mini-batch sampling.
//!
//! All generators are deterministic functions of an explicit seed: the same
//! seed yields bit-identical problems and schedules on every platform.
//! Constructed problems carry a [`ProblemMeta`] record (generator name,
//! version, seed, dimensions, spectrum) so experiments are replayable from
//! their metadata alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, norm2, norm_inf, sym_eigen_default, DenseMat, SymMatrix};
use crate::rng::{fnv1a64, Rng};
use crate::theory::SpectrumBounds;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("generated spectrum escapes the declared bounds: {0}")]
    SpectrumViolation(String),
    #[error("minimizer residual too large: {0}")]
    MinimizerResidual(String),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Replay record attached to every generated problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub generator: String,
    pub version: u32,
    pub seed: Option<u64>,
    pub dim: usize,
    pub mu: f64,
    pub l: f64,
    pub params: serde_json::Value,
}

impl ProblemMeta {
    /// Stable 64-bit digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("meta serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// Quadratic objectives
// ---------------------------------------------------------------------------

/// Quadratic objective `f(x) = x' H x / 2 - b' x + c` with minimizer
/// `x* = H^{-1} b` and declared curvature bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Quadratic {
    hessian: SymMatrix,
    linear: Vec<f64>,
    constant: f64,
    x_star: Vec<f64>,
    bounds: SpectrumBounds,
    pub meta: ProblemMeta,
}

impl Quadratic {
    /// Builds the quadratic, solves for the minimizer, and verifies that
    /// the Hessian spectrum sits inside the declared bounds (within 1e-8)
    /// and that the minimizer residual is small.
    pub fn new(
        hessian: SymMatrix,
        linear: Vec<f64>,
        constant: f64,
        bounds: SpectrumBounds,
    ) -> Result<Self, ProblemError> {
        let d = hessian.dim();
        if linear.len() != d {
            return Err(ProblemError::InvalidParameter(format!(
                "linear term has length {}, expected {d}",
                linear.len()
            )));
        }
        let eig = sym_eigen_default(&hessian)?;
        let lo = eig.values[0];
        let hi = eig.values[d - 1];
        let tol = 1e-8 * bounds.l.abs().max(1.0);
        if lo < bounds.mu - tol || hi > bounds.l + tol {
            return Err(ProblemError::SpectrumViolation(format!(
                "spectrum [{lo}, {hi}] vs declared [{}, {}]",
                bounds.mu, bounds.l
            )));
        }
        let x_star = hessian.to_dense().solve(&linear)?;
        let residual = norm_inf(&linalg::sub(&hessian.mul_vec(&x_star), &linear));
        let allowed = 1e-8 * (norm_inf(&linear) + 1.0);
        if residual >= allowed {
            return Err(ProblemError::MinimizerResidual(format!(
                "{residual} >= {allowed}"
            )));
        }
        let meta = ProblemMeta {
            generator: "explicit_quadratic".into(),
            version: 1,
            seed: None,
            dim: d,
            mu: bounds.mu,
            l: bounds.l,
            params: serde_json::Value::Null,
        };
        Ok(Self {
            hessian,
            linear,
            constant,
            x_star,
            bounds,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn hessian(&self) -> &SymMatrix {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn bounds(&self) -> SpectrumBounds {
        self.bounds
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dot(x, &self.hessian.mul_vec(x)) - linalg::dot(&self.linear, x)
            + self.constant
    }

    pub fn min_value(&self) -> f64 {
        self.value(&self.x_star)
    }
}

/// Finite sum `f = (1/n) sum f_i` of quadratics with shared dimension,
/// plus the mini-batch size used when sampling it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteSumProblem {
    components: Vec<Quadratic>,
    minibatch_size: usize,
    aggregate: Quadratic,
    interpolating: bool,
}

impl FiniteSumProblem {
    pub fn new(components: Vec<Quadratic>, minibatch_size: usize) -> Result<Self, ProblemError> {
        let n = components.len();
        if n == 0 {
            return Err(ProblemError::InvalidParameter(
                "finite sum needs at least one component".into(),
            ));
        }
        if minibatch_size == 0 || minibatch_size > n {
            return Err(ProblemError::InvalidParameter(format!(
                "mini-batch size {minibatch_size} outside 1..={n}"
            )));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(ProblemError::InvalidParameter(
                "components must share one dimension".into(),
            ));
        }

        let inv_n = 1.0 / n as f64;
        let mean_h = SymMatrix::from_fn_symmetric(d, |i, j| {
            components.iter().map(|c| c.hessian.get(i, j)).sum::<f64>() * inv_n
        });
        let mean_b: Vec<f64> = (0..d)
            .map(|i| components.iter().map(|c| c.linear[i]).sum::<f64>() * inv_n)
            .collect();
        let mean_c = components.iter().map(|c| c.constant).sum::<f64>() * inv_n;
        // An average of matrices with spectra inside [mu_i, L_i] stays
        // inside the union envelope.
        let mu = components
            .iter()
            .map(|c| c.bounds.mu)
            .fold(f64::INFINITY, f64::min);
        let l = components
            .iter()
            .map(|c| c.bounds.l)
            .fold(f64::NEG_INFINITY, f64::max);
        let bounds = SpectrumBounds::new(mu, l)
            .map_err(|e| ProblemError::InvalidParameter(e.to_string()))?;
        let mut aggregate = Quadratic::new(mean_h, mean_b, mean_c, bounds)?;
        aggregate.meta.generator = "finite_sum_aggregate".into();

        let interpolating = components.iter().all(|c| {
            norm_inf(&linalg::sub(&c.x_star, &aggregate.x_star)) < 1e-8
        });

        Ok(Self {
            components,
            minibatch_size,
            aggregate,
            interpolating,
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.aggregate.dim()
    }

    pub fn minibatch_size(&self) -> usize {
        self.minibatch_size
    }

    pub fn components(&self) -> &[Quadratic] {
        &self.components
    }

    pub fn aggregate(&self) -> &Quadratic {
        &self.aggregate
    }

    pub fn interpolating(&self) -> bool {
        self.interpolating
    }

    /// Same finite sum with a different mini-batch size.
    pub fn with_minibatch_size(mut self, m: usize) -> Result<Self, ProblemError> {
        if m == 0 || m > self.components.len() {
            return Err(ProblemError::InvalidParameter(format!(
                "mini-batch size {m} outside 1..={}",
                self.components.len()
            )));
        }
        self.minibatch_size = m;
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// Gradient samples and oracles
// ---------------------------------------------------------------------------

/// Mini-batch selector: `m` of `n` indices, each carrying weight `1/m`.
/// Stored sparsely; [`SamplingVector::weights`] materializes the dense
/// weight vector with entries in `{0, 1/m}` summing to one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingVector {
    n: usize,
    indices: Vec<usize>,
}

impl SamplingVector {
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self, ProblemError> {
        if indices.is_empty() || indices.len() > n {
            return Err(ProblemError::InvalidParameter(format!(
                "batch size {} outside 1..={n}",
                indices.len()
            )));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(ProblemError::InvalidParameter(
                "batch indices must be distinct".into(),
            ));
        }
        if *indices.last().unwrap() >= n {
            return Err(ProblemError::InvalidParameter(
                "batch index out of range".into(),
            ));
        }
        Ok(Self { n, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn weight(&self, i: usize) -> f64 {
        if self.contains(i) {
            1.0 / self.m() as f64
        } else {
            0.0
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientKind {
    Exact,
    GaussianNoise,
    Minibatch,
}

/// One oracle response: the gradient estimate and how it was produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientSample {
    pub value: Vec<f64>,
    pub kind: GradientKind,
    pub batch: Option<SamplingVector>,
}

/// Anything with an exact first-order oracle.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn gradient(&self, y: &[f64]) -> Vec<f64>;
    /// Known minimizer, when the problem has one in closed form.
    fn minimizer(&self) -> Option<&[f64]>;
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim(), "gradient dimension mismatch");
        let mut g = self.hessian.mul_vec(y);
        for (gi, bi) in g.iter_mut().zip(&self.linear) {
            *gi -= bi;
        }
        g
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.x_star)
    }
}

impl Objective for FiniteSumProblem {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.aggregate.gradient(y)
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(self.aggregate.x_star())
    }
}

/// Exact gradient at `y`.
pub fn grad_exact<T: Objective + ?Sized>(obj: &T, y: &[f64]) -> GradientSample {
    GradientSample {
        value: obj.gradient(y),
        kind: GradientKind::Exact,
        batch: None,
    }
}

/// Exact gradient plus isotropic Gaussian noise with per-component
/// standard deviation `sigma / sqrt(d)`, so the total squared noise norm
/// has expectation `sigma^2` regardless of dimension.
pub fn grad_gaussian<T: Objective + ?Sized>(
    obj: &T,
    y: &[f64],
    sigma: f64,
    rng: &mut Rng,
) -> GradientSample {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    let mut value = obj.gradient(y);
    if sigma > 0.0 {
        let per_component = sigma / (value.len() as f64).sqrt();
        for v in value.iter_mut() {
            *v += per_component * rng.normal();
        }
    }
    GradientSample {
        value,
        kind: GradientKind::GaussianNoise,
        batch: None,
    }
}

/// Mini-batch gradient `sum_i nu_i grad f_i(y)`.
pub fn grad_minibatch(
    fs: &FiniteSumProblem,
    y: &[f64],
    nu: &SamplingVector,
) -> GradientSample {
    assert_eq!(nu.n(), fs.n(), "sampling vector length mismatch");
    assert_eq!(y.len(), fs.dim(), "gradient dimension mismatch");
    let w = 1.0 / nu.m() as f64;
    let mut value = vec![0.0; fs.dim()];
    for &i in nu.indices() {
        let g = fs.components[i].gradient(y);
        for (acc, gi) in value.iter_mut().zip(&g) {
            *acc += w * gi;
        }
    }
    GradientSample {
        value,
        kind: GradientKind::Minibatch,
        batch: Some(nu.clone()),
    }
}

/// Draws `length` uniform `m`-of-`n` mini-batches, redrawing whenever a
/// batch would repeat its immediate predecessor, so no two consecutive
/// batches are equal while each index keeps marginal frequency `1/n`.
pub fn sampling_schedule(
    n: usize,
    m: usize,
    length: usize,
    rng: &mut Rng,
) -> Result<Vec<SamplingVector>, ProblemError> {
    if n < 2 {
        return Err(ProblemError::InvalidParameter(
            "no-repeat sampling needs n >= 2".into(),
        ));
    }
    if m == 0 || m >= n {
        return Err(ProblemError::InvalidParameter(format!(
            "no-repeat sampling needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let mut scratch: Vec<usize> = (0..n).collect();
    let mut draw = |rng: &mut Rng| -> Vec<usize> {
        // Partial Fisher-Yates: the first m entries become the batch.
        for i in 0..m {
            let j = i + rng.index(n - i);
            scratch.swap(i, j);
        }
        let mut batch = scratch[..m].to_vec();
        batch.sort_unstable();
        batch
    };
    let mut schedule = Vec::with_capacity(length);
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..length {
        let mut batch = draw(rng);
        while prev.as_deref() == Some(&batch[..]) {
            batch = draw(rng);
        }
        prev = Some(batch.clone());
        schedule.push(SamplingVector { n, indices: batch });
    }
    Ok(schedule)
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Worst-case quadratic for first-order methods: the tridiagonal chain
/// `H = ((L - mu)/4) T + mu I` with `T = tridiag(-1, 2, -1)` and linear
/// term `((L - mu)/4) e_1`. The chain spectrum `2 - 2 cos(j pi / (d+1))`
/// lies in `(0, 4)`, so the Hessian spectrum stays strictly inside
/// `[mu, L]`.
pub fn worst_case_quadratic(d: usize, mu: f64, l: f64) -> Result<Quadratic, ProblemError> {
    if d < 2 {
        return Err(ProblemError::InvalidParameter(format!(
            "worst-case quadratic needs d >= 2, got {d}"
        )));
    }
    if !(mu > 0.0) || !(l > mu) {
        return Err(ProblemError::InvalidParameter(format!(
            "need 0 < mu < L, got mu = {mu}, L = {l}"
        )));
    }
    let scale = (l - mu) / 4.0;
    let h = SymMatrix::from_fn_symmetric(d, |i, j| {
        if i == j {
            2.0 * scale + mu
        } else if i == j + 1 {
            -scale
        } else {
            0.0
        }
    });
    let mut b = vec![0.0; d];
    b[0] = scale;
    let bounds = SpectrumBounds::new(mu, l).map_err(|e| ProblemError::InvalidParameter(e.to_string()))?;
    let mut q = Quadratic::new(h, b, 0.0, bounds)?;
    q.meta = ProblemMeta {
        generator: "worst_case_quadratic".into(),
        version: 1,
        seed: None,
        dim: d,
        mu,
        l,
        params: serde_json::json!({}),
    };
    Ok(q)
}

/// Modified Gram-Schmidt: orthonormalize the columns of a Gaussian
/// `rows x cols` matrix (`rows >= cols`).
fn random_orthonormal_columns(rows: usize, cols: usize, rng: &mut Rng) -> DenseMat {
    let mut m = DenseMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, rng.normal());
        }
    }
    for j in 0..cols {
        for prev in 0..j {
            let proj: f64 = (0..rows).map(|i| m.get(i, j) * m.get(i, prev)).sum();
            for i in 0..rows {
                let v = m.get(i, j) - proj * m.get(i, prev);
                m.set(i, j, v);
            }
        }
        let norm: f64 = (0..rows).map(|i| m.get(i, j) * m.get(i, j)).sum::<f64>().sqrt();
        for i in 0..rows {
            m.set(i, j, m.get(i, j) / norm);
        }
    }
    m
}

/// Log-uniformly spaced singular values spanning exactly `sqrt(q)`.
fn spanned_singular_values(cols: usize, q: f64, top: f64) -> Vec<f64> {
    if cols == 1 {
        return vec![top];
    }
    let ratio = q.sqrt();
    (0..cols)
        .map(|i| top * ratio.powf(-(i as f64) / (cols - 1) as f64))
        .collect()
}

/// Least-squares quadratic with a prescribed Hessian condition number:
/// a random orthonormal design basis carries log-uniformly spaced singular
/// values spanning exactly `sqrt(q_target)`, scaled so the smallest
/// Hessian eigenvalue is `mu_floor`.
pub fn random_least_squares(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    q_target: f64,
    mu_floor: f64,
) -> Result<Quadratic, ProblemError> {
    if n_features == 0 || n_samples < n_features {
        return Err(ProblemError::InvalidParameter(format!(
            "need n_samples >= n_features >= 1, got {n_samples} x {n_features}"
        )));
    }
    if !(q_target >= 1.0) || !(mu_floor > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "need q_target >= 1 and mu_floor > 0, got {q_target}, {mu_floor}"
        )));
    }
    let mut rng = Rng::labeled_substream(seed, b"random_least_squares");
    let q_basis = random_orthonormal_columns(n_samples, n_features, &mut rng);
    let v_basis = random_orthonormal_columns(n_features, n_features, &mut rng);
    // Largest singular value so that lambda_min(H) = mu_floor for
    // H = A'A / n_samples.
    let top = (mu_floor * q_target * n_samples as f64).sqrt();
    let sigma = spanned_singular_values(n_features, q_target, top);

    // A = Q diag(sigma) V'
    let mut design = DenseMat::zeros(n_samples, n_features);
    for i in 0..n_samples {
        for j in 0..n_features {
            let mut acc = 0.0;
            for k in 0..n_features {
                acc += q_basis.get(i, k) * sigma[k] * v_basis.get(j, k);
            }
            design.set(i, j, acc);
        }
    }
    let x_true: Vec<f64> = (0..n_features).map(|_| rng.normal()).collect();
    let targets = design.mul_vec(&x_true);

    let inv_n = 1.0 / n_samples as f64;
    let h = SymMatrix::from_fn_symmetric(n_features, |i, j| {
        (0..n_samples).map(|k| design.get(k, i) * design.get(k, j)).sum::<f64>() * inv_n
    });
    let b: Vec<f64> = (0..n_features)
        .map(|j| (0..n_samples).map(|k| design.get(k, j) * targets[k]).sum::<f64>() * inv_n)
        .collect();
    let c = 0.5 * inv_n * linalg::dot(&targets, &targets);

    let bounds = SpectrumBounds::new(mu_floor, mu_floor * q_target)
        .map_err(|e| ProblemError::InvalidParameter(e.to_string()))?;
    let mut quad = Quadratic::new(h, b, c, bounds)?;
    quad.meta = ProblemMeta {
        generator: "random_least_squares".into(),
        version: 1,
        seed: Some(seed),
        dim: n_features,
        mu: mu_floor,
        l: mu_floor * q_target,
        params: serde_json::json!({
            "n_samples": n_samples,
            "q_target": q_target,
        }),
    };
    Ok(quad)
}

/// The three-dimensional finite sum whose single high-curvature component
/// destabilizes the accelerated iteration. Every component shares the
/// minimizer (`(1,1,1)` normalized), has curvature `L` along the first
/// axis and `mu` along the second; the third axis carries `mu` except for
/// the last component, which carries `L`.
pub fn counterexample_finite_sum(
    n: usize,
    mu: f64,
    l: f64,
) -> Result<FiniteSumProblem, ProblemError> {
    if n < 3 {
        return Err(ProblemError::InvalidParameter(format!(
            "counterexample needs n >= 3, got {n}"
        )));
    }
    if !(mu > 0.0) || !(l >= mu) {
        return Err(ProblemError::InvalidParameter(format!(
            "need 0 < mu <= L, got mu = {mu}, L = {l}"
        )));
    }
    let x_star = {
        let s = 3.0_f64.sqrt();
        vec![1.0 / s, 1.0 / s, 1.0 / s]
    };
    let bounds =
        SpectrumBounds::new(mu, l).map_err(|e| ProblemError::InvalidParameter(e.to_string()))?;
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let third = if i == n - 1 { l } else { mu };
        let h = SymMatrix::from_diag(&[l, mu, third]);
        let b = h.mul_vec(&x_star);
        let c = 0.5 * linalg::dot(&x_star, &h.mul_vec(&x_star));
        let mut quad = Quadratic::new(h, b, c, bounds)?;
        quad.meta = ProblemMeta {
            generator: "counterexample_component".into(),
            version: 1,
            seed: None,
            dim: 3,
            mu,
            l,
            params: serde_json::json!({ "index": i, "n": n }),
        };
        components.push(quad);
    }
    FiniteSumProblem::new(components, 1)
}

/// Default minimizer spread of [`partitioned_least_squares`]; see
/// [`partitioned_least_squares_with_spread`].
pub const PARTITIONED_DEFAULT_SPREAD: f64 = 1e-3;

/// Least-squares data partitioned into equal mini-batches, each batch with
/// Hessian spectrum exactly `{1/q, .., 1}` (condition number `q`) in a
/// random orientation. Batch minimizers are perturbed around a shared
/// point by `spread`, which controls the gradient diversity at the
/// optimum; `spread = 0` gives an interpolating finite sum.
pub fn partitioned_least_squares_with_spread(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    n_batches: usize,
    q: f64,
    spread: f64,
) -> Result<FiniteSumProblem, ProblemError> {
    if n_batches == 0 || n_samples % n_batches != 0 {
        return Err(ProblemError::InvalidParameter(format!(
            "{n_samples} samples do not split evenly into {n_batches} batches"
        )));
    }
    let per_batch = n_samples / n_batches;
    if n_features == 0 || per_batch < n_features {
        return Err(ProblemError::InvalidParameter(format!(
            "each batch needs at least {n_features} samples, got {per_batch}"
        )));
    }
    if !(q >= 1.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "condition number must be >= 1, got {q}"
        )));
    }
    let mu = 1.0 / q;
    let l = 1.0;
    let bounds =
        SpectrumBounds::new(mu, l).map_err(|e| ProblemError::InvalidParameter(e.to_string()))?;

    let mut base_rng = Rng::labeled_substream(seed, b"partitioned_least_squares");
    let shared_minimizer: Vec<f64> = (0..n_features).map(|_| base_rng.normal()).collect();

    let mut components = Vec::with_capacity(n_batches);
    for batch in 0..n_batches {
        let mut rng = Rng::substream(seed, fnv1a64(b"pls-batch") ^ batch as u64);
        let q_basis = random_orthonormal_columns(per_batch, n_features, &mut rng);
        let v_basis = random_orthonormal_columns(n_features, n_features, &mut rng);
        // Per-batch Hessian A'A/m has eigenvalues exactly {mu, .., L}.
        let top = (l * per_batch as f64).sqrt();
        let sigma = spanned_singular_values(n_features, q, top);

        let h = SymMatrix::from_fn_symmetric(n_features, |i, j| {
            (0..n_features)
                .map(|k| v_basis.get(i, k) * sigma[k] * sigma[k] * v_basis.get(j, k))
                .sum::<f64>()
                / per_batch as f64
        });
        let minimizer: Vec<f64> = shared_minimizer
            .iter()
            .map(|&v| v + spread * rng.normal())
            .collect();
        let b = h.mul_vec(&minimizer);
        let c = 0.5 * linalg::dot(&minimizer, &h.mul_vec(&minimizer));
        let mut quad = Quadratic::new(h, b, c, bounds)?;
        quad.meta = ProblemMeta {
            generator: "partitioned_least_squares_batch".into(),
            version: 1,
            seed: Some(seed),
            dim: n_features,
            mu,
            l,
            params: serde_json::json!({
                "batch": batch,
                "per_batch": per_batch,
                "q": q,
                "spread": spread,
                "orthonormal_residual": q_basis.transpose().matmul(&q_basis)
                    .max_abs_diff(&DenseMat::identity(n_features)),
            }),
        };
        components.push(quad);
    }
    FiniteSumProblem::new(components, 1)
}

/// [`partitioned_least_squares_with_spread`] with the default spread.
pub fn partitioned_least_squares(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    n_batches: usize,
    q: f64,
) -> Result<FiniteSumProblem, ProblemError> {
    partitioned_least_squares_with_spread(
        seed,
        n_samples,
        n_features,
        n_batches,
        q,
        PARTITIONED_DEFAULT_SPREAD,
    )
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

/// l2-regularized multinomial logistic regression over synthetic clustered
/// data. Parameters are the flattened `classes x n_features` weight
/// matrix; the ridge term makes the objective strongly convex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRegProblem {
    features: DenseMat,
    labels: Vec<usize>,
    classes: usize,
    reg: f64,
    pub meta: ProblemMeta,
}

impl LogRegProblem {
    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Class probabilities for sample `i` under flattened weights `w`.
    fn probabilities(&self, w: &[f64], i: usize) -> Vec<f64> {
        let f = self.n_features();
        let mut logits = vec![0.0; self.classes];
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &w[c * f..(c + 1) * f];
            *logit = (0..f).map(|j| row[j] * self.features.get(i, j)).sum();
        }
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= sum;
        }
        probs
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim());
        let s = self.n_samples() as f64;
        let mut loss = 0.0;
        for i in 0..self.n_samples() {
            let probs = self.probabilities(w, i);
            loss -= probs[self.labels[i]].max(1e-300).ln();
        }
        loss / s + 0.5 * self.reg * linalg::dot(w, w)
    }

    /// Explicit Hessian at `w` (dimension `classes * n_features`): the
    /// averaged softmax curvature `p_c (delta - p_c') x x'` plus the ridge
    /// diagonal.
    pub fn hessian(&self, w: &[f64]) -> SymMatrix {
        let f = self.n_features();
        let s = self.n_samples();
        let d = self.dim();
        let probs: Vec<Vec<f64>> = (0..s).map(|i| self.probabilities(w, i)).collect();
        let inv_s = 1.0 / s as f64;
        SymMatrix::from_fn_symmetric(d, |row, col| {
            let (c1, j1) = (row / f, row % f);
            let (c2, j2) = (col / f, col % f);
            let mut acc = 0.0;
            for i in 0..s {
                let p1 = probs[i][c1];
                let p2 = probs[i][c2];
                let coupling = if c1 == c2 { p1 * (1.0 - p1) } else { -p1 * p2 };
                acc += coupling * self.features.get(i, j1) * self.features.get(i, j2);
            }
            let mut v = acc * inv_s;
            if row == col {
                v += self.reg;
            }
            v
        })
    }
}

impl Objective for LogRegProblem {
    fn dim(&self) -> usize {
        self.classes * self.n_features()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim(), "gradient dimension mismatch");
        let f = self.n_features();
        let s = self.n_samples() as f64;
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.n_samples() {
            let probs = self.probabilities(w, i);
            for c in 0..self.classes {
                let coeff = probs[c] - if self.labels[i] == c { 1.0 } else { 0.0 };
                for j in 0..f {
                    g[c * f + j] += coeff * self.features.get(i, j);
                }
            }
        }
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = *gi / s + self.reg * wi;
        }
        g
    }

    fn minimizer(&self) -> Option<&[f64]> {
        None
    }
}

/// Balanced multi-class classification data: one Gaussian cluster per
/// class in the informative subspace, pure noise in the remaining
/// dimensions. Class counts are `n_samples / classes` each, remainder
/// assigned round-robin.
pub fn logreg_problem(
    seed: u64,
    classes: usize,
    n_samples: usize,
    n_features: usize,
    n_informative: usize,
    cluster_sep: f64,
    reg: f64,
) -> Result<LogRegProblem, ProblemError> {
    if classes < 2 {
        return Err(ProblemError::InvalidParameter(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if n_informative > n_features || n_informative == 0 {
        return Err(ProblemError::InvalidParameter(format!(
            "need 1 <= n_informative <= n_features, got {n_informative} of {n_features}"
        )));
    }
    if n_samples < classes {
        return Err(ProblemError::InvalidParameter(
            "need at least one sample per class".into(),
        ));
    }
    if !(reg > 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "ridge coefficient must be positive, got {reg}"
        )));
    }
    if !(cluster_sep >= 0.0) {
        return Err(ProblemError::InvalidParameter(format!(
            "cluster separation must be nonnegative, got {cluster_sep}"
        )));
    }

    let mut rng = Rng::labeled_substream(seed, b"logreg_problem");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let raw: Vec<f64> = (0..n_informative).map(|_| rng.normal()).collect();
            let norm = norm2(&raw).max(1e-12);
            raw.iter().map(|v| cluster_sep * v / norm).collect()
        })
        .collect();

    let per_class = n_samples / classes;
    let remainder = n_samples % classes;
    let mut labels = Vec::with_capacity(n_samples);
    for c in 0..classes {
        let count = per_class + if c < remainder { 1 } else { 0 };
        labels.extend(std::iter::repeat(c).take(count));
    }

    let mut features = DenseMat::zeros(n_samples, n_features);
    for (i, &label) in labels.iter().enumerate() {
        for j in 0..n_features {
            let center = if j < n_informative {
                centers[label][j]
            } else {
                0.0
            };
            features.set(i, j, center + rng.normal());
        }
    }

    let meta = ProblemMeta {
        generator: "logreg_problem".into(),
        version: 1,
        seed: Some(seed),
        dim: classes * n_features,
        mu: reg,
        l: f64::NAN,
        params: serde_json::json!({
            "classes": classes,
            "n_samples": n_samples,
            "n_features": n_features,
            "n_informative": n_informative,
            "cluster_sep": cluster_sep,
            "reg": reg,
        }),
    };
    Ok(LogRegProblem {
        features,
        labels,
        classes,
        reg,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::sigma_star;

    #[test]
    fn worst_case_preconditions() {
        assert!(matches!(
            worst_case_quadratic(2, 0.0, 1.0),
            Err(ProblemError::InvalidParameter(_))
        ));
        assert!(worst_case_quadratic(1, 0.1, 1.0).is_err());
    }

    #[test]
    fn worst_case_spectrum_matches_chain_formula() {
        let (d, l) = (100, 1.0);
        let mu = l / 32.0;
        let q = worst_case_quadratic(d, mu, l).unwrap();
        let eig = sym_eigen_default(q.hessian()).unwrap();
        let scale = (l - mu) / 4.0;
        let mut expected: Vec<f64> = (1..=d)
            .map(|j| scale * (2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (d as f64 + 1.0)).cos()) + mu)
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.values.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(eig.values[0] >= mu - 1e-10);
        assert!(eig.values[d - 1] <= l + 1e-10);
    }

    #[test]
    fn worst_case_gradient_vanishes_at_minimizer() {
        let q = worst_case_quadratic(30, 0.05, 1.0).unwrap();
        let g = grad_exact(&q, q.x_star());
        assert!(norm_inf(&g.value) < 1e-8);
    }

    #[test]
    fn least_squares_isotropic_at_unit_condition() {
        let q = random_least_squares(11, 50, 6, 1.0, 0.5).unwrap();
        let eig = sym_eigen_default(q.hessian()).unwrap();
        let measured_q = eig.values[5] / eig.values[0];
        assert!((measured_q - 1.0).abs() < 1e-6, "Q {measured_q}");
    }

    #[test]
    fn least_squares_condition_number_within_one_percent() {
        let q = random_least_squares(7, 500, 10, 8.0, 0.125).unwrap();
        let eig = sym_eigen_default(q.hessian()).unwrap();
        let measured = eig.values[9] / eig.values[0];
        assert!(measured >= 7.92 && measured <= 8.08, "Q {measured}");
    }

    #[test]
    fn least_squares_deterministic() {
        let a = random_least_squares(7, 100, 5, 4.0, 0.25).unwrap();
        let b = random_least_squares(7, 100, 5, 4.0, 0.25).unwrap();
        assert_eq!(a.hessian(), b.hessian());
        assert_eq!(a.linear(), b.linear());
        let c = random_least_squares(8, 100, 5, 4.0, 0.25).unwrap();
        assert_ne!(a.hessian(), c.hessian());
    }

    #[test]
    fn counterexample_structure() {
        let fs = counterexample_finite_sum(50, 0.05, 100.0).unwrap();
        assert_eq!(fs.n(), 50);
        assert_eq!(fs.dim(), 3);
        // Inconsistent component carries the high curvature on axis 2.
        let last = &fs.components()[49];
        assert_eq!(last.hessian().get(2, 2), 100.0);
        for c in &fs.components()[..49] {
            assert_eq!(c.hessian().get(2, 2), 0.05);
            assert_eq!(c.hessian().get(0, 0), 100.0);
            assert_eq!(c.hessian().get(1, 1), 0.05);
        }
        // Aggregate curvature along axis 2: (49 mu + L) / 50.
        let agg22 = fs.aggregate().hessian().get(2, 2);
        assert!((agg22 - 2.049).abs() < 1e-12, "{agg22}");
        assert!(fs.interpolating());
        assert!(sigma_star(&fs) < 1e-10);
        assert!(counterexample_finite_sum(2, 0.05, 100.0).is_err());
    }

    #[test]
    fn partitioned_batches_hit_condition_number() {
        let fs = partitioned_least_squares(3, 2500, 2, 50, 16.0).unwrap();
        assert_eq!(fs.n(), 50);
        for c in fs.components() {
            let eig = sym_eigen_default(c.hessian()).unwrap();
            let q = eig.values[1] / eig.values[0];
            assert!(q >= 15.7 && q <= 16.3, "batch condition {q}");
        }
        // Aggregate conditioning can only improve on the worst batch.
        let eig = sym_eigen_default(fs.aggregate().hessian()).unwrap();
        let agg_q = eig.values[1] / eig.values[0];
        assert!(agg_q <= 16.0 + 1e-9, "aggregate condition {agg_q}");

        let again = partitioned_least_squares(3, 2500, 2, 50, 16.0).unwrap();
        assert_eq!(fs.aggregate().hessian(), again.aggregate().hessian());

        assert!(partitioned_least_squares(3, 2500, 2, 49, 16.0).is_err());
    }

    #[test]
    fn partitioned_interpolating_variant() {
        let fs = partitioned_least_squares_with_spread(5, 500, 2, 10, 8.0, 0.0).unwrap();
        assert!(fs.interpolating());
        assert!(sigma_star(&fs) < 1e-8);
        let spread = partitioned_least_squares(5, 500, 2, 10, 8.0).unwrap();
        assert!(!spread.interpolating());
        assert!(sigma_star(&spread) > 0.0);
    }

    #[test]
    fn exact_gradient_cases() {
        let b = SpectrumBounds::new(2.0, 2.0).unwrap();
        let q = Quadratic::new(SymMatrix::from_diag(&[2.0]), vec![0.0], 0.0, b).unwrap();
        let g = grad_exact(&q, &[3.0]);
        assert_eq!(g.value, vec![6.0]);
        assert_eq!(g.kind, GradientKind::Exact);

        let wc = worst_case_quadratic(10, 0.1, 1.0).unwrap();
        assert!(norm_inf(&grad_exact(&wc, wc.x_star()).value) < 1e-9);
    }

    #[test]
    fn gradient_affine_in_argument() {
        let q = worst_case_quadratic(8, 0.2, 2.0).unwrap();
        let mut rng = Rng::from_seed(40);
        let y1: Vec<f64> = (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let y2: Vec<f64> = (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let (a, b) = (0.3, -1.2);
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        // g(y) - g(0) is linear in y.
        let g0 = q.gradient(&vec![0.0; 8]);
        let lhs: Vec<f64> = q
            .gradient(&combo)
            .iter()
            .zip(&g0)
            .map(|(g, z)| g - z)
            .collect();
        let g1 = q.gradient(&y1);
        let g2 = q.gradient(&y2);
        for i in 0..8 {
            let rhs = a * (g1[i] - g0[i]) + b * (g2[i] - g0[i]);
            assert!((lhs[i] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_oracle_statistics() {
        let q = worst_case_quadratic(4, 0.5, 2.0).unwrap();
        let y = vec![0.3, -0.4, 0.9, 0.0];
        let exact = q.gradient(&y);

        let mut rng = Rng::from_seed(77);
        let zero_noise = grad_gaussian(&q, &y, 0.0, &mut rng);
        assert_eq!(zero_noise.value, exact);

        let sigma = 0.5;
        let draws = 100_000;
        let mut mean = vec![0.0; 4];
        let mut total_sq = 0.0;
        for _ in 0..draws {
            let g = grad_gaussian(&q, &y, sigma, &mut rng);
            let mut sq = 0.0;
            for i in 0..4 {
                let z = g.value[i] - exact[i];
                mean[i] += z;
                sq += z * z;
            }
            total_sq += sq;
        }
        let per_component = sigma / 2.0; // sigma / sqrt(d)
        let clt = 4.0 * per_component / (draws as f64).sqrt();
        for m in &mean {
            assert!((m / draws as f64).abs() < clt, "component mean {}", m / draws as f64);
        }
        let mean_sq = total_sq / draws as f64;
        assert!(
            (mean_sq - sigma * sigma).abs() < 0.02 * sigma * sigma,
            "E||noise||^2 = {mean_sq}"
        );
    }

    #[test]
    fn minibatch_gradient_cases() {
        // Two scalar components with gradients 2y and 4y.
        let b = SpectrumBounds::new(2.0, 4.0).unwrap();
        let q1 = Quadratic::new(SymMatrix::from_diag(&[2.0]), vec![0.0], 0.0, b).unwrap();
        let q2 = Quadratic::new(SymMatrix::from_diag(&[4.0]), vec![0.0], 0.0, b).unwrap();
        let fs = FiniteSumProblem::new(vec![q1, q2], 1).unwrap();
        let y = vec![1.5];
        let first = SamplingVector::new(2, vec![0]).unwrap();
        assert_eq!(grad_minibatch(&fs, &y, &first).value, vec![3.0]);

        // Full batch equals the aggregate gradient.
        let full = SamplingVector::new(2, vec![0, 1]).unwrap();
        let got = grad_minibatch(&fs, &y, &full).value;
        let agg = fs.gradient(&y);
        assert!((got[0] - agg[0]).abs() < 1e-15);
    }

    #[test]
    fn minibatch_unbiased_over_all_subsets() {
        // Average over all 2-of-5 subsets equals the aggregate gradient.
        let mut rng = Rng::from_seed(3);
        let bounds = SpectrumBounds::new(0.5, 3.0).unwrap();
        let comps: Vec<Quadratic> = (0..5)
            .map(|_| {
                let h = SymMatrix::from_diag(&[rng.uniform_in(0.5, 3.0), rng.uniform_in(0.5, 3.0)]);
                let b_vec = vec![rng.normal(), rng.normal()];
                Quadratic::new(h, b_vec, 0.0, bounds).unwrap()
            })
            .collect();
        let fs = FiniteSumProblem::new(comps, 2).unwrap();
        let y = vec![0.7, -1.1];
        let mut acc = vec![0.0; 2];
        let mut count = 0;
        for i in 0..5 {
            for j in (i + 1)..5 {
                let nu = SamplingVector::new(5, vec![i, j]).unwrap();
                let g = grad_minibatch(&fs, &y, &nu);
                for (a, v) in acc.iter_mut().zip(&g.value) {
                    *a += v;
                }
                count += 1;
            }
        }
        let agg = fs.gradient(&y);
        for i in 0..2 {
            assert!((acc[i] / count as f64 - agg[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_vector_weights() {
        let nu = SamplingVector::new(5, vec![3, 1]).unwrap();
        assert_eq!(nu.indices(), &[1, 3]);
        let w = nu.weights();
        assert_eq!(w, vec![0.0, 0.5, 0.0, 0.5, 0.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(SamplingVector::new(3, vec![1, 1]).is_err());
        assert!(SamplingVector::new(3, vec![4]).is_err());
    }

    #[test]
    fn schedule_alternates_when_forced() {
        let mut rng = Rng::from_seed(4);
        let schedule = sampling_schedule(2, 1, 50, &mut rng).unwrap();
        for w in schedule.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        // n = 2, m = 1 is strictly alternating after the first draw.
        for w in schedule.windows(2) {
            assert_eq!(w[0].indices()[0], 1 - w[1].indices()[0]);
        }
    }

    #[test]
    fn schedule_never_repeats_consecutively() {
        let mut rng = Rng::from_seed(5);
        let schedule = sampling_schedule(7, 3, 100_000, &mut rng).unwrap();
        for w in schedule.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn schedule_marginal_frequencies() {
        let mut rng = Rng::from_seed(6);
        let k = 1_000_000;
        let schedule = sampling_schedule(50, 1, k, &mut rng).unwrap();
        let mut counts = vec![0usize; 50];
        for nu in &schedule {
            counts[nu.indices()[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / k as f64;
            assert!((freq - 0.02).abs() < 0.002, "frequency {freq}");
        }
    }

    #[test]
    fn schedule_rejects_full_batches() {
        let mut rng = Rng::from_seed(7);
        assert!(sampling_schedule(5, 5, 10, &mut rng).is_err());
        assert!(sampling_schedule(1, 1, 10, &mut rng).is_err());
    }

    #[test]
    fn logreg_balanced_and_deterministic() {
        let p = logreg_problem(9, 5, 100, 10, 5, 1.0, 1e-2).unwrap();
        let mut counts = vec![0usize; 5];
        for &l in p.labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 20));
        let again = logreg_problem(9, 5, 100, 10, 5, 1.0, 1e-2).unwrap();
        assert_eq!(p.features, again.features);
        assert_eq!(p.labels, again.labels);
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        let p = logreg_problem(10, 3, 40, 6, 3, 1.5, 5e-2).unwrap();
        let d = p.dim();
        let mut rng = Rng::from_seed(11);
        for _ in 0..20 {
            let w: Vec<f64> = (0..d).map(|_| rng.uniform_in(-0.5, 0.5)).collect();
            let g = p.gradient(&w);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for idx in 0..d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[idx] += h;
                wm[idx] -= h;
                let fd = (p.value(&wp) - p.value(&wm)) / (2.0 * h);
                let rel = (g[idx] - fd).abs() / g[idx].abs().max(1e-4);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-5, "finite-difference mismatch {worst}");
        }
    }

    #[test]
    fn logreg_hessian_matches_gradient_differences() {
        let p = logreg_problem(12, 3, 30, 4, 2, 1.0, 1e-1).unwrap();
        let d = p.dim();
        let w: Vec<f64> = (0..d).map(|i| 0.05 * (i as f64 - 3.0)).collect();
        let hess = p.hessian(&w);
        let h = 1e-5;
        for idx in (0..d).step_by(3) {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[idx] += h;
            wm[idx] -= h;
            let gp = p.gradient(&wp);
            let gm = p.gradient(&wm);
            for row in 0..d {
                let fd = (gp[row] - gm[row]) / (2.0 * h);
                assert!(
                    (hess.get(row, idx) - fd).abs() < 1e-6,
                    "H[{row},{idx}] = {} vs fd {fd}",
                    hess.get(row, idx)
                );
            }
        }
    }

    #[test]
    fn logreg_degenerate_separation_still_valid() {
        let p = logreg_problem(13, 4, 40, 6, 3, 0.0, 1e-1).unwrap();
        // Ridge keeps the Hessian bounded below by reg, so plain gradient
        // descent still converges even with indistinguishable classes.
        let hess = p.hessian(&vec![0.0; p.dim()]);
        let eig = sym_eigen_default(&hess).unwrap();
        assert!(eig.values[0] >= p.reg() - 1e-10);

        let l0 = eig.values[p.dim() - 1];
        let mut w = vec![0.0; p.dim()];
        for _ in 0..2000 {
            let g = p.gradient(&w);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= gi / l0;
            }
        }
        let grad_norm = norm2(&p.gradient(&w));
        assert!(grad_norm < 1e-8, "gradient norm {grad_norm}");
    }

    #[test]
    fn meta_digest_stable() {
        let a = worst_case_quadratic(5, 0.1, 1.0).unwrap();
        let b = worst_case_quadratic(5, 0.1, 1.0).unwrap();
        assert_eq!(a.meta.digest(), b.meta.digest());
        let c = worst_case_quadratic(6, 0.1, 1.0).unwrap();
        assert_ne!(a.meta.digest(), c.meta.digest());
    }
}
