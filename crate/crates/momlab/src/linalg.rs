//! Small dense linear algebra: symmetric eigendecomposition via cyclic
//! Jacobi rotations, closed-form 2x2 spectral tools, and the
//! block-diagonalization of the optimizer's 2d x 2d state-transition
//! matrix into d independent 2x2 blocks.
//!
//! Everything is stored dense row-major; problem dimensions stay below a
//! few hundred in all experiments, so no sparse or blocked formats are
//! needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix entries are not exactly symmetric at ({row},{col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(
        "Jacobi eigensolver did not converge: off-diagonal mass {off_mass:.3e} > tol {tol:.3e} after {sweeps} sweeps"
    )]
    NoConvergence {
        sweeps: usize,
        off_mass: f64,
        tol: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Budget of cyclic sweeps before the eigensolver gives up. Generous for
/// the dimensions used here; hitting it signals pathological input.
pub const JACOBI_MAX_SWEEPS: usize = 100;

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

/// Dot product with four-way accumulation. The fixed reassociation order
/// keeps results identical across runs and platforms while letting the
/// lanes pipeline.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    for (x, y) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in a.chunks_exact(4).remainder().iter().zip(b.chunks_exact(4).remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// ---------------------------------------------------------------------------
// Dense rectangular matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> DenseMat {
        let mut t = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(&self.data[i * self.cols..(i + 1) * self.cols], x);
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseMat) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Determinant by LU with partial pivoting. Intended for the small
    /// dimensions used in tests and problem construction.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "det needs a square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, b.len(), "solve rhs length mismatch");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col] == 0.0 {
                return Err(LinalgError::InvalidParameter(
                    "singular matrix in solve".into(),
                ));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut v = x[col];
            for j in (col + 1)..n {
                v -= a[col * n + j] * x[j];
            }
            x[col] = v / a[col * n + col];
        }
        Ok(x)
    }
}

// ---------------------------------------------------------------------------
// Symmetric matrix
// ---------------------------------------------------------------------------

/// Dense symmetric matrix. Symmetry is exact by construction: entries are
/// mirrored bit-for-bit, and [`SymMatrix::new`] rejects input where
/// `entries[i][j] != entries[j][i]` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::InvalidParameter("dim must be >= 1".into()));
        }
        if data.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch(format!(
                "expected {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Build from the lower triangle of `f(i, j)` (`j <= i`), mirroring the
    /// result so symmetry holds exactly even when `f` itself is only
    /// symmetric up to rounding.
    pub fn from_fn_symmetric(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn_symmetric(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let d = diag.len();
        Self::from_fn_symmetric(d, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, x.len(), "mul_vec shape mismatch");
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            out[i] = dot(&self.data[i * self.dim..(i + 1) * self.dim], x);
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DenseMat {
        DenseMat {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// Scaled sum `a*self + b*other`, mirrored exactly.
    pub fn scaled_add(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix::from_fn_symmetric(self.dim, |i, j| a * self.get(i, j) + b * other.get(i, j))
    }
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigendecomposition `H = U diag(values) U^T` with eigenvalues ascending
/// and eigenvectors in the corresponding columns of `vectors`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: DenseMat,
}

impl EigenDecomp {
    /// Max-entry deviation of `U^T U` from the identity.
    pub fn orthogonality_residual(&self) -> f64 {
        let ut = self.vectors.transpose();
        let prod = ut.matmul(&self.vectors);
        prod.max_abs_diff(&DenseMat::identity(self.values.len()))
    }

    /// Max-entry deviation of `U diag(values) U^T` from `h`.
    pub fn reconstruction_residual(&self, h: &SymMatrix) -> f64 {
        let d = self.values.len();
        let mut lam = DenseMat::zeros(d, d);
        for i in 0..d {
            lam.set(i, i, self.values[i]);
        }
        let rec = self.vectors.matmul(&lam).matmul(&self.vectors.transpose());
        rec.max_abs_diff(&h.to_dense())
    }
}

/// Default Jacobi tolerance for a given matrix: `1e-12 * ||H||_F`.
pub fn default_eigen_tol(h: &SymMatrix) -> f64 {
    let f = h.frobenius();
    if f == 0.0 {
        1e-300
    } else {
        1e-12 * f
    }
}

fn off_diagonal_mass(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a[i * n + j];
            s += 2.0 * v * v;
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps annihilate each off-diagonal entry in turn until the off-diagonal
/// Frobenius mass drops below `tol`. Eigenvalues are returned ascending,
/// ties broken by original index; eigenvectors are the matching columns of
/// an orthogonal matrix.
pub fn sym_eigen(h: &SymMatrix, tol: f64) -> Result<EigenDecomp, LinalgError> {
    if !(tol > 0.0) {
        return Err(LinalgError::InvalidParameter("tol must be > 0".into()));
    }
    let n = h.dim;
    let mut a = h.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let mut converged = n == 1 || off_diagonal_mass(&a, n) < tol;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation angle chosen to zero a[p][q].
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta == 0.0 {
                    1.0
                } else {
                    let s = if theta > 0.0 { 1.0 } else { -1.0 };
                    s / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let ajp = a[j * n + p];
                    let ajq = a[j * n + q];
                    let np = ajp - s * (ajq + tau * ajp);
                    let nq = ajq + s * (ajp - tau * ajq);
                    a[j * n + p] = np;
                    a[p * n + j] = np;
                    a[j * n + q] = nq;
                    a[q * n + j] = nq;
                }
                for j in 0..n {
                    let vjp = v[j * n + p];
                    let vjq = v[j * n + q];
                    v[j * n + p] = vjp - s * (vjq + tau * vjp);
                    v[j * n + q] = vjq + s * (vjp - tau * vjq);
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_mass(&a, n) < tol;
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps,
            off_mass: off_diagonal_mass(&a, n),
            tol,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DenseMat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v[row * n + src]);
        }
    }
    Ok(EigenDecomp { values, vectors })
}

/// [`sym_eigen`] with the default tolerance `1e-12 * ||H||_F`.
pub fn sym_eigen_default(h: &SymMatrix) -> Result<EigenDecomp, LinalgError> {
    sym_eigen(h, default_eigen_tol(h))
}

// ---------------------------------------------------------------------------
// 2x2 tools
// ---------------------------------------------------------------------------

/// Dense 2x2 matrix with closed-form spectral helpers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    /// The 2x2 block governing one eigendirection of the ASG recursion:
    /// `[[1 - a(1+b)l, b^2], [-a l, b]]` for step-size `a`, momentum `b`,
    /// and curvature `l`.
    pub fn asg_block(lambda: f64, alpha: f64, beta: f64) -> Self {
        Self::new(
            1.0 - alpha * (1.0 + beta) * lambda,
            beta * beta,
            -alpha * lambda,
            beta,
        )
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn pow(&self, k: usize) -> Mat2 {
        let mut out = Mat2::identity();
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat2 {
        Mat2::new(c * self.a11, c * self.a12, c * self.a21, c * self.a22)
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        (self.a11 - o.a11)
            .abs()
            .max((self.a12 - o.a12).abs())
            .max((self.a21 - o.a21).abs())
            .max((self.a22 - o.a22).abs())
    }
}

/// Both eigenvalues of a 2x2 matrix: roots of `x^2 - tr(M) x + det(M)`.
///
/// Uses the numerically stable quadratic formula (larger-magnitude root
/// first, the other derived from the determinant) and returns a complex
/// conjugate pair when the discriminant is negative.
pub fn eig2(m: &Mat2) -> (Complex64, Complex64) {
    let tr = m.trace();
    let det = m.det();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let big = if tr >= 0.0 { tr + sq } else { tr - sq };
        let r1 = 0.5 * big;
        let r2 = if r1 == 0.0 { 0.0 } else { det / r1 };
        (Complex64::new(r1, 0.0), Complex64::new(r2, 0.0))
    } else {
        let re = 0.5 * tr;
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(re, im), Complex64::new(re, -im))
    }
}

/// Spectral radius: max modulus over both eigenvalues.
pub fn spectral_radius2(m: &Mat2) -> f64 {
    let tr = m.trace();
    let det = m.det();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        0.5 * (tr.abs() + disc.sqrt())
    } else {
        // Complex pair: |root|^2 = det (necessarily positive here).
        det.sqrt()
    }
}

/// Spectral norm (largest singular value) via the closed-form eigenvalue
/// of the 2x2 Gram matrix `M^T M`. Always at least the spectral radius.
pub fn spectral_norm2(m: &Mat2) -> f64 {
    let g11 = m.a11 * m.a11 + m.a21 * m.a21;
    let g22 = m.a12 * m.a12 + m.a22 * m.a22;
    let g12 = m.a11 * m.a12 + m.a21 * m.a22;
    // (g11-g22)^2 + 4 g12^2 is a sum of squares, so no cancellation.
    let half_gap = 0.5 * ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt();
    (0.5 * (g11 + g22) + half_gap).max(0.0).sqrt()
}

// ---------------------------------------------------------------------------
// Permutation and block-diagonalization
// ---------------------------------------------------------------------------

/// Permutation on `{0, .., 2d-1}` that interleaves the two halves of a
/// vector: `(x_0..x_{d-1}, x_d..x_{2d-1}) -> (x_0, x_d, x_1, x_{d+1}, ..)`.
///
/// Conjugating a 2x2 block matrix whose four blocks are all diagonal by
/// this permutation produces a block-diagonal matrix of d independent 2x2
/// blocks, one per diagonal position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Permutation {
    size: usize,
    /// `map[i]` is the source index: `(P x)[i] = x[map[i]]`.
    map: Vec<usize>,
}

impl Permutation {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.size];
        for (i, &src) in self.map.iter().enumerate() {
            inv[src] = i;
        }
        Permutation {
            size: self.size,
            map: inv,
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.size);
        self.map.iter().map(|&src| x[src]).collect()
    }

    /// `P M P^T` by index gathering (exact, no arithmetic).
    pub fn conjugate(&self, m: &DenseMat) -> DenseMat {
        assert_eq!(m.rows(), self.size);
        assert_eq!(m.cols(), self.size);
        let mut out = DenseMat::zeros(self.size, self.size);
        for i in 0..self.size {
            for j in 0..self.size {
                out.set(i, j, m.get(self.map[i], self.map[j]));
            }
        }
        out
    }

    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.size, other.size);
        let map = self.map.iter().map(|&m| other.map[m]).collect();
        Permutation {
            size: self.size,
            map,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }
}

/// The interleaving permutation on `2d` indices: odd output rows (1-based)
/// read from the first half, even output rows from the second half.
pub fn build_permutation(d: usize) -> Permutation {
    assert!(d >= 1, "d must be >= 1");
    let size = 2 * d;
    let mut map = vec![0usize; size];
    for i in 0..size {
        map[i] = if i % 2 == 0 { i / 2 } else { d + (i - 1) / 2 };
    }
    Permutation { size, map }
}

/// State-transition matrix of the momentum recursion for a quadratic with
/// Hessian `h`: `[[I - a(1+b)H, b^2 I], [-a H, b I]]`.
pub fn system_matrix(h: &SymMatrix, alpha: f64, beta: f64) -> DenseMat {
    let d = h.dim();
    let mut a = DenseMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let hij = h.get(i, j);
            let mut top_left = -alpha * (1.0 + beta) * hij;
            if i == j {
                top_left += 1.0;
            }
            a.set(i, j, top_left);
            a.set(d + i, j, -alpha * hij);
        }
        a.set(i, d + i, beta * beta);
        a.set(d + i, d + i, beta);
    }
    a
}

/// Block-diagonalize the state-transition matrix of a quadratic: returns
/// one [`Mat2::asg_block`] per eigenvalue of `h`, ascending.
///
/// Conjugating [`system_matrix`] by `diag(U^T, U^T)` followed by
/// [`build_permutation`] reproduces these blocks on the diagonal.
pub fn block_diagonalize(
    h: &SymMatrix,
    alpha: f64,
    beta: f64,
) -> Result<Vec<Mat2>, LinalgError> {
    let eig = sym_eigen_default(h)?;
    Ok(eig
        .values
        .iter()
        .map(|&lambda| Mat2::asg_block(lambda, alpha, beta))
        .collect())
}

/// Embed `U^T` twice on the diagonal of a `2d x 2d` matrix.
pub fn double_embed_transpose(u: &DenseMat) -> DenseMat {
    let d = u.rows();
    assert_eq!(d, u.cols());
    let mut w = DenseMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = u.get(j, i); // transpose
            w.set(i, j, v);
            w.set(d + i, d + j, v);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_symmetric(dim: usize, rng: &mut Rng) -> SymMatrix {
        let raw: Vec<f64> = (0..dim * dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        SymMatrix::from_fn_symmetric(dim, |i, j| 0.5 * (raw[i * dim + j] + raw[j * dim + i]))
    }

    /// Symmetric matrix with prescribed spectrum via random rotations.
    fn symmetric_with_spectrum(spectrum: &[f64], rng: &mut Rng) -> SymMatrix {
        let d = spectrum.len();
        // Random orthogonal factor from a product of plane rotations.
        let mut u = DenseMat::identity(d);
        for p in 0..d {
            for q in (p + 1)..d {
                let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
                let (s, c) = angle.sin_cos();
                for r in 0..d {
                    let up = u.get(r, p);
                    let uq = u.get(r, q);
                    u.set(r, p, c * up - s * uq);
                    u.set(r, q, s * up + c * uq);
                }
            }
        }
        SymMatrix::from_fn_symmetric(d, |i, j| {
            (0..d).map(|k| u.get(i, k) * spectrum[k] * u.get(j, k)).sum()
        })
    }

    #[test]
    fn sym_matrix_rejects_asymmetry() {
        let err = SymMatrix::new(2, vec![1.0, 2.0, 2.0 + 1e-15, 1.0]);
        assert!(matches!(err, Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn eigen_identity() {
        let h = SymMatrix::identity(3);
        let e = sym_eigen_default(&h).unwrap();
        for &v in &e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(e.orthogonality_residual() < 1e-10);
    }

    #[test]
    fn eigen_already_diagonal() {
        let h = SymMatrix::from_diag(&[0.05, 100.0]);
        let e = sym_eigen_default(&h).unwrap();
        assert!((e.values[0] - 0.05).abs() < 1e-14);
        assert!((e.values[1] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_two_by_two_hand_roots() {
        // Characteristic polynomial x^2 - 4x + 3 has roots 1 and 3.
        let h = SymMatrix::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eigen_default(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        assert!(e.orthogonality_residual() < 1e-10);
        assert!(e.reconstruction_residual(&h) < 1e-8 * h.max_abs());
    }

    #[test]
    fn eigen_trace_and_det_consistency() {
        let mut rng = Rng::from_seed(31);
        for dim in [2usize, 3, 5, 8] {
            for _ in 0..10 {
                let h = random_symmetric(dim, &mut rng);
                let e = sym_eigen_default(&h).unwrap();
                let tr: f64 = h.trace();
                let sum: f64 = e.values.iter().sum();
                assert!(
                    (tr - sum).abs() <= 1e-8 * tr.abs().max(1.0),
                    "trace {tr} vs eigenvalue sum {sum}"
                );
                let det = h.to_dense().det();
                let prod: f64 = e.values.iter().product();
                assert!(
                    (det - prod).abs() <= 1e-6 * det.abs().max(1e-12),
                    "det {det} vs eigenvalue product {prod}"
                );
                assert!(e.orthogonality_residual() < 1e-10);
                assert!(e.reconstruction_residual(&h) < 1e-8 * h.max_abs().max(1e-30));
                for w in e.values.windows(2) {
                    assert!(w[0] <= w[1]);
                }
            }
        }
    }

    #[test]
    fn eig2_identity_and_nilpotent() {
        let (r1, r2) = eig2(&Mat2::identity());
        assert_eq!((r1.re, r1.im), (1.0, 0.0));
        assert_eq!((r2.re, r2.im), (1.0, 0.0));

        // asg block at unit normalized curvature: trace and det both
        // vanish, so the block is nilpotent with both roots at zero.
        // Dyadic momenta keep the cancellation exact in floating point.
        for beta in [0.0, 0.5, 0.25, -0.75] {
            let b = Mat2::asg_block(1.0, 1.0, beta);
            assert!((b.a11 + beta).abs() < 1e-15);
            let (r1, r2) = eig2(&b);
            assert!(r1.norm() < 1e-12 && r2.norm() < 1e-12);
        }
        // Generic momenta leave an ulp-level residue in trace and
        // determinant; the roots then sit at the square root of it.
        for beta in [0.3, 0.9, -0.4] {
            let b = Mat2::asg_block(1.0, 1.0, beta);
            let (r1, r2) = eig2(&b);
            assert!(r1.norm() < 1e-7 && r2.norm() < 1e-7);
        }
    }

    #[test]
    fn eig2_critically_damped_block() {
        // Q = 4 and the matching momentum make the slow block a double
        // root at 1/2 = (sqrt(Q)-1)/sqrt(Q).
        let l = 1.0;
        let mu = 0.25;
        let beta = 1.0 / 3.0;
        let b = Mat2::asg_block(mu, 1.0 / l, beta);
        let (r1, r2) = eig2(&b);
        assert!((r1.norm() - 0.5).abs() < 1e-7, "r1 {r1}");
        assert!((r2.norm() - 0.5).abs() < 1e-7, "r2 {r2}");
        assert!((spectral_radius2(&b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eig2_complex_conjugate_pair() {
        let m = Mat2::new(0.0, -1.0, 1.0, 0.0);
        let (r1, r2) = eig2(&m);
        assert!((r1.im - 1.0).abs() < 1e-15);
        assert!((r2.im + 1.0).abs() < 1e-15);
        assert_eq!(r1.re, r2.re);
    }

    #[test]
    fn spectral_radius_of_mixed_block_product() {
        // Q = 16 with matched parameters: one fast block times the square
        // of the slow block has radius (3/4)^3 * 2.
        let l = 1.0;
        let mu = 1.0 / 16.0;
        let beta = 3.0 / 5.0;
        let b_l = Mat2::asg_block(l, 1.0 / l, beta);
        let b_mu = Mat2::asg_block(mu, 1.0 / l, beta);
        let prod = b_l.mul(&b_mu).mul(&b_mu);
        assert!(
            (spectral_radius2(&prod) - 0.84375).abs() < 1e-10,
            "radius {}",
            spectral_radius2(&prod)
        );
    }

    #[test]
    fn spectral_norm_basics() {
        assert!((spectral_norm2(&Mat2::identity()) - 1.0).abs() < 1e-15);
        assert!((spectral_norm2(&Mat2::new(2.0, 0.0, 0.0, 3.0)) - 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn norm_dominates_radius(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            c in -3.0f64..3.0, d in -3.0f64..3.0,
        ) {
            let m = Mat2::new(a, b, c, d);
            prop_assert!(spectral_norm2(&m) >= spectral_radius2(&m) - 1e-12);
        }

        #[test]
        fn gelfand_side_inequality(
            a in -1.5f64..1.5, b in -1.5f64..1.5,
            c in -1.5f64..1.5, d in -1.5f64..1.5,
            k in 1usize..=20,
        ) {
            // rho(M)^k <= ||M^k|| for every k.
            let m = Mat2::new(a, b, c, d);
            let rho_k = spectral_radius2(&m).powi(k as i32);
            let norm_pow = spectral_norm2(&m.pow(k));
            prop_assert!(rho_k <= norm_pow * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn permutation_single_block_is_identity() {
        let p = build_permutation(1);
        assert!(p.is_identity());
    }

    #[test]
    fn permutation_d2_mapping() {
        // Interleaving rule for d = 2: rows read sources (0, 2, 1, 3).
        let p = build_permutation(2);
        assert_eq!(p.map(), &[0, 2, 1, 3]);
        assert!(p.compose(&p.inverse()).is_identity());
    }

    #[test]
    fn permutation_conjugation_identity_exact() {
        // Conjugating a 2x2 block matrix of diagonal blocks must produce
        // exact 2x2 diagonal blocks, with no arithmetic involved.
        let d = 4;
        let mut rng = Rng::from_seed(99);
        let blocks: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| (rng.index(19) as f64) - 9.0).collect())
            .collect();
        let mut m = DenseMat::zeros(2 * d, 2 * d);
        for i in 0..d {
            m.set(i, i, blocks[0][i]);
            m.set(i, d + i, blocks[1][i]);
            m.set(d + i, i, blocks[2][i]);
            m.set(d + i, d + i, blocks[3][i]);
        }
        let p = build_permutation(d);
        let c = p.conjugate(&m);
        for j in 0..d {
            assert_eq!(c.get(2 * j, 2 * j), blocks[0][j]);
            assert_eq!(c.get(2 * j, 2 * j + 1), blocks[1][j]);
            assert_eq!(c.get(2 * j + 1, 2 * j), blocks[2][j]);
            assert_eq!(c.get(2 * j + 1, 2 * j + 1), blocks[3][j]);
        }
        // Everything off the 2x2 diagonal blocks is exactly zero.
        for i in 0..2 * d {
            for j in 0..2 * d {
                if i / 2 != j / 2 {
                    assert_eq!(c.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn block_diagonalize_scalar_and_diagonal() {
        let lambda = 0.7;
        let (alpha, beta) = (0.9, 0.4);
        let h = SymMatrix::from_diag(&[lambda, lambda]);
        let blocks = block_diagonalize(&h, alpha, beta).unwrap();
        assert_eq!(blocks.len(), 2);
        let expected = Mat2::asg_block(lambda, alpha, beta);
        for b in &blocks {
            assert!(b.max_abs_diff(&expected) < 1e-12);
        }

        let (mu, l) = (0.1, 2.0);
        let h = SymMatrix::from_diag(&[mu, l]);
        let blocks = block_diagonalize(&h, alpha, beta).unwrap();
        assert!(blocks[0].max_abs_diff(&Mat2::asg_block(mu, alpha, beta)) < 1e-12);
        assert!(blocks[1].max_abs_diff(&Mat2::asg_block(l, alpha, beta)) < 1e-12);
    }

    #[test]
    fn block_diagonalize_reconstruction_residual() {
        let mut rng = Rng::from_seed(2024);
        let (mu, l) = (0.2, 3.0);
        for _ in 0..5 {
            let spectrum: Vec<f64> = (0..4).map(|_| rng.uniform_in(mu, l)).collect();
            let h = symmetric_with_spectrum(&spectrum, &mut rng);
            let (alpha, beta) = (rng.uniform_in(0.05, 0.6), rng.uniform_in(-0.9, 0.9));

            let eig = sym_eigen_default(&h).unwrap();
            let a = system_matrix(&h, alpha, beta);
            let w = double_embed_transpose(&eig.vectors);
            let rotated = w.matmul(&a).matmul(&w.transpose());
            let p = build_permutation(h.dim());
            let conj = p.conjugate(&rotated);

            let blocks = block_diagonalize(&h, alpha, beta).unwrap();
            let mut expected = DenseMat::zeros(2 * h.dim(), 2 * h.dim());
            for (j, b) in blocks.iter().enumerate() {
                expected.set(2 * j, 2 * j, b.a11);
                expected.set(2 * j, 2 * j + 1, b.a12);
                expected.set(2 * j + 1, 2 * j, b.a21);
                expected.set(2 * j + 1, 2 * j + 1, b.a22);
            }
            let residual = conj.max_abs_diff(&expected);
            assert!(residual < 1e-10, "residual {residual}");
        }
    }

    #[test]
    fn eigenvalue_moduli_match_across_routes() {
        // Moduli of the system matrix eigenvalues, read off the conjugated
        // 2x2 blocks, agree with the closed-form blocks.
        let mut rng = Rng::from_seed(4096);
        let spectrum: Vec<f64> = (0..5).map(|_| rng.uniform_in(0.3, 2.5)).collect();
        let h = symmetric_with_spectrum(&spectrum, &mut rng);
        let (alpha, beta) = (0.35, 0.55);

        let eig = sym_eigen_default(&h).unwrap();
        let a = system_matrix(&h, alpha, beta);
        let w = double_embed_transpose(&eig.vectors);
        let conj = build_permutation(h.dim()).conjugate(&w.matmul(&a).matmul(&w.transpose()));

        let mut extracted: Vec<f64> = Vec::new();
        let mut formula: Vec<f64> = Vec::new();
        for j in 0..h.dim() {
            let block = Mat2::new(
                conj.get(2 * j, 2 * j),
                conj.get(2 * j, 2 * j + 1),
                conj.get(2 * j + 1, 2 * j),
                conj.get(2 * j + 1, 2 * j + 1),
            );
            let (e1, e2) = eig2(&block);
            extracted.push(e1.norm());
            extracted.push(e2.norm());
            let (f1, f2) = eig2(&Mat2::asg_block(eig.values[j], alpha, beta));
            formula.push(f1.norm());
            formula.push(f2.norm());
        }
        extracted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        formula.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in extracted.iter().zip(&formula) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        // Non-circular cross-check: |det(A)| equals the product of moduli.
        let det_a = a.det().abs();
        let prod: f64 = formula.iter().product();
        assert!((det_a - prod).abs() < 1e-8 * det_a.max(1e-12));
    }

    #[test]
    fn solve_recovers_known_vector() {
        let mut rng = Rng::from_seed(8);
        let h = random_symmetric(6, &mut rng);
        // Shift to make it comfortably nonsingular.
        let shifted = h.scaled_add(1.0, &SymMatrix::identity(6), 5.0);
        let x: Vec<f64> = (0..6).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let b = shifted.mul_vec(&x);
        let got = shifted.to_dense().solve(&b).unwrap();
        for (a, b) in got.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
