//! Dense symmetric matrices, Jacobi eigendecomposition, and spectral
//! projectors.
//!
//! The eigensolver is a cyclic Jacobi iteration: deterministic, branch-free
//! in its sweep order, and therefore bit-reproducible for a given input on a
//! given platform. Convergence is declared when the off-diagonal Frobenius
//! mass drops below `1e-13` times the Frobenius norm of the input; the solver
//! gives up after 64 sweeps and reports the residual in the error.
//!
//! Throughout the crate, `‖·‖₂` denotes the Hilbert-Schmidt (Frobenius) norm
//! and `‖·‖_∞` the operator norm (largest absolute eigenvalue).

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 64;

/// Convergence threshold for the Jacobi iteration, relative to the Frobenius
/// norm of the input matrix.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-13;

/// Dense row-major matrix. General shape; used for eigenvector frames and
/// intermediate products that are not symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Mat::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. The data length must match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        for (pos, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: pos / cols,
                    col: pos % cols,
                });
            }
        }
        Ok(Mat { rows, cols, data })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Matrix product `self * other`.
    ///
    /// Panics if the inner dimensions disagree; shape mismatches here are
    /// programming errors, not runtime conditions.
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.rows,
            "matrix product shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let lhs = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(lhs.iter()) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "row mismatch in matrix subtraction");
        assert_eq!(self.cols, other.cols, "col mismatch in matrix subtraction");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "row mismatch in matrix addition");
        assert_eq!(self.cols, other.cols, "col mismatch in matrix addition");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Frobenius norm.
    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Copies column `j` into a vector.
    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
}

/// Dense symmetric matrix with full row-major storage.
///
/// Symmetry is enforced on construction: the generic constructor averages
/// `a_ij` and `a_ji`, and every specialized constructor writes mirrored
/// entries, so `get(i, j) == get(j, i)` holds exactly (bitwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Symmetrizes arbitrary square data: entries become `(a_ij + a_ji) / 2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        for (pos, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: pos / dim,
                    col: pos % dim,
                });
            }
        }
        let mut m = SymMatrix { dim, data };
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = 0.5 * (m.data[i * dim + j] + m.data[j * dim + i]);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        Ok(m)
    }

    pub fn from_mat(m: &Mat) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        SymMatrix::new(m.rows(), m.data().to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: i });
            }
        }
        let dim = values.len();
        let mut m = SymMatrix::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        Ok(m)
    }

    /// Assembles `Σ_j w_j u_j u_jᵀ` from the selected columns of `frame`.
    /// Only the upper triangle is computed; the lower is mirrored, so the
    /// result is exactly symmetric.
    pub fn weighted_outer(frame: &Mat, weights: &[(usize, f64)]) -> Result<Self> {
        let p = frame.rows();
        for &(j, _) in weights {
            if j >= frame.cols() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    dim: frame.cols(),
                });
            }
        }
        let mut m = SymMatrix::zeros(p);
        for &(j, w) in weights {
            if w == 0.0 {
                continue;
            }
            let u = frame.col(j);
            for a in 0..p {
                let wa = w * u[a];
                for b in a..p {
                    m.data[a * p + b] += wa * u[b];
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                m.data[b * p + a] = m.data[a * p + b];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "dim mismatch in symmetric addition");
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "dim mismatch in symmetric subtraction");
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// The square sub-block with row/column indices in `[lo, hi)`.
    pub fn block(&self, lo: usize, hi: usize) -> SymMatrix {
        assert!(lo <= hi && hi <= self.dim, "block range out of bounds");
        let m = hi - lo;
        let mut out = SymMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.data[i * m + j] = self.data[(lo + i) * self.dim + (lo + j)];
            }
        }
        out
    }
}

/// Hilbert-Schmidt inner product `⟨A, B⟩ = tr(AB)` of two symmetric matrices
/// of equal dimension.
///
/// Panics on dimension mismatch.
pub fn hs_inner(a: &SymMatrix, b: &SymMatrix) -> f64 {
    assert_eq!(
        a.dim(),
        b.dim(),
        "dim mismatch in Hilbert-Schmidt inner product"
    );
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| x * y)
        .sum()
}

/// Eigendecomposition of a symmetric matrix: `values` non-increasing,
/// `vectors` the orthonormal frame with eigenvector `j` in column `j`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in non-increasing order. Ties are broken by the
/// ascending column index of the converged rotation frame (a stable sort), so
/// repeated eigenvalues keep a deterministic eigenvector order.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomposition> {
    jacobi(a, true).map(|(values, vectors)| EigenDecomposition {
        values,
        vectors: vectors.expect("vectors requested"),
    })
}

/// Operator norm: the largest absolute eigenvalue, computed by the same
/// Jacobi iteration without accumulating the rotation frame.
pub fn op_norm(a: &SymMatrix) -> Result<f64> {
    let (values, _) = jacobi(a, false)?;
    Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Operator norm of a general (possibly non-symmetric) square matrix:
/// the largest singular value, obtained as `sqrt(λ₁(MᵀM))`.
pub fn op_norm_general(m: &Mat) -> Result<f64> {
    assert_eq!(m.rows(), m.cols(), "operator norm requires a square matrix");
    let gram = SymMatrix::from_mat(&m.transpose().mul(m))?;
    let (values, _) = jacobi(&gram, false)?;
    let top = values.iter().fold(0.0f64, |acc, v| acc.max(*v));
    Ok(top.max(0.0).sqrt())
}

fn off_diagonal_norm(data: &[f64], p: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            let v = data[i * p + j];
            sum += v * v;
        }
    }
    (2.0 * sum).sqrt()
}

/// Cyclic Jacobi iteration. Returns eigenvalues sorted non-increasing and,
/// when requested, the matching eigenvector frame.
fn jacobi(a: &SymMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<Mat>)> {
    let p = a.dim();
    for (pos, &v) in a.data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: pos / p,
                col: pos % p,
            });
        }
    }
    if p == 0 {
        return Ok((Vec::new(), want_vectors.then(|| Mat::identity(0))));
    }

    let mut m = a.data.clone();
    let mut v = want_vectors.then(|| Mat::identity(p));
    let tolerance = OFF_DIAGONAL_TOLERANCE * a.frob_norm();

    let mut converged = false;
    let mut residual = off_diagonal_norm(&m, p);
    let mut sweeps = 0;
    while sweeps <= MAX_SWEEPS {
        if residual <= tolerance {
            converged = true;
            break;
        }
        if sweeps == MAX_SWEEPS {
            break;
        }
        for i in 0..p.saturating_sub(1) {
            for j in (i + 1)..p {
                let aij = m[i * p + j];
                if aij == 0.0 {
                    continue;
                }
                // Rotation angle from the standard two-sided Jacobi formulas;
                // the guarded form of t never overflows.
                let tau = (m[j * p + j] - m[i * p + i]) / (2.0 * aij);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let aii = m[i * p + i];
                let ajj = m[j * p + j];
                m[i * p + i] = aii - t * aij;
                m[j * p + j] = ajj + t * aij;
                m[i * p + j] = 0.0;
                m[j * p + i] = 0.0;
                for k in 0..p {
                    if k == i || k == j {
                        continue;
                    }
                    let aik = m[k * p + i];
                    let ajk = m[k * p + j];
                    let new_i = c * aik - s * ajk;
                    let new_j = s * aik + c * ajk;
                    m[k * p + i] = new_i;
                    m[i * p + k] = new_i;
                    m[k * p + j] = new_j;
                    m[j * p + k] = new_j;
                }
                if let Some(frame) = v.as_mut() {
                    for k in 0..p {
                        let vki = frame.get(k, i);
                        let vkj = frame.get(k, j);
                        frame.set(k, i, c * vki - s * vkj);
                        frame.set(k, j, s * vki + c * vkj);
                    }
                }
            }
        }
        sweeps += 1;
        residual = off_diagonal_norm(&m, p);
    }

    if !converged {
        return Err(Error::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
            tolerance,
        });
    }

    let raw: Vec<f64> = (0..p).map(|i| m[i * p + i]).collect();
    let mut order: Vec<usize> = (0..p).collect();
    // Stable descending sort: ties keep the rotation-frame column order.
    order.sort_by(|&x, &y| raw[y].partial_cmp(&raw[x]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let vectors = v.map(|frame| {
        let mut sorted = Mat::zeros(p, p);
        for (new_col, &old_col) in order.iter().enumerate() {
            for row in 0..p {
                sorted.set(row, new_col, frame.get(row, old_col));
            }
        }
        sorted
    });
    Ok((values, vectors))
}

/// Orthogonal projector onto the span of selected frame columns.
#[derive(Debug, Clone)]
pub struct Projector {
    matrix: SymMatrix,
    rank: usize,
}

/// Gram residual allowed when validating a frame's selected columns.
pub const FRAME_GRAM_TOLERANCE: f64 = 1e-8;
/// Idempotence and trace residual allowed on a constructed projector.
pub const PROJECTOR_TOLERANCE: f64 = 1e-9;

/// Builds the orthogonal projector `Σ_{j ∈ cols} u_j u_jᵀ` from columns of an
/// orthonormal frame.
///
/// The selected columns are validated to be orthonormal (Gram residual at
/// most `1e-8`), and the assembled matrix is checked for idempotence and
/// trace equal to the rank (residuals at most `1e-9`).
pub fn build_projector(frame: &Mat, cols: &[usize]) -> Result<Projector> {
    let p = frame.rows();
    let mut seen = vec![false; frame.cols()];
    for &j in cols {
        if j >= frame.cols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: frame.cols(),
            });
        }
        if seen[j] {
            return Err(Error::InvalidParameter(format!(
                "duplicate projector column index {j}"
            )));
        }
        seen[j] = true;
    }

    let selected: Vec<Vec<f64>> = cols.iter().map(|&j| frame.col(j)).collect();
    let mut gram_residual = 0.0f64;
    for (a, ua) in selected.iter().enumerate() {
        for (b, ub) in selected.iter().enumerate().skip(a) {
            let dot: f64 = ua.iter().zip(ub.iter()).map(|(x, y)| x * y).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            gram_residual = gram_residual.max((dot - target).abs());
        }
    }
    if gram_residual > FRAME_GRAM_TOLERANCE {
        return Err(Error::NonOrthonormalFrame {
            residual: gram_residual,
        });
    }

    let mut matrix = SymMatrix::zeros(p);
    for u in &selected {
        for a in 0..p {
            let ua = u[a];
            for b in a..p {
                matrix.data[a * p + b] += ua * u[b];
            }
        }
    }
    for a in 0..p {
        for b in (a + 1)..p {
            matrix.data[b * p + a] = matrix.data[a * p + b];
        }
    }

    let rank = cols.len();
    let idem_residual = matrix
        .to_mat()
        .mul(&matrix.to_mat())
        .sub(&matrix.to_mat())
        .max_abs();
    let trace_residual = (matrix.trace() - rank as f64).abs();
    if idem_residual > PROJECTOR_TOLERANCE || trace_residual > PROJECTOR_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "projector validation failed (idempotence residual {idem_residual:.3e}, \
             trace residual {trace_residual:.3e})"
        )));
    }
    Ok(Projector { matrix, rank })
}

impl Projector {
    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// The complementary projector `I − P`. Idempotence is inherited from
    /// the original, so no revalidation is performed.
    pub fn complement(&self) -> Projector {
        let dim = self.matrix.dim();
        Projector {
            matrix: SymMatrix::identity(dim).sub(&self.matrix),
            rank: dim - self.rank,
        }
    }
}
