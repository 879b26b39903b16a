//! Symmetric matrices, eigendecomposition and the normalized matrix exponential.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Dense real symmetric matrix with finite entries.
///
/// Construction symmetrizes the input as `(M + M^T) / 2`, so entry `(i, j)`
/// and `(j, i)` are always bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix must be at least 1x1".into()));
        }
        if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
            let n = m.nrows();
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos % n,
                pos / n
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds from `n * n` entries in row-major order.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "row-major entries",
                expected: n * n,
                found: entries.len(),
            });
        }
        Self::new(Matrix::from_row_slice(n, n, entries))
    }

    /// Builds from a list of rows; handy for fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: n,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_slice(n, &entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    /// Symmetrizes without checking finiteness. Callers guarantee finite input.
    pub(crate) fn symmetrized(mut m: Matrix) -> Self {
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Frobenius inner product `tr(self * other)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `self + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self(m)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// (columns of `eigenvectors`).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn reconstruct_with<F: Fn(f64) -> f64>(&self, f: F) -> SymMatrix {
        let weights: Vector = self.eigenvalues.map(f);
        weighted_outer(&self.eigenvectors, &weights)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        weighted_outer(&self.eigenvectors, &self.eigenvalues)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }
}

/// `V diag(w) V^T`, symmetrized.
pub(crate) fn weighted_outer(v: &Matrix, w: &Vector) -> SymMatrix {
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[j];
    }
    SymMatrix::symmetrized(scaled * v.transpose())
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn eigh(m: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = m.n();
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidInput("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "eigensolver produced non-finite values".into(),
        ));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Ascending eigenvalues only.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vector> {
    let mut vals: Vec<f64> = m
        .as_matrix()
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "eigensolver produced non-finite values".into(),
        ));
    }
    vals.sort_by(f64::total_cmp);
    Ok(Vector::from_vec(vals))
}

/// `(lambda_min, lambda_max)`.
pub fn lambda_extremes(m: &SymMatrix) -> Result<(f64, f64)> {
    let vals = eigenvalues(m)?;
    Ok((vals[0], vals[vals.len() - 1]))
}

/// `log sum_k exp(x_k)`, shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `exp(x_k - log_sum_exp(x))`.
pub fn softmax(xs: &[f64]) -> (Vec<f64>, f64) {
    let lse = log_sum_exp(xs);
    (xs.iter().map(|&x| (x - lse).exp()).collect(), lse)
}

/// Trace-one positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(SymMatrix);

impl DensityMatrix {
    /// Roundoff allowance used when validating a candidate density matrix.
    pub const TOLERANCE: f64 = 1e-12;

    /// Validates PSD-ness and unit trace up to `tol`.
    pub fn try_new(m: SymMatrix, tol: f64) -> Result<Self> {
        let trace_err = (m.trace() - 1.0).abs();
        if trace_err > tol {
            return Err(Error::InvalidInput(format!(
                "trace differs from 1 by {trace_err:e}"
            )));
        }
        let (lo, _) = lambda_extremes(&m)?;
        if lo < -tol {
            return Err(Error::InvalidInput(format!(
                "smallest eigenvalue {lo:e} is negative"
            )));
        }
        Ok(Self(m))
    }

    /// `I / n`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self(SymMatrix::identity(n).scaled(1.0 / n as f64))
    }

    /// `v v^T / |v|^2`.
    pub fn pure(v: &Vector) -> Result<Self> {
        let norm2 = v.norm_squared();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::InvalidInput(
                "pure state needs a nonzero finite vector".into(),
            ));
        }
        Ok(Self(SymMatrix::symmetrized(v * v.transpose() / norm2)))
    }

    /// `V diag(p) V^T` for probabilities `p`; the caller guarantees `p >= 0`, `sum p = 1`.
    pub(crate) fn from_spectrum(v: &Matrix, p: &Vector) -> Self {
        Self(weighted_outer(v, p))
    }

    pub(crate) fn from_sym_unchecked(m: SymMatrix) -> Self {
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    /// Von Neumann entropy `-tr(X log X)` from a fresh eigendecomposition.
    /// Eigenvalues that roundoff pushed to or below zero contribute nothing.
    pub fn entropy(&self) -> Result<f64> {
        let vals = eigenvalues(&self.0)?;
        Ok(-vals
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>())
    }
}

/// Normalized matrix exponential `exp(M) / tr exp(M)` and `log tr exp(M)`.
pub fn exp1(m: &SymMatrix) -> Result<(DensityMatrix, f64)> {
    let dec = eigh(m)?;
    let (p, log_z) = softmax(dec.eigenvalues.as_slice());
    let density = DensityMatrix::from_spectrum(&dec.eigenvectors, &Vector::from_vec(p));
    Ok((density, log_z))
}
