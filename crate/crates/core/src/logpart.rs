//! The log-partition dual `f(y) = log tr exp A(y) - b^T y`.
//!
//! Its gradient is `A(X(y)) - b` with `X(y) = exp1(A(y))`, and its Hessian is
//! the BKM covariance
//!
//! ```text
//! H_ij = int_0^1 tr(A_i X^s A_j X^{1-s}) ds - tr(A_i X) tr(A_j X).
//! ```
//!
//! In the eigenbasis `X = V diag(p) V^T`, with `B_i = V^T A_i V`, the integral
//! is `sum_{k,l} L(p_k, p_l) (B_i)_kl (B_j)_kl` where `L` is the logarithmic
//! mean.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::moment_map::MomentMap;
use crate::spectral::{eigh, log_sum_exp, DensityMatrix, SymMatrix};
use crate::{Matrix, Vector};

/// Below this `|log a - log b|` the logarithmic mean switches to its series.
pub const LOG_MEAN_SERIES_THRESHOLD: f64 = 1e-6;

/// One evaluation of the dual at `y`.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    pub gradient: Vector,
    /// `X(y) = exp1(A(y))`.
    pub density: DensityMatrix,
    /// `log tr exp A(y)`.
    pub log_partition: f64,
    /// Ascending eigenvalues of `A(y)`.
    pub spectrum: Vector,
}

impl DualEval {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.norm()
    }

    /// Largest `|lambda_i(A(y))|`.
    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.amax()
    }
}

/// Anything the L-BFGS driver can minimize: the full dual or its
/// block-separable form.
pub trait DualObjective {
    /// Matrix size `n` (total over blocks).
    fn n(&self) -> usize;
    /// Number of constraints `m`.
    fn m(&self) -> usize;
    fn target(&self) -> &Vector;
    /// Whether the underlying map is traceless and orthonormal.
    fn is_normalized(&self) -> bool;
    fn eval(&self, y: &Vector) -> Result<DualEval>;
    /// `lambda_max(A(u))`, the support function in direction `u`.
    fn support(&self, u: &Vector) -> Result<f64>;
}

/// The dual of a single (non-split) map.
#[derive(Debug, Clone, Copy)]
pub struct FullDual<'a> {
    pub map: &'a MomentMap,
    pub b: &'a Vector,
}

impl<'a> FullDual<'a> {
    pub fn new(map: &'a MomentMap, b: &'a Vector) -> Result<Self> {
        check_len("target vector", map.m(), b.len())?;
        Ok(Self { map, b })
    }
}

impl DualObjective for FullDual<'_> {
    fn n(&self) -> usize {
        self.map.n()
    }

    fn m(&self) -> usize {
        self.map.m()
    }

    fn target(&self) -> &Vector {
        self.b
    }

    fn is_normalized(&self) -> bool {
        self.map.is_normalized()
    }

    fn eval(&self, y: &Vector) -> Result<DualEval> {
        eval(self.map, self.b, y)
    }

    fn support(&self, u: &Vector) -> Result<f64> {
        Ok(crate::spectral::lambda_extremes(&self.map.adjoint(u)?)?.1)
    }
}

/// The block-separable dual of a block-diagonal map.
#[derive(Debug, Clone)]
pub struct BlockDual {
    pub maps: Vec<MomentMap>,
    pub b: Vector,
    normalized: bool,
}

impl BlockDual {
    /// Splits `map` along its declared blocks.
    pub fn from_map(map: &MomentMap, b: &Vector) -> Result<Self> {
        check_len("target vector", map.m(), b.len())?;
        Ok(Self {
            maps: map.block_split()?,
            b: b.clone(),
            normalized: map.is_normalized(),
        })
    }
}

impl DualObjective for BlockDual {
    fn n(&self) -> usize {
        self.maps.iter().map(MomentMap::n).sum()
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn target(&self) -> &Vector {
        &self.b
    }

    fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn eval(&self, y: &Vector) -> Result<DualEval> {
        eval_block(&self.maps, &self.b, y)
    }

    fn support(&self, u: &Vector) -> Result<f64> {
        let mut top = f64::NEG_INFINITY;
        for map in &self.maps {
            top = top.max(crate::spectral::lambda_extremes(&map.adjoint(u)?)?.1);
        }
        Ok(top)
    }
}

fn check_dual(map_m: usize, b: &Vector, y: &Vector) -> Result<()> {
    check_len("target vector", map_m, b.len())?;
    check_len("dual vector", map_m, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "dual vector has non-finite entries".into(),
        ));
    }
    Ok(())
}

/// Normalized softmax over a spectrum; returns probabilities and `log sum exp`.
fn probabilities(spectrum: &[f64]) -> (Vector, f64) {
    let log_z = log_sum_exp(spectrum);
    let mut p = Vector::from_iterator(spectrum.len(), spectrum.iter().map(|&l| (l - log_z).exp()));
    let total = p.sum();
    p /= total;
    (p, log_z)
}

/// Value, gradient and density of the dual at `y`; one eigendecomposition.
pub fn eval(map: &MomentMap, b: &Vector, y: &Vector) -> Result<DualEval> {
    check_dual(map.m(), b, y)?;
    let dec = eigh(&map.adjoint(y)?)?;
    let (p, log_partition) = probabilities(dec.eigenvalues.as_slice());
    let density = DensityMatrix::from_spectrum(&dec.eigenvectors, &p);
    let gradient = map.apply(density.as_sym())? - b;
    Ok(DualEval {
        value: log_partition - b.dot(y),
        gradient,
        density,
        log_partition,
        spectrum: dec.eigenvalues,
    })
}

/// Block-separable evaluation: `log sum_j tr exp A_j(y) - b^T y`, one
/// eigendecomposition per block. The density is assembled as a direct sum.
pub fn eval_block(maps: &[MomentMap], b: &Vector, y: &Vector) -> Result<DualEval> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidInput("no blocks given".into()))?;
    let m = first.m();
    check_dual(m, b, y)?;
    let mut decs = Vec::with_capacity(maps.len());
    for map in maps {
        check_len("number of matrices in block", m, map.m())?;
        decs.push(eigh(&map.adjoint(y)?)?);
    }
    let all: Vec<f64> = decs
        .iter()
        .flat_map(|d| d.eigenvalues.iter().copied())
        .collect();
    let (p, log_partition) = probabilities(&all);

    let n: usize = maps.iter().map(MomentMap::n).sum();
    let mut full = Matrix::zeros(n, n);
    let mut gradient = -b.clone();
    let mut offset = 0;
    for (map, dec) in maps.iter().zip(&decs) {
        let size = map.n();
        let pj = p.rows(offset, size).into_owned();
        let xj = DensityMatrix::from_spectrum(&dec.eigenvectors, &pj).into_sym();
        gradient += map.apply(&xj)?;
        full.view_mut((offset, offset), (size, size))
            .copy_from(xj.as_matrix());
        offset += size;
    }
    let mut spectrum = all;
    spectrum.sort_by(f64::total_cmp);
    Ok(DualEval {
        value: log_partition - b.dot(y),
        gradient,
        density: DensityMatrix::from_sym_unchecked(SymMatrix::symmetrized(full)),
        log_partition,
        spectrum: Vector::from_vec(spectrum),
    })
}

/// Logarithmic mean `(a - b) / (ln a - ln b)`, with `L(a, a) = a` and
/// `L(a, 0) = 0`.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    log_mean_from_logs(a.ln(), b.ln())
}

/// Logarithmic mean of `exp(la)` and `exp(lb)`, given the logarithms.
pub fn log_mean_from_logs(la: f64, lb: f64) -> f64 {
    if la == f64::NEG_INFINITY || lb == f64::NEG_INFINITY {
        return 0.0;
    }
    let x = la - lb;
    if x.abs() < LOG_MEAN_SERIES_THRESHOLD {
        // sqrt(ab) * sinh(x/2) / (x/2)
        let geo = (0.5 * (la + lb)).exp();
        let x2 = x * x;
        geo * (1.0 + x2 / 24.0 + x2 * x2 / 1920.0)
    } else if x > 0.0 {
        // b * (e^x - 1) / x
        lb.exp() * x.exp_m1() / x
    } else {
        la.exp() * (-x).exp_m1() / -x
    }
}

/// Exact Hessian of the dual at `y` (divided-difference form). Used for
/// diagnostics and curvature checks; the solver is first order.
pub fn hessian(map: &MomentMap, b: &Vector, y: &Vector) -> Result<SymMatrix> {
    check_dual(map.m(), b, y)?;
    let n = map.n();
    let m = map.m();
    let dec = eigh(&map.adjoint(y)?)?;
    let log_z = log_sum_exp(dec.eigenvalues.as_slice());
    let log_p: Vec<f64> = dec.eigenvalues.iter().map(|&l| l - log_z).collect();
    let p: Vec<f64> = log_p.iter().map(|&l| l.exp()).collect();
    let kernel = Matrix::from_fn(n, n, |k, l| log_mean_from_logs(log_p[k], log_p[l]));

    let v = &dec.eigenvectors;
    let rotated: Vec<Matrix> = (0..m)
        .map(|i| v.transpose() * map.matrix(i).as_matrix() * v)
        .collect();
    let means: Vec<f64> = rotated
        .iter()
        .map(|bi| (0..n).map(|k| p[k] * bi[(k, k)]).sum())
        .collect();

    let mut h = Matrix::zeros(m, m);
    for i in 0..m {
        let weighted = kernel.component_mul(&rotated[i]);
        for j in 0..=i {
            let hij = weighted.dot(&rotated[j]) - means[i] * means[j];
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    Ok(SymMatrix::symmetrized(h))
}
