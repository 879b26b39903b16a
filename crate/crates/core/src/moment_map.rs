//! The linear map `X -> (tr(A_i X))_i`, its adjoint and its Gram matrix.
//!
//! Matrices are stored dense in scaled half-vectorized form: column `i` of the
//! packed matrix holds the upper triangle of `A_i` (column-major), with the
//! off-diagonal entries multiplied by `sqrt(2)`. With this scaling the
//! Euclidean inner product of two packed columns equals the Frobenius inner
//! product of the matrices, so `apply`, `adjoint` and `gram` become plain
//! matrix-vector and matrix-matrix products.

use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::SQRT_2;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::spectral::SymMatrix;
use crate::{Matrix, Vector};

/// Entry-wise bound for the traceless flag.
pub const TRACELESS_TOL: f64 = 1e-10;
/// Max-norm bound on `G - I` for the orthonormal flag.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Length of the half-vectorization of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub(crate) fn svec_into(m: &Matrix, out: &mut [f64]) {
    let n = m.nrows();
    let mut k = 0;
    for j in 0..n {
        for i in 0..j {
            out[k] = SQRT_2 * m[(i, j)];
            k += 1;
        }
        out[k] = m[(j, j)];
        k += 1;
    }
}

pub(crate) fn svec(m: &Matrix) -> Vector {
    let mut out = Vector::zeros(svec_len(m.nrows()));
    svec_into(m, out.as_mut_slice());
    out
}

pub(crate) fn smat(v: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..j {
            let x = v[k] / SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
        m[(j, j)] = v[k];
        k += 1;
    }
    m
}

/// Offsets of the diagonal entries inside a packed column.
fn diagonal_offsets(n: usize) -> impl Iterator<Item = usize> {
    (0..n).map(|j| j * (j + 1) / 2 + j)
}

/// The map `A: S^n -> R^m` given by symmetric matrices `A_1, ..., A_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMap {
    n: usize,
    packed: Matrix,
    blocks: Option<Vec<usize>>,
    traceless: bool,
    orthonormal: bool,
}

impl MomentMap {
    pub fn new(mats: &[SymMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidInput("a moment map needs at least one matrix".into()))?;
        let n = first.n();
        let mut packed = Matrix::zeros(svec_len(n), mats.len());
        for (i, a) in mats.iter().enumerate() {
            check_len("matrix size", n, a.n())?;
            svec_into(a.as_matrix(), packed.column_mut(i).as_mut_slice());
        }
        Ok(Self {
            n,
            packed,
            blocks: None,
            traceless: false,
            orthonormal: false,
        })
    }

    pub(crate) fn from_packed(n: usize, packed: Matrix) -> Self {
        debug_assert_eq!(packed.nrows(), svec_len(n));
        Self {
            n,
            packed,
            blocks: None,
            traceless: false,
            orthonormal: false,
        }
    }

    /// Declares a block-diagonal partition `(n_1, ..., n_p)` of the matrix size.
    pub fn with_blocks(mut self, blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || blocks.contains(&0) {
            return Err(Error::InvalidInput("block sizes must be positive".into()));
        }
        check_len("sum of block sizes", self.n, blocks.iter().sum())?;
        let mut owner = Vec::with_capacity(self.n);
        for (j, &size) in blocks.iter().enumerate() {
            owner.extend(core::iter::repeat_n(j, size));
        }
        for (index, col) in self.packed.column_iter().enumerate() {
            let mut k = 0;
            for c in 0..self.n {
                for r in 0..=c {
                    if owner[r] != owner[c] && col[k] != 0.0 {
                        return Err(Error::BlockViolation {
                            index,
                            row: r,
                            col: c,
                        });
                    }
                    k += 1;
                }
            }
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    /// Checks the traceless and orthonormal invariants and sets both flags.
    pub fn mark_normalized(mut self) -> Result<Self> {
        let trace_dev = self.traces().amax();
        if trace_dev > TRACELESS_TOL {
            return Err(Error::PreconditionFailed {
                what: "tracelessness",
                deviation: trace_dev,
            });
        }
        let gram_dev = self.gram_deviation();
        if gram_dev > ORTHONORMAL_TOL {
            return Err(Error::PreconditionFailed {
                what: "orthonormality",
                deviation: gram_dev,
            });
        }
        self.traceless = true;
        self.orthonormal = true;
        Ok(self)
    }

    pub(crate) fn set_flags(&mut self, traceless: bool, orthonormal: bool) {
        self.traceless = traceless;
        self.orthonormal = orthonormal;
    }

    pub(crate) fn set_blocks_unchecked(&mut self, blocks: Option<Vec<usize>>) {
        self.blocks = blocks;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.packed.ncols()
    }

    pub fn blocks(&self) -> Option<&[usize]> {
        self.blocks.as_deref()
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Both flags set, i.e. the output of preconditioning.
    pub fn is_normalized(&self) -> bool {
        self.traceless && self.orthonormal
    }

    pub(crate) fn packed(&self) -> &Matrix {
        &self.packed
    }

    pub(crate) fn into_packed(self) -> Matrix {
        self.packed
    }

    /// `A_i` as a dense symmetric matrix.
    pub fn matrix(&self, i: usize) -> SymMatrix {
        SymMatrix::symmetrized(smat(self.packed.column(i).as_slice(), self.n))
    }

    pub fn matrices(&self) -> Vec<SymMatrix> {
        (0..self.m()).map(|i| self.matrix(i)).collect()
    }

    /// `tr A_i` for every `i`.
    pub fn traces(&self) -> Vector {
        let offsets: Vec<usize> = diagonal_offsets(self.n).collect();
        Vector::from_iterator(
            self.m(),
            self.packed
                .column_iter()
                .map(|col| offsets.iter().map(|&k| col[k]).sum::<f64>()),
        )
    }

    /// `(tr(A_i X))_i`.
    pub fn apply(&self, x: &SymMatrix) -> Result<Vector> {
        check_len("matrix size", self.n, x.n())?;
        Ok(self.packed.tr_mul(&svec(x.as_matrix())))
    }

    /// `A(y) = sum_i y_i A_i`.
    pub fn adjoint(&self, y: &Vector) -> Result<SymMatrix> {
        check_len("dual vector", self.m(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dual vector has non-finite entries".into(),
            ));
        }
        let packed = &self.packed * y;
        let m = smat(packed.as_slice(), self.n);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("A(y) overflowed".into()));
        }
        Ok(SymMatrix::symmetrized(m))
    }

    /// `G_ij = tr(A_i A_j)`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::symmetrized(packed_gram(&self.packed))
    }

    pub(crate) fn gram_deviation(&self) -> f64 {
        let g = packed_gram(&self.packed);
        (g - Matrix::identity(self.m(), self.m())).amax()
    }

    /// Splits a block-diagonal map into one map per diagonal block. Map `j`
    /// holds the `j`-th diagonal block of every `A_i`.
    pub fn block_split(&self) -> Result<Vec<MomentMap>> {
        let blocks = self.blocks.as_ref().ok_or(Error::MissingBlockStructure)?;
        let mut out = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for &size in blocks {
            let mut packed = Matrix::zeros(svec_len(size), self.m());
            for (i, col) in self.packed.column_iter().enumerate() {
                let mut k = 0;
                for c in 0..size {
                    let gc = offset + c;
                    let base = gc * (gc + 1) / 2 + offset;
                    for r in 0..=c {
                        packed[(k, i)] = col[base + r];
                        k += 1;
                    }
                }
            }
            out.push(MomentMap::from_packed(size, packed));
            offset += size;
        }
        Ok(out)
    }

    /// Direct sum of per-block maps sharing `m`; inverse of [`Self::block_split`].
    pub fn from_blocks(parts: &[MomentMap]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("no blocks given".into()))?;
        let m = first.m();
        let sizes: Vec<usize> = parts.iter().map(|p| p.n()).collect();
        let n: usize = sizes.iter().sum();
        let mut packed = Matrix::zeros(svec_len(n), m);
        let mut offset = 0;
        for part in parts {
            check_len("number of matrices in block", m, part.m())?;
            for i in 0..m {
                let col = part.packed.column(i);
                let mut k = 0;
                for c in 0..part.n() {
                    let gc = offset + c;
                    let base = gc * (gc + 1) / 2 + offset;
                    for r in 0..=c {
                        packed[(base + r, i)] = col[k];
                        k += 1;
                    }
                }
            }
            offset += part.n();
        }
        MomentMap::from_packed(n, packed).with_blocks(sizes)
    }
}

/// `P^T P` for a packed matrix `P` with one column per `A_i`.
pub(crate) fn packed_gram(packed: &Matrix) -> Matrix {
    let (rows, m) = packed.shape();
    if rows == 0 || m == 0 {
        return Matrix::zeros(m, m);
    }
    // An explicit transpose lets the product go through the blocked gemm.
    let pt = packed.transpose();
    let g = pt * packed;
    let mut out = g.clone();
    for j in 0..m {
        for i in 0..j {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Builds a map, reporting which matrix failed validation.
pub fn map_from_rows(mats: &[Vec<Vec<f64>>]) -> Result<MomentMap> {
    let mut out = Vec::with_capacity(mats.len());
    for (i, rows) in mats.iter().enumerate() {
        out.push(
            SymMatrix::from_rows(rows)
                .map_err(|e| Error::InvalidInput(format!("matrix {i}: {e}")))?,
        );
    }
    MomentMap::new(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        SymMatrix::new(Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_map(n: usize, m: usize, seed: u64) -> MomentMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats: Vec<_> = (0..m).map(|_| random_sym(n, &mut rng)).collect();
        MomentMap::new(&mats).unwrap()
    }

    fn e(n: usize, k: usize) -> Vector {
        let mut v = Vector::zeros(n);
        v[k] = 1.0;
        v
    }

    fn projector(n: usize, k: usize) -> SymMatrix {
        let v = e(n, k);
        SymMatrix::new(&v * v.transpose()).unwrap()
    }

    #[test]
    fn svec_roundtrip_and_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sym(5, &mut rng);
        let b = random_sym(5, &mut rng);
        let back = smat(svec(a.as_matrix()).as_slice(), 5);
        assert!((back - a.as_matrix()).amax() < 1e-15);
        assert!((svec(a.as_matrix()).dot(&svec(b.as_matrix())) - a.dot(&b)).abs() < 1e-13);
    }

    #[test]
    fn apply_example_2_1() {
        let inst = instances::gen_example_2_1();
        let at_e3 = inst.map.apply(&projector(3, 2)).unwrap();
        assert_eq!(at_e3.as_slice(), &[-0.5, 0.5]);
        let at_e1 = inst.map.apply(&projector(3, 0)).unwrap();
        assert_eq!(at_e1.as_slice(), &[0.5, -0.5]);
        let center = inst
            .map
            .apply(&SymMatrix::identity(3).scaled(1.0 / 3.0))
            .unwrap();
        assert!(center.amax() < 1e-16);
    }

    #[test]
    fn apply_rejects_wrong_size() {
        let inst = instances::gen_example_2_1();
        assert!(matches!(
            inst.map.apply(&SymMatrix::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(inst.map.adjoint(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn adjoint_basics() {
        let map = random_map(4, 3, 1);
        assert_eq!(map.adjoint(&Vector::zeros(3)).unwrap().max_abs(), 0.0);
        for i in 0..3 {
            let ai = map.adjoint(&e(3, i)).unwrap();
            assert!((ai.as_matrix() - map.matrix(i).as_matrix()).amax() < 1e-15);
        }
        let bad = Vector::from_vec(vec![f64::NAN, 0.0, 0.0]);
        assert!(map.adjoint(&bad).is_err());
    }

    #[test]
    fn adjointness_and_gram_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..10 {
            let (n, m) = (2 + seed as usize % 5, 1 + seed as usize % 4);
            let map = random_map(n, m, seed);
            let y = Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let x = random_sym(n, &mut rng);
            let lhs = map.adjoint(&y).unwrap().dot(&x);
            let rhs = map.apply(&x).unwrap().dot(&y);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));

            let g = map.gram();
            let gy = g.as_matrix() * &y;
            let aat = map.apply(&map.adjoint(&y).unwrap()).unwrap();
            assert!((gy - &aat).amax() <= 1e-12 * (1.0 + aat.amax()));
        }
    }

    #[test]
    fn gram_of_section_5_example() {
        let inst = instances::gen_precondition_example();
        let g = inst.map.gram();
        // brute-force Frobenius products of the printed matrices
        let mats = inst.map.matrices();
        for i in 0..2 {
            for j in 0..2 {
                let mut brute = 0.0;
                for r in 0..3 {
                    for c in 0..3 {
                        brute += mats[i].get(r, c) * mats[j].get(c, r);
                    }
                }
                assert!((g.get(i, j) - brute).abs() < 1e-12);
            }
        }
        assert!((g.get(0, 0) - 46.0).abs() < 1e-12);
        assert!((g.get(0, 1) + 9.0).abs() < 1e-12);
        assert!((g.get(1, 1) - 11.5).abs() < 1e-12);
    }

    #[test]
    fn gram_of_example_2_1_is_identity() {
        let g = instances::gen_example_2_1().map.gram();
        assert!((g.as_matrix() - Matrix::identity(2, 2)).amax() < 1e-15);
        let single = MomentMap::new(&[SymMatrix::identity(4).scaled(0.5)]).unwrap();
        assert!((single.gram().get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn block_split_example_2_2() {
        let inst = instances::gen_example_2_2();
        let parts = inst.map.block_split().unwrap();
        assert_eq!(parts.len(), 2);
        let j = SymMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let k = SymMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let z = SymMatrix::zeros(2);
        let expected = [[&j, &j], [&k, &z], [&z, &k]];
        for (i, pair) in expected.iter().enumerate() {
            for (b, want) in pair.iter().enumerate() {
                assert!((parts[b].matrix(i).as_matrix() - want.as_matrix()).amax() < 1e-15);
            }
        }
        let rebuilt = MomentMap::from_blocks(&parts).unwrap();
        assert!((rebuilt.packed() - inst.map.packed()).amax() == 0.0);
    }

    #[test]
    fn block_split_single_block_roundtrip() {
        let map = random_map(4, 3, 5).with_blocks(vec![4]).unwrap();
        let parts = map.block_split().unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].packed(), map.packed());
    }

    #[test]
    fn block_errors() {
        let map = random_map(4, 2, 6);
        assert_eq!(map.block_split().unwrap_err(), Error::MissingBlockStructure);
        assert!(matches!(
            map.clone().with_blocks(vec![2, 2]),
            Err(Error::BlockViolation { .. })
        ));
        assert!(matches!(
            map.with_blocks(vec![2, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn block_apply_is_sum_of_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let parts = [random_map(2, 3, 1), random_map(3, 3, 2)];
        let map = MomentMap::from_blocks(&parts).unwrap();
        let x1 = random_sym(2, &mut rng);
        let x2 = random_sym(3, &mut rng);
        let mut full = Matrix::zeros(5, 5);
        full.view_mut((0, 0), (2, 2)).copy_from(x1.as_matrix());
        full.view_mut((2, 2), (3, 3)).copy_from(x2.as_matrix());
        let lhs = map.apply(&SymMatrix::new(full).unwrap()).unwrap();
        let rhs = parts[0].apply(&x1).unwrap() + parts[1].apply(&x2).unwrap();
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn mark_normalized_checks_invariants() {
        assert!(instances::gen_example_2_1().map.mark_normalized().is_ok());
        assert!(random_map(3, 2, 4).mark_normalized().is_err());
    }
}
