//! Centering and whitening of a moment map.
//!
//! Each `A_i` is replaced by its traceless part `A'_i = A_i - (tr A_i / n) I`,
//! then the family is whitened with the symmetric inverse square root of the
//! centered Gram matrix `G'`: `Â_i = sum_j W_ij A'_j`, `W = G'^{-1/2}`. The
//! result is traceless and orthonormal in the Frobenius inner product.
//!
//! For trace-one `X` we have `tr(A_i X) = tr(A'_i X) + t_i`, so the target
//! transforms as `b̂ = W (b - t)` and membership is preserved.

use alloc::format;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::instances::Instance;
use crate::moment_map::{packed_gram, svec_len, MomentMap, ORTHONORMAL_TOL, TRACELESS_TOL};
use crate::spectral::{eigh, lambda_extremes, DensityMatrix, SymMatrix};
use crate::{Matrix, Vector};

/// Smallest admissible `lambda_min(G') / lambda_max(G')`.
pub const RANK_TOL: f64 = 1e-12;

/// What is needed to move targets, dual vectors and certificates between the
/// original and the preconditioned coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRecord {
    /// `t_i = tr(A_i) / n`.
    pub trace_offsets: Vector,
    /// `W = G'^{-1/2}`.
    pub whitener: Matrix,
    /// `W^{-1} = G'^{1/2}`.
    pub whitener_inv: Matrix,
    /// Ascending eigenvalues of the centered Gram matrix.
    pub gram_centered_eigs: Vector,
    pub original_n: usize,
    pub original_m: usize,
}

#[derive(Debug, Clone)]
pub struct PreconditionedInstance {
    pub map: MomentMap,
    pub b_hat: Vector,
    pub record: TransformRecord,
}

/// Result of checking a density matrix against the original target.
#[derive(Debug, Clone)]
pub struct FeasibleBackmap {
    pub density: DensityMatrix,
    /// `|A(X) - b|_2` in original coordinates.
    pub residual_norm: f64,
    pub within_tol: bool,
}

/// Centers and whitens `inst` and transforms its target.
pub fn precondition(inst: &Instance) -> Result<PreconditionedInstance> {
    let (map, record) = precondition_map(&inst.map)?;
    let b_hat = record.transform_b(&inst.b)?;
    Ok(PreconditionedInstance { map, b_hat, record })
}

/// Centers and whitens a map.
pub fn precondition_map(map: &MomentMap) -> Result<(MomentMap, TransformRecord)> {
    let n = map.n();
    let m = map.m();
    if m + 1 > svec_len(n) {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }

    // Step 1: center.
    let (centered, trace_offsets) = center_packed(map);
    let centered = centered.into_packed();

    // Step 2: centered Gram matrix.
    let gram = SymMatrix::symmetrized(packed_gram(&centered));

    // Step 3: symmetric inverse square root.
    let dec = eigh(&gram)?;
    let (lo, hi) = (dec.min(), dec.max());
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio >= RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let mut u = dec.eigenvectors.clone();
    fix_signs(&mut u);
    let inv_sqrt = dec.eigenvalues.map(|l| 1.0 / l.sqrt());
    let sqrt = dec.eigenvalues.map(f64::sqrt);
    let whitener = crate::spectral::weighted_outer(&u, &inv_sqrt).into_matrix();
    let whitener_inv = crate::spectral::weighted_outer(&u, &sqrt).into_matrix();

    // Step 4: orthonormal basis. Column i of P' W is sum_j W_ji A'_j = sum_j W_ij A'_j.
    let mut packed = &centered * &whitener;
    recenter(&mut packed, n);

    let mut out = MomentMap::from_packed(n, packed);
    out.set_blocks_unchecked(map.blocks().map(|b| b.to_vec()));
    let trace_dev = out.traces().amax();
    if trace_dev > TRACELESS_TOL {
        return Err(Error::PreconditionFailed {
            what: "tracelessness",
            deviation: trace_dev,
        });
    }
    let gram_dev = out.gram_deviation();
    if gram_dev > ORTHONORMAL_TOL {
        return Err(Error::PreconditionFailed {
            what: "orthonormality",
            deviation: gram_dev,
        });
    }
    out.set_flags(true, true);

    let record = TransformRecord {
        trace_offsets,
        whitener,
        whitener_inv,
        gram_centered_eigs: dec.eigenvalues,
        original_n: n,
        original_m: m,
    };
    Ok((out, record))
}

/// Traceless parts `A_i - (tr A_i / n) I` and the offsets `tr A_i / n`.
pub fn center(map: &MomentMap) -> (MomentMap, Vector) {
    let (mut out, offsets) = center_packed(map);
    out.set_blocks_unchecked(map.blocks().map(|b| b.to_vec()));
    out.set_flags(true, false);
    (out, offsets)
}

fn center_packed(map: &MomentMap) -> (MomentMap, Vector) {
    let n = map.n();
    let offsets = map.traces() / n as f64;
    let mut packed = map.packed().clone();
    // diagonal entries of the packed columns are unscaled
    for (i, mut col) in packed.column_iter_mut().enumerate() {
        for j in 0..n {
            col[j * (j + 1) / 2 + j] -= offsets[i];
        }
    }
    (MomentMap::from_packed(n, packed), offsets)
}

/// Makes the largest-magnitude entry of every column positive.
fn fix_signs(u: &mut Matrix) {
    for mut col in u.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Removes the roundoff trace left over after whitening.
fn recenter(packed: &mut Matrix, n: usize) {
    for mut col in packed.column_iter_mut() {
        let tr: f64 = (0..n).map(|j| col[j * (j + 1) / 2 + j]).sum::<f64>() / n as f64;
        for j in 0..n {
            col[j * (j + 1) / 2 + j] -= tr;
        }
    }
}

impl TransformRecord {
    /// Record of the identity transform on an already normalized map.
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            trace_offsets: Vector::zeros(m),
            whitener: Matrix::identity(m, m),
            whitener_inv: Matrix::identity(m, m),
            gram_centered_eigs: Vector::from_element(m, 1.0),
            original_n: n,
            original_m: m,
        }
    }

    /// `b̂ = W (b - t)`.
    pub fn transform_b(&self, b: &Vector) -> Result<Vector> {
        check_len("target vector", self.original_m, b.len())?;
        Ok(&self.whitener * (b - &self.trace_offsets))
    }

    /// Dual vector in original coordinates: `A(y) = Â(ŷ) + c I` for `y = W ŷ`.
    pub fn backmap_dual(&self, y_hat: &Vector) -> Result<Vector> {
        check_len("dual vector", self.original_m, y_hat.len())?;
        Ok(&self.whitener * y_hat)
    }

    /// Largest singular value of `W^{-1}`: residuals in original coordinates
    /// are at most this factor times the preconditioned residual.
    pub fn residual_amplification(&self) -> f64 {
        self.gram_centered_eigs
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
            .sqrt()
    }
}

/// The same density matrix certifies the original problem; this recomputes
/// `|A(X) - b|` on the original map.
pub fn backmap_feasible(
    original: &Instance,
    x: DensityMatrix,
    tol: f64,
) -> Result<FeasibleBackmap> {
    let residual_norm = (original.map.apply(x.as_sym())? - &original.b).norm();
    Ok(FeasibleBackmap {
        density: x,
        residual_norm,
        within_tol: residual_norm <= tol,
    })
}

/// Maps a separating direction back: `u = W^T û / |W^T û|`. Returns `u` and
/// the original-coordinates gap `b^T u - lambda_max(A(u))`.
pub fn backmap_infeasible(
    record: &TransformRecord,
    original: &Instance,
    u_hat: &Vector,
) -> Result<(Vector, f64)> {
    check_len("separating direction", record.original_m, u_hat.len())?;
    let mut u = record.whitener.transpose() * u_hat;
    let norm = u.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput(format!(
            "cannot normalize direction of norm {norm}"
        )));
    }
    u /= norm;
    let (_, top) = lambda_extremes(&original.map.adjoint(&u)?)?;
    let gap = original.b.dot(&u) - top;
    if gap > 0.0 {
        Ok((u, gap))
    } else {
        Err(Error::NotASeparator { gap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{self, gen_raw_random_map};
    use alloc::vec;
    use alloc::vec::Vec;

    fn fixture(rows: [[f64; 3]; 3], scale: f64) -> SymMatrix {
        SymMatrix::from_rows(&rows).unwrap().scaled(scale)
    }

    #[test]
    fn section_5_example_centering_is_exact() {
        let inst = instances::gen_precondition_example();
        let (centered, t) = center(&inst.map);
        assert_eq!(t.as_slice(), &[2.0, 1.0]);
        assert!(centered.is_traceless());
        let expected = [
            fixture([[4.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -4.0]], 1.0),
            fixture([[-4.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 4.0]], 0.5),
        ];
        for (i, want) in expected.iter().enumerate() {
            assert_eq!(centered.matrix(i).as_matrix(), want.as_matrix());
        }
    }

    #[test]
    fn section_5_example_spans_printed_basis() {
        let inst = instances::gen_precondition_example();
        let pre = precondition(&inst).unwrap();
        let printed = [
            fixture([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]], 0.5),
            fixture([[-1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 0.5),
        ];
        let basis = pre.map.matrices();
        for p in &printed {
            // project onto the orthonormal output basis and measure the remainder
            let mut proj = Matrix::zeros(3, 3);
            for a in &basis {
                proj += a.as_matrix() * a.dot(p);
            }
            assert!((proj - p.as_matrix()).amax() <= 1e-10);
        }
    }

    #[test]
    fn output_is_traceless_and_orthonormal() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 7);
            let m = 1 + (seed as usize % (svec_len(n) - 1));
            let map = gen_raw_random_map(n, m, seed).unwrap();
            let (out, rec) = precondition_map(&map).unwrap();
            assert!(out.is_normalized());
            assert!(out.traces().amax() <= TRACELESS_TOL);
            assert!(out.gram_deviation() <= ORTHONORMAL_TOL);
            let wwinv = &rec.whitener * &rec.whitener_inv;
            assert!((wwinv - Matrix::identity(m, m)).amax() <= 1e-8);
            assert!(rec.gram_centered_eigs.iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn normalized_input_is_a_fixed_point() {
        let inst = instances::gen_example_2_1();
        let pre = precondition(&inst).unwrap();
        assert!((pre.record.whitener.clone() - Matrix::identity(2, 2)).amax() <= 1e-10);
        assert!((pre.map.packed() - inst.map.packed()).amax() <= 1e-10);
    }

    #[test]
    fn idempotent() {
        let map = gen_raw_random_map(6, 5, 42).unwrap();
        let b = Vector::from_vec(vec![0.1, -0.2, 0.3, 0.0, 0.05]);
        let inst = Instance::new(map, b, "raw").unwrap();
        let once = precondition(&inst).unwrap();
        let again =
            precondition(&Instance::new(once.map.clone(), once.b_hat.clone(), "pre").unwrap())
                .unwrap();
        assert!((again.map.packed() - once.map.packed()).amax() <= 1e-8);
        assert!((again.b_hat - once.b_hat).amax() <= 1e-8);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        // A_2 = 2 A_1 + 3 I: the centered pair is collinear
        let a1 = SymMatrix::from_rows(&[[1.0, 2.0], [2.0, -1.0]]).unwrap();
        let a2 = a1.scaled(2.0).shifted(3.0);
        let map = MomentMap::new(&[a1, a2]).unwrap();
        assert!(matches!(
            precondition_map(&map),
            Err(Error::RankDeficient { .. })
        ));
        let ident = MomentMap::new(&[SymMatrix::identity(3)]).unwrap();
        assert!(matches!(
            precondition_map(&ident),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn transform_b_fixtures() {
        let map = gen_raw_random_map(4, 3, 8).unwrap();
        let (_, rec) = precondition_map(&map).unwrap();
        let b_hat = rec.transform_b(&rec.trace_offsets).unwrap();
        assert!(b_hat.amax() < 1e-15);
        // image of I/n lands on the offsets
        let center = map.apply(&SymMatrix::identity(4).scaled(0.25)).unwrap();
        assert!((center - &rec.trace_offsets).amax() < 1e-14);

        let id = TransformRecord::identity(3, 2);
        let b = Vector::from_vec(vec![0.3, -0.1]);
        assert_eq!(id.transform_b(&b).unwrap(), b);
        assert!(id.transform_b(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn transform_b_preserves_images() {
        // A(X) = b  <=>  Â(X) = b̂ for trace-one X
        let map = gen_raw_random_map(5, 4, 17).unwrap();
        let (pre, rec) = precondition_map(&map).unwrap();
        let x = DensityMatrix::pure(&Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0])).unwrap();
        let b = map.apply(x.as_sym()).unwrap();
        let b_hat = pre.apply(x.as_sym()).unwrap();
        assert!((rec.transform_b(&b).unwrap() - b_hat).amax() < 1e-12);
    }

    #[test]
    fn backmap_infeasible_fixtures() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let a = SymMatrix::from_diagonal(&[s, -s]).unwrap();
        let inst = Instance::new(
            MomentMap::new(&[a]).unwrap(),
            Vector::from_vec(vec![1.0]),
            "interval",
        )
        .unwrap();
        let rec = TransformRecord::identity(2, 1);
        let (u, gap) = backmap_infeasible(&rec, &inst, &Vector::from_vec(vec![1.0])).unwrap();
        assert_eq!(u[0], 1.0);
        assert!((gap - (1.0 - s)).abs() < 1e-15);
        let err = backmap_infeasible(&rec, &inst, &Vector::from_vec(vec![-1.0])).unwrap_err();
        assert!(matches!(err, Error::NotASeparator { .. }));
    }

    #[test]
    fn backmap_infeasible_through_whitening() {
        let map = gen_raw_random_map(4, 3, 23).unwrap();
        let (pre, rec) = precondition_map(&map).unwrap();
        // b̂ far outside along a direction; û = b̂ / |b̂| separates since rad < 1
        let b_hat = Vector::from_vec(vec![2.0, -1.0, 0.5]);
        let b = &rec.whitener_inv * &b_hat + &rec.trace_offsets;
        let u_hat = &b_hat / b_hat.norm();
        let (top_hat, _) = {
            let (_, hi) = lambda_extremes(&pre.adjoint(&u_hat).unwrap()).unwrap();
            (hi, ())
        };
        assert!(b_hat.dot(&u_hat) - top_hat > 0.0);
        let inst = Instance::new(map, b, "outside").unwrap();
        let (u, gap) = backmap_infeasible(&rec, &inst, &u_hat).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-14);
        let (_, hi) = lambda_extremes(&inst.map.adjoint(&u).unwrap()).unwrap();
        assert!((inst.b.dot(&u) - hi - gap).abs() < 1e-12);
        assert!(gap > 0.0);
    }

    #[test]
    fn backmap_feasible_reports_original_residual() {
        let map = gen_raw_random_map(3, 2, 2).unwrap();
        let x = DensityMatrix::maximally_mixed(3);
        let b = map.apply(x.as_sym()).unwrap();
        let inst = Instance::new(map, b.clone(), "center").unwrap();
        let ok = backmap_feasible(&inst, x.clone(), 1e-12).unwrap();
        assert!(ok.within_tol && ok.residual_norm < 1e-14);
        let far = Instance::new(inst.map.clone(), b.add_scalar(1.0), "far").unwrap();
        let bad = backmap_feasible(&far, x, 1e-12).unwrap();
        assert!(!bad.within_tol);
        assert!((bad.residual_norm - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn blocks_survive_preconditioning() {
        let inst = instances::gen_example_2_2();
        let (out, _) = precondition_map(&inst.map).unwrap();
        let blocks: Vec<usize> = out.blocks().unwrap().to_vec();
        assert_eq!(blocks, vec![2, 2]);
        assert!(out.clone().with_blocks(blocks).is_ok());
    }
}
