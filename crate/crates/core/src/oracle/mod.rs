//! Membership oracle: quick rejects, precondition-then-solve, and
//! certificates re-verified in the caller's coordinates.

pub mod geometry;

use alloc::format;
use alloc::string::String;

#[allow(unused_imports)]
use num_traits::Float;

pub use geometry::{
    boundary_sample, planar_directions, radius, sphere_directions, support, support_and_width,
    thickness, BoundaryPoint, DIAMETER,
};

use crate::error::{check_len, Error, Result};
use crate::instances::Instance;
use crate::logpart::{BlockDual, FullDual};
use crate::moment_map::MomentMap;
use crate::precondition::{backmap_infeasible, precondition, TransformRecord};
use crate::solver::{minimize, minimize_objective, IterationTrace, SolveOutcome, SolverConfig};
use crate::spectral::{eigenvalues, exp1, lambda_extremes, DensityMatrix};
use crate::Vector;

/// Allowed deviation of `|u|` from 1 in [`verify_infeasible`].
pub const UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Feasible,
    Infeasible,
    NotInterior,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::NotInterior => "not-interior",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evidence in the coordinates of the instance passed to [`decide`].
#[derive(Debug, Clone)]
pub enum Certificate {
    Feasible {
        density: DensityMatrix,
        /// Dual point with `density = exp1(A(y))` up to a multiple of the identity.
        y: Vector,
    },
    Infeasible {
        u: Vector,
    },
    NotInterior {
        y_last: Vector,
        distance_bound: f64,
    },
    None,
}

/// Why [`quick_reject`] fired. `direction` separates `b̂` from the body.
#[derive(Debug, Clone, PartialEq)]
pub struct QuickReject {
    pub reason: String,
    pub direction: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleCheck {
    pub residual_norm: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub eps: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfeasibleCheck {
    pub gap: f64,
    pub support: f64,
    pub passed: bool,
}

/// `f(y*)` against the entropy of `X*`; they agree at an exact optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    pub f_star: f64,
    pub entropy: f64,
    pub mismatch: f64,
}

/// Seconds spent per stage, as measured by the clock given to [`decide_with_clock`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub precondition: f64,
    pub solve: f64,
    pub verify: f64,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub solver: SolverConfig,
    /// Run centering and whitening first. Without it the map must already be
    /// normalized unless `force` is set.
    pub precondition: bool,
    pub force: bool,
    /// Residual allowed by [`verify_feasible`]; `None` means `2 * solver.tol`.
    pub verify_eps: Option<f64>,
    /// Solve block by block when the map declares more than one block.
    pub use_blocks: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            precondition: true,
            force: false,
            verify_eps: None,
            use_blocks: true,
        }
    }
}

impl OracleConfig {
    pub fn verify_eps(&self) -> f64 {
        self.verify_eps.unwrap_or(2.0 * self.solver.tol)
    }
}

#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub verdict: Verdict,
    pub certificate: Certificate,
    pub quick_reject: Option<QuickReject>,
    pub feasible_check: Option<FeasibleCheck>,
    pub infeasible_check: Option<InfeasibleCheck>,
    pub duality: Option<DualityCheck>,
    /// Raw solver result in preconditioned coordinates; `None` after a quick reject.
    pub outcome: Option<SolveOutcome>,
    pub trace: IterationTrace,
    /// Gradient tolerance actually handed to the solver.
    pub solver_tol: f64,
    pub b_hat_norm: f64,
    pub iters: usize,
    /// Set when the solver's claim did not survive re-verification.
    pub note: Option<String>,
    pub timings: Timings,
}

/// Cheap infeasibility tests on normalized data: `|b̂| > sqrt((n-1)/n)`, or
/// some `b̂_i` outside `[lambda_min(Â_i), lambda_max(Â_i)]`.
pub fn quick_reject(map: &MomentMap, b_hat: &Vector) -> Result<Option<QuickReject>> {
    check_len("target vector", map.m(), b_hat.len())?;
    let n = map.n();
    let norm = b_hat.norm();
    let rad = radius(n);
    if norm > rad {
        return Ok(Some(QuickReject {
            reason: format!("|b| = {norm:.6} exceeds the radius {rad:.6}"),
            direction: b_hat / norm,
        }));
    }
    // A traceless unit-norm matrix has lambda_max >= 1/sqrt(n(n-1)) and
    // lambda_min <= -1/sqrt(n(n-1)); smaller entries cannot be rejected.
    let screen = if n > 1 {
        1.0 / ((n * (n - 1)) as f64).sqrt()
    } else {
        0.0
    };
    for (i, &bi) in b_hat.iter().enumerate() {
        if bi.abs() <= screen {
            continue;
        }
        let (lo, hi) = lambda_extremes(&map.matrix(i))?;
        let sign = if bi > hi {
            1.0
        } else if bi < lo {
            -1.0
        } else {
            continue;
        };
        let mut direction = Vector::zeros(map.m());
        direction[i] = sign;
        return Ok(Some(QuickReject {
            reason: format!("b[{i}] = {bi:.6} lies outside [{lo:.6}, {hi:.6}]"),
            direction,
        }));
    }
    Ok(None)
}

/// Recomputes, from scratch, the spectrum of `x` and `|A(x) - b|` on `inst`.
pub fn verify_feasible(inst: &Instance, x: &DensityMatrix, eps: f64) -> Result<FeasibleCheck> {
    check_len("density matrix size", inst.map.n(), x.n())?;
    let vals = eigenvalues(x.as_sym())?;
    let trace_error = (vals.sum() - 1.0).abs();
    let min_eigenvalue = vals[0];
    let residual_norm = (inst.map.apply(x.as_sym())? - &inst.b).norm();
    let passed = residual_norm <= eps && trace_error <= eps && min_eigenvalue >= -eps;
    Ok(FeasibleCheck {
        residual_norm,
        trace_error,
        min_eigenvalue,
        eps,
        passed,
    })
}

/// `gap = b^T u - lambda_max(A(u))`; passes iff `gap > 0`.
pub fn verify_infeasible(inst: &Instance, u: &Vector) -> Result<InfeasibleCheck> {
    check_len("separating direction", inst.map.m(), u.len())?;
    let norm = u.norm();
    if !((norm - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::NotUnit { norm });
    }
    let (_, support) = lambda_extremes(&inst.map.adjoint(u)?)?;
    let gap = inst.b.dot(u) - support;
    Ok(InfeasibleCheck {
        gap,
        support,
        passed: gap > 0.0,
    })
}

/// `A(exp1(A(y)))`, the gradient map; a diffeomorphism onto the interior.
pub fn gradient_map(map: &MomentMap, y: &Vector) -> Result<Vector> {
    let (x, _) = exp1(&map.adjoint(y)?)?;
    map.apply(x.as_sym())
}

#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub image: Vector,
    /// Minimizer for target `image`, when the solve ended feasible.
    pub recovered: Option<Vector>,
    pub outcome: SolveOutcome,
}

impl RoundTrip {
    /// `|y* - y|`, infinite if nothing was recovered.
    pub fn error(&self, y: &Vector) -> f64 {
        self.recovered
            .as_ref()
            .map_or(f64::INFINITY, |r| (r - y).norm())
    }
}

/// Maps `y` forward through the gradient map and solves back from the image.
pub fn gradient_map_roundtrip(
    map: &MomentMap,
    y: &Vector,
    config: &SolverConfig,
) -> Result<RoundTrip> {
    let image = gradient_map(map, y)?;
    let (outcome, _) = minimize(map, &image, config)?;
    let recovered = match &outcome {
        SolveOutcome::Feasible { y_star, .. } => Some(y_star.clone()),
        _ => None,
    };
    Ok(RoundTrip {
        image,
        recovered,
        outcome,
    })
}

#[cfg(feature = "std")]
fn default_clock() -> impl FnMut() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(not(feature = "std"))]
fn default_clock() -> impl FnMut() -> f64 {
    || 0.0
}

/// Decides membership of `inst.b` in the moment body of `inst.map`.
pub fn decide(inst: &Instance, config: &OracleConfig) -> Result<MembershipReport> {
    decide_with_clock(inst, config, default_clock())
}

/// [`decide`] with a caller-supplied clock returning seconds.
pub fn decide_with_clock<C: FnMut() -> f64>(
    inst: &Instance,
    config: &OracleConfig,
    mut clock: C,
) -> Result<MembershipReport> {
    config.solver.validate()?;
    check_len("target vector", inst.map.m(), inst.b.len())?;
    let t0 = clock();

    let (map, b_hat, record) = if config.precondition {
        let pre = precondition(inst)?;
        (pre.map, pre.b_hat, pre.record)
    } else {
        if !inst.map.is_normalized() && !config.force {
            return Err(Error::NotPreconditioned);
        }
        let record = TransformRecord::identity(inst.map.n(), inst.map.m());
        (inst.map.clone(), inst.b.clone(), record)
    };
    let t1 = clock();
    let mut report = MembershipReport {
        verdict: Verdict::Indeterminate,
        certificate: Certificate::None,
        quick_reject: None,
        feasible_check: None,
        infeasible_check: None,
        duality: None,
        outcome: None,
        trace: IterationTrace::default(),
        solver_tol: config.solver.tol,
        b_hat_norm: b_hat.norm(),
        iters: 0,
        note: None,
        timings: Timings {
            precondition: t1 - t0,
            ..Timings::default()
        },
    };

    if map.is_normalized() {
        if let Some(reject) = quick_reject(&map, &b_hat)? {
            let verified = accept_separator(inst, &record, &reject.direction, &mut report);
            report.quick_reject = Some(reject);
            verified?;
            report.timings.verify = clock() - t1;
            return Ok(report);
        }
    }

    // Residuals grow by at most |W^{-1}| when mapped back.
    let mut solver = config.solver.clone();
    solver.tol /= record.residual_amplification().max(1.0);
    solver.require_normalized = !config.force;
    report.solver_tol = solver.tol;

    let (outcome, trace) = match map.blocks() {
        Some(blocks) if config.use_blocks && blocks.len() > 1 => {
            minimize_objective(&BlockDual::from_map(&map, &b_hat)?, &solver)?
        }
        _ => minimize_objective(&FullDual::new(&map, &b_hat)?, &solver)?,
    };
    let t2 = clock();
    report.timings.solve = t2 - t1;
    report.iters = outcome.iters();
    report.trace = trace;

    match &outcome {
        SolveOutcome::Feasible {
            y_star,
            density,
            value,
            ..
        } => {
            let check = verify_feasible(inst, density, config.verify_eps())?;
            let entropy = density.entropy()?;
            report.duality = Some(DualityCheck {
                f_star: *value,
                entropy,
                mismatch: (value - entropy).abs(),
            });
            if check.passed {
                report.verdict = Verdict::Feasible;
                report.certificate = Certificate::Feasible {
                    density: density.clone(),
                    y: record.backmap_dual(y_star)?,
                };
            } else {
                report.note = Some(format!(
                    "solver converged but the certificate residual {:.3e} exceeds {:.3e}",
                    check.residual_norm, check.eps
                ));
            }
            report.feasible_check = Some(check);
        }
        SolveOutcome::Infeasible { u, .. } => {
            if let Err(e) = accept_separator(inst, &record, u, &mut report) {
                match e {
                    Error::NotASeparator { gap } => {
                        report.verdict = Verdict::Indeterminate;
                        report.note =
                            Some(format!("separator lost after back-mapping (gap {gap:e})"));
                    }
                    other => return Err(other),
                }
            }
        }
        SolveOutcome::NotInterior {
            y_last,
            distance_bound,
            ..
        } => {
            report.verdict = Verdict::NotInterior;
            report.certificate = Certificate::NotInterior {
                y_last: record.backmap_dual(y_last)?,
                distance_bound: *distance_bound,
            };
        }
        SolveOutcome::Indeterminate { reason, .. } => {
            report.note = Some(reason.clone());
        }
    }
    report.outcome = Some(outcome);
    report.timings.verify = clock() - t2;
    Ok(report)
}

/// Back-maps a separating direction and verifies it on the original instance.
fn accept_separator(
    inst: &Instance,
    record: &TransformRecord,
    u_hat: &Vector,
    report: &mut MembershipReport,
) -> Result<()> {
    let (u, _) = backmap_infeasible(record, inst, u_hat)?;
    let check = verify_infeasible(inst, &u)?;
    report.infeasible_check = Some(check);
    if check.passed {
        report.verdict = Verdict::Infeasible;
        report.certificate = Certificate::Infeasible { u };
        Ok(())
    } else {
        Err(Error::NotASeparator { gap: check.gap })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_example_2_1, gen_infeasible, gen_precondition_example, gen_random};
    use crate::spectral::SymMatrix;
    use alloc::vec;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn interval(b: f64) -> Instance {
        let a = SymMatrix::from_diagonal(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).unwrap();
        Instance::new(
            MomentMap::new(&[a]).unwrap(),
            Vector::from_vec(vec![b]),
            "interval",
        )
        .unwrap()
    }

    #[test]
    fn barycenter_is_feasible() {
        let report = decide(&gen_example_2_1(), &OracleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
        match report.certificate {
            Certificate::Feasible { density, .. } => {
                let want = DensityMatrix::maximally_mixed(3);
                assert!((density.as_sym().as_matrix() - want.as_sym().as_matrix()).amax() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let d = report.duality.unwrap();
        assert!((d.f_star - 3f64.ln()).abs() < 1e-12 && d.mismatch < 1e-12);
    }

    #[test]
    fn far_target_is_rejected_by_radius() {
        let inst = gen_example_2_1()
            .retarget(Vector::from_vec(vec![0.9, 0.9]))
            .unwrap();
        let report = decide(&inst, &OracleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Infeasible);
        assert!(report.quick_reject.unwrap().reason.contains("radius"));
        assert!(report.infeasible_check.unwrap().gap > 0.0);
        assert!(report.outcome.is_none());
    }

    #[test]
    fn quick_reject_fixtures() {
        let map = gen_example_2_1().map;
        let far = Vector::from_vec(vec![1.2, 0.0]);
        assert!(quick_reject(&map, &far).unwrap().is_some());
        assert!(quick_reject(&map, &Vector::zeros(2)).unwrap().is_none());

        let inst = interval(0.9);
        let map = inst.map.clone().mark_normalized().unwrap();
        // radius is also 1/sqrt 2 here, so exercise the componentwise path directly
        let hit = quick_reject(&map, &Vector::from_vec(vec![0.9]))
            .unwrap()
            .unwrap();
        assert_eq!(hit.direction[0], 1.0);
        let a = SymMatrix::from_diagonal(&[0.8, -0.2, -0.3, -0.3]).unwrap();
        let skew = MomentMap::new(&[a.scaled(1.0 / a.frobenius_norm())]).unwrap();
        let skew = skew.mark_normalized().unwrap();
        let lo = -0.3 / a.frobenius_norm();
        let hit = quick_reject(&skew, &Vector::from_vec(vec![lo - 0.01]))
            .unwrap()
            .unwrap();
        assert_eq!(hit.direction[0], -1.0);
        assert!(hit.reason.contains("outside"));
        assert!(quick_reject(&skew, &Vector::from_vec(vec![lo + 0.01]))
            .unwrap()
            .is_none());
    }

    #[test]
    fn interval_outside_is_infeasible() {
        let report = decide(&interval(1.0), &OracleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Infeasible);
        let gap = report.infeasible_check.unwrap().gap;
        assert!((gap - (1.0 - FRAC_1_SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn raw_instance_goes_through_preconditioning() {
        let inst = gen_precondition_example();
        let report = decide(&inst, &OracleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
        assert!(report.feasible_check.unwrap().residual_norm <= 2e-8);
        assert!(report.b_hat_norm < 1e-12);
    }

    #[test]
    fn no_precondition_requires_flags() {
        let inst = gen_precondition_example();
        let cfg = OracleConfig {
            precondition: false,
            ..OracleConfig::default()
        };
        assert_eq!(decide(&inst, &cfg).unwrap_err(), Error::NotPreconditioned);
    }

    #[test]
    fn random_instances_verify() {
        for seed in 0..5 {
            let feasible =
                decide(&gen_random(8, 6, seed).unwrap(), &OracleConfig::default()).unwrap();
            assert_eq!(feasible.verdict, Verdict::Feasible, "{:?}", feasible.note);
            assert!(feasible.feasible_check.unwrap().passed);
            let outside = decide(
                &gen_infeasible(8, 6, seed, 0.1).unwrap(),
                &OracleConfig::default(),
            )
            .unwrap();
            assert_eq!(outside.verdict, Verdict::Infeasible, "{:?}", outside.note);
        }
    }

    #[test]
    fn verify_feasible_fixtures() {
        let inst = gen_random(4, 3, 1).unwrap();
        let center = DensityMatrix::maximally_mixed(4);
        let at_center = inst.retarget(Vector::zeros(3)).unwrap();
        assert!(verify_feasible(&at_center, &center, 1e-12).unwrap().passed);
        let far = inst.retarget(Vector::from_element(3, 0.5)).unwrap();
        let check = verify_feasible(&far, &center, 1e-12).unwrap();
        assert!(!check.passed);
        assert!((check.residual_norm - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn verify_infeasible_fixtures() {
        let inst = interval(1.0);
        assert!(
            verify_infeasible(&inst, &Vector::from_vec(vec![1.0]))
                .unwrap()
                .passed
        );
        assert!(matches!(
            verify_infeasible(&inst, &Vector::zeros(1)),
            Err(Error::NotUnit { .. })
        ));
        let inside = interval(0.0);
        for u in [1.0, -1.0] {
            assert!(
                !verify_infeasible(&inside, &Vector::from_vec(vec![u]))
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn roundtrip_at_origin() {
        let map = gen_example_2_1().map;
        let rt = gradient_map_roundtrip(&map, &Vector::zeros(2), &SolverConfig::default()).unwrap();
        assert!(rt.image.amax() < 1e-15);
        assert!(rt.error(&Vector::zeros(2)) < 1e-12);
    }
}
