//! L-BFGS minimization of the dual with three-way termination.
//!
//! After every accepted step the driver checks, in order:
//!
//! 1. `f(y) < 0`: `u = y / |y|` separates `b` from the body (re-verified with
//!    an independent `lambda_max`),
//! 2. `|grad f(y)| <= tol`: `X(y)` is a feasibility certificate,
//! 3. `f(y) <= boundary_tol * |y|`: since `f(y) >= |y| dist(b, boundary)` for
//!    interior `b`, the target is within `boundary_tol` of the boundary or
//!    outside the body,
//! 4. the iteration budget.

mod lbfgs;
mod linesearch;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

pub use lbfgs::{two_loop_direction, LbfgsHistory, CURVATURE_EPS};
pub use linesearch::{wolfe_linesearch, LineSearchOutcome, WolfeParams};

use crate::error::{Error, Result};
use crate::logpart::{DualEval, DualObjective, FullDual};
use crate::moment_map::MomentMap;
use crate::spectral::DensityMatrix;
use crate::Vector;

/// Upper limit for the default iteration budget.
pub const MAX_ITERS_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Gradient-norm tolerance.
    pub tol: f64,
    /// `None` selects `min(10 n^3, 100000)`.
    pub max_iters: Option<usize>,
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_linesearch: usize,
    /// Certified boundary distance below which the solve stops with
    /// [`SolveOutcome::NotInterior`].
    pub boundary_tol: f64,
    /// Refuse maps that are not flagged traceless and orthonormal.
    pub require_normalized: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: None,
            memory: 10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_linesearch: 40,
            boundary_tol: 1e-6,
            require_normalized: true,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::InvalidConfig("memory must be at least 1".into()));
        }
        if self.max_linesearch == 0 {
            return Err(Error::InvalidConfig(
                "max_linesearch must be at least 1".into(),
            ));
        }
        if !(self.boundary_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "boundary_tol must be non-negative".into(),
            ));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_iters_for(&self, n: usize) -> usize {
        self.max_iters.unwrap_or_else(|| {
            10usize
                .saturating_mul(n.saturating_pow(3))
                .clamp(1, MAX_ITERS_CAP)
        })
    }

    fn wolfe(&self) -> WolfeParams {
        WolfeParams {
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            max_evals: self.max_linesearch,
            value_noise: 0.0,
        }
    }
}

/// Result of a solve, in the coordinates of the objective that was minimized.
#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Feasible {
        y_star: Vector,
        density: DensityMatrix,
        residual_norm: f64,
        value: f64,
        iters: usize,
    },
    Infeasible {
        /// Unit vector with `b^T u > lambda_max(A(u))`.
        u: Vector,
        gap: f64,
        iters: usize,
    },
    NotInterior {
        y_last: Vector,
        grad_norm: f64,
        /// Certified upper bound `f(y) / |y|` on the distance from `b` to the boundary.
        distance_bound: f64,
        iters: usize,
    },
    Indeterminate {
        y_last: Vector,
        grad_norm: f64,
        iters: usize,
        reason: String,
    },
}

impl SolveOutcome {
    pub fn iters(&self) -> usize {
        match self {
            SolveOutcome::Feasible { iters, .. }
            | SolveOutcome::Infeasible { iters, .. }
            | SolveOutcome::NotInterior { iters, .. }
            | SolveOutcome::Indeterminate { iters, .. } => *iters,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SolveOutcome::Feasible { .. } => "feasible",
            SolveOutcome::Infeasible { .. } => "infeasible",
            SolveOutcome::NotInterior { .. } => "not-interior",
            SolveOutcome::Indeterminate { .. } => "indeterminate",
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible { .. })
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SolveOutcome::Infeasible { .. })
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub y_norm: f64,
    /// Step length that produced this iterate (0 for the start point).
    pub step: f64,
    pub linesearch_evals: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Iterates where some `|lambda_i(A(y))|` exceeded `2 (n - 1) log(n) / n`.
    pub spectral_bound_violations: usize,
    pub total_evals: usize,
}

/// Sublevel-set eigenvalue bound `2 (n - 1) log(n) / n` for traceless
/// orthonormal maps started at `y = 0`. Monitored only.
pub fn spectral_bound(n: usize) -> f64 {
    let n = n as f64;
    2.0 * (n - 1.0) * n.ln() / n
}

/// Minimizes the dual of `map` with target `b`, starting from `y = 0`.
pub fn minimize(
    map: &MomentMap,
    b: &Vector,
    config: &SolverConfig,
) -> Result<(SolveOutcome, IterationTrace)> {
    minimize_objective(&FullDual::new(map, b)?, config)
}

struct Monitor {
    trace: IterationTrace,
    record: bool,
    bound: Option<f64>,
}

impl Monitor {
    fn observe(&mut self, k: usize, y: &Vector, e: &DualEval, step: f64, evals: usize) {
        self.trace.total_evals += evals;
        if let Some(bound) = self.bound {
            if e.spectral_radius() > bound {
                if self.trace.spectral_bound_violations == 0 {
                    log::warn!(
                        "iterate {k}: spectral radius {:.3e} exceeds sublevel bound {bound:.3e}",
                        e.spectral_radius()
                    );
                }
                self.trace.spectral_bound_violations += 1;
            }
        }
        if self.record {
            self.trace.records.push(IterationRecord {
                k,
                value: e.value,
                grad_norm: e.gradient_norm(),
                y_norm: y.norm(),
                step,
                linesearch_evals: evals,
            });
        }
        log::debug!(
            "k={k} f={:.12e} |g|={:.3e} |y|={:.3e} step={step:.3e} evals={evals}",
            e.value,
            e.gradient_norm(),
            y.norm()
        );
    }
}

/// Minimizes any [`DualObjective`] from `y = 0`.
pub fn minimize_objective<O: DualObjective + ?Sized>(
    obj: &O,
    config: &SolverConfig,
) -> Result<(SolveOutcome, IterationTrace)> {
    config.validate()?;
    if config.require_normalized && !obj.is_normalized() {
        return Err(Error::NotPreconditioned);
    }
    let b = obj.target();
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "target vector has non-finite entries".into(),
        ));
    }
    let n = obj.n();
    let m = obj.m();
    let max_iters = config.max_iters_for(n);
    let wolfe = config.wolfe();
    let mut monitor = Monitor {
        trace: IterationTrace::default(),
        record: config.record_trace,
        bound: obj.is_normalized().then(|| spectral_bound(n)),
    };

    let mut y = Vector::zeros(m);
    let mut current = obj.eval(&y)?;
    monitor.observe(0, &y, &current, 0.0, 1);
    let mut history = LbfgsHistory::new(config.memory);
    let mut iters = 0usize;

    loop {
        if let Some(outcome) = check_termination(obj, config, &y, &current, iters)? {
            return Ok((outcome, monitor.trace));
        }
        if iters >= max_iters {
            let outcome = SolveOutcome::Indeterminate {
                grad_norm: current.gradient_norm(),
                y_last: y,
                iters,
                reason: format!("iteration budget of {max_iters} exhausted"),
            };
            return Ok((outcome, monitor.trace));
        }

        // At y = 0 a normalized map has Hessian I / n, so the first trial
        // step n is the exact Newton step.
        let first_step = if iters == 0 && obj.is_normalized() {
            n as f64
        } else {
            1.0
        };
        let mut direction = two_loop_direction(&history, &current.gradient);
        if !(direction.dot(&current.gradient) < 0.0) {
            history.clear();
            direction = -current.gradient.clone();
        }
        let initial = if history.is_empty() { first_step } else { 1.0 };

        let search = match line_search(obj, &y, &current, &direction, initial, &wolfe) {
            Ok(found) => found,
            Err(Error::LineSearchFailed(first)) if !history.is_empty() => {
                log::debug!("line search failed ({first}); restarting from steepest descent");
                history.clear();
                direction = -current.gradient.clone();
                match line_search(obj, &y, &current, &direction, 1.0, &wolfe) {
                    Ok(found) => found,
                    Err(Error::LineSearchFailed(reason)) => {
                        return Ok((indeterminate(y, &current, iters, reason), monitor.trace))
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::LineSearchFailed(reason)) => {
                return Ok((indeterminate(y, &current, iters, reason), monitor.trace))
            }
            Err(e) => return Err(e),
        };

        let s = &direction * search.step;
        let next_y = &y + &s;
        let next = search.payload;
        history.push(s, &next.gradient - &current.gradient);
        y = next_y;
        current = next;
        iters += 1;
        monitor.observe(iters, &y, &current, search.step, search.evals);
    }
}

fn indeterminate(y: Vector, current: &DualEval, iters: usize, reason: String) -> SolveOutcome {
    SolveOutcome::Indeterminate {
        y_last: y,
        grad_norm: current.gradient_norm(),
        iters,
        reason,
    }
}

fn line_search<O: DualObjective + ?Sized>(
    obj: &O,
    y: &Vector,
    current: &DualEval,
    direction: &Vector,
    initial: f64,
    wolfe: &WolfeParams,
) -> Result<LineSearchOutcome<DualEval>> {
    let slope0 = current.gradient.dot(direction);
    // f = log Z - b^T y loses about eps (|log Z| + |b^T y|) to cancellation
    let noise = 64.0
        * f64::EPSILON
        * (current.log_partition.abs() + (current.log_partition - current.value).abs());
    let wolfe = WolfeParams {
        value_noise: noise,
        ..*wolfe
    };
    wolfe_linesearch(
        |step| {
            let trial = y + direction * step;
            let e = obj.eval(&trial)?;
            let slope = e.gradient.dot(direction);
            Ok((e.value, slope, e))
        },
        current.value,
        slope0,
        initial,
        &wolfe,
    )
}

fn check_termination<O: DualObjective + ?Sized>(
    obj: &O,
    config: &SolverConfig,
    y: &Vector,
    current: &DualEval,
    iters: usize,
) -> Result<Option<SolveOutcome>> {
    let y_norm = y.norm();
    if current.value < 0.0 && y_norm > 0.0 {
        let u = y / y_norm;
        let gap = obj.target().dot(&u) - obj.support(&u)?;
        if gap > 0.0 {
            return Ok(Some(SolveOutcome::Infeasible { u, gap, iters }));
        }
        log::debug!("negative dual value but separation gap {gap:e} is not positive");
    }
    let grad_norm = current.gradient_norm();
    if grad_norm <= config.tol {
        return Ok(Some(SolveOutcome::Feasible {
            y_star: y.clone(),
            density: current.density.clone(),
            residual_norm: grad_norm,
            value: current.value,
            iters,
        }));
    }
    if y_norm > 0.0 && current.value <= config.boundary_tol * y_norm {
        return Ok(Some(SolveOutcome::NotInterior {
            y_last: y.clone(),
            grad_norm,
            distance_bound: current.value.max(0.0) / y_norm,
            iters,
        }));
    }
    Ok(None)
}
