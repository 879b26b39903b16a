//! Strong Wolfe line search (bracketing + zoom with cubic interpolation).

use alloc::format;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    /// Rounding error expected in `phi`. Within this band sufficient decrease
    /// is judged from the slope instead: `phi'(a) <= (2 c1 - 1) phi'(0)`.
    pub value_noise: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 40,
            value_noise: 0.0,
        }
    }
}

/// Accepted point along the search ray.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub step: f64,
    pub value: f64,
    pub slope: f64,
    pub payload: T,
    pub evals: usize,
    /// False when the budget ran out and the best sufficient-decrease point
    /// was returned instead.
    pub strong_wolfe: bool,
}

struct Point<T> {
    step: f64,
    value: f64,
    slope: f64,
    payload: Option<T>,
}

/// Minimizer of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, if defined.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> Option<f64> {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    x.is_finite().then_some(x)
}

/// Searches `phi(step) = f(y + step d)` for a step satisfying the strong Wolfe
/// conditions
///
/// ```text
/// phi(a) <= phi(0) + c1 a phi'(0),    |phi'(a)| <= c2 |phi'(0)|.
/// ```
///
/// With `value_noise > 0` this is the approximate Wolfe test, which keeps
/// working once the decrease drops below the rounding error of `phi`.
///
/// `phi` returns value, slope and a payload that is handed back for the
/// accepted step. Evaluation errors are treated as `+inf` and shrink the step.
pub fn wolfe_linesearch<T, F>(
    mut phi: F,
    value0: f64,
    slope0: f64,
    initial_step: f64,
    params: &WolfeParams,
) -> Result<LineSearchOutcome<T>>
where
    F: FnMut(f64) -> Result<(f64, f64, T)>,
{
    if !(slope0 < 0.0) {
        return Err(Error::InvalidInput(format!(
            "line search needs a descent direction (slope {slope0:e})"
        )));
    }
    if !(initial_step > 0.0) || !initial_step.is_finite() {
        return Err(Error::InvalidInput(format!(
            "initial step {initial_step} must be positive"
        )));
    }
    let WolfeParams {
        c1,
        c2,
        max_evals,
        value_noise,
    } = *params;
    let armijo = |step: f64, value: f64| value <= value0 + c1 * step * slope0;
    let sufficient = |step: f64, value: f64, slope: f64| {
        armijo(step, value) || (value <= value0 + value_noise && slope <= (2.0 * c1 - 1.0) * slope0)
    };
    // clearly above the sufficient-decrease line: the step is too long
    let too_far = |step: f64, value: f64| !armijo(step, value) && !(value <= value0 + value_noise);
    let curvature = |slope: f64| slope.abs() <= -c2 * slope0;

    let mut evals = 0usize;
    let mut probe = |step: f64, evals: &mut usize| -> Point<T> {
        *evals += 1;
        match phi(step) {
            Ok((value, slope, payload)) if value.is_finite() && slope.is_finite() => Point {
                step,
                value,
                slope,
                payload: Some(payload),
            },
            _ => Point {
                step,
                value: f64::INFINITY,
                slope: f64::NAN,
                payload: None,
            },
        }
    };
    let mut best: Option<Point<T>> = None;
    let keep_best = |p: &mut Point<T>, best: &mut Option<Point<T>>| {
        if p.payload.is_some()
            && sufficient(p.step, p.value, p.slope)
            && p.value < value0 + params.value_noise
            && best.as_ref().is_none_or(|b| p.value < b.value)
        {
            *best = Some(Point {
                step: p.step,
                value: p.value,
                slope: p.slope,
                payload: p.payload.take(),
            });
        }
    };
    let accept = |p: Point<T>, evals: usize| LineSearchOutcome {
        step: p.step,
        value: p.value,
        slope: p.slope,
        payload: p.payload.expect("accepted point was evaluated"),
        evals,
        strong_wolfe: true,
    };

    // Bracketing phase.
    let mut prev = Point {
        step: 0.0,
        value: value0,
        slope: slope0,
        payload: None,
    };
    let mut step = initial_step;
    let (mut lo, mut hi) = loop {
        if evals >= max_evals {
            return fallback(best, evals);
        }
        let mut cur = probe(step, &mut evals);
        if too_far(cur.step, cur.value) || (evals > 1 && cur.value >= prev.value + value_noise) {
            break (prev, cur);
        }
        if sufficient(cur.step, cur.value, cur.slope) && curvature(cur.slope) {
            return Ok(accept(cur, evals));
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        keep_best(&mut cur, &mut best);
        let next = cubic_min(
            prev.step, prev.value, prev.slope, cur.step, cur.value, cur.slope,
        )
        .filter(|&x| x > 2.0 * cur.step)
        .map_or(4.0 * cur.step, |x| x.min(10.0 * cur.step));
        prev = cur;
        step = next;
    };

    // Zoom phase: lo is not too long and the minimizer lies between lo and hi.
    loop {
        let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
        let width = b - a;
        if evals >= max_evals || width <= f64::EPSILON * b {
            keep_best(&mut lo, &mut best);
            return fallback(best, evals);
        }
        let guess = if hi.value.is_finite() && hi.slope.is_finite() {
            cubic_min(lo.step, lo.value, lo.slope, hi.step, hi.value, hi.slope)
        } else {
            None
        };
        let step = guess
            .filter(|&x| x > a + 0.1 * width && x < b - 0.1 * width)
            .unwrap_or(0.5 * (a + b));
        let mut cur = probe(step, &mut evals);
        if too_far(cur.step, cur.value) || cur.value >= lo.value + value_noise {
            hi = cur;
        } else {
            if sufficient(cur.step, cur.value, cur.slope) && curvature(cur.slope) {
                return Ok(accept(cur, evals));
            }
            if cur.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            keep_best(&mut cur, &mut best);
            lo = cur;
        }
    }
}

fn fallback<T>(best: Option<Point<T>>, evals: usize) -> Result<LineSearchOutcome<T>> {
    match best {
        Some(p) => Ok(LineSearchOutcome {
            step: p.step,
            value: p.value,
            slope: p.slope,
            payload: p.payload.expect("best point carries its payload"),
            evals,
            strong_wolfe: false,
        }),
        None => Err(Error::LineSearchFailed(format!(
            "no sufficient decrease after {evals} evaluations"
        ))),
    }
}
