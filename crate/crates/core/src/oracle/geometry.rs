//! Support function, widths and boundary points of a moment body.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Result};
use crate::moment_map::MomentMap;
use crate::spectral::{eigh, lambda_extremes, DensityMatrix};
use crate::Vector;

/// Circumradius `sqrt((n - 1) / n)` of a normalized body around the origin.
pub fn radius(n: usize) -> f64 {
    let n = n as f64;
    ((n - 1.0) / n).sqrt()
}

/// Upper bound `sqrt 2` on the diameter of a normalized body.
pub const DIAMETER: f64 = core::f64::consts::SQRT_2;

/// Lower bound `sqrt(n / (floor(n/2) ceil(n/2)))` on every width of a normalized body.
pub fn thickness(n: usize) -> f64 {
    let lo = (n / 2) as f64;
    let hi = n.div_ceil(2) as f64;
    (n as f64 / (lo * hi)).sqrt()
}

/// `h(u) = lambda_max(A(u))`.
pub fn support(map: &MomentMap, u: &Vector) -> Result<f64> {
    Ok(support_and_width(map, u)?.0)
}

/// `(h(u), w(u))` with width `w(u) = lambda_max(A(u)) - lambda_min(A(u))`.
pub fn support_and_width(map: &MomentMap, u: &Vector) -> Result<(f64, f64)> {
    check_len("direction", map.m(), u.len())?;
    let (lo, hi) = lambda_extremes(&map.adjoint(u)?)?;
    Ok((hi, hi - lo))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub direction: Vector,
    pub support: f64,
    /// `A(v v^T)` for a top eigenvector `v` of `A(u)`; satisfies `u^T x = h(u)`.
    pub point: Vector,
}

/// One exposed point per direction. Ties in the top eigenvalue are resolved
/// by the eigensolver's choice of eigenvector, which is still a maximizer.
pub fn boundary_sample(map: &MomentMap, directions: &[Vector]) -> Result<Vec<BoundaryPoint>> {
    directions
        .iter()
        .map(|u| {
            check_len("direction", map.m(), u.len())?;
            let dec = eigh(&map.adjoint(u)?)?;
            let top = dec.eigenvectors.column(map.n() - 1).into_owned();
            let point = map.apply(DensityMatrix::pure(&top)?.as_sym())?;
            Ok(BoundaryPoint {
                direction: u.clone(),
                support: dec.max(),
                point,
            })
        })
        .collect()
}

/// `count` equally spaced unit vectors in the plane, starting at `(1, 0)`.
pub fn planar_directions(count: usize) -> Vec<Vector> {
    (0..count)
        .map(|k| {
            let t = 2.0 * core::f64::consts::PI * k as f64 / count as f64;
            Vector::from_vec(alloc::vec![t.cos(), t.sin()])
        })
        .collect()
}

/// Roughly `count` unit vectors in `R^3` on a Fibonacci spiral.
pub fn sphere_directions(count: usize) -> Vec<Vector> {
    let golden = core::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = golden * k as f64;
            Vector::from_vec(alloc::vec![r * t.cos(), r * t.sin(), z])
        })
        .collect()
}
