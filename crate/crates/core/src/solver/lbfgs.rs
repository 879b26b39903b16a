use alloc::collections::VecDeque;

use crate::Vector;

/// Curvature pairs with `s^T y <= CURVATURE_EPS |s| |y|` are skipped.
pub const CURVATURE_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Pair {
    s: Vector,
    y: Vector,
    rho: f64,
}

/// Bounded history of `(s, y)` pairs, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    pairs: VecDeque<Pair>,
    capacity: usize,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    /// Stores the pair unless it violates the curvature safeguard. Returns
    /// whether the pair was kept.
    pub fn push(&mut self, s: Vector, y: Vector) -> bool {
        let sy = s.dot(&y);
        if !(sy > CURVATURE_EPS * s.norm() * y.norm()) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s,
            y,
            rho: 1.0 / sy,
        });
        true
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Initial inverse-Hessian scaling `s^T y / y^T y` of the newest pair.
    pub fn scaling(&self) -> f64 {
        self.pairs
            .back()
            .map(|p| 1.0 / (p.rho * p.y.norm_squared()))
            .unwrap_or(1.0)
    }
}

/// Two-loop recursion: returns `-H grad` for the L-BFGS inverse-Hessian
/// approximation `H`. With an empty history this is `-grad`.
pub fn two_loop_direction(history: &LbfgsHistory, grad: &Vector) -> Vector {
    let k = history.pairs.len();
    let mut q = grad.clone();
    let mut alpha = alloc::vec![0.0; k];
    for (idx, p) in history.pairs.iter().enumerate().rev() {
        let a = p.rho * p.s.dot(&q);
        alpha[idx] = a;
        q.axpy(-a, &p.y, 1.0);
    }
    q *= history.scaling();
    for (idx, p) in history.pairs.iter().enumerate() {
        let beta = p.rho * p.y.dot(&q);
        q.axpy(alpha[idx] - beta, &p.s, 1.0);
    }
    -q
}
