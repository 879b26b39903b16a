//! Fixtures from the literature and seeded random instances.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::moment_map::{svec_len, MomentMap};
use crate::precondition::precondition;
use crate::spectral::{eigh, exp1, lambda_extremes, DensityMatrix, SymMatrix};
use crate::{Matrix, Vector};

/// Seeded generator used by every random fixture.
pub type InstanceRng = ChaCha20Rng;

/// A moment map paired with a target vector.
#[derive(Debug, Clone)]
pub struct Instance {
    pub map: MomentMap,
    pub b: Vector,
    pub label: String,
    pub generator: Option<String>,
    pub seed: Option<u64>,
}

impl Instance {
    pub fn new(map: MomentMap, b: Vector, label: impl Into<String>) -> Result<Self> {
        check_len("target vector", map.m(), b.len())?;
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "target vector has non-finite entries".into(),
            ));
        }
        Ok(Self {
            map,
            b,
            label: label.into(),
            generator: None,
            seed: None,
        })
    }

    pub fn with_provenance(mut self, generator: &str, seed: Option<u64>) -> Self {
        self.generator = Some(generator.to_string());
        self.seed = seed;
        self
    }

    /// Same map with a different target.
    pub fn retarget(&self, b: Vector) -> Result<Self> {
        let mut out = Instance::new(self.map.clone(), b, self.label.clone())?;
        out.generator = self.generator.clone();
        out.seed = self.seed;
        Ok(out)
    }
}

fn rows3(rows: [[f64; 3]; 3], scale: f64) -> SymMatrix {
    SymMatrix::from_rows(&rows)
        .expect("fixture is symmetric")
        .scaled(scale)
}

/// Planar body: convex hull of an ellipse and the point `(-1/2, 1/2)`.
/// The matrices are already traceless and orthonormal.
pub fn gen_example_2_1() -> Instance {
    let a1 = rows3([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]], 0.5);
    let a2 = rows3([[-1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 0.5);
    let map = MomentMap::new(&[a1, a2])
        .and_then(MomentMap::mark_normalized)
        .expect("fixture is normalized");
    Instance::new(map, Vector::zeros(2), "example-2.1")
        .expect("fixture is consistent")
        .with_provenance("example-2.1", None)
}

/// Convex hull of two orthogonal unit circles in `R^3`, block structure `(2, 2)`.
pub fn gen_example_2_2() -> Instance {
    let j = [1.0, 0.0, 0.0, -1.0];
    let k = [0.0, 1.0, 1.0, 0.0];
    let zero = [0.0; 4];
    let block = |top: [f64; 4], bottom: [f64; 4]| {
        let mut m = Matrix::zeros(4, 4);
        for r in 0..2 {
            for c in 0..2 {
                m[(r, c)] = top[2 * r + c];
                m[(r + 2, c + 2)] = bottom[2 * r + c];
            }
        }
        SymMatrix::new(m).expect("fixture is finite")
    };
    let map = MomentMap::new(&[block(j, j), block(k, zero), block(zero, k)])
        .and_then(|m| m.with_blocks(vec![2, 2]))
        .expect("fixture is block diagonal");
    Instance::new(map, Vector::zeros(3), "example-2.2")
        .expect("fixture is consistent")
        .with_provenance("example-2.2", None)
}

/// Raw (unnormalized) pair used to illustrate preconditioning; its
/// preconditioned body is the one of [`gen_example_2_1`].
pub fn gen_precondition_example() -> Instance {
    let a1 = rows3([[6.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, -2.0]], 1.0);
    let a2 = rows3([[-2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 6.0]], 0.5);
    let map = MomentMap::new(&[a1, a2]).expect("fixture is consistent");
    // image of I/3
    let b = Vector::from_vec(vec![2.0, 1.0]);
    Instance::new(map, b, "precondition-example")
        .expect("fixture is consistent")
        .with_provenance("precondition-example", None)
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("n and m must be positive".into()));
    }
    if m + 1 > svec_len(n) {
        return Err(Error::InvalidInput(format!(
            "m = {m} exceeds n(n+1)/2 - 1 = {}; I, A_1, ..., A_m cannot be independent",
            svec_len(n) - 1
        )));
    }
    Ok(())
}

/// Symmetrized matrix with i.i.d. standard normal entries.
pub fn random_symmetric<R: Rng>(n: usize, rng: &mut R) -> SymMatrix {
    let m = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::symmetrized(m)
}

/// Uniform direction on the unit sphere of `R^d`.
pub fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Raw map with symmetrized standard normal matrices, not preconditioned.
pub fn gen_raw_random_map(n: usize, m: usize, seed: u64) -> Result<MomentMap> {
    check_sizes(n, m)?;
    let mut rng = InstanceRng::seed_from_u64(seed);
    let mats: Vec<SymMatrix> = (0..m).map(|_| random_symmetric(n, &mut rng)).collect();
    MomentMap::new(&mats)
}

/// Interior instance: normal random map, preconditioned, with target
/// `b = A(exp1(S))` for a normal random symmetric `S`.
pub fn gen_random(n: usize, m: usize, seed: u64) -> Result<Instance> {
    check_sizes(n, m)?;
    let mut rng = InstanceRng::seed_from_u64(seed);
    let mats: Vec<SymMatrix> = (0..m).map(|_| random_symmetric(n, &mut rng)).collect();
    let raw = Instance::new(MomentMap::new(&mats)?, Vector::zeros(m), "")?;
    let pre = precondition(&raw)?;
    let (x, _) = exp1(&random_symmetric(n, &mut rng))?;
    let b = pre.map.apply(x.as_sym())?;
    Ok(
        Instance::new(pre.map, b, format!("random-n{n}-m{m}-s{seed}"))?
            .with_provenance("random", Some(seed)),
    )
}

/// Target `(1 + margin) A(v v^T)` where `v` is a top eigenvector of `A(u)`
/// for a random unit direction `u`. Positive margins land strictly outside;
/// this is checked against the support function before returning.
pub fn gen_infeasible(n: usize, m: usize, seed: u64, margin: f64) -> Result<Instance> {
    check_sizes(n, m)?;
    if !margin.is_finite() || margin <= -1.0 {
        return Err(Error::InvalidInput(format!(
            "margin {margin} must be finite and > -1"
        )));
    }
    let mut rng = InstanceRng::seed_from_u64(seed);
    let mats: Vec<SymMatrix> = (0..m).map(|_| random_symmetric(n, &mut rng)).collect();
    let raw = Instance::new(MomentMap::new(&mats)?, Vector::zeros(m), "")?;
    let map = precondition(&raw)?.map;
    let u = random_unit(m, &mut rng);
    let dec = eigh(&map.adjoint(&u)?)?;
    let v = dec.eigenvectors.column(n - 1).into_owned();
    let boundary = map.apply(DensityMatrix::pure(&v)?.as_sym())?;
    let b = boundary * (1.0 + margin);
    if margin > 0.0 {
        let (_, support) = lambda_extremes(&map.adjoint(&u)?)?;
        let gap = b.dot(&u) - support;
        if !(gap > 0.0) {
            return Err(Error::NotASeparator { gap });
        }
    }
    Ok(
        Instance::new(map, b, format!("infeasible-n{n}-m{m}-s{seed}"))?
            .with_provenance("infeasible", Some(seed)),
    )
}
