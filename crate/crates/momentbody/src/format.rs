//! JSON instance and certificate files.
//!
//! Matrices are stored dense and row-major. Field order is fixed by the
//! struct declarations and floats are written in shortest round-trip form.

use std::fs;
use std::io::Write;
use std::path::Path;

use momentbody_core::oracle::{Certificate, MembershipReport};
use momentbody_core::{Instance, MomentMap, SymMatrix, Vector};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest `|A_ij - A_ji|` accepted when reading a matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub traceless: bool,
    pub orthonormal: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    /// `m` matrices, each a list of `n` rows.
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub meta: Meta,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> AppError {
    AppError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let map = &inst.map;
        let matrices = (0..map.m())
            .map(|i| {
                let a = map.matrix(i);
                (0..map.n())
                    .map(|r| (0..map.n()).map(|c| a.get(r, c)).collect())
                    .collect()
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            n: map.n(),
            m: map.m(),
            matrices,
            b: inst.b.iter().copied().collect(),
            blocks: map.blocks().map(<[usize]>::to_vec),
            flags: Flags {
                traceless: map.is_traceless(),
                orthonormal: map.is_orthonormal(),
            },
            meta: Meta {
                label: inst.label.clone(),
                generator: inst.generator.clone(),
                seed: inst.seed,
            },
        }
    }

    /// Validates dimensions, symmetry and declared flags.
    pub fn to_instance(&self) -> Result<Instance, AppError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(schema("n", "n and m must be positive"));
        }
        if self.matrices.len() != m {
            return Err(schema(
                "matrices",
                format!("expected {m} matrices, found {}", self.matrices.len()),
            ));
        }
        if self.b.len() != m {
            return Err(schema(
                "b",
                format!("expected {m} entries, found {}", self.b.len()),
            ));
        }
        if let Some(k) = self.b.iter().position(|x| !x.is_finite()) {
            return Err(schema(format!("b[{k}]"), "entry is not finite"));
        }
        let mut mats = Vec::with_capacity(m);
        for (i, rows) in self.matrices.iter().enumerate() {
            if rows.len() != n {
                return Err(schema(
                    format!("matrices[{i}]"),
                    format!("expected {n} rows, found {}", rows.len()),
                ));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(schema(
                        format!("matrices[{i}][{r}]"),
                        format!("expected {n} columns, found {}", row.len()),
                    ));
                }
            }
            for r in 0..n {
                for c in 0..r {
                    let gap = (rows[r][c] - rows[c][r]).abs();
                    if gap.is_nan() || gap > SYMMETRY_TOL {
                        return Err(schema(
                            format!("matrices[{i}][{r}][{c}]"),
                            format!("matrix is not symmetric (|a_rc - a_cr| = {gap:e})"),
                        ));
                    }
                }
            }
            let a = SymMatrix::from_rows(rows)
                .map_err(|e| schema(format!("matrices[{i}]"), e.to_string()))?;
            mats.push(a);
        }
        let mut map = MomentMap::new(&mats)?;
        if let Some(blocks) = &self.blocks {
            map = map
                .with_blocks(blocks.clone())
                .map_err(|e| schema("blocks", e.to_string()))?;
        }
        match (self.flags.traceless, self.flags.orthonormal) {
            (false, false) => {}
            (true, true) => {
                map = map
                    .mark_normalized()
                    .map_err(|e| schema("flags", e.to_string()))?
            }
            _ => {
                return Err(schema(
                    "flags",
                    "traceless and orthonormal must be set together",
                ))
            }
        }
        let mut inst = Instance::new(
            map,
            Vector::from_vec(self.b.clone()),
            self.meta.label.clone(),
        )?;
        inst.generator = self.meta.generator.clone();
        inst.seed = self.meta.seed;
        Ok(inst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Feasible {
        /// `X*` as `n` rows.
        density: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
    Infeasible {
        u: Vec<f64>,
    },
    NotInterior {
        y_last: Vec<f64>,
        distance_bound: f64,
    },
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub residual_norm: Option<f64>,
    pub trace_error: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub eps: Option<f64>,
    pub gap: Option<f64>,
    pub support: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Duality {
    pub f_star: f64,
    pub entropy: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub iters: usize,
    pub tol: f64,
    pub solver_tol: f64,
    pub b_hat_norm: f64,
    pub quick_reject: Option<String>,
    pub note: Option<String>,
    pub spectral_bound_violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub precondition_s: f64,
    pub solve_s: f64,
    pub verify_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub schema_version: u32,
    pub verdict: String,
    pub exit_code: i32,
    pub n: usize,
    pub m: usize,
    pub payload: Payload,
    pub checks: Checks,
    pub duality: Option<Duality>,
    pub solve: SolveInfo,
    pub timings: TimingInfo,
    pub meta: Meta,
}

impl CertificateFile {
    pub fn from_report(inst: &Instance, report: &MembershipReport, tol: f64) -> Self {
        let vec = |v: &Vector| v.iter().copied().collect::<Vec<f64>>();
        let payload = match &report.certificate {
            Certificate::Feasible { density, y } => {
                let x = density.as_sym();
                Payload::Feasible {
                    density: (0..x.n())
                        .map(|r| (0..x.n()).map(|c| x.get(r, c)).collect())
                        .collect(),
                    y: vec(y),
                }
            }
            Certificate::Infeasible { u } => Payload::Infeasible { u: vec(u) },
            Certificate::NotInterior {
                y_last,
                distance_bound,
            } => Payload::NotInterior {
                y_last: vec(y_last),
                distance_bound: *distance_bound,
            },
            Certificate::None => Payload::None,
        };
        let mut checks = Checks::default();
        if let Some(c) = &report.feasible_check {
            checks.residual_norm = Some(c.residual_norm);
            checks.trace_error = Some(c.trace_error);
            checks.min_eigenvalue = Some(c.min_eigenvalue);
            checks.eps = Some(c.eps);
            checks.passed = c.passed;
        }
        if let Some(c) = &report.infeasible_check {
            checks.gap = Some(c.gap);
            checks.support = Some(c.support);
            checks.passed = c.passed;
        }
        Self {
            schema_version: SCHEMA_VERSION,
            verdict: report.verdict.as_str().to_string(),
            exit_code: crate::cli::verdict_exit_code(report.verdict),
            n: inst.map.n(),
            m: inst.map.m(),
            payload,
            checks,
            duality: report.duality.map(|d| Duality {
                f_star: d.f_star,
                entropy: d.entropy,
                mismatch: d.mismatch,
            }),
            solve: SolveInfo {
                iters: report.iters,
                tol,
                solver_tol: report.solver_tol,
                b_hat_norm: report.b_hat_norm,
                quick_reject: report.quick_reject.as_ref().map(|q| q.reason.clone()),
                note: report.note.clone(),
                spectral_bound_violations: report.trace.spectral_bound_violations,
            },
            timings: TimingInfo {
                precondition_s: report.timings.precondition,
                solve_s: report.timings.solve,
                verify_s: report.timings.verify,
            },
            meta: Meta {
                label: inst.label.clone(),
                generator: inst.generator.clone(),
                seed: inst.seed,
            },
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, AppError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| AppError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T, AppError> {
    serde_json::from_str(text).map_err(|e| AppError::Json {
        source_name: source.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|e| AppError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    let io = |e| AppError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(text.as_bytes()).map_err(io)
}

pub fn read_instance(path: &Path) -> Result<Instance, AppError> {
    let file: InstanceFile = from_json(&read_text(path)?, &path.display().to_string())?;
    file.to_instance()
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<(), AppError> {
    write_text(path, &to_json(&InstanceFile::from_instance(inst))?)
}

pub fn read_certificate(path: &Path) -> Result<CertificateFile, AppError> {
    let cert: CertificateFile = from_json(&read_text(path)?, &path.display().to_string())?;
    if cert.schema_version != SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!("unsupported version {}", cert.schema_version),
        ));
    }
    Ok(cert)
}

pub fn write_certificate(path: &Path, cert: &CertificateFile) -> Result<(), AppError> {
    write_text(path, &to_json(cert)?)
}
