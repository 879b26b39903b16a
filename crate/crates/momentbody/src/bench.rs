//! Timing grid over seeded random instances.

use std::collections::BTreeMap;
use std::time::Instant;

use momentbody_core::instances::gen_random;
use momentbody_core::moment_map::svec_len;
use momentbody_core::oracle::OracleConfig;
use momentbody_core::{decide, SolverConfig};
use serde::Serialize;

use crate::error::AppError;

#[derive(Debug, Clone)]
pub struct BenchGrid {
    /// `(n, m)` pairs.
    pub cells: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    /// Timed solves per seed.
    pub repeats: usize,
    pub solver: SolverConfig,
}

/// One line per `(n, m)` cell. Times cover `decide` only, not generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub seeds: usize,
    pub repeats: usize,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub min_iters: usize,
    pub max_iters: usize,
    /// Every seed needed the same number of iterations on every repeat.
    pub iters_stable: bool,
    /// Largest verified residual among feasible solves; NaN when there are none.
    pub max_residual: f64,
    /// `verdict:count` pairs joined by `;`.
    pub verdicts: String,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

impl BenchGrid {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.cells.is_empty() {
            return Err(AppError::Usage("bench grid is empty; pass --n".into()));
        }
        if self.seeds.is_empty() || self.repeats == 0 {
            return Err(AppError::Usage(
                "--seeds and --repeats must be positive".into(),
            ));
        }
        for &(n, m) in &self.cells {
            if n == 0 || m == 0 || m + 1 > svec_len(n) {
                return Err(AppError::Usage(format!(
                    "cell n = {n}, m = {m} needs 1 <= m <= n(n+1)/2 - 1"
                )));
            }
        }
        self.solver.validate()?;
        Ok(())
    }
}

pub fn run_grid(grid: &BenchGrid) -> Result<Vec<BenchRow>, AppError> {
    grid.validate()?;
    let config = OracleConfig {
        solver: SolverConfig {
            record_trace: false,
            ..grid.solver.clone()
        },
        ..OracleConfig::default()
    };
    let mut rows = Vec::with_capacity(grid.cells.len());
    for &(n, m) in &grid.cells {
        let mut times = Vec::new();
        let mut iters = Vec::new();
        let mut stable = true;
        let mut max_residual = f64::NAN;
        let mut verdicts = BTreeMap::new();
        for &seed in &grid.seeds {
            let inst = gen_random(n, m, seed)?;
            let mut first = None;
            for _ in 0..grid.repeats {
                let t = Instant::now();
                let report = decide(&inst, &config)?;
                times.push(t.elapsed().as_secs_f64());
                iters.push(report.iters);
                stable &= *first.get_or_insert(report.iters) == report.iters;
                *verdicts.entry(report.verdict.as_str()).or_insert(0usize) += 1;
                if let Some(c) = &report.feasible_check {
                    max_residual = max_residual.max(c.residual_norm);
                }
            }
            log::debug!(
                "n = {n}, m = {m}, seed = {seed}: {} iterations",
                iters.last().unwrap_or(&0)
            );
        }
        rows.push(BenchRow {
            n,
            m,
            seeds: grid.seeds.len(),
            repeats: grid.repeats,
            median_s: median(&mut times),
            min_s: times[0],
            max_s: times[times.len() - 1],
            min_iters: iters.iter().copied().min().unwrap_or(0),
            max_iters: iters.iter().copied().max().unwrap_or(0),
            iters_stable: stable,
            max_residual,
            verdicts: verdicts
                .iter()
                .map(|(v, c)| format!("{v}:{c}"))
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> Result<String, AppError> {
    let err = |e: csv::Error| AppError::Internal(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    if rows.is_empty() {
        w.write_record(["n"]).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| AppError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AppError::Internal(e.to_string()))
}
