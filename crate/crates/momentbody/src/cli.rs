//! `momentbody` subcommands.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use momentbody_core::instances::{
    gen_example_2_1, gen_example_2_2, gen_infeasible, gen_precondition_example, gen_random,
};
use momentbody_core::oracle::{
    boundary_sample, planar_directions, sphere_directions, verify_feasible, verify_infeasible,
    OracleConfig,
};
use momentbody_core::precondition::{precondition, precondition_map};
use momentbody_core::solver::IterationTrace;
use momentbody_core::{
    decide, DensityMatrix, Instance, Matrix, MomentMap, SolverConfig, SymMatrix, Vector, Verdict,
};
use serde::Serialize;

use crate::bench::{run_grid, BenchGrid};
use crate::error::{AppError, EXIT_USAGE};
use crate::format::{
    read_certificate, read_instance, to_json, write_certificate, write_instance, write_text,
    CertificateFile, InstanceFile, Payload, SCHEMA_VERSION,
};

#[derive(Debug, Parser)]
#[command(
    name = "momentbody",
    version,
    about = "Membership oracle for moment bodies of the spectraplex"
)]
pub struct Cli {
    /// Print the iteration trace to stderr. `RUST_LOG=debug` adds solver logs.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a fixture or seeded random instance.
    Generate(GenerateArgs),
    /// Precondition an instance and write it with its transform record.
    Precondition(PreconditionArgs),
    /// Decide whether b lies in the moment body.
    Solve(SolveArgs),
    /// Recheck a certificate against an instance.
    Verify(VerifyArgs),
    /// Sample boundary points of a planar or spatial moment body.
    Boundary(BoundaryArgs),
    /// Time solves over a grid of sizes and seeds.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Random,
    Infeasible,
    #[value(name = "example-2-1")]
    Example21,
    #[value(name = "example-2-2")]
    Example22,
    PreconditionExample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Gradient norm at which the dual solve stops.
    #[arg(long, default_value = "1e-8")]
    pub tol: f64,
    /// Iteration budget (default min(10 n^3, 100000)).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// L-BFGS history length.
    #[arg(long, default_value_t = 10)]
    pub memory: usize,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig, AppError> {
        let config = SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            memory: self.memory,
            ..SolverConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Kind::Random)]
    pub kind: Kind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative distance outside the body, for `--kind infeasible`.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub margin: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreconditionArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Solve on the map as given; it must already be flagged traceless and orthonormal.
    #[arg(long)]
    pub no_precondition: bool,
    /// With `--no-precondition`, run even if the map is not flagged normalized.
    #[arg(long)]
    pub force: bool,
    /// Tolerance of the certificate check (default 2 * tol).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Certificate output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub instance: PathBuf,
    pub certificate: PathBuf,
    /// Tolerance of the feasibility check (default 2 * the tol stored in the certificate).
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    pub input: PathBuf,
    /// Number of directions (default 360 in the plane, 1000 in space).
    #[arg(long)]
    pub directions: Option<usize>,
    /// Also sample the body of the preconditioned map.
    #[arg(long)]
    pub both: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma separated sizes n.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n: Vec<usize>,
    /// Comma separated m; without it each cell uses m = n.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub m: Vec<usize>,
    /// Seeds per cell, starting at `--seed`.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timed solves per seed.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Feasible => 0,
        Verdict::Infeasible => 1,
        Verdict::NotInterior => 2,
        Verdict::Indeterminate => 3,
    }
}

fn verdict_from_str(s: &str) -> Result<Verdict, AppError> {
    [
        Verdict::Feasible,
        Verdict::Infeasible,
        Verdict::NotInterior,
        Verdict::Indeterminate,
    ]
    .into_iter()
    .find(|v| v.as_str() == s)
    .ok_or_else(|| AppError::Schema {
        field: "verdict".into(),
        message: format!("unknown verdict `{s}`"),
    })
}

/// Parses `args` (including the program name) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<i32, AppError> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Precondition(a) => precondition_cmd(a),
        Command::Solve(a) => solve(a, cli.verbose),
        Command::Verify(a) => verify(a),
        Command::Boundary(a) => boundary(a),
        Command::Bench(a) => bench(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => write_text(path, text),
        None => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(AppError::Io {
                path: "<stdout>".into(),
                source: e,
            }),
            _ => Ok(()),
        },
    }
}

fn require(value: Option<usize>, flag: &str, kind: Kind) -> Result<usize, AppError> {
    value.ok_or_else(|| AppError::Usage(format!("--kind {kind:?} needs {flag}").to_lowercase()))
}

fn generate(a: &GenerateArgs) -> Result<i32, AppError> {
    let inst = match a.kind {
        Kind::Example21 => gen_example_2_1(),
        Kind::Example22 => gen_example_2_2(),
        Kind::PreconditionExample => gen_precondition_example(),
        Kind::Random => gen_random(
            require(a.n, "--n", a.kind)?,
            require(a.m, "--m", a.kind)?,
            a.seed,
        )?,
        Kind::Infeasible => gen_infeasible(
            require(a.n, "--n", a.kind)?,
            require(a.m, "--m", a.kind)?,
            a.seed,
            a.margin,
        )?,
    };
    match &a.out {
        Some(path) => write_instance(path, &inst)?,
        None => emit(None, &to_json(&InstanceFile::from_instance(&inst))?)?,
    }
    Ok(0)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
struct RecordFile {
    original_n: usize,
    original_m: usize,
    trace_offsets: Vec<f64>,
    whitener: Vec<Vec<f64>>,
    whitener_inv: Vec<Vec<f64>>,
    gram_centered_eigs: Vec<f64>,
    residual_amplification: f64,
}

#[derive(Debug, Serialize)]
struct PreconditionedFile {
    schema_version: u32,
    instance: InstanceFile,
    record: RecordFile,
}

fn precondition_cmd(a: &PreconditionArgs) -> Result<i32, AppError> {
    let inst = read_instance(&a.input)?;
    let pre = precondition(&inst)?;
    let r = &pre.record;
    let out_inst = Instance::new(
        pre.map.clone(),
        pre.b_hat.clone(),
        format!("{} (preconditioned)", inst.label),
    )?;
    let file = PreconditionedFile {
        schema_version: SCHEMA_VERSION,
        instance: InstanceFile {
            meta: crate::format::Meta {
                label: out_inst.label.clone(),
                generator: inst.generator.clone(),
                seed: inst.seed,
            },
            ..InstanceFile::from_instance(&out_inst)
        },
        record: RecordFile {
            original_n: r.original_n,
            original_m: r.original_m,
            trace_offsets: r.trace_offsets.iter().copied().collect(),
            whitener: rows(&r.whitener),
            whitener_inv: rows(&r.whitener_inv),
            gram_centered_eigs: r.gram_centered_eigs.iter().copied().collect(),
            residual_amplification: r.residual_amplification(),
        },
    };
    emit(a.out.as_deref(), &to_json(&file)?)?;
    Ok(0)
}

fn print_trace(trace: &IterationTrace) {
    eprintln!(
        "{:>6} {:>24} {:>12} {:>12} {:>12} {:>5}",
        "k", "f", "|g|", "|y|", "step", "evals"
    );
    for r in &trace.records {
        eprintln!(
            "{:>6} {:>24.16e} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}",
            r.k, r.value, r.grad_norm, r.y_norm, r.step, r.linesearch_evals
        );
    }
    if trace.spectral_bound_violations > 0 {
        eprintln!(
            "spectral bound exceeded at {} iterates",
            trace.spectral_bound_violations
        );
    }
}

fn summary(cert: &CertificateFile) -> String {
    let mut s = format!(
        "verdict: {}\nexit code: {}\niterations: {}\n",
        cert.verdict, cert.exit_code, cert.solve.iters
    );
    if let Some(reason) = &cert.solve.quick_reject {
        s += &format!("quick reject: {reason}\n");
    }
    let c = &cert.checks;
    match &cert.payload {
        Payload::Feasible { .. } => {
            s += &format!(
                "residual: {:e}\ntrace error: {:e}\nmin eigenvalue: {:e}\ncheck: {} (eps {:e})\n",
                c.residual_norm.unwrap_or(f64::NAN),
                c.trace_error.unwrap_or(f64::NAN),
                c.min_eigenvalue.unwrap_or(f64::NAN),
                if c.passed { "passed" } else { "FAILED" },
                c.eps.unwrap_or(f64::NAN),
            );
        }
        Payload::Infeasible { u } => {
            s += &format!(
                "gap: {:e}\nsupport: {:e}\ndirection: {:?}\n",
                c.gap.unwrap_or(f64::NAN),
                c.support.unwrap_or(f64::NAN),
                u
            );
        }
        Payload::NotInterior { distance_bound, .. } => {
            s += &format!("distance to boundary at most: {distance_bound:e}\n");
        }
        Payload::None => {}
    }
    if let Some(d) = &cert.duality {
        s += &format!("f(y*): {:e}\nentropy: {:e}\n", d.f_star, d.entropy);
    }
    if let Some(note) = &cert.solve.note {
        s += &format!("note: {note}\n");
    }
    s
}

fn solve(a: &SolveArgs, verbose: bool) -> Result<i32, AppError> {
    let inst = read_instance(&a.input)?;
    let solver = SolverConfig {
        record_trace: verbose,
        ..a.solver.config()?
    };
    let config = OracleConfig {
        solver,
        precondition: !a.no_precondition,
        force: a.force,
        verify_eps: a.eps,
        ..OracleConfig::default()
    };
    let report = decide(&inst, &config)?;
    if verbose {
        print_trace(&report.trace);
    }
    let cert = CertificateFile::from_report(&inst, &report, a.solver.tol);
    if let Some(path) = &a.out {
        write_certificate(path, &cert)?;
    }
    emit(None, &summary(&cert))?;
    Ok(cert.exit_code)
}

fn verify(a: &VerifyArgs) -> Result<i32, AppError> {
    let inst = read_instance(&a.instance)?;
    let cert = read_certificate(&a.certificate)?;
    let verdict = verdict_from_str(&cert.verdict)?;
    let code = verdict_exit_code(verdict);
    if cert.exit_code != code {
        return Err(AppError::Rejected(format!(
            "exit code {} does not match verdict {verdict}",
            cert.exit_code
        )));
    }
    if (cert.n, cert.m) != (inst.map.n(), inst.map.m()) {
        return Err(AppError::Rejected(format!(
            "certificate is for n = {}, m = {} but the instance has n = {}, m = {}",
            cert.n,
            cert.m,
            inst.map.n(),
            inst.map.m()
        )));
    }
    let kind_matches = matches!(
        (verdict, &cert.payload),
        (Verdict::Feasible, Payload::Feasible { .. })
            | (Verdict::Infeasible, Payload::Infeasible { .. })
            | (Verdict::NotInterior, Payload::NotInterior { .. })
            | (Verdict::Indeterminate, Payload::None)
    );
    if !kind_matches {
        return Err(AppError::Rejected(format!(
            "payload does not match verdict {verdict}"
        )));
    }
    match &cert.payload {
        Payload::Feasible { density, .. } => {
            let eps = a.eps.unwrap_or(2.0 * cert.solve.tol);
            let sym = SymMatrix::from_rows(density).map_err(|e| AppError::Schema {
                field: "payload.density".into(),
                message: e.to_string(),
            })?;
            // verify_feasible recomputes trace and spectrum itself
            let x = DensityMatrix::try_new(sym, f64::INFINITY)?;
            let check = verify_feasible(&inst, &x, eps)?;
            println!(
                "residual: {:e}\ntrace error: {:e}\nmin eigenvalue: {:e}\neps: {eps:e}",
                check.residual_norm, check.trace_error, check.min_eigenvalue
            );
            if !check.passed {
                return Err(AppError::Rejected("feasibility check failed".into()));
            }
        }
        Payload::Infeasible { u } => {
            let check = verify_infeasible(&inst, &Vector::from_vec(u.clone()))?;
            println!("gap: {:e}\nsupport: {:e}", check.gap, check.support);
            if !check.passed {
                return Err(AppError::Rejected(format!(
                    "direction does not separate (gap {:e})",
                    check.gap
                )));
            }
        }
        Payload::NotInterior { .. } | Payload::None => {
            println!("nothing to check for verdict {verdict}");
        }
    }
    println!("verdict: {verdict}");
    Ok(code)
}

#[derive(Debug, Serialize)]
struct BoundaryRow {
    body: &'static str,
    k: usize,
    direction: Vec<f64>,
    support: f64,
    point: Vec<f64>,
}

fn sample_body(
    map: &MomentMap,
    body: &'static str,
    dirs: &[Vector],
) -> Result<Vec<BoundaryRow>, AppError> {
    Ok(boundary_sample(map, dirs)?
        .into_iter()
        .enumerate()
        .map(|(k, p)| BoundaryRow {
            body,
            k,
            direction: p.direction.iter().copied().collect(),
            support: p.support,
            point: p.point.iter().copied().collect(),
        })
        .collect())
}

fn boundary(a: &BoundaryArgs) -> Result<i32, AppError> {
    let inst = read_instance(&a.input)?;
    let m = inst.map.m();
    let dirs = match m {
        2 => planar_directions(a.directions.unwrap_or(360)),
        3 => sphere_directions(a.directions.unwrap_or(1000)),
        _ => {
            return Err(AppError::Usage(format!(
                "boundary needs m = 2 or m = 3, got m = {m}"
            )))
        }
    };
    if dirs.is_empty() {
        return Err(AppError::Usage("--directions must be positive".into()));
    }
    let mut rows = sample_body(&inst.map, "raw", &dirs)?;
    if a.both {
        let (pre, _) = precondition_map(&inst.map)?;
        rows.extend(sample_body(&pre, "preconditioned", &dirs)?);
    }
    let text = match a.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let axes = 1..=m;
            let header: Vec<String> = ["body".to_string(), "k".to_string()]
                .into_iter()
                .chain(axes.clone().map(|i| format!("u{i}")))
                .chain(std::iter::once("support".to_string()))
                .chain(axes.map(|i| format!("x{i}")))
                .collect();
            let csv_err = |e: csv::Error| AppError::Internal(e.to_string());
            w.write_record(&header).map_err(csv_err)?;
            for r in &rows {
                let record: Vec<String> = [r.body.to_string(), r.k.to_string()]
                    .into_iter()
                    .chain(r.direction.iter().map(f64::to_string))
                    .chain(std::iter::once(r.support.to_string()))
                    .chain(r.point.iter().map(f64::to_string))
                    .collect();
                w.write_record(&record).map_err(csv_err)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| AppError::Internal(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| AppError::Internal(e.to_string()))?
        }
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

fn bench(a: &BenchArgs) -> Result<i32, AppError> {
    let cells: Vec<(usize, usize)> = if a.m.is_empty() {
        a.n.iter().map(|&n| (n, n)).collect()
    } else {
        a.n.iter()
            .flat_map(|&n| a.m.iter().map(move |&m| (n, m)))
            .collect()
    };
    let grid = BenchGrid {
        cells,
        seeds: (a.seed..a.seed.saturating_add(a.seeds)).collect(),
        repeats: a.repeats,
        solver: a.solver.config()?,
    };
    let rows = run_grid(&grid)?;
    let text = match a.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => crate::bench::to_csv(&rows)?,
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}
