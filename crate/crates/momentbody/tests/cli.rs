use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use momentbody::format::{read_certificate, read_instance, write_instance, Payload};
use momentbody_core::instances::{gen_example_2_1, gen_example_2_2};
use momentbody_core::oracle::OracleConfig;
use momentbody_core::{decide, Vector, Verdict};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momentbody"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(dir: &TempDir, name: &str, inst: &momentbody_core::Instance) -> PathBuf {
    let path = dir.path().join(name);
    write_instance(&path, inst).unwrap();
    path
}

fn parse_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn interior_target_of_example_2_1_exits_zero() {
    let dir = TempDir::new().unwrap();
    let inst = gen_example_2_1()
        .retarget(Vector::from_vec(vec![0.25, -0.1]))
        .unwrap();
    let input = fixture(&dir, "inside.json", &inst);
    let cert = dir.path().join("cert.json");
    let out = run(&["solve", p(&input), "--out", p(&cert)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("verdict: feasible"));

    let file = read_certificate(&cert).unwrap();
    assert_eq!((file.verdict.as_str(), file.exit_code), ("feasible", 0));
    assert!(file.checks.residual_norm.unwrap() <= 2e-8);
    assert_eq!(code(&run(&["verify", p(&input), p(&cert)])), 0);
}

#[test]
fn planar_infeasible_instance_exits_one_with_gap() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("out.json");
    let gen = run(&[
        "generate",
        "--kind",
        "infeasible",
        "--n",
        "2",
        "--m",
        "2",
        "--seed",
        "4",
        "--out",
        p(&input),
    ]);
    assert_eq!(code(&gen), 0);
    let cert = dir.path().join("cert.json");
    let out = run(&["solve", p(&input), "--out", p(&cert)]);
    assert_eq!(code(&out), 1);
    let gap_line = stdout(&out)
        .lines()
        .find(|l| l.starts_with("gap: "))
        .unwrap()
        .to_string();
    let gap: f64 = gap_line[5..].parse().unwrap();
    assert!(gap > 0.0);

    // independent recomputation: for n = 2 the support of A(u) is half the
    // spread of its eigenvalues, read off the 2x2 entries directly
    let inst = read_instance(&input).unwrap();
    let Payload::Infeasible { u } = read_certificate(&cert).unwrap().payload else {
        panic!("expected an infeasibility payload");
    };
    let a = inst.map.adjoint(&Vector::from_vec(u.clone())).unwrap();
    let (p_, q, r) = (a.get(0, 0), a.get(1, 1), a.get(0, 1));
    let top = 0.5 * (p_ + q) + (0.25 * (p_ - q).powi(2) + r * r).sqrt();
    let direct = inst.b.iter().zip(&u).map(|(b, u)| b * u).sum::<f64>() - top;
    assert!(
        (direct - gap).abs() <= 1e-12 * (1.0 + gap.abs()),
        "{direct} vs {gap}"
    );
    assert_eq!(code(&run(&["verify", p(&input), p(&cert)])), 1);
}

#[test]
fn malformed_files_exit_65() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"n\": 3,").unwrap();
    let out = run(&["solve", p(&bad)]);
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:1:"));

    let asym = dir.path().join("asym.json");
    let text = std::fs::read_to_string(fixture(&dir, "ok.json", &gen_example_2_1()))
        .unwrap()
        .replacen("0.5,", "0.25,", 1);
    std::fs::write(&asym, text).unwrap();
    assert_eq!(code(&run(&["solve", p(&asym)])), 65);
}

#[test]
fn tampered_certificates_are_rejected() {
    let dir = TempDir::new().unwrap();
    let inst = gen_example_2_1()
        .retarget(Vector::from_vec(vec![0.1, 0.1]))
        .unwrap();
    let input = fixture(&dir, "i.json", &inst);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["solve", p(&input), "--out", p(&cert)])), 0);
    let text = std::fs::read_to_string(&cert).unwrap();
    let other = fixture(
        &dir,
        "j.json",
        &gen_example_2_1()
            .retarget(Vector::from_vec(vec![0.1, 0.2]))
            .unwrap(),
    );
    assert_eq!(code(&run(&["verify", p(&other), p(&cert)])), 65);
    std::fs::write(&cert, text.replace("\"exit_code\": 0", "\"exit_code\": 2")).unwrap();
    assert_eq!(code(&run(&["verify", p(&input), p(&cert)])), 65);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&run(&["solve"])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["bench"])), 64);
    assert_eq!(
        code(&run(&["generate", "--kind", "random", "--n", "3"])),
        64
    );
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn no_precondition_needs_flags_or_force() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.json");
    assert_eq!(
        code(&run(&[
            "generate",
            "--kind",
            "precondition-example",
            "--out",
            p(&raw)
        ])),
        0
    );
    assert_eq!(code(&run(&["solve", p(&raw), "--no-precondition"])), 64);
    let forced = run(&["solve", p(&raw), "--no-precondition", "--force"]);
    assert!((0..=3).contains(&code(&forced)));
    assert_eq!(code(&run(&["solve", p(&raw)])), 0);

    let normalized = fixture(&dir, "n.json", &gen_example_2_1());
    assert_eq!(
        code(&run(&["solve", p(&normalized), "--no-precondition"])),
        0
    );
}

#[test]
fn verbose_trace_goes_to_stderr() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("r.json");
    run(&[
        "generate",
        "--n",
        "6",
        "--m",
        "5",
        "--seed",
        "2",
        "--out",
        p(&input),
    ]);
    let out = run(&["solve", p(&input), "--verbose"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .eq(["k", "f", "|g|", "|y|", "step", "evals"]));
    let quiet = run(&["solve", p(&input)]);
    assert!(quiet.stderr.is_empty());
    assert_eq!(stdout(&quiet), stdout(&out));
}

#[test]
fn generation_is_reproducible() {
    let a = run(&["generate", "--n", "5", "--m", "4", "--seed", "9"]);
    let b = run(&["generate", "--n", "5", "--m", "4", "--seed", "9"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(
        a.stdout,
        run(&["generate", "--n", "5", "--m", "4", "--seed", "10"]).stdout
    );
}

#[test]
fn precondition_writes_a_normalized_instance() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.json");
    run(&[
        "generate",
        "--kind",
        "precondition-example",
        "--out",
        p(&raw),
    ]);
    let out = run(&["precondition", p(&raw)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let inst: momentbody::format::InstanceFile =
        serde_json::from_value(v["instance"].clone()).unwrap();
    let inst = inst.to_instance().unwrap();
    assert!(inst.map.is_normalized());
    // the raw target is the image of I/3, which maps to the origin
    assert!(inst.b.norm() < 1e-12);
    assert_eq!(v["record"]["whitener"].as_array().unwrap().len(), 2);
}

#[test]
fn boundary_of_example_2_1_is_ellipse_or_vertex() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir, "e.json", &gen_example_2_1());
    let out = run(&["boundary", p(&input), "--directions", "360"]);
    assert_eq!(code(&out), 0);
    let rows = parse_rows(&stdout(&out));
    assert_eq!(rows.len(), 360);
    let mut vertex = 0;
    for r in &rows {
        let x: f64 = r[5].parse().unwrap();
        let y: f64 = r[6].parse().unwrap();
        let ellipse = 5.0 * x * x - 6.0 * x * y + 5.0 * y * y - 4.0 * x + 4.0 * y;
        if (x + 0.5).abs() <= 1e-10 && (y - 0.5).abs() <= 1e-10 {
            vertex += 1;
        } else {
            assert!(ellipse.abs() <= 1e-8, "({x}, {y}) gives {ellipse}");
        }
    }
    assert!(vertex > 0 && vertex < 360);

    let both = parse_rows(&stdout(&run(&[
        "boundary",
        p(&input),
        "--both",
        "--directions",
        "12",
    ])));
    assert_eq!(both.iter().filter(|r| r[0] == "preconditioned").count(), 12);
}

#[test]
fn boundary_of_example_2_2_stays_in_the_body() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir, "e.json", &gen_example_2_2());
    let out = run(&["boundary", p(&input), "--directions", "1000"]);
    assert_eq!(code(&out), 0);
    let rows = parse_rows(&stdout(&out));
    assert_eq!(rows.len(), 1000);
    let num = |r: &Vec<String>, i: usize| -> f64 { r[i].parse().unwrap() };
    let halfspaces: Vec<([f64; 3], f64)> = rows
        .iter()
        .map(|r| ([num(r, 2), num(r, 3), num(r, 4)], num(r, 5)))
        .collect();
    for r in &rows {
        let x = [num(r, 6), num(r, 7), num(r, 8)];
        for (u, h) in &halfspaces {
            assert!(u[0] * x[0] + u[1] * x[1] + u[2] * x[2] <= h + 1e-12);
        }
    }
    // pulled slightly inside, a few samples are certified feasible by the solver
    let inst = read_instance(&input).unwrap();
    for r in rows.iter().step_by(97) {
        let x = Vector::from_vec(vec![num(r, 6), num(r, 7), num(r, 8)]) * 0.98;
        let report = decide(&inst.retarget(x).unwrap(), &OracleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
    }
}

#[test]
fn boundary_needs_two_or_three_coordinates() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("r.json");
    run(&["generate", "--n", "4", "--m", "4", "--out", p(&input)]);
    assert_eq!(code(&run(&["boundary", p(&input)])), 64);
}

#[test]
fn bench_repeats_agree_on_iterations() {
    let out = run(&[
        "bench",
        "--n",
        "8",
        "--m",
        "6",
        "--seeds",
        "1",
        "--repeats",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row = &parse_rows(&text)[0];
    let col = |name: &str| &row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("min_iters"), col("max_iters"));
    assert_eq!(col("iters_stable"), "true");
    assert_eq!(col("verdicts"), "feasible:3");
}
