use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use trapping_core::io::{self, CertificateFile};
use trapping_core::System;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapping"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn analyze(fixture: &str, extra: &[&str], dir: &Path) -> Output {
    let mut args = vec!["analyze", "--fixture", fixture, "--out", path(dir)];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn analyze_then_certify_round_trips() {
    for (fixture, extra) in [
        ("academic2d", &["--fix-shift", "0,0"][..]),
        ("mls", &["--delta-m", "30"][..]),
        ("lorenz", &[][..]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = analyze(fixture, extra, dir.path());
        assert_eq!(
            code(&out),
            0,
            "{fixture}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        for f in ["certificate.json", "report.json", "sweep.csv"] {
            assert!(dir.path().join(f).exists(), "{fixture}: {f}");
        }
        let cert = dir.path().join("certificate.json");
        let out = run(&[
            "certify",
            "--fixture",
            fixture,
            "--certificate",
            path(&cert),
        ]);
        assert_eq!(code(&out), 0, "{fixture}: {}", stdout(&out));
        assert!(stdout(&out).contains("certificate: pass"));
    }
}

#[test]
fn academic_summary_reports_equilibrium_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze("academic2d", &["--fix-shift", "0,0"], dir.path());
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("summary: case=academic2d"), "{text}");
    let (cert, _) = io::read_certificate(&dir.path().join("certificate.json")).unwrap();
    assert!(cert.alpha <= 1e-2);
    assert!((&cert.m - DVector::from_column_slice(&[0.0, 0.25])).norm() < 1e-3);
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next(), Some("chi,r,alpha,feasible"));
    assert_eq!(sweep.lines().count(), 101);
}

#[test]
fn tampered_certificate_fails_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&analyze("academic2d", &["--fix-shift", "0,0"], dir.path())),
        0
    );
    let cert = dir.path().join("certificate.json");
    let mut file: CertificateFile = io::read_json(&cert).unwrap();
    file.p = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
    io::write_json(&cert, &file).unwrap();
    let out = run(&[
        "certify",
        "--fixture",
        "academic2d",
        "--certificate",
        path(&cert),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("(c) lossless: FAIL"));
}

#[test]
fn input_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["analyze", "--system", path(&missing)])), 2);
    assert_eq!(
        code(&run(&[
            "certify",
            "--fixture",
            "mls",
            "--certificate",
            path(&missing)
        ])),
        2
    );
    assert_eq!(code(&run(&["analyze", "--fixture", "nosuch"])), 2);
    let out = path(dir.path());
    for grid in ["1:2", "0:1:5", "a:b:c", "2:1:5"] {
        let o = run(&[
            "analyze",
            "--fixture",
            "academic2d",
            "--chi-grid",
            grid,
            "--out",
            out,
        ]);
        assert_eq!(code(&o), 2, "{grid}");
    }
    assert_eq!(
        code(&run(&[
            "simulate",
            "--fixture",
            "academic2d",
            "--trials",
            "0"
        ])),
        2
    );
    assert_eq!(code(&run(&["analyze"])), 2);
}

#[test]
fn certificate_of_wrong_dimension_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&analyze("academic2d", &["--fix-shift", "0,0"], dir.path())),
        0
    );
    let cert = dir.path().join("certificate.json");
    assert_eq!(
        code(&run(&[
            "certify",
            "--fixture",
            "mls",
            "--certificate",
            path(&cert)
        ])),
        2
    );
}

#[test]
fn unstable_system_has_no_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("unstable.json");
    let system = System::new(
        DMatrix::identity(1, 1),
        vec![DMatrix::zeros(1, 1)],
        DVector::zeros(1),
    )
    .unwrap();
    io::write_system(&sys, &system).unwrap();
    let out = run(&["analyze", "--system", path(&sys), "--out", path(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn divergent_simulation_exits_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("blowup.json");
    let system = System::new(
        DMatrix::identity(1, 1),
        vec![DMatrix::zeros(1, 1)],
        DVector::zeros(1),
    )
    .unwrap();
    io::write_system(&sys, &system).unwrap();
    let out = run(&["simulate", "--system", path(&sys), "--trials", "4"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn airfoil_comparison_prints_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(
        "academic2d",
        &["--fix-shift", "0,0", "--compare", "airfoil"],
        dir.path(),
    );
    let text = stdout(&out);
    for v in ["1637.56", "2031.3", "480.6"] {
        assert!(text.contains(v), "{text}");
    }
}

#[test]
fn lossless_reports_nullspace_dimensions() {
    for (fixture, general, symmetric) in [("lorenz", 4, 2), ("academic2d", 1, 1)] {
        let text = stdout(&run(&["lossless", "--fixture", fixture]));
        assert!(text.contains(&format!("general dim: {general}")), "{text}");
        assert!(
            text.contains(&format!("symmetric dim: {symmetric}")),
            "{text}"
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lossless", "--fixture", "mls", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("symmetric dim: 4"));
    assert!(dir.path().join("structure.json").exists());
}

#[test]
fn seeded_analysis_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flags = ["--seed", "11", "--restarts", "3"];
    assert_eq!(code(&analyze("mls", &flags, a.path())), 0);
    assert_eq!(code(&analyze("mls", &flags, b.path())), 0);
    let read = |d: &Path| std::fs::read_to_string(d.join("certificate.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn simulate_writes_report_and_checks_invariance() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&analyze("academic2d", &["--fix-shift", "0,0"], dir.path())),
        0
    );
    let cert = dir.path().join("certificate.json");
    let out = run(&[
        "simulate",
        "--fixture",
        "academic2d",
        "--certificate",
        path(&cert),
        "--trials",
        "20",
        "--horizon",
        "50",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(dir.path().join("montecarlo.json").exists());
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,x1,x2"));
}
