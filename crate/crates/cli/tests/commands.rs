//! End-to-end runs of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use micromorph::report::{csv_column, parse_report};

fn micromorph(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.ini");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_micromorph"))
        .arg(command)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn value(report: &str, key: &str) -> String {
    parse_report(report).into_iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("{key} missing")).1
}

fn section(vtk: &str, keyword: &str) -> usize {
    let line = vtk.lines().find(|l| l.starts_with(keyword)).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn mesh_of_one_cube() {
    let dir = tempfile::tempdir().unwrap();
    let out = micromorph(dir.path(), "mesh", "[mesh]\nsubdivisions = 1\n", &[]);
    ok(&out);
    let vtk = fs::read_to_string(dir.path().join("out/mesh.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
    assert_eq!(section(&vtk, "POINTS"), 8);
    assert_eq!(section(&vtk, "CELLS"), 6);
    let cells = vtk.lines().skip_while(|l| !l.starts_with("CELLS")).skip(1).take_while(|l| l.starts_with("4 "));
    assert_eq!(cells.count(), 6);
    let report = fs::read_to_string(dir.path().join("out/mesh.txt")).unwrap();
    assert_eq!(value(&report, "cells"), "6");
    assert_eq!(value(&report, "first_betti_number"), "0");
    let printed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(printed.lines().count(), 2);
}

#[test]
fn zero_static_problem_has_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    ok(&micromorph(dir.path(), "solve-static", "[mesh]\nsubdivisions = 2\n", &[]));
    let vtk = fs::read_to_string(dir.path().join("out/solution.vtk")).unwrap();
    let lines: Vec<&str> = vtk.lines().collect();
    let start = lines.iter().position(|l| *l == "VECTORS u double").unwrap();
    for l in &lines[start + 1..start + 28] {
        assert!(l.split(' ').all(|t| t.parse::<f64>().unwrap() == 0.0), "{l}");
    }
    let report = fs::read_to_string(dir.path().join("out/static.txt")).unwrap();
    assert_eq!(value(&report, "energy.total").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn poly3_static_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[mesh]\nsubdivisions = 2\n[material]\nmu_c = 0.5\n[case]\nboundary = poly3\nloads = poly3\nlifting = constructive\n";
    ok(&micromorph(dir.path(), "solve-static", config, &[]));
    let report = fs::read_to_string(dir.path().join("out/static.txt")).unwrap();
    assert!(report.starts_with("# micromorph solve-static\n# note: "));
    let e: f64 = value(&report, "error.u").parse().unwrap();
    assert!(e > 0.0 && e < 0.5, "{e}");
    assert!(value(&report, "dirichlet_mismatch").parse::<f64>().unwrap() < 1e-12);
    assert!(value(&report, "tangential_mismatch").parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn free_vibration_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[mesh]\nsubdivisions = 2\n[dynamic]\ninitial = bubble\ndt = 0.05\nsteps = 40\noutput_every = 5\n[output]\nvtk = false\n";
    ok(&micromorph(dir.path(), "solve-dynamic", config, &[]));
    let csv = fs::read_to_string(dir.path().join("out/energy.csv")).unwrap();
    let time = csv_column(&csv, "time").unwrap();
    let total = csv_column(&csv, "total").unwrap();
    assert_eq!(time.len(), 9);
    for (k, w) in time.windows(2).enumerate() {
        assert!(w[1] > w[0]);
        assert!((w[1] - w[0] - 0.25).abs() < 1e-12, "step {k}");
    }
    assert!(total[0] > 0.0);
    for e in &total {
        assert!(((e - total[0]) / total[0]).abs() < 1e-10, "{e} vs {}", total[0]);
    }
    assert!(!dir.path().join("out/dynamic_000000.vtk").exists());
}

#[test]
fn dynamic_snapshots_follow_output_every() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[mesh]\nsubdivisions = 1\n[case]\nboundary = harmonic-bc\n[dynamic]\ndt = 0.1\nsteps = 5\noutput_every = 2\n";
    ok(&micromorph(dir.path(), "solve-dynamic", config, &[]));
    for step in [0, 2, 4, 5] {
        assert!(dir.path().join(format!("out/dynamic_{step:06}.vtk")).exists(), "{step}");
    }
    let report = fs::read_to_string(dir.path().join("out/dynamic.txt")).unwrap();
    assert!(value(&report, "boundary_mismatch").parse::<f64>().unwrap() < 1e-10);
}

#[test]
fn failures_print_one_error_line() {
    let dir = tempfile::tempdir().unwrap();
    for (command, config, extra) in [
        ("solve-static", "[material]\nlambda_e = -1\n", &[][..]),
        ("mesh", "[mesh]\nsubdivisons = 2\n", &[][..]),
        ("verify-extension", "[study]\nlevels = 1\n", &[][..]),
        ("convergence", "[case]\nboundary = harmonic-bc\n", &[][..]),
        ("korn", "command = mesh\n", &[][..]),
        ("solve-dynamic", "[dynamic]\ninitial = zero\n[case]\nboundary = harmonic-bc\n", &["--seed", "1"][..]),
        ("mesh", "", &["--seed", "x"][..]),
    ] {
        let out = micromorph(dir.path(), command, config, extra);
        assert!(!out.status.success(), "{command} {config:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "), "{err}");
        assert!(out.stdout.is_empty());
    }
    let out = micromorph(dir.path(), "mesh", "[mesh]\nsubdivisons = 2\n", &[]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
    let out = micromorph(dir.path(), "solve-static", "[material]\nlambda_e = -1\n", &[]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("2μ_e + 3λ_e > 0"));
}

#[test]
fn studies_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(&micromorph(dir.path(), "korn", "[study]\nlevels = 1 2\n", &[]));
    let korn = fs::read_to_string(dir.path().join("out/korn.txt")).unwrap();
    assert!(value(&korn, "korn.min").parse::<f64>().unwrap() > 0.0);
    assert!(value(&korn, "skew_witness_quotient").parse::<f64>().unwrap() < 1e-12);

    ok(&micromorph(dir.path(), "convergence", "[case]\nboundary = affine\n[study]\nlevels = 1 2\n", &[]));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    for e in csv_column(&csv, "energy_error").unwrap() {
        assert!(e < 1e-9, "{e}");
    }

    ok(&micromorph(dir.path(), "verify-extension", "[study]\nlevels = 1 2\n", &["--seed", "5"]));
    let ext = fs::read_to_string(dir.path().join("out/extension.txt")).unwrap();
    assert_eq!(value(&ext, "seed"), "5");
    assert_eq!(value(&ext, "zero_exact"), "true");
    assert_eq!(value(&ext, "harmonic_basis_empty"), "true");
    let csv = fs::read_to_string(dir.path().join("out/extension.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8 * 2);
}
