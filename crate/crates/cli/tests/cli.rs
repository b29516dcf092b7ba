use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snowlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snowlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SNOWLAB_GUARD_LEVEL")
        .output()
        .expect("spawn snowlab")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = snowlab(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_line(o: &Output) -> String {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "one diagnostic line expected: {text:?}");
    text
}

#[test]
fn mesh_level_four_has_5557_vertices() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["mesh", "--level", "4"], dir.path());
    let mesh = json(&dir.path().join("mesh.json"));
    assert_eq!(mesh["vertices"].as_array().unwrap().len(), 5557);
    assert_eq!(mesh["boundary_vertices"].as_array().unwrap().len(), 768);
    let text = fs::read_to_string(dir.path().join("mesh.json")).unwrap();
    assert!(text.starts_with("{\"level\":4,\"vertices\":"));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["subcommand"], "mesh");
    assert_eq!(manifest["config"]["level"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn landscape_level_four_report() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["landscape", "--level", "4"], dir.path());
    assert!(stdout.contains("interior values [157464.0]"), "{stdout}");
    assert!(stdout.contains("boundary values [524288.0, 527360.0]"), "{stdout}");
    let report = json(&dir.path().join("landscape.json"));
    assert_eq!(report["closed_form"]["mismatches"].as_array().unwrap().len(), 0);
    assert_eq!(report["bound_check"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["bound_check"]["checked"], 5556);
}

#[test]
fn eig_level_zero_contains_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["eig", "--level", "0", "--kind", "full"], dir.path());
    let csv = fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("index,eigenvalue,residual"));
    let first: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(first.abs() < 1e-12);
    let sidecar = json(&dir.path().join("eigenvectors.json"));
    assert_eq!(sidecar["count"], 3);
    assert_eq!(sidecar["sign_rule"], "max-abs-positive-lowest-index");
    let bytes = fs::read(dir.path().join("eigenvectors.snwv")).unwrap();
    assert_eq!(&bytes[..4], b"SNWV");
    assert_eq!(bytes.len(), 24 + 8 * 9);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in [
        &["eig", "--level", "2", "--kind", "dirichlet"][..],
        &["count", "--level", "2"],
        &["localize", "--level", "2"],
    ] {
        ok(cmd, a.path());
        ok(cmd, b.path());
        for entry in fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "manifest.json" {
                continue; // records the output directory
            }
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap(),
                "{name:?}"
            );
        }
    }
}

#[test]
fn iterative_solver_needs_k_and_matches_dense_window() {
    let dir = tempfile::tempdir().unwrap();
    let o = snowlab(&["eig", "--level", "2", "--solver", "iterative"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("kind=argument"));

    let dense = tempfile::tempdir().unwrap();
    ok(&["eig", "--level", "2", "--solver", "iterative", "--k", "5", "--which", "largest"], dir.path());
    ok(&["eig", "--level", "2", "--k", "5", "--which", "largest"], dense.path());
    let read = |p: &Path| -> Vec<f64> {
        fs::read_to_string(p.join("eigenvalues.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    for (x, y) in read(dir.path()).iter().zip(read(dense.path())) {
        assert!((x - y).abs() <= 1e-8 * y);
    }
}

#[test]
fn invalid_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["mesh", "--level", "-1"][..],
        &["eig", "--kind", "sideways"],
        &["eig", "--c0", "0"],
        &["localize", "--eps", "-0.5"],
        &["frobnicate"],
    ] {
        let o = snowlab(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let line = stderr_line(&o);
        assert!(line.starts_with("snowlab: error kind="), "{line}");
    }
}

#[test]
fn level_guard_exits_3_and_is_configurable() {
    let dir = tempfile::tempdir().unwrap();
    let o = snowlab(&["mesh", "--level", "7"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_line(&o).contains("kind=resource code=3"));

    let run = |guard: &str| {
        Command::new(env!("CARGO_BIN_EXE_snowlab"))
            .args(["mesh", "--level", "3", "--out"])
            .arg(dir.path())
            .env("SNOWLAB_GUARD_LEVEL", guard)
            .output()
            .unwrap()
    };
    assert_eq!(run("2").status.code(), Some(3));
    assert_eq!(run("3").status.code(), Some(0));
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn dense_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = snowlab(&["eig", "--level", "5"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    stderr_line(&o);
}

#[test]
fn extend_writes_profile_and_extension() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["extend", "--level", "3"], dir.path());
    let decay = fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    let sups: Vec<f64> = decay
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(sups[0] > sups[1] && sups[1] > sups[2]);
    let bytes = fs::read(dir.path().join("extension.snwv")).unwrap();
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 1);

    // Feeding the written boundary data back in reproduces the extension.
    let again = tempfile::tempdir().unwrap();
    let boundary = dir.path().join("boundary.csv");
    ok(&["extend", "--level", "3", "--boundary", boundary.to_str().unwrap()], again.path());
    assert_eq!(fs::read(again.path().join("extension.snwv")).unwrap(), bytes);
}

#[test]
fn remaining_subcommands_produce_their_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["assemble", "--level", "2", "--kind", "boundary"], dir.path());
    let mtx = fs::read_to_string(dir.path().join("stiffness.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real symmetric\n48 48 96\n"));

    ok(&["energy-seq", "--level", "3", "--function", "linear"], dir.path());
    let seq = fs::read_to_string(dir.path().join("energy_seq.csv")).unwrap();
    assert_eq!(seq.lines().count(), 5);

    ok(&["localize", "--level", "2", "--mode", "1"], dir.path());
    let contour = fs::read_to_string(dir.path().join("contour_1.csv")).unwrap();
    assert!(contour.starts_with("vertex,x,y,value,class\n"));
    assert!(contour.lines().skip(1).all(|l| l.ends_with(",positive")));

    ok(&["count", "--level", "2"], dir.path());
    let regime = json(&dir.path().join("regime.json"));
    assert!(regime["regime"]["lambda_star"].as_f64().unwrap() > 0.0);
    assert!(!json(&dir.path().join("pairing.json")).as_array().unwrap().is_empty());
}
