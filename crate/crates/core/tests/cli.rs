//! End-to-end runs of the `joyce` binary: exit codes, files and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn joyce(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_joyce"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn construct_writes_chart_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = joyce(dir.path(), &["construct"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["chart.json", "construct-report.json", "chart-u.svg", "config.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS det_a_equals_p2_det_b")));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert_eq!(code(&joyce(dir.path(), &["construct", "--grid", "33x33"])), 0);
        assert_eq!(code(&joyce(dir.path(), &["verify"])), 0);
    }
    for f in [
        "chart.json",
        "chart-u.svg",
        "construct-report.json",
        "verify-report.json",
        "convergence.csv",
    ] {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(f)).unwrap();
        assert!(read(&a) == read(&b), "{f} differs between runs");
    }
}

#[test]
fn dependent_seeds_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = joyce(dir.path(), &["construct", "--seed2", "H"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));
}

#[test]
fn verify_reads_a_chart_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&joyce(dir.path(), &["construct"])), 0);
    let chart = dir.path().join("chart.json");
    let chart = chart.to_str().unwrap();
    let out = joyce(dir.path(), &["verify", "--input", chart, "--refine", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let out = joyce(dir.path(), &["verify", "--input", chart, "--potential", "power:0.25"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));

    let out = joyce(
        dir.path(),
        &["verify", "--input", chart, "--potential", "power:0.25", "--force"],
    );
    assert_eq!(code(&out), 1, "the logdet chart does not solve the power 1/4 equation");
}

#[test]
fn corrupted_chart_file_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chart.json");
    std::fs::write(&path, "{\"schema\": \"chart/1\"}").unwrap();
    let out = joyce(dir.path(), &["verify", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn invert_and_dual_pass_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&joyce(dir.path(), &["invert"])), 0);
    assert!(dir.path().join("recovered-xi1.json").exists());
    assert_eq!(code(&joyce(dir.path(), &["dual"])), 0);
    assert!(dir.path().join("dual-convergence.csv").exists());
}

#[test]
fn affine_routes_and_refusals() {
    let dir = tempfile::tempdir().unwrap();
    let out = joyce(dir.path(), &["affine", "--domain", "1:2,1:2", "--grid", "65x65"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let obj = std::fs::read_to_string(dir.path().join("route-a.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 65 * 65);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 64 * 64);

    let out = joyce(dir.path(), &["affine", "--f2", "l1^2"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not harmonic"), "{}", stderr(&out));

    let out = joyce(
        dir.path(),
        &["affine", "--f3", "const:1", "--f1", "const:0", "--f2", "const:2"],
    );
    assert_eq!(code(&out), 0);
    let report = std::fs::read_to_string(dir.path().join("chern-terng.report.json")).unwrap();
    assert!(report.contains("zero-area"), "{report}");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "grid = 17x17\nformats = json\ntol.identity = 1e-9\n").unwrap();
    let out = joyce(dir.path(), &["construct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!dir.path().join("chart-u.svg").exists());
    let written = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    assert!(written.contains("17"));

    std::fs::write(&cfg, "grid = 17x17\ncolour = blue\n").unwrap();
    assert_eq!(
        code(&joyce(dir.path(), &["construct", "--config", cfg.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&joyce(dir.path(), &["construct", "--tol", "identity=abc"])), 2);
    assert_eq!(code(&joyce(dir.path(), &["construct", "--domain", "0:1,-1:1"])), 2);
}

#[test]
fn external_solution_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let mut csv = String::from("x1,x2,u\n");
    for i in 0..129 {
        for j in 0..129 {
            let (a, b) = (i as f64 / 128.0, 2.0 + 2.0 * j as f64 / 128.0);
            csv.push_str(&format!(
                "{a:?},{b:?},{:?}\n",
                a * a / 2.0 + b / 2.0 * ((2.0 * b).ln() - 1.0)
            ));
        }
    }
    std::fs::write(&path, csv).unwrap();
    let out = joyce(dir.path(), &["verify", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn help_lists_the_configuration_keys() {
    let out = Command::new(env!("CARGO_BIN_EXE_joyce"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["potential", "seed1", "x_grid", "tol.<name>"] {
        assert!(text.contains(key), "{key} missing from help");
    }
}
