use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kolmo::report::{ConvergenceJson, EstimateJson, NormJson, ReportJson};
use kolmo::table;

fn kolmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kolmo"))
        .args(["--workers", "1"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn shipped(dir: &str, name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(dir).join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_suite_gives_empty_report_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("report.json");
    let cfg = shipped("suites", "empty.toml");
    let out = kolmo(&["verify", "--config", s(&cfg), "--report", s(&rep)]);
    assert_eq!(ok(&out), "0 checks, 0 failed\n");
    let r = ReportJson::parse(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert!(r.records.is_empty() && r.passed);
    assert_eq!(r.schema_version, 1);
}

#[test]
fn quick_suite_passes() {
    let cfg = shipped("suites", "quick.toml");
    let text = ok(&kolmo(&["verify", "--config", s(&cfg)]));
    assert!(text.ends_with("5 checks, 0 failed\n"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 5);
}

#[test]
fn failing_control_sets_exit_status() {
    let out = kolmo(&["verify", "--checks", "control-inflated-c0"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("FAIL control-inflated-c0"));
    assert!(text.ends_with("1 checks, 1 failed: control-inflated-c0\n"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(
        kolmo(&["verify", "--checks", "no-such-check"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "chekcs = []\n").unwrap();
    assert_eq!(
        kolmo(&["verify", "--config", s(&bad)]).status.code(),
        Some(2)
    );
    assert_eq!(
        kolmo(&["estimate", "--catalog", "nope", "--x", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kolmo(&["gradient", "--catalog", "ou", "--x", "0", "--paths", "10"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn verify_lists_checks() {
    let text = ok(&kolmo(&["verify", "--list"]));
    assert!(text.contains("heat-value\tcriterion 1\n"));
    assert!(text.contains("control-mismatched-q\tcriterion 6\tcontrol\n"));
}

#[test]
fn problem_file_matches_catalog_estimate() {
    let file = shipped("problems", "heat-quadratic.toml");
    let args = [
        "--x", "0.7", "--paths", "4000", "--steps", "20", "--t", "0.25",
    ];
    let from_file: EstimateJson = serde_json::from_str(&ok(&kolmo(
        &[&["estimate", "--problem", s(&file)][..], &args[..]].concat(),
    )))
    .unwrap();
    let from_catalog: EstimateJson = serde_json::from_str(&ok(&kolmo(
        &[&["estimate", "--catalog", "heat-quadratic"][..], &args[..]].concat(),
    )))
    .unwrap();
    assert_eq!(from_file.mean, from_catalog.mean);
    assert_eq!(from_file.stderr, from_catalog.stderr);
    let exact = kolmo_core::problem::catalog::closed_form::heat_quadratic(1.0, 0.75, 0.7);
    assert!((from_file.mean[0] - exact).abs() < 4.0 * from_file.stderr[0]);
}

#[test]
fn gradient_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.csv");
    let file = shipped("problems", "ou-2d.toml");
    let g: EstimateJson = serde_json::from_str(&ok(&kolmo(&[
        "gradient",
        "--problem",
        s(&file),
        "--x=0.5,-0.3",
        "--paths",
        "2000",
        "--steps",
        "10",
    ])))
    .unwrap();
    assert_eq!((g.kind.as_str(), g.mean.len()), ("gradient", 2));
    ok(&kolmo(&[
        "estimate",
        "--problem",
        s(&file),
        "--x=0.5,-0.3",
        "--paths",
        "4",
        "--steps",
        "5",
        "--dump-paths",
        s(&paths),
    ]));
    let rows = table::read_paths(std::fs::File::open(&paths).unwrap()).unwrap();
    assert_eq!(rows.len(), 4 * 6);
    assert_eq!(rows[0].x, vec![0.5, -0.3]);
}

#[test]
fn grid_estimate_and_solve_feed_norms() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.csv");
    let field = dir.path().join("field.csv");
    ok(&kolmo(&[
        "estimate",
        "--catalog",
        "heat-quadratic",
        "--region=-2:2",
        "--nodes",
        "9",
        "--n-time",
        "2",
        "--paths",
        "2000",
        "--steps",
        "10",
        "--out",
        s(&grid),
    ]));
    let mc = table::read_field(std::fs::File::open(&grid).unwrap()).unwrap();
    assert_eq!(mc.field.values.len(), 27);
    assert!(mc.stderr[..9].iter().all(|s| *s > 0.0));
    assert!(mc.stderr[18..].iter().all(|s| *s == 0.0));

    ok(&kolmo(&[
        "solve",
        "--catalog",
        "heat-quadratic",
        "--region=-3:3",
        "--nodes",
        "61",
        "--n-time",
        "20",
        "--boundary-paths",
        "1000",
        "--out",
        s(&field),
    ]));
    let text = std::fs::read_to_string(&field).unwrap();
    assert!(text.starts_with("# source=FD\nt,x1,value,stderr\n"));
    let fd = table::read_field(text.as_bytes()).unwrap().field;
    let x0 = fd.grid.flat(&[30]);
    let exact = kolmo_core::problem::catalog::closed_form::heat_quadratic(1.0, 1.0, 0.0);
    assert!((fd.get(0, x0) - exact).abs() < 0.05);

    let norms: Vec<NormJson> = serde_json::from_str(&ok(&kolmo(&[
        "norms",
        "--field",
        s(&field),
        "--p",
        "2",
        "--beta",
        "0.5",
    ])))
    .unwrap();
    assert_eq!(norms.len(), 2);
    assert_eq!(norms[0].variant, "standard");
    assert_eq!(norms[1].variant, "triple-bar");
    assert_eq!(norms[0].terms.len(), 4);
    assert!(norms.iter().all(|n| n.value > 0.0 && n.value.is_finite()));
}

#[test]
fn coefficient_norms() {
    let out: Vec<NormJson> = serde_json::from_str(&ok(&kolmo(&[
        "norms",
        "--catalog",
        "heat-quadratic",
        "--p",
        "1",
        "--variant",
        "triple-bar",
        "--per-axis",
        "101",
        "--fill",
        "0",
    ])))
    .unwrap();
    // |x^2| / (1 + x^2) -> 1 at the edge and |2x| / (1 + x^2) peaks at 1.
    assert_eq!(out.len(), 1);
    let sup0 = out[0].terms[0].value;
    let sup1 = out[0].terms[1].value;
    assert!((sup0 - 100.0 / 101.0).abs() < 1e-12);
    assert!((sup1 - 1.0).abs() < 1e-12);
}

#[test]
fn convergence_report() {
    let r: ConvergenceJson = serde_json::from_str(&ok(&kolmo(&[
        "convergence",
        "--catalog",
        "gbm",
        "--x",
        "1",
        "--ladder",
        "4,8,16,32",
        "--paths",
        "500",
    ])))
    .unwrap();
    assert_eq!(r.n_steps, vec![4, 8, 16, 32]);
    assert_eq!(r.errors.len(), 3);
    assert_eq!(r.reference_steps, 32);
}
