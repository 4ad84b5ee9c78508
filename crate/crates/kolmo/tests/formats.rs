use std::path::Path;

use kolmo::problem_file::{parse_problem, read_problem, write_problem};
use kolmo::report::SuiteFile;
use kolmo_core::harness::suite::SuiteConfig;
use kolmo_core::problem::catalog;

fn dir(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(name)
}

#[test]
fn shipped_problems_parse_and_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(dir("problems")).unwrap() {
        let path = entry.unwrap().path();
        let spec = read_problem(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let text = write_problem(&spec).unwrap();
        let back = parse_problem(&text).unwrap();
        assert_eq!(format!("{back:?}"), format!("{spec:?}"));
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn heat_file_agrees_with_catalog() {
    let file = read_problem(&dir("problems").join("heat-quadratic.toml")).unwrap();
    let cat = catalog::heat_quadratic();
    for x in [-3.0, -0.4, 0.0, 1.7] {
        let a = file.evaluate_coefficients(0.3, &[x]).unwrap();
        let b = cat.evaluate_coefficients(0.3, &[x]).unwrap();
        assert_eq!(a, b);
        assert_eq!(file.terminal(&[x]).unwrap(), cat.terminal(&[x]).unwrap());
    }
    assert_eq!(
        (file.c0(), file.q(), file.delta()),
        (cat.c0(), cat.q(), cat.delta())
    );
}

#[test]
fn shipped_suites_parse() {
    let default = SuiteFile::read(&dir("suites").join("default.toml")).unwrap();
    assert_eq!(default.config(), SuiteConfig::default());
    let controls = SuiteFile::read(&dir("suites").join("controls.toml")).unwrap();
    assert!(controls.config().negative_controls);
    let empty = SuiteFile::read(&dir("suites").join("empty.toml")).unwrap();
    assert_eq!(empty.config().checks, Some(vec![]));
    let quick = SuiteFile::read(&dir("suites").join("quick.toml")).unwrap();
    assert_eq!(quick.config().checks.unwrap().len(), 5);
}
