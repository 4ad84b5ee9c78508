//! Acceptance criteria 1-10 at their pinned tolerances, one PASS/FAIL line
//! each. Criteria are run in order in a single test so the lines come out
//! together.

use std::time::{Duration, Instant};

use kolmo::report;
use kolmo_core::harness::suite::{self, Outcome, Record, SuiteConfig, CHECKS, CONTROLS};
use kolmo_core::Exec;

struct Verdict {
    pass: bool,
    lines: Vec<String>,
}

fn run_named(names: &[&str], controls: &[&str], config: &SuiteConfig, exec: &Exec) -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for name in names {
        let r = record(name, false, config, exec);
        pass &= r.pass();
        lines.push(format!("    {}", r.summary()));
    }
    for name in controls {
        let r = record(name, true, config, exec);
        let failed = !r.pass();
        pass &= failed;
        let tag = if failed {
            "control failed as planted"
        } else {
            "CONTROL PASSED"
        };
        lines.push(format!("    {tag}: {}", r.summary()));
    }
    Verdict { pass, lines }
}

fn record(name: &str, control: bool, config: &SuiteConfig, exec: &Exec) -> Record {
    Record {
        name: name.into(),
        criterion: 0,
        control,
        outcome: suite::run_check(name, config, exec),
    }
}

fn criterion_checks(n: u32) -> (Vec<&'static str>, Vec<&'static str>) {
    let pick = |list: &[(&'static str, u32)]| -> Vec<&'static str> {
        list.iter()
            .filter(|(_, c)| *c == n)
            .map(|(name, _)| *name)
            .collect()
    };
    (pick(CHECKS), pick(CONTROLS))
}

fn suite_integrity(exec: &Exec) -> Verdict {
    let mut lines = Vec::new();
    let default = suite::run_suite(&SuiteConfig::default(), exec).expect("default suite runs");
    let code = report::exit_code(&default);
    lines.push(format!(
        "    default configuration: {} records, exit {code}",
        default.records.len()
    ));
    for r in default.failures() {
        lines.push(format!("    {}", r.summary()));
    }
    let with_controls = SuiteConfig {
        negative_controls: true,
        ..SuiteConfig::default()
    };
    let planted = suite::run_suite(&with_controls, exec).expect("suite with controls runs");
    let code_controls = report::exit_code(&planted);
    let mut failed: Vec<&str> = planted.failures().iter().map(|r| r.name.as_str()).collect();
    failed.sort_unstable();
    let mut expected: Vec<&str> = CONTROLS.iter().map(|(n, _)| *n).collect();
    expected.sort_unstable();
    lines.push(format!(
        "    with negative controls: exit {code_controls}, failures [{}]",
        failed.join(", ")
    ));
    Verdict {
        pass: code == 0 && code_controls != 0 && failed == expected,
        lines,
    }
}

#[test]
fn acceptance_criteria() {
    let exec = Exec::default();
    let config = SuiteConfig::default();
    let budgets: [(u32, Duration); 2] =
        [(1, Duration::from_secs(60)), (2, Duration::from_secs(60))];
    let mut failed = Vec::new();
    for n in 1..=10u32 {
        let start = Instant::now();
        let mut v = if n == 10 {
            suite_integrity(&exec)
        } else {
            let (checks, controls) = criterion_checks(n);
            assert!(!checks.is_empty(), "criterion {n} has no checks");
            run_named(&checks, &controls, &config, &exec)
        };
        let elapsed = start.elapsed();
        if let Some((_, limit)) = budgets.iter().find(|(c, _)| *c == n) {
            let within = elapsed <= *limit;
            v.pass &= within;
            v.lines.push(format!(
                "    runtime {:.1} s (limit {} s)",
                elapsed.as_secs_f64(),
                limit.as_secs()
            ));
        }
        println!(
            "{} criterion {n} ({:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        for l in &v.lines {
            println!("{l}");
        }
        if !v.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn supplementary_checks_are_not_criteria() {
    let extra: Vec<&str> = CHECKS
        .iter()
        .filter(|(_, c)| *c == 0)
        .map(|(n, _)| *n)
        .collect();
    assert_eq!(extra, ["localization", "bernstein"]);
    for n in 1..=9 {
        assert!(!criterion_checks(n).0.is_empty());
    }
    let outcome = suite::run_check(
        "no-such-check",
        &SuiteConfig::default(),
        &Exec::sequential(),
    );
    assert!(matches!(outcome, Outcome::Error(_)));
}
