//! End-to-end use of the public API: Monte Carlo, finite differences and
//! norms on one problem, cross-checked against the heat closed form.

use kolmo_core::fd::{self, Boundary};
use kolmo_core::harness::suite::{self, SuiteConfig};
use kolmo_core::problem::catalog::{self, closed_form};
use kolmo_core::spaces::{self, Cloud, DerivativeSamples, NormVariant};
use kolmo_core::{
    fk, CoefficientField, Exec, Field, FieldSource, Grid, McParams, ProblemSpec, Region,
};

#[test]
fn monte_carlo_and_finite_differences_agree_with_closed_form() {
    let spec = catalog::heat_quadratic();
    let exec = Exec::with_workers(2);
    let params = McParams::new(20_000, 1, 3).antithetic(true);
    let e = fk::estimate_value(&spec, 0.5, &[1.0], &params, &exec).unwrap();
    let exact = closed_form::heat_quadratic(1.0, 0.5, 1.0);
    assert!((e.value() - exact).abs() < 4.0 * e.se());

    let grid = Grid::new(Region::cube(1, 4.0).unwrap(), vec![161], 0.0, 1.0, 100).unwrap();
    let boundary = Boundary::from_fn(&grid, |t, x| {
        closed_form::heat_quadratic(1.0, 1.0 - t, x[0])
    });
    let terminal: Vec<f64> = (0..grid.n_space())
        .map(|i| grid.point(i)[0].powi(2))
        .collect();
    let u = fd::solve_dirichlet(&spec, &grid, &terminal, &boundary, 0.5).unwrap();
    let oracle = Field::from_fn(&grid, FieldSource::Analytic, |t, x| {
        closed_form::heat_quadratic(1.0, 1.0 - t, x[0])
    })
    .unwrap();
    let err = u
        .values
        .iter()
        .zip(&oracle.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-3, "max error {err}");
}

#[test]
fn parallel_and_sequential_estimates_are_identical() {
    let spec = catalog::ou_2d();
    let params = McParams::new(1000, 16, 99);
    let a = fk::estimate_gradient(&spec, 0.0, &[0.2, 0.1], &params, &Exec::sequential()).unwrap();
    let b =
        fk::estimate_gradient(&spec, 0.0, &[0.2, 0.1], &params, &Exec::with_workers(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn weighted_norms_of_the_weight_itself() {
    // P / P = 1, so the standard sup term of order 0 is exactly 1.
    let d = 2;
    let p = CoefficientField::parse("1 + (x1^2 + x2^2)^2", d)
        .unwrap()
        .with_analytic_gradient();
    let cloud = Cloud::tensor_with_fill(&Region::cube(d, 3.0).unwrap(), 21, 50).unwrap();
    let s = DerivativeSamples::from_field_expr(&p, 0.0, cloud, 0).unwrap();
    let n = spaces::weighted_norm(&s, 2, 0, None, NormVariant::Standard).unwrap();
    assert!((n.value - 1.0).abs() < 1e-15);
}

#[test]
fn user_built_problem_runs_through_the_suite_plumbing() {
    let spec = ProblemSpec::builder("drifted", 1, 1)
        .drift(vec![CoefficientField::parse("0.3", 1).unwrap()])
        .diffusion(vec![CoefficientField::constant(1.0, 1)])
        .terminal(
            CoefficientField::parse("x", 1)
                .unwrap()
                .with_analytic_gradient(),
        )
        .build()
        .unwrap();
    // u(t, x) = x + 0.3 (T - t)
    let e = fk::estimate_value(
        &spec,
        0.0,
        &[0.5],
        &McParams::new(4000, 8, 1).antithetic(true),
        &Exec::sequential(),
    )
    .unwrap();
    assert!((e.value() - 0.8).abs() < 1e-12);

    let config = SuiteConfig {
        checks: Some(vec!["sde-workers".into()]),
        ..SuiteConfig::default()
    };
    let report = suite::run_suite(&config, &Exec::sequential()).unwrap();
    assert!(report.passed());
    assert_eq!(report.records.len(), 1);
}
