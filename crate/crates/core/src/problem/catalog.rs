//! Ready-made problems used by tests, the verification suite and the CLI.

use alloc::vec;
use alloc::vec::Vec;

use super::{CoefficientField, Family, ProblemSpec};
use crate::expr::{Expr, Func};
use crate::math;

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 7] = [
    "heat-quadratic",
    "heat-tanh",
    "constant-data",
    "smoothing",
    "gbm",
    "additive-ou",
    "ou",
];

/// One-dimensional heat operator `a = 1` (`sigma = sqrt 2`), `b = 0`,
/// constant potential `c = c0`, no source.
pub fn heat(c: f64, terminal: CoefficientField, q: u32) -> ProblemSpec {
    ProblemSpec::builder("heat", 1, 1)
        .diffusion(vec![CoefficientField::constant(math::sqrt(2.0), 1)])
        .potential(CoefficientField::constant(c, 1))
        .terminal(terminal)
        .c0(c)
        .q(q)
        .delta(Some(1.0))
        .build()
        .expect("heat family is valid")
}

/// Heat problem with `c = 1`, `h = x^2` on `[0, 1]`; solution
/// `u = e^{-(T-t)} (x^2 + 2 (T-t))`.
pub fn heat_quadratic() -> ProblemSpec {
    let h = CoefficientField::family(
        Family::RadialPoly {
            coeffs: vec![0.0, 1.0],
        },
        1,
    )
    .expect("valid family");
    heat(1.0, h, 1).with_name("heat-quadratic")
}

/// Heat problem with `c = 1` and bounded `h = tanh x`.
pub fn heat_tanh() -> ProblemSpec {
    let h = CoefficientField::family(
        Family::Tanh {
            amplitude: 1.0,
            rate: 1.0,
            axis: 0,
        },
        1,
    )
    .expect("valid family");
    heat(1.0, h, 0).with_name("heat-tanh")
}

/// `c = c0`, `h = k`; solution `k e^{-c0 (T-t)}`.
pub fn constant_data(k: f64, c0: f64) -> ProblemSpec {
    heat(c0, CoefficientField::constant(k, 1), 0).with_name("constant-data")
}

/// Heat problem with `c = 1/4` and the steep bounded datum `tanh(rate x)`.
pub fn smoothing(rate: f64) -> ProblemSpec {
    let h = CoefficientField::family(
        Family::Tanh {
            amplitude: 1.0,
            rate,
            axis: 0,
        },
        1,
    )
    .expect("valid family");
    heat(0.25, h, 0).with_name("smoothing")
}

/// `b = 0.1 x`, `sigma = 0.2 x`, `h = x`.
pub fn gbm() -> ProblemSpec {
    let lin = |w: f64| {
        CoefficientField::family(
            Family::Affine {
                offset: 0.0,
                weights: vec![w],
            },
            1,
        )
        .expect("valid family")
    };
    ProblemSpec::builder("gbm", 1, 1)
        .drift(vec![lin(0.1)])
        .diffusion(vec![lin(0.2)])
        .terminal(lin(1.0))
        .q(1)
        .build()
        .expect("valid")
}

/// `b = -x`, `sigma = 1`, `h = x`.
pub fn additive_ou() -> ProblemSpec {
    ProblemSpec::builder("additive-ou", 1, 1)
        .drift(vec![CoefficientField::family(
            Family::OuDrift {
                rate: 1.0,
                mean: 0.0,
                axis: 0,
            },
            1,
        )
        .expect("valid family")])
        .diffusion(vec![CoefficientField::constant(1.0, 1)])
        .terminal(
            CoefficientField::family(
                Family::Affine {
                    offset: 0.0,
                    weights: vec![1.0],
                },
                1,
            )
            .expect("valid family"),
        )
        .q(1)
        .build()
        .expect("valid")
}

/// Two-dimensional Ornstein-Uhlenbeck problem with correlated noise,
/// `c = 1 + 0.1 tanh(x1)` and quadratic data.
pub fn ou_2d() -> ProblemSpec {
    let d = 2;
    let drift = (0..d)
        .map(|i| {
            CoefficientField::family(
                Family::OuDrift {
                    rate: 0.5,
                    mean: 0.0,
                    axis: i,
                },
                d,
            )
            .expect("valid family")
        })
        .collect();
    let diffusion = vec![
        CoefficientField::constant(1.0, d),
        CoefficientField::constant(0.0, d),
        CoefficientField::constant(0.3, d),
        CoefficientField::constant(0.9, d),
    ];
    let c = CoefficientField::from_expr(
        Expr::add(
            Expr::Const(1.0),
            Expr::mul(Expr::Const(0.1), Expr::call(Func::Tanh, Expr::X(0))),
        ),
        d,
    )
    .expect("valid")
    .with_analytic_gradient();
    ProblemSpec::builder("ou", d, d)
        .drift(drift)
        .diffusion(diffusion)
        .potential(c)
        .terminal(
            CoefficientField::family(
                Family::RadialPoly {
                    coeffs: vec![1.0, 1.0],
                },
                d,
            )
            .expect("valid family"),
        )
        .c0(0.9)
        .q(1)
        .build()
        .expect("valid")
}

pub fn by_name(name: &str) -> Option<ProblemSpec> {
    Some(match name {
        "heat-quadratic" => heat_quadratic(),
        "heat-tanh" => heat_tanh(),
        "constant-data" => constant_data(2.0, 1.0),
        "smoothing" => smoothing(5.0),
        "gbm" => gbm(),
        "additive-ou" => additive_ou(),
        "ou" => ou_2d(),
        _ => return None,
    })
}

/// Closed forms for the heat family `a = 1, b = 0, c` constant, `f = 0`.
pub mod closed_form {
    use crate::math;

    /// `E[(x + sqrt 2 W_tau)^2] e^{-c tau}` with `tau = T - t`.
    pub fn heat_quadratic(c: f64, tau: f64, x: f64) -> f64 {
        math::exp(-c * tau) * (x * x + 2.0 * tau)
    }

    pub fn heat_quadratic_dx(c: f64, tau: f64, x: f64) -> f64 {
        math::exp(-c * tau) * 2.0 * x
    }
}

pub fn all() -> Vec<ProblemSpec> {
    NAMES.iter().filter_map(|n| by_name(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for n in NAMES {
            let s = by_name(n).unwrap();
            assert_eq!(s.name(), n);
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn heat_quadratic_has_unit_diffusion() {
        let s = heat_quadratic();
        let v = s.evaluate_coefficients(0.0, &[1.5]).unwrap();
        assert!((v.a[0] - 1.0).abs() < 4.0 * f64::EPSILON);
        assert_eq!(s.terminal(&[3.0]).unwrap(), 9.0);
    }
}
