//! Cauchy problems: coefficients, data, constants and structural checks.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{DomainError, Error, Result};
use crate::expr::{self, Expr, Var};
use crate::math;
use crate::rng::UniformStream;

pub mod catalog;

/// Declared growth of a coefficient in `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Bounded,
    Linear,
    /// `|f(x)| <= C (1 + |x|^degree)`
    Polynomial(u32),
    Unspecified,
}

/// Built-in coefficient families. Each builds an [`Expr`] and carries an
/// analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Constant {
        value: f64,
    },
    /// `offset + weights . x`
    Affine {
        offset: f64,
        weights: Vec<f64>,
    },
    /// `rate * (mean - x_axis)`
    OuDrift {
        rate: f64,
        mean: f64,
        axis: usize,
    },
    /// `base + slope * |x|`
    LinearGrowth {
        base: f64,
        slope: f64,
    },
    /// `sum_k coeffs[k] * |x|^(2k)`
    RadialPoly {
        coeffs: Vec<f64>,
    },
    /// `1 + |x|^(2q)`, or `1` for `q = 0`
    Weight {
        q: u32,
    },
    /// `amplitude * tanh(rate * x_axis)`
    Tanh {
        amplitude: f64,
        rate: f64,
        axis: usize,
    },
    /// `amplitude * sin(frequency * x_axis)`
    Sine {
        amplitude: f64,
        frequency: f64,
        axis: usize,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::Affine { .. } => "affine",
            Family::OuDrift { .. } => "ou_drift",
            Family::LinearGrowth { .. } => "linear_growth",
            Family::RadialPoly { .. } => "radial_poly",
            Family::Weight { .. } => "weight",
            Family::Tanh { .. } => "tanh",
            Family::Sine { .. } => "sine",
        }
    }

    fn growth(&self) -> Growth {
        match self {
            Family::Constant { .. } | Family::Tanh { .. } | Family::Sine { .. } => Growth::Bounded,
            Family::Affine { weights, .. } => {
                if weights.iter().all(|w| *w == 0.0) {
                    Growth::Bounded
                } else {
                    Growth::Linear
                }
            }
            Family::OuDrift { .. } | Family::LinearGrowth { .. } => Growth::Linear,
            Family::RadialPoly { coeffs } => match coeffs.iter().rposition(|c| *c != 0.0) {
                None | Some(0) => Growth::Bounded,
                Some(k) => Growth::Polynomial(2 * k as u32),
            },
            Family::Weight { q } => {
                if *q == 0 {
                    Growth::Bounded
                } else {
                    Growth::Polynomial(2 * q)
                }
            }
        }
    }

    fn expr(&self, d: usize) -> Result<Expr> {
        let axis_ok = |axis: usize| {
            if axis < d {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "family {} uses axis {} but d = {}",
                    self.name(),
                    axis + 1,
                    d
                )))
            }
        };
        Ok(match self {
            Family::Constant { value } => Expr::Const(*value),
            Family::Affine { offset, weights } => {
                if weights.len() != d {
                    return Err(Error::invalid(format!(
                        "affine family needs {} weights, got {}",
                        d,
                        weights.len()
                    )));
                }
                let linear = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| Expr::mul(Expr::Const(*w), Expr::X(i)));
                Expr::add(Expr::Const(*offset), Expr::sum(linear))
            }
            Family::OuDrift { rate, mean, axis } => {
                axis_ok(*axis)?;
                Expr::mul(
                    Expr::Const(*rate),
                    Expr::sub(Expr::Const(*mean), Expr::X(*axis)),
                )
            }
            Family::LinearGrowth { base, slope } => {
                let norm = if d == 1 {
                    Expr::call(expr::Func::Abs, Expr::X(0))
                } else {
                    Expr::call(expr::Func::Sqrt, Expr::norm_squared(d))
                };
                Expr::add(Expr::Const(*base), Expr::mul(Expr::Const(*slope), norm))
            }
            Family::RadialPoly { coeffs } => {
                let r2 = Expr::norm_squared(d);
                Expr::sum(
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| Expr::mul(Expr::Const(*c), Expr::powi(r2.clone(), k as i32))),
                )
            }
            Family::Weight { q } => weight_expr(*q, d),
            Family::Tanh {
                amplitude,
                rate,
                axis,
            } => {
                axis_ok(*axis)?;
                Expr::mul(
                    Expr::Const(*amplitude),
                    Expr::call(
                        expr::Func::Tanh,
                        Expr::mul(Expr::Const(*rate), Expr::X(*axis)),
                    ),
                )
            }
            Family::Sine {
                amplitude,
                frequency,
                axis,
            } => {
                axis_ok(*axis)?;
                Expr::mul(
                    Expr::Const(*amplitude),
                    Expr::call(
                        expr::Func::Sin,
                        Expr::mul(Expr::Const(*frequency), Expr::X(*axis)),
                    ),
                )
            }
        })
    }
}

/// `P(x) = 1 + |x|^(2q)` as an expression; `P = 1` for `q = 0`.
pub fn weight_expr(q: u32, d: usize) -> Expr {
    if q == 0 {
        return Expr::Const(1.0);
    }
    Expr::add(
        Expr::Const(1.0),
        Expr::powi(Expr::norm_squared(d), q as i32),
    )
}

/// A scalar coefficient `g(t, x)`.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    expr: Expr,
    dim: usize,
    gradient: Option<Vec<Expr>>,
    growth: Growth,
    family: Option<Family>,
}

impl CoefficientField {
    /// Expression-backed field; its gradient uses central differences.
    pub fn from_expr(expr: Expr, dim: usize) -> Result<Self> {
        if let Some(i) = expr.max_var() {
            if i >= dim {
                return Err(Error::VariableOutOfRange {
                    index: i + 1,
                    dim,
                    pos: 0,
                });
            }
        }
        let growth = if expr.as_const().is_some() {
            Growth::Bounded
        } else {
            Growth::Unspecified
        };
        Ok(CoefficientField {
            expr,
            dim,
            gradient: None,
            growth,
            family: None,
        })
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        Self::from_expr(expr::parse(src, dim)?, dim)
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::family(Family::Constant { value }, dim).expect("constant family is always valid")
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    pub fn family(family: Family, dim: usize) -> Result<Self> {
        let e = family.expr(dim)?;
        let growth = family.growth();
        let mut f = Self::from_expr(e, dim)?.with_analytic_gradient();
        f.growth = growth;
        f.family = Some(family);
        Ok(f)
    }

    /// Switches to symbolic gradients of the expression.
    pub fn with_analytic_gradient(mut self) -> Self {
        self.gradient = Some(
            (0..self.dim)
                .map(|i| self.expr.derivative(Var::Space(i)))
                .collect(),
        );
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    /// New field `op(expr)`; keeps analytic gradients when `self` had them.
    pub fn map_expr(&self, op: impl FnOnce(Expr) -> Expr) -> Self {
        let mut f = CoefficientField {
            expr: op(self.expr.clone()),
            dim: self.dim,
            gradient: None,
            growth: Growth::Unspecified,
            family: None,
        };
        if self.gradient.is_some() {
            f = f.with_analytic_gradient();
        }
        f
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn family_spec(&self) -> Option<&Family> {
        self.family.as_ref()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.expr.as_const()
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero()
    }

    pub fn depends_on_time(&self) -> bool {
        self.expr.depends_on_time()
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> core::result::Result<f64, DomainError> {
        if let Expr::Const(v) = self.expr {
            return Ok(v);
        }
        let v = self.expr.eval(t, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DomainError::NonFinite)
        }
    }

    /// Spatial gradient into `out` (length `d`): analytic when available,
    /// otherwise central differences with step `1e-4 (1 + |x|)`.
    pub fn gradient(
        &self,
        t: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> core::result::Result<(), DomainError> {
        if self.expr.as_const().is_some() {
            out.fill(0.0);
            return Ok(());
        }
        if let Some(g) = &self.gradient {
            for (o, e) in out.iter_mut().zip(g) {
                *o = match e {
                    Expr::Const(v) => *v,
                    _ => e.eval(t, x)?,
                };
                if !o.is_finite() {
                    return Err(DomainError::NonFinite);
                }
            }
            return Ok(());
        }
        let h = 1e-4 * (1.0 + math::norm(x));
        let mut buf = [0.0f64; 8];
        let mut heap;
        let y: &mut [f64] = if x.len() <= 8 {
            &mut buf[..x.len()]
        } else {
            heap = vec![0.0; x.len()];
            &mut heap
        };
        y.copy_from_slice(x);
        for i in 0..x.len() {
            y[i] = x[i] + h;
            let up = self.eval(t, y)?;
            y[i] = x[i] - h;
            let down = self.eval(t, y)?;
            y[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
        Ok(())
    }

    /// Symbolic mixed partial over the listed axes (order = `axes.len()`).
    pub fn partial_expr(&self, axes: &[usize]) -> Expr {
        axes.iter()
            .fold(self.expr.clone(), |e, &i| e.derivative(Var::Space(i)))
    }
}

/// Rectangle `[lower, upper]` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid(
                "region corners must have equal, nonzero length",
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("region needs lower < upper on every axis"));
        }
        Ok(Region { lower, upper })
    }

    /// `[-r, r]^d`
    pub fn cube(d: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; d], vec![r; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Deterministic sample cloud: the center, the corners (for `d <= 4`),
    /// then uniform points.
    pub fn sample(&self, n: usize, rng: &mut UniformStream) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut pts = vec![self.center()];
        if d <= 4 {
            for mask in 0..(1usize << d) {
                pts.push(
                    (0..d)
                        .map(|i| {
                            if mask >> i & 1 == 1 {
                                self.upper[i]
                            } else {
                                self.lower[i]
                            }
                        })
                        .collect(),
                );
            }
        }
        pts.truncate(n.max(1));
        while pts.len() < n {
            pts.push(
                (0..d)
                    .map(|i| rng.uniform(self.lower[i], self.upper[i]))
                    .collect(),
            );
        }
        pts
    }
}

/// One Cauchy problem `D_t u + A^t u - c u + f = 0`, `u(T) = h`.
///
/// A zeroth-order shift `gamma` (see [`shift_zeroth_order`]) is stored
/// separately from the coefficient expressions: the effective potential is
/// `c - gamma` and the effective source `e^{gamma (T - t)} f`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    name: String,
    d: usize,
    m: usize,
    t0: f64,
    horizon: f64,
    drift: Vec<CoefficientField>,
    diffusion: Vec<CoefficientField>,
    potential: CoefficientField,
    source: CoefficientField,
    terminal: CoefficientField,
    c0: f64,
    q: u32,
    delta: Option<f64>,
    gamma: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    spec: ProblemSpec,
}

impl ProblemBuilder {
    pub fn horizon(mut self, t0: f64, horizon: f64) -> Self {
        self.spec.t0 = t0;
        self.spec.horizon = horizon;
        self
    }

    pub fn drift(mut self, drift: Vec<CoefficientField>) -> Self {
        self.spec.drift = drift;
        self
    }

    /// Row-major `d x m`.
    pub fn diffusion(mut self, diffusion: Vec<CoefficientField>) -> Self {
        self.spec.diffusion = diffusion;
        self
    }

    pub fn potential(mut self, c: CoefficientField) -> Self {
        self.spec.potential = c;
        self
    }

    pub fn source(mut self, f: CoefficientField) -> Self {
        self.spec.source = f;
        self
    }

    pub fn terminal(mut self, h: CoefficientField) -> Self {
        self.spec.terminal = h;
        self
    }

    pub fn c0(mut self, c0: f64) -> Self {
        self.spec.c0 = c0;
        self
    }

    pub fn q(mut self, q: u32) -> Self {
        self.spec.q = q;
        self
    }

    pub fn delta(mut self, delta: Option<f64>) -> Self {
        self.spec.delta = delta;
        self
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.spec.gamma = gamma;
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let s = self.spec;
        if !(s.t0 >= 0.0 && s.t0 < s.horizon && s.horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 <= t0 < T < inf, got t0 = {}, T = {}",
                s.t0, s.horizon
            )));
        }
        if s.d == 0 || s.m == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if s.drift.len() != s.d {
            return Err(Error::invalid(format!(
                "drift has {} components, d = {}",
                s.drift.len(),
                s.d
            )));
        }
        if s.diffusion.len() != s.d * s.m {
            return Err(Error::invalid(format!(
                "diffusion has {} entries, d x m = {}",
                s.diffusion.len(),
                s.d * s.m
            )));
        }
        let all = s
            .drift
            .iter()
            .chain(&s.diffusion)
            .chain([&s.potential, &s.source, &s.terminal]);
        for f in all {
            if f.dim != s.d {
                return Err(Error::invalid("coefficient dimension does not match d"));
            }
        }
        if let Some(delta) = s.delta {
            if !(delta > 0.0) {
                return Err(Error::invalid(
                    "declared ellipticity constant must be positive",
                ));
            }
        }
        Ok(s)
    }
}

/// Values of all coefficients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientValues {
    pub b: Vec<f64>,
    /// Row-major `d x m`.
    pub sigma: Vec<f64>,
    /// Row-major `d x d`, `a = 1/2 sigma sigma^T`.
    pub a: Vec<f64>,
    pub c: f64,
    pub f: f64,
}

fn domain(kind: DomainError, what: &str, t: f64, x: &[f64]) -> Error {
    Error::Domain {
        kind,
        what: what.to_string(),
        t,
        x: x.to_vec(),
    }
}

impl ProblemSpec {
    pub fn builder(name: &str, d: usize, m: usize) -> ProblemBuilder {
        ProblemBuilder {
            spec: ProblemSpec {
                name: name.to_string(),
                d,
                m,
                t0: 0.0,
                horizon: 1.0,
                drift: (0..d).map(|_| CoefficientField::zero(d)).collect(),
                diffusion: (0..d * m).map(|_| CoefficientField::zero(d)).collect(),
                potential: CoefficientField::zero(d),
                source: CoefficientField::zero(d),
                terminal: CoefficientField::zero(d),
                c0: 0.0,
                q: 0,
                delta: None,
                gamma: 0.0,
            },
        }
    }

    /// Builder pre-filled with this spec.
    pub fn to_builder(&self) -> ProblemBuilder {
        ProblemBuilder { spec: self.clone() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Accumulated zeroth-order shift.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Lower bound of the effective potential, `c0 - gamma`.
    pub fn c0(&self) -> f64 {
        self.c0 - self.gamma
    }

    /// Lower bound of the unshifted potential.
    pub fn base_c0(&self) -> f64 {
        self.c0
    }

    pub fn drift_fields(&self) -> &[CoefficientField] {
        &self.drift
    }

    pub fn diffusion_fields(&self) -> &[CoefficientField] {
        &self.diffusion
    }

    /// Unshifted potential `c`.
    pub fn potential_field(&self) -> &CoefficientField {
        &self.potential
    }

    /// Unshifted source `f`.
    pub fn source_field(&self) -> &CoefficientField {
        &self.source
    }

    pub fn terminal_field(&self) -> &CoefficientField {
        &self.terminal
    }

    /// `b = 0` and `sigma` constant, so Euler steps are exact in law.
    pub fn has_constant_dynamics(&self) -> bool {
        self.drift
            .iter()
            .chain(&self.diffusion)
            .all(|f| f.as_constant().is_some())
    }

    pub fn source_is_zero(&self) -> bool {
        self.source.is_zero()
    }

    /// `b, sigma, c` do not depend on `t`.
    pub fn operator_is_autonomous(&self) -> bool {
        self.drift
            .iter()
            .chain(&self.diffusion)
            .chain([&self.potential])
            .all(|f| !f.depends_on_time())
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, (o, f)) in out.iter_mut().zip(&self.drift).enumerate() {
            *o = f
                .eval(t, x)
                .map_err(|k| domain(k, &format!("drift b{}", i + 1), t, x))?;
        }
        Ok(())
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, (o, f)) in out.iter_mut().zip(&self.diffusion).enumerate() {
            *o = f.eval(t, x).map_err(|k| {
                domain(
                    k,
                    &format!("diffusion sigma{}{}", i / self.m + 1, i % self.m + 1),
                    t,
                    x,
                )
            })?;
        }
        Ok(())
    }

    /// Effective potential `c(t, x) - gamma`.
    #[inline]
    pub fn potential(&self, t: f64, x: &[f64]) -> Result<f64> {
        let c = self
            .potential
            .eval(t, x)
            .map_err(|k| domain(k, "potential c", t, x))?;
        Ok(c - self.gamma)
    }

    /// Effective source `e^{gamma (T - t)} f(t, x)`.
    #[inline]
    pub fn source(&self, t: f64, x: &[f64]) -> Result<f64> {
        let f = self
            .source
            .eval(t, x)
            .map_err(|k| domain(k, "source f", t, x))?;
        Ok(self.source_scale(t) * f)
    }

    #[inline]
    fn source_scale(&self, t: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else {
            math::exp(self.gamma * (self.horizon - t))
        }
    }

    #[inline]
    pub fn terminal(&self, x: &[f64]) -> Result<f64> {
        self.terminal
            .eval(self.horizon, x)
            .map_err(|k| domain(k, "terminal h", self.horizon, x))
    }

    /// Drift Jacobian `db_i/dx_l` into `out[i * d + l]`.
    pub fn drift_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.d;
        for (i, f) in self.drift.iter().enumerate() {
            f.gradient(t, x, &mut out[i * d..(i + 1) * d])
                .map_err(|k| domain(k, &format!("gradient of drift b{}", i + 1), t, x))?;
        }
        Ok(())
    }

    /// `d sigma_ik / dx_l` into `out[(k * d + i) * d + l]`: one `d x d`
    /// Jacobian per noise column `k`.
    pub fn diffusion_jacobians(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (d, m) = (self.d, self.m);
        for i in 0..d {
            for k in 0..m {
                let f = &self.diffusion[i * m + k];
                let at = (k * d + i) * d;
                f.gradient(t, x, &mut out[at..at + d]).map_err(|e| {
                    domain(
                        e,
                        &format!("gradient of diffusion sigma{}{}", i + 1, k + 1),
                        t,
                        x,
                    )
                })?;
            }
        }
        Ok(())
    }

    pub fn potential_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.potential
            .gradient(t, x, out)
            .map_err(|k| domain(k, "gradient of potential c", t, x))
    }

    pub fn source_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.source
            .gradient(t, x, out)
            .map_err(|k| domain(k, "gradient of source f", t, x))?;
        let s = self.source_scale(t);
        if s != 1.0 {
            out.iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    }

    pub fn terminal_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.terminal
            .gradient(self.horizon, x, out)
            .map_err(|k| domain(k, "gradient of terminal h", self.horizon, x))
    }

    /// `a = 1/2 sigma sigma^T` from a row-major `d x m` sigma; the upper
    /// triangle is computed and mirrored, so `a` is exactly symmetric.
    pub fn diffusion_matrix(&self, sigma: &[f64], a: &mut [f64]) {
        let (d, m) = (self.d, self.m);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..m {
                    s += sigma[i * m + k] * sigma[j * m + k];
                }
                a[i * d + j] = 0.5 * s;
                a[j * d + i] = 0.5 * s;
            }
        }
    }

    /// All coefficients at `(t, x)`.
    pub fn evaluate_coefficients(&self, t: f64, x: &[f64]) -> Result<CoefficientValues> {
        if x.len() != self.d {
            return Err(Error::invalid("point dimension does not match d"));
        }
        let mut b = vec![0.0; self.d];
        let mut sigma = vec![0.0; self.d * self.m];
        let mut a = vec![0.0; self.d * self.d];
        self.drift(t, x, &mut b)?;
        self.diffusion(t, x, &mut sigma)?;
        self.diffusion_matrix(&sigma, &mut a);
        Ok(CoefficientValues {
            b,
            sigma,
            a,
            c: self.potential(t, x)?,
            f: self.source(t, x)?,
        })
    }

    /// Same problem with `c -> c + offset` (used for negative controls).
    pub fn with_potential_offset(&self, offset: f64) -> Self {
        let mut s = self.clone();
        s.potential = self
            .potential
            .map_expr(|e| Expr::add(e, Expr::Const(offset)));
        s.c0 += offset;
        s
    }

    /// Same problem with data `(lambda h, lambda f)`.
    pub fn with_scaled_data(&self, lambda: f64) -> Self {
        let mut s = self.clone();
        s.terminal = self
            .terminal
            .map_expr(|e| Expr::mul(Expr::Const(lambda), e));
        s.source = self.source.map_expr(|e| Expr::mul(Expr::Const(lambda), e));
        s
    }

    pub(crate) fn replace_fields(
        &self,
        drift: Vec<CoefficientField>,
        potential: CoefficientField,
        source: CoefficientField,
        terminal: CoefficientField,
        c0: f64,
        q: u32,
    ) -> Self {
        let mut s = self.clone();
        s.drift = drift;
        s.potential = potential;
        s.source = source;
        s.terminal = terminal;
        s.c0 = c0;
        s.q = q;
        s
    }
}

/// `c -> c - gamma`, `f -> e^{gamma (T - t)} f`, `c0 -> c0 - gamma`; `b`,
/// `sigma` and `h` are unchanged. If `u` solves the original problem then
/// `e^{gamma (T - t)} u` solves the shifted one, so
/// `u = e^{-gamma (T - t)} u_shifted`. Shifts compose additively.
pub fn shift_zeroth_order(spec: &ProblemSpec, gamma: f64) -> ProblemSpec {
    let mut s = spec.clone();
    s.gamma += gamma;
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Lipschitz and linear growth of `b, sigma`, ellipticity, `c >= c0`.
    Basic,
    /// Basic plus bounded derivatives up to order 3 of `b, sigma, c`, the
    /// diffusion growth band and `c0 > 0`.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionEntry {
    pub name: String,
    /// Sampled value of the constant the assumption asks for.
    pub estimate: f64,
    /// Worst offending point when the entry fails.
    pub violation: Option<Vec<f64>>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub profile: Profile,
    pub entries: Vec<AssumptionEntry>,
    pub n_samples: usize,
    pub seed: u64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub const ENTRY_LIPSCHITZ: &str = "lipschitz";
pub const ENTRY_LINEAR_GROWTH: &str = "linear-growth";
pub const ENTRY_ELLIPTICITY: &str = "ellipticity";
pub const ENTRY_POTENTIAL_BOUND: &str = "potential-lower-bound";
pub const ENTRY_COEFF_DERIVATIVES: &str = "drift-diffusion-derivatives";
pub const ENTRY_DIFFUSION_BAND: &str = "diffusion-band";
pub const ENTRY_POTENTIAL_DERIVATIVES: &str = "potential-derivatives";
pub const ENTRY_C0_POSITIVE: &str = "c0-positive";

/// A sampled quantity "diverges across the region" when its shell-wise
/// maximum grows faster than `(1 + r)^0.5`: samples are binned into four
/// radial shells around the region center and `ln max` is regressed on
/// `ln(1 + r)`.
fn diverges(radii: &[f64], values: &[f64]) -> bool {
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if rmax <= 0.0 {
        return false;
    }
    let bins = 4;
    let mut best = [0.0f64; 4];
    for (r, v) in radii.iter().zip(values) {
        let b = ((r / rmax * bins as f64) as usize).min(bins - 1);
        best[b] = best[b].max(v.abs());
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (b, v) in best.iter().enumerate() {
        if *v > 0.0 {
            let center = (b as f64 + 0.5) / bins as f64 * rmax;
            xs.push(math::ln(1.0 + center));
            ys.push(math::ln(*v));
        }
    }
    if xs.len() < 2 {
        return false;
    }
    math::linear_fit(&xs, &ys).0 > 0.5
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = i;
        }
    }
    best
}

/// Nondecreasing axis tuples of length `order`.
pub(crate) fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for idx in &out {
            let start = idx.last().copied().unwrap_or(0);
            for i in start..d {
                let mut v = idx.clone();
                v.push(i);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Samples the structural assumptions on `region x [t0, T]`.
///
/// Constants are reported as sampled estimates; an entry fails only on a
/// hard violation: a growth or derivative quotient that diverges across the
/// region, a non-positive ellipticity eigenvalue (or one below a declared
/// `delta`), `c < c0`, a diffusion band with `C1 = 0`, or `c0 <= 0` (strict).
pub fn validate_assumptions(
    spec: &ProblemSpec,
    region: &Region,
    n_samples: usize,
    profile: Profile,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if region.dim() != spec.dim() {
        return Err(Error::invalid("region dimension does not match d"));
    }
    let (d, m) = (spec.dim(), spec.noise_dim());
    let mut rng = UniformStream::new(seed);
    let points = region.sample(n_samples, &mut rng);
    let times: Vec<f64> = (0..points.len())
        .map(|i| {
            if i == 0 {
                spec.t0()
            } else {
                rng.uniform(spec.t0(), spec.horizon())
            }
        })
        .collect();
    let center = region.center();
    let radius = |x: &[f64]| math::dist(x, &center);

    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut a = vec![0.0; d * d];
    let mut b2 = vec![0.0; d];
    let mut s2 = vec![0.0; d * m];
    let mut entries = Vec::new();

    // Lipschitz quotients over consecutive random pairs at a common time.
    let mut lip = Vec::with_capacity(points.len());
    let mut lip_r = Vec::with_capacity(points.len());
    let mut lip_mid = Vec::with_capacity(points.len());
    for w in 0..points.len() - 1 {
        let (x, y) = (&points[w], &points[w + 1]);
        let dxy = math::dist(x, y);
        if dxy == 0.0 {
            continue;
        }
        let t = times[w];
        spec.drift(t, x, &mut b)?;
        spec.diffusion(t, x, &mut s)?;
        spec.drift(t, y, &mut b2)?;
        spec.diffusion(t, y, &mut s2)?;
        let q = (math::dist(&b, &b2) + math::dist(&s, &s2)) / dxy;
        let mid: Vec<f64> = x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect();
        lip_r.push(radius(&mid));
        lip.push(q);
        lip_mid.push(mid);
    }
    let worst = argmax(&lip);
    let bad = diverges(&lip_r, &lip);
    entries.push(AssumptionEntry {
        name: ENTRY_LIPSCHITZ.to_string(),
        estimate: lip[worst],
        violation: bad.then(|| lip_mid[worst].clone()),
        pass: !bad && lip[worst].is_finite(),
    });

    // Linear growth, ellipticity, potential lower bound.
    let mut growth = Vec::with_capacity(points.len());
    let mut radii = Vec::with_capacity(points.len());
    let mut min_eig = f64::INFINITY;
    let mut min_eig_at = 0;
    let mut min_gap = f64::INFINITY;
    let mut min_gap_at = 0;
    for (i, (x, &t)) in points.iter().zip(&times).enumerate() {
        spec.drift(t, x, &mut b)?;
        spec.diffusion(t, x, &mut s)?;
        spec.diffusion_matrix(&s, &mut a);
        growth.push((math::norm(&b) + math::norm(&s)) / (1.0 + math::norm(x)));
        radii.push(radius(x));
        let e = math::symmetric_eigenvalues(&a, d)[0];
        if e < min_eig {
            min_eig = e;
            min_eig_at = i;
        }
        let gap = spec.potential(t, x)? - spec.c0();
        if gap < min_gap {
            min_gap = gap;
            min_gap_at = i;
        }
    }
    let worst = argmax(&growth);
    let bad = diverges(&radii, &growth);
    entries.push(AssumptionEntry {
        name: ENTRY_LINEAR_GROWTH.to_string(),
        estimate: growth[worst],
        violation: bad.then(|| points[worst].clone()),
        pass: !bad,
    });
    let floor = spec.delta().unwrap_or(0.0);
    let elliptic = min_eig > 0.0 && min_eig >= floor * (1.0 - 1e-12);
    entries.push(AssumptionEntry {
        name: ENTRY_ELLIPTICITY.to_string(),
        estimate: min_eig,
        violation: (!elliptic).then(|| points[min_eig_at].clone()),
        pass: elliptic,
    });
    let bounded_below = min_gap >= -1e-12 * (1.0 + spec.c0().abs());
    entries.push(AssumptionEntry {
        name: ENTRY_POTENTIAL_BOUND.to_string(),
        estimate: min_gap,
        violation: (!bounded_below).then(|| points[min_gap_at].clone()),
        pass: bounded_below,
    });

    if profile == Profile::Strict {
        let indices: Vec<Vec<usize>> = (1..=3).flat_map(|k| multi_indices(d, k)).collect();
        let derivative_entry =
            |name: &str, fields: &[&CoefficientField]| -> Result<AssumptionEntry> {
                let partials: Vec<Expr> = fields
                    .iter()
                    .flat_map(|f| indices.iter().map(|idx| f.partial_expr(idx)))
                    .collect();
                let mut sup = Vec::with_capacity(points.len());
                for (x, &t) in points.iter().zip(&times) {
                    let mut worst: f64 = 0.0;
                    for p in &partials {
                        let v = p.eval(t, x).map_err(|k| domain(k, name, t, x))?;
                        worst = worst.max(v.abs());
                    }
                    sup.push(worst);
                }
                let at = argmax(&sup);
                let bad = diverges(&radii, &sup) || !sup[at].is_finite();
                Ok(AssumptionEntry {
                    name: name.to_string(),
                    estimate: sup[at],
                    violation: bad.then(|| points[at].clone()),
                    pass: !bad,
                })
            };
        let coeffs: Vec<&CoefficientField> =
            spec.drift.iter().chain(spec.diffusion.iter()).collect();
        entries.push(derivative_entry(ENTRY_COEFF_DERIVATIVES, &coeffs)?);

        // Band C1 (1 + |x|)^(1/2) <= sigma <= C2 (1 + |x|), with the lower
        // side taken on the smallest singular value of sigma.
        let mut c1 = f64::INFINITY;
        let mut c1_at = 0;
        let mut upper = Vec::with_capacity(points.len());
        for (i, (x, &t)) in points.iter().zip(&times).enumerate() {
            spec.diffusion(t, x, &mut s)?;
            spec.diffusion_matrix(&s, &mut a);
            // singular values of sigma are sqrt(eig(2a)) restricted to rank m
            let ev = math::symmetric_eigenvalues(&a, d);
            let smin = if m >= d {
                math::sqrt((2.0 * ev[0]).max(0.0))
            } else {
                0.0
            };
            let r = 1.0 + math::norm(x);
            let ratio = smin / math::sqrt(r);
            if ratio < c1 {
                c1 = ratio;
                c1_at = i;
            }
            let smax = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            upper.push(smax / r);
        }
        let c2_at = argmax(&upper);
        let upper_bad = diverges(&radii, &upper);
        let band_ok = c1 > 1e-12 && !upper_bad;
        entries.push(AssumptionEntry {
            name: ENTRY_DIFFUSION_BAND.to_string(),
            estimate: c1,
            violation: (!band_ok).then(|| {
                if c1 <= 1e-12 {
                    points[c1_at].clone()
                } else {
                    points[c2_at].clone()
                }
            }),
            pass: band_ok,
        });
        entries.push(AssumptionEntry {
            name: "diffusion-band-upper".to_string(),
            estimate: upper[c2_at],
            violation: upper_bad.then(|| points[c2_at].clone()),
            pass: !upper_bad,
        });

        entries.push(derivative_entry(
            ENTRY_POTENTIAL_DERIVATIVES,
            &[&spec.potential],
        )?);
        entries.push(AssumptionEntry {
            name: ENTRY_C0_POSITIVE.to_string(),
            estimate: spec.c0(),
            violation: None,
            pass: spec.c0() > 0.0,
        });
    }

    Ok(AssumptionReport {
        profile,
        entries,
        n_samples: points.len(),
        seed,
    })
}
