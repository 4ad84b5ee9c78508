//! Numerical checks of the quantitative bounds for the backward equation.
//!
//! Each check returns a record holding both sides of one inequality, the
//! tolerance it was judged with and the inputs needed to rerun it. Constants
//! that are only known to exist are calibrated once and frozen below; later
//! runs assert stability within a factor of two.

pub mod suite;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fd::{self, grid_descriptor, Boundary, Field, Grid};
use crate::fk::{self, McParams};
use crate::math;
use crate::problem::{ProblemSpec, Region};
use crate::rng::{derive_seed_str, UniformStream};
use crate::spaces::{self, region_descriptor, DerivativeSamples, NormVariant};

/// One verified inequality `lhs <= rhs`, accepted when
/// `margin = rhs - lhs >= -tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub check: String,
    /// Name of the bound being checked.
    pub bound: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Inputs needed to rerun the check.
    pub inputs: Vec<(String, String)>,
    /// Per-slice (or per-level) rows `[abscissa, lhs, rhs]`.
    pub series: Vec<[f64; 3]>,
    pub notes: Vec<String>,
}

impl BoundCheck {
    pub fn new(check: &str, bound: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        BoundCheck {
            check: check.into(),
            bound: bound.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            pass: margin >= -tolerance,
            inputs: Vec::new(),
            series: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl core::fmt::Display) -> Self {
        self.inputs.push((key.into(), alloc::format!("{value}")));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_series(mut self, series: Vec<[f64; 3]>) -> Self {
        self.series = series;
        self
    }

    /// Forces a failure that the inequality itself would not show.
    pub fn fail(mut self, why: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(why.into());
        self
    }
}

/// Growth of `sup |u|` (or `sup |D_x u|`) over spheres of increasing radius.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub check: String,
    pub order: usize,
    pub t: f64,
    pub radii: Vec<f64>,
    pub sup_values: Vec<f64>,
    pub slope: f64,
    /// `2q` for values, `2q (1 + |a|)` for derivatives.
    pub exponent: f64,
    /// `2q` for derivatives when `D_x c` is bounded.
    pub sharp_exponent: Option<f64>,
    pub slack: f64,
    pub pass: bool,
    pub inputs: Vec<(String, String)>,
    pub notes: Vec<String>,
}

/// Finite-difference solution with Monte Carlo lateral data; returns the
/// field and the largest boundary stderr.
pub fn solve_with_mc_boundary(
    spec: &ProblemSpec,
    grid: &Grid,
    params: &McParams,
    theta: f64,
    exec: &Exec,
) -> Result<(Field, f64)> {
    let (boundary, se_b) = fd::monte_carlo_boundary(spec, grid, params, exec)?;
    let (terminal, se_t) = fd::terminal_slice(spec, grid, params, exec)?;
    let field = fd::solve_dirichlet(spec, grid, &terminal, &boundary, theta)?;
    Ok((field, se_b.max(se_t)))
}

/// Finite-difference solution with lateral data from a known function.
pub fn solve_with_exact_boundary(
    spec: &ProblemSpec,
    grid: &Grid,
    theta: f64,
    exact: impl Fn(f64, &[f64]) -> f64,
) -> Result<Field> {
    let boundary = Boundary::from_fn(grid, &exact);
    let terminal: Vec<f64> = (0..grid.n_space())
        .map(|i| exact(grid.t2, &grid.point(i)))
        .collect();
    fd::solve_dirichlet(spec, grid, &terminal, &boundary, theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPrincipleOptions {
    /// Largest stderr of the field values.
    pub stderr: f64,
    /// Discretization allowance.
    pub allowance: f64,
    /// Added to `c0` on the right-hand side (negative control).
    pub c0_offset: f64,
}

impl Default for MaxPrincipleOptions {
    fn default() -> Self {
        MaxPrincipleOptions {
            stderr: 0.0,
            allowance: 1e-10,
            c0_offset: 0.0,
        }
    }
}

/// `max_x |u(t_k, x)| <= e^{-c0 (T - t_k)} sup |h|` on every slice of a
/// field, for problems without source. The reported sides are those of the
/// slice with the smallest margin.
pub fn check_max_principle(
    spec: &ProblemSpec,
    field: &Field,
    h_sup: f64,
    opts: &MaxPrincipleOptions,
) -> Result<BoundCheck> {
    if !spec.source_is_zero() {
        return Err(Error::invalid("the maximum principle check needs f = 0"));
    }
    let g = &field.grid;
    let c0 = spec.c0() + opts.c0_offset;
    let mut series = Vec::with_capacity(g.n_slices());
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for k in 0..g.n_slices() {
        let t = g.time(k);
        let lhs = field.slice(k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rhs = math::exp(-c0 * (spec.horizon() - t)) * h_sup;
        series.push([t, lhs, rhs]);
        if rhs - lhs < worst.0 {
            worst = (rhs - lhs, lhs, rhs);
        }
    }
    let tol = 3.0 * opts.stderr + opts.allowance;
    let mut check = BoundCheck::new("max-principle", "maximum-principle", worst.1, worst.2, tol)
        .input("spec", spec.name())
        .input("grid", grid_descriptor(g))
        .input("c0", c0)
        .input("h_sup", h_sup)
        .with_series(series);
    if opts.c0_offset != 0.0 {
        check = check.note(format!(
            "c0 offset by {} on the right-hand side",
            opts.c0_offset
        ));
    }
    Ok(check)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthParams {
    pub radii: Vec<f64>,
    pub t: f64,
    /// 0 for values, 1 for gradients.
    pub order: usize,
    pub mc: McParams,
    /// Random directions added to the `2d` axis points when `d >= 2`.
    pub directions: usize,
    pub slack: f64,
}

impl GrowthParams {
    pub fn new(radii: Vec<f64>, t: f64, order: usize, mc: McParams) -> Self {
        GrowthParams {
            radii,
            t,
            order,
            mc,
            directions: 8,
            slack: 0.3,
        }
    }
}

/// Largest radius accepted by [`check_growth`].
pub const GROWTH_MAX_RADIUS: f64 = 1e4;

fn sphere(d: usize, r: f64, directions: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        for s in [-1.0, 1.0] {
            let mut x = vec![0.0; d];
            x[i] = s * r;
            out.push(x);
        }
    }
    if d >= 2 {
        let mut rng = UniformStream::new(seed);
        for _ in 0..directions {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let n = math::norm(&v);
            out.push(v.iter().map(|c| r * c / n).collect());
        }
    }
    out
}

/// Fits the growth of `sup |u(t, .)|` or `sup |D_x u(t, .)|` over spheres.
/// Passes when the fitted log-log slope is at most the exponent plus the
/// slack, which absorbs Monte Carlo noise and the sub-asymptotic radii.
pub fn check_growth(
    spec: &ProblemSpec,
    params: &GrowthParams,
    exec: &Exec,
) -> Result<GrowthReport> {
    let radii = &params.radii;
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::invalid(
            "radii must be positive and strictly increasing",
        ));
    }
    if radii.iter().any(|r| *r > GROWTH_MAX_RADIUS) {
        return Err(Error::invalid(format!(
            "radius beyond the overflow-safe region r <= {GROWTH_MAX_RADIUS}"
        )));
    }
    if params.order > 1 {
        return Err(Error::invalid(
            "growth is checked for values and first derivatives",
        ));
    }
    let d = spec.dim();
    let q = spec.q() as f64;
    let mut sups = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let pts = sphere(
            d,
            r,
            params.directions,
            derive_seed_str(params.mc.seed, "sphere"),
        );
        let mut sup = 0.0f64;
        for (pi, x) in pts.iter().enumerate() {
            let mc = params.mc.with_seed(derive_seed_str(
                params.mc.seed,
                &format!("growth {ri} {pi}"),
            ));
            let v = if params.order == 0 {
                fk::estimate_value(spec, params.t, x, &mc, exec)?
                    .value()
                    .abs()
            } else {
                math::norm(&fk::estimate_gradient(spec, params.t, x, &mc, exec)?.mean)
            };
            sup = sup.max(v);
        }
        sups.push(sup);
    }
    let mut notes = Vec::new();
    let span = radii[radii.len() - 1] / radii[0];
    if span < 10.0 {
        notes.push(format!("radii span a factor {span}, below one decade"));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&sups)
        .filter(|(_, s)| **s > 0.0)
        .map(|(r, s)| (*r, *s))
        .unzip();
    let slope = if xs.len() < 2 {
        notes.push("sup vanishes at all but at most one radius; slope set to 0".into());
        0.0
    } else {
        if xs.len() < radii.len() {
            notes.push("radii with zero sup left out of the fit".into());
        }
        math::log_log_slope(&xs, &ys)
    };
    let (exponent, sharp) = if params.order == 0 {
        (2.0 * q, None)
    } else {
        (2.0 * q * 2.0, Some(2.0 * q))
    };
    Ok(GrowthReport {
        check: if params.order == 0 {
            "growth-values"
        } else {
            "growth-gradient"
        }
        .into(),
        order: params.order,
        t: params.t,
        radii: radii.clone(),
        sup_values: sups,
        slope,
        exponent,
        sharp_exponent: sharp,
        slack: params.slack,
        pass: slope.is_finite() && slope <= exponent + params.slack,
        inputs: vec![
            ("spec".into(), spec.name().into()),
            ("paths".into(), format!("{}", params.mc.n_paths)),
            ("steps".into(), format!("{}", params.mc.n_steps)),
            ("seed".into(), format!("{}", params.mc.seed)),
        ],
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingParams {
    /// Distances `T - t` to the horizon.
    pub taus: Vec<f64>,
    /// Derivative order of the target norm (1 or 2).
    pub p2: usize,
    /// The box is `[-half_width, half_width]^d`.
    pub half_width: f64,
    pub dx: f64,
    pub dt: f64,
    pub theta: f64,
    pub boundary: McParams,
    pub slack: f64,
}

impl SmoothingParams {
    pub fn new(taus: Vec<f64>, p2: usize, boundary: McParams) -> Self {
        SmoothingParams {
            taus,
            p2,
            half_width: 4.0,
            dx: 0.01,
            dt: 0.0025,
            theta: 0.5,
            boundary,
            slack: 0.15,
        }
    }
}

/// Blow-up of `u(t, .) = G(t, T) h` in `BC^{p2}` as `t -> T` for a bounded
/// `h`. The exponent is fitted on the top-order term
/// `sum_{|a| = p2} sup |D^a u|`, measured by central differences on the
/// inner half of the box; the lower-order terms stay bounded and would only
/// flatten the fit. Passes when the exponent is at most `p2 / 2 + slack`.
pub fn check_smoothing(
    spec: &ProblemSpec,
    params: &SmoothingParams,
    exec: &Exec,
) -> Result<BoundCheck> {
    if !spec.source_is_zero() {
        return Err(Error::invalid("the smoothing check needs f = 0"));
    }
    if !(1..=2).contains(&params.p2) {
        return Err(Error::invalid("target order must be 1 or 2"));
    }
    let mut taus = params.taus.clone();
    taus.sort_by(|a, b| b.total_cmp(a));
    if taus.len() < 2 || taus.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("need at least two distinct times"));
    }
    let tau_max = taus[0];
    let tau_min = taus[taus.len() - 1];
    if tau_max > spec.horizon() - spec.t0() {
        return Err(Error::invalid("time ladder starts before t0"));
    }
    if tau_min < 4.0 * params.dt || math::sqrt(tau_min) < 5.0 * params.dx {
        return Err(Error::invalid(format!(
            "T - t = {tau_min} is too close to T for dx = {}, dt = {}",
            params.dx, params.dt
        )));
    }
    let d = spec.dim();
    let n_time = libm::round(tau_max / params.dt) as usize;
    let per_axis = libm::round(2.0 * params.half_width / params.dx) as usize + 1;
    let grid = Grid::new(
        Region::cube(d, params.half_width)?,
        vec![per_axis; d],
        spec.horizon() - tau_max,
        spec.horizon(),
        n_time,
    )?;
    let (field, se) = solve_with_mc_boundary(spec, &grid, &params.boundary, params.theta, exec)?;
    let nodes = fd::inner_half_nodes(&grid);
    let mut series = Vec::new();
    for &tau in &taus {
        let kf = (tau_max - tau) / grid.dt();
        let k = libm::round(kf) as usize;
        if (kf - k as f64).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "T - t = {tau} is not on the time grid"
            )));
        }
        let s = DerivativeSamples::from_grid_field(&field, k, &nodes, params.p2)?;
        let mut top = 0.0;
        let mut full = 0.0;
        for order in 0..=params.p2 {
            for axes in crate::problem::multi_indices(d, order) {
                let v = s.values(&axes).expect("filled up to p2");
                let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                full += sup;
                if order == params.p2 {
                    top += sup;
                }
            }
        }
        series.push([tau, top, full]);
    }
    let xs: Vec<f64> = series.iter().map(|r| r[0]).collect();
    let top: Vec<f64> = series.iter().map(|r| r[1]).collect();
    let full: Vec<f64> = series.iter().map(|r| r[2]).collect();
    let exponent = -math::log_log_slope(&xs, &top);
    let full_exponent = -math::log_log_slope(&xs, &full);
    let target = params.p2 as f64 / 2.0;
    Ok(BoundCheck::new(
        "smoothing",
        "smoothing-exponent",
        exponent,
        target,
        params.slack,
    )
    .input("spec", spec.name())
    .input("grid", grid_descriptor(&grid))
    .input("p2", params.p2)
    .input("boundary_paths", params.boundary.n_paths)
    .input("seed", params.boundary.seed)
    .with_series(series)
    .note(format!("exponent of the full norm {full_exponent:.4}"))
    .note(format!("boundary stderr {se:.3e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchauderMode {
    /// `||u||_{BC_P} + (T - t)^{1 + beta/2} ||u||_{H_P^{2+beta}}` against
    /// `||h||_{BC_P} + sup_t ||f||_{H_P^beta}`.
    Interior,
    /// `sup_t ||u||_{H_P^{2+beta}}` against
    /// `||h||_{H_P^{2+beta}} + sup_t ||f||_{H_P^beta}`.
    Optimal,
}

impl SchauderMode {
    pub fn name(self) -> &'static str {
        match self {
            SchauderMode::Interior => "interior",
            SchauderMode::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchauderParams {
    pub region: Region,
    pub nodes: Vec<usize>,
    pub n_time: usize,
    pub beta: f64,
    pub theta: f64,
    pub boundary: McParams,
    /// Number of time slices (plus the first) on which norms are taken.
    pub slices: usize,
    pub variant: NormVariant,
}

impl SchauderParams {
    pub fn new(region: Region, nodes: Vec<usize>, n_time: usize, boundary: McParams) -> Self {
        SchauderParams {
            region,
            nodes,
            n_time,
            beta: 0.5,
            theta: 0.5,
            boundary,
            slices: 8,
            variant: NormVariant::Standard,
        }
    }
}

/// Both sides of a Schauder estimate for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SchauderRatio {
    pub mode: SchauderMode,
    pub solution_side: f64,
    pub data_side: f64,
    /// `solution_side / data_side`; `None` when both vanish.
    pub ratio: Option<f64>,
    pub cloud: String,
    pub grid: String,
}

/// Measures the solution and data sides on the inner half of the grid, with
/// derivatives of the finite-difference solution from central differences.
pub fn schauder_ratio(
    spec: &ProblemSpec,
    params: &SchauderParams,
    mode: SchauderMode,
    exec: &Exec,
) -> Result<SchauderRatio> {
    let grid = Grid::new(
        params.region.clone(),
        params.nodes.clone(),
        spec.t0(),
        spec.horizon(),
        params.n_time,
    )?;
    let (field, _) = solve_with_mc_boundary(spec, &grid, &params.boundary, params.theta, exec)?;
    let nodes = fd::inner_half_nodes(&grid);
    let q = spec.q();
    let beta = Some(params.beta);
    let norm = |k: usize, p: usize, b: Option<f64>| -> Result<f64> {
        let s = DerivativeSamples::from_grid_field(&field, k, &nodes, p)?;
        Ok(spaces::weighted_norm(&s, q, p, b, params.variant)?.value)
    };
    let last = grid.n_time;
    let slices: Vec<usize> = (0..=params.slices.max(1))
        .map(|j| j * last / params.slices.max(1))
        .collect();

    let mut solution_side = 0.0f64;
    for &k in &slices {
        let tau = spec.horizon() - grid.time(k);
        let v = match mode {
            SchauderMode::Interior => {
                if k == last {
                    continue;
                }
                norm(k, 0, None)? + math::powf(tau, 1.0 + params.beta / 2.0) * norm(k, 2, beta)?
            }
            SchauderMode::Optimal => norm(k, 2, beta)?,
        };
        solution_side = solution_side.max(v);
    }

    let h_norm = match mode {
        SchauderMode::Interior => norm(last, 0, None)?,
        SchauderMode::Optimal => norm(last, 2, beta)?,
    };
    let mut f_norm = 0.0f64;
    if !spec.source_is_zero() {
        let points: Vec<Vec<f64>> = nodes.iter().map(|&i| grid.point(i)).collect();
        for &k in &slices {
            let t = grid.time(k);
            let vals = points
                .iter()
                .map(|x| spec.source(t, x))
                .collect::<Result<Vec<f64>>>()?;
            let cloud = spaces::Cloud::from_points(points.clone(), "inner-half nodes")?;
            let mut s = DerivativeSamples::new(cloud);
            s.insert(&[], vals)?;
            f_norm = f_norm.max(spaces::weighted_norm(&s, q, 0, beta, params.variant)?.value);
        }
    }
    let data_side = h_norm + f_norm;
    let ratio = if data_side == 0.0 && solution_side == 0.0 {
        None
    } else {
        Some(solution_side / data_side)
    };
    Ok(SchauderRatio {
        mode,
        solution_side,
        data_side,
        ratio,
        cloud: format!("{} inner-half nodes", nodes.len()),
        grid: grid_descriptor(&grid),
    })
}

/// Ratio stability against a frozen calibration constant `c`: passes when
/// `max(r / c, c / r) <= 2`. Vanishing data on both sides is a vacuous
/// pass.
pub fn check_schauder_ratio(
    spec: &ProblemSpec,
    params: &SchauderParams,
    mode: SchauderMode,
    calibration: f64,
    exec: &Exec,
) -> Result<BoundCheck> {
    let r = schauder_ratio(spec, params, mode, exec)?;
    let name = format!("schauder-{}", mode.name());
    let check = match r.ratio {
        None => BoundCheck::new(&name, "schauder-ratio", 0.0, 0.0, 0.0)
            .note("data and solution vanish; vacuous pass"),
        Some(ratio) => {
            let dev = if ratio > 0.0 && ratio.is_finite() {
                (ratio / calibration).max(calibration / ratio)
            } else {
                f64::INFINITY
            };
            BoundCheck::new(&name, "schauder-ratio", dev, 2.0, 0.0)
                .note(format!("ratio {ratio:.6e}, calibration {calibration:.6e}"))
        }
    };
    Ok(check
        .input("spec", spec.name())
        .input("grid", r.grid)
        .input("cloud", r.cloud)
        .input("beta", params.beta)
        .input("variant", params.variant.name())
        .input("boundary_paths", params.boundary.n_paths)
        .input("seed", params.boundary.seed)
        .note(format!(
            "solution side {:.6e}, data side {:.6e}",
            r.solution_side, r.data_side
        )))
}

/// `C^3` cutoff of the radius ratio `s`: 1 for `s <= 1/2`, 0 for `s >= 1`,
/// `1 - S((s - 1/2) / (1/2))` in between with the smoothstep
/// `S(y) = 35 y^4 - 84 y^5 + 70 y^6 - 20 y^7`.
pub fn cutoff(s: f64) -> f64 {
    if s <= 0.5 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let y = 2.0 * (s - 0.5);
    let y4 = y * y * y * y;
    1.0 - y4 * (35.0 - 84.0 * y + 70.0 * y * y - 20.0 * y * y * y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinParams {
    pub a: f64,
    pub radius: f64,
    pub center: Vec<f64>,
    /// Frozen `C` in `sup_x v_R(t, .) <= C sup |h|^2`.
    pub constant: f64,
}

/// Values of `a` at which the functional must not increase.
const BERNSTEIN_LADDER: [f64; 4] = [1.0, 0.5, 0.25, 0.0];

fn bernstein_values(field: &Field, a: f64, radius: f64, center: &[f64]) -> Result<Vec<f64>> {
    let g = &field.grid;
    let d = g.dim();
    let t2 = g.t2;
    let mut out = vec![0.0; g.n_space() * g.n_slices()];
    let idx1 = crate::problem::multi_indices(d, 1);
    let tuples = |k: usize| -> Vec<Vec<usize>> {
        let mut all: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..k {
            all = all
                .into_iter()
                .flat_map(|v| {
                    (0..d).map(move |i| {
                        let mut w = v.clone();
                        w.push(i);
                        w
                    })
                })
                .collect();
        }
        all
    };
    let (t2s, t3s) = (tuples(2), tuples(3));
    for k in 0..g.n_slices() {
        let s = a * (t2 - g.time(k));
        for i in 0..g.n_space() {
            let u = field.get(k, i);
            let x = g.point(i);
            let eta = cutoff(math::dist(&x, center) / radius);
            let mut v = u * u;
            if eta > 0.0 && s > 0.0 {
                let der = |axes: &[usize]| {
                    field.derivative(k, i, axes).ok_or_else(|| {
                        Error::MissingDerivative(format!(
                            "D{axes:?} at node {i}: the cutoff support reaches the grid edge"
                        ))
                    })
                };
                let mut s1 = 0.0;
                for ax in &idx1 {
                    s1 += math::powi(der(ax)?, 2);
                }
                let mut s2 = 0.0;
                for ax in &t2s {
                    s2 += math::powi(der(ax)?, 2);
                }
                let mut s3 = 0.0;
                for ax in &t3s {
                    s3 += math::powi(der(ax)?, 2);
                }
                let e2 = eta * eta;
                v += s * e2 * s1 + s * s * e2 * e2 * s2 + s * s * s * e2 * e2 * e2 * s3;
            }
            out[k * g.n_space() + i] = v;
        }
    }
    Ok(out)
}

/// The functional
///
/// ```text
/// v_R = |u|^2 + a (T - t) eta^2 sum_i |D^i u|^2 + a^2 (T - t)^2 eta^4 sum_ij |D^ij u|^2
///     + a^3 (T - t)^3 eta^6 sum_ijk |D^ijk u|^2
/// ```
///
/// on every node (sums over ordered index tuples, derivatives by central
/// differences, `T` the last slice of the field). Checks
/// `sup_x v_R(t, .) <= C sup |h|^2` on every slice and that the sups do not
/// increase as `a` is lowered to `a/2, a/4, 0`.
pub fn bernstein_functional(
    field: &Field,
    params: &BernsteinParams,
) -> Result<(Field, BoundCheck)> {
    let g = &field.grid;
    if params.center.len() != g.dim() || !(params.radius > 0.0) || !(params.a >= 0.0) {
        return Err(Error::invalid(
            "cutoff needs a center in R^d, radius > 0 and a >= 0",
        ));
    }
    let last = g.n_time;
    let h_sup = field.slice(last).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = g.n_space();
    let mut sups: Vec<Vec<f64>> = Vec::new();
    let mut first = Vec::new();
    for (j, scale) in BERNSTEIN_LADDER.iter().enumerate() {
        let vals = bernstein_values(field, params.a * scale, params.radius, &params.center)?;
        sups.push(
            (0..g.n_slices())
                .map(|k| {
                    vals[k * n..(k + 1) * n]
                        .iter()
                        .fold(0.0f64, |m, v| m.max(*v))
                })
                .collect(),
        );
        if j == 0 {
            first = vals;
        }
    }
    let rhs_bound = params.constant * h_sup * h_sup;
    let series: Vec<[f64; 3]> = (0..g.n_slices())
        .map(|k| [g.time(k), sups[0][k], rhs_bound])
        .collect();
    let lhs = sups[0].iter().fold(0.0f64, |m, v| m.max(*v));
    let monotone = (0..g.n_slices()).all(|k| sups.windows(2).all(|w| w[1][k] <= w[0][k]));
    let mut check = BoundCheck::new(
        "bernstein",
        "bernstein-functional",
        lhs,
        rhs_bound,
        1e-12 * rhs_bound.max(1.0),
    )
    .input("grid", grid_descriptor(g))
    .input("a", params.a)
    .input("radius", params.radius)
    .input("center", format!("{:?}", params.center))
    .input("constant", params.constant)
    .with_series(series)
    .note(format!("sup |h| = {h_sup:.6e}"));
    if !monotone {
        check = check.fail("functional increased as a was lowered");
    }
    let out = Field::new(g.clone(), first, field.source)?;
    Ok((out, check))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    /// Weight exponent of the transform.
    pub q: u32,
    /// Weight exponent used to multiply the solution back; differs from `q`
    /// only in the negative control.
    pub weight_q: u32,
    pub region: Region,
    pub nodes: Vec<usize>,
    pub n_time: usize,
    pub theta: f64,
    /// Lateral data of the transformed problem.
    pub boundary: McParams,
    /// Reference estimates of the original problem.
    pub interior: McParams,
    pub allowance: f64,
}

impl TransformParams {
    pub fn new(
        q: u32,
        region: Region,
        nodes: Vec<usize>,
        n_time: usize,
        boundary: McParams,
        interior: McParams,
    ) -> Self {
        TransformParams {
            q,
            weight_q: q,
            region,
            nodes,
            n_time,
            theta: 0.5,
            boundary,
            interior,
            allowance: 5e-3,
        }
    }
}

/// Solves the transformed bounded-data problem by finite differences (with
/// Monte Carlo lateral data of the transformed problem), multiplies by `P`
/// and compares with Monte Carlo estimates of the original problem on the
/// inner half of the box at the first and middle slices. Passes when the
/// largest discrepancy is at most `3 stderr + allowance`, where the stderr
/// combines the reference stderr with the boundary stderr scaled by `P`.
pub fn transform_cross_check(
    spec: &ProblemSpec,
    params: &TransformParams,
    exec: &Exec,
) -> Result<BoundCheck> {
    let tspec = spaces::transform_to_bounded(spec, params.q)?;
    let grid = Grid::new(
        params.region.clone(),
        params.nodes.clone(),
        spec.t0(),
        spec.horizon(),
        params.n_time,
    )?;
    let (v, se_b) = solve_with_mc_boundary(&tspec, &grid, &params.boundary, params.theta, exec)?;
    let compare = fd::inner_half_nodes(&grid);
    let slices = [0usize, grid.n_time / 2];
    let wanted: Vec<(usize, usize)> = slices
        .iter()
        .flat_map(|&k| compare.iter().map(move |&i| (k, i)))
        .collect();
    let interior = params
        .interior
        .with_seed(derive_seed_str(params.interior.seed, "transform reference"));
    let mc = fk::estimate_at_nodes(spec, &grid, &wanted, &interior, exec)?;
    let mut worst = 0.0f64;
    let mut se = 0.0f64;
    for (&(k, i), (u, se_u)) in wanted.iter().zip(&mc) {
        let x = grid.point(i);
        let p = spaces::weight(params.weight_q, &x);
        worst = worst.max((v.get(k, i) * p - u).abs());
        se = se.max(math::sqrt(se_u * se_u + (p * se_b) * (p * se_b)));
    }
    let tol = 3.0 * se + params.allowance;
    let mut check = BoundCheck::new("transform", "weight-transform", worst, 0.0, tol)
        .input("spec", spec.name())
        .input("q", params.q)
        .input("weight_q", params.weight_q)
        .input("region", region_descriptor(&params.region))
        .input("grid", grid_descriptor(&grid))
        .input("boundary_paths", params.boundary.n_paths)
        .input("boundary_steps", params.boundary.n_steps)
        .input("interior_paths", params.interior.n_paths)
        .input("seed", params.boundary.seed)
        .note(format!("transformed c0 = {:.6e}", tspec.c0()))
        .note(format!("stderr {se:.3e}"));
    if params.weight_q != params.q {
        check = check.note("solution multiplied by a weight with a different q");
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog::{self, closed_form};
    use crate::problem::CoefficientField;

    fn seq() -> Exec {
        Exec::sequential()
    }

    fn line_grid(r: f64, nx: usize, nt: usize) -> Grid {
        Grid::new(Region::cube(1, r).unwrap(), vec![nx], 0.0, 1.0, nt).unwrap()
    }

    #[test]
    fn max_principle_saturated_by_constant_data() {
        let spec = catalog::constant_data(3.0, 0.7);
        let grid = line_grid(2.0, 21, 10);
        let (field, se) =
            solve_with_mc_boundary(&spec, &grid, &McParams::new(4, 1, 1), 0.5, &seq()).unwrap();
        assert_eq!(se, 0.0);
        let c = check_max_principle(&spec, &field, 3.0, &MaxPrincipleOptions::default()).unwrap();
        assert!(c.pass);
        for row in &c.series {
            let exact = 3.0 * (-0.7 * (1.0 - row[0])).exp();
            assert!((row[1] - row[2]).abs() <= 1e-10);
            assert!((row[2] - exact).abs() <= 1e-12);
        }
        let opts = MaxPrincipleOptions {
            c0_offset: 1.0,
            ..Default::default()
        };
        assert!(!check_max_principle(&spec, &field, 3.0, &opts).unwrap().pass);
    }

    #[test]
    fn max_principle_rejects_source() {
        let spec = ProblemSpec::builder("s", 1, 1)
            .diffusion(vec![CoefficientField::constant(1.0, 1)])
            .source(CoefficientField::constant(1.0, 1))
            .build()
            .unwrap();
        let grid = line_grid(1.0, 5, 2);
        let field = Field::from_fn(&grid, fd::FieldSource::Analytic, |_, _| 0.0).unwrap();
        assert!(check_max_principle(&spec, &field, 1.0, &MaxPrincipleOptions::default()).is_err());
    }

    #[test]
    fn growth_of_heat_values_and_gradient() {
        let spec = catalog::heat_quadratic();
        let mc = McParams::new(4000, 1, 5).antithetic(true);
        let r = check_growth(
            &spec,
            &GrowthParams::new(vec![1.0, 2.0, 4.0, 8.0], 0.75, 0, mc),
            &seq(),
        )
        .unwrap();
        assert!(r.pass);
        assert!((1.7..=2.3).contains(&r.slope), "{}", r.slope);
        assert!(r.notes.iter().any(|n| n.contains("decade")));
        // closed-form oracle for the same sphere points
        let oracle: Vec<f64> = r
            .radii
            .iter()
            .map(|&x| closed_form::heat_quadratic(1.0, 0.25, x))
            .collect();
        for (s, o) in r.sup_values.iter().zip(&oracle) {
            assert!((s - o).abs() < 0.05 * o);
        }
        let g = check_growth(
            &spec,
            &GrowthParams::new(vec![1.0, 2.0, 4.0, 8.0], 0.75, 1, mc),
            &seq(),
        )
        .unwrap();
        assert!(g.pass && g.slope <= 2.3);
        assert!((g.slope - 1.0).abs() < 0.05, "{}", g.slope);
        assert_eq!(g.sharp_exponent, Some(2.0));
    }

    #[test]
    fn growth_of_constant_data_is_flat() {
        let spec = catalog::constant_data(2.0, 1.0);
        let mc = McParams::new(16, 1, 5);
        let r = check_growth(
            &spec,
            &GrowthParams::new(vec![1.0, 10.0, 100.0], 0.0, 0, mc),
            &seq(),
        )
        .unwrap();
        assert!(r.slope.abs() <= 1e-12);
        assert!(r.notes.is_empty());
        assert!(check_growth(
            &spec,
            &GrowthParams::new(vec![1.0, 1e5], 0.0, 0, mc),
            &seq()
        )
        .is_err());
        assert!(check_growth(
            &spec,
            &GrowthParams::new(vec![2.0, 1.0], 0.0, 0, mc),
            &seq()
        )
        .is_err());
    }

    #[test]
    fn sphere_points_have_the_radius() {
        for p in sphere(3, 2.5, 5, 9) {
            assert!((math::norm(&p) - 2.5).abs() < 1e-12);
        }
        assert_eq!(sphere(1, 1.0, 5, 9).len(), 2);
    }

    #[test]
    fn cutoff_is_c3_bump() {
        assert_eq!(cutoff(0.2), 1.0);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert!((cutoff(0.75) - 0.5).abs() < 1e-12);
        let h = 1e-3;
        for s in [0.5, 1.0] {
            // first derivative vanishes at both joins
            let d1 = (cutoff(s + h) - cutoff(s - h)) / (2.0 * h);
            assert!(d1.abs() < 1e-6, "{s}: {d1}");
        }
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff(0.5 + 0.005 * i as f64);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn bernstein_constant_data_is_squared_discount() {
        let spec = catalog::constant_data(2.0, 0.5);
        let grid = line_grid(3.0, 61, 10);
        let field =
            solve_with_exact_boundary(&spec, &grid, 0.5, |t, _| 2.0 * (-0.5 * (1.0 - t)).exp())
                .unwrap();
        let params = BernsteinParams {
            a: 0.01,
            radius: 2.5,
            center: vec![0.0],
            constant: 1.0,
        };
        let (v, c) = bernstein_functional(&field, &params).unwrap();
        assert!(c.pass);
        for k in 0..grid.n_slices() {
            let exact = 4.0 * (-(1.0 - grid.time(k))).exp();
            for val in v.slice(k) {
                assert!((val - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bernstein_with_zero_a_is_squared_field() {
        let spec = catalog::heat_tanh();
        let grid = line_grid(4.0, 81, 20);
        let field = solve_with_exact_boundary(&spec, &grid, 0.5, |_, x| x[0].tanh()).unwrap();
        let params = BernsteinParams {
            a: 0.0,
            radius: 3.5,
            center: vec![0.0],
            constant: 1.0,
        };
        let (v, c) = bernstein_functional(&field, &params).unwrap();
        for (a, b) in v.values.iter().zip(&field.values) {
            assert_eq!(*a, b * b);
        }
        assert!(c.pass);
    }

    #[test]
    fn bernstein_needs_room_for_stencils() {
        let spec = catalog::heat_tanh();
        let grid = line_grid(2.0, 41, 4);
        let field = solve_with_exact_boundary(&spec, &grid, 0.5, |_, x| x[0].tanh()).unwrap();
        let params = BernsteinParams {
            a: 0.01,
            radius: 2.0,
            center: vec![0.0],
            constant: 10.0,
        };
        assert!(matches!(
            bernstein_functional(&field, &params),
            Err(Error::MissingDerivative(_))
        ));
    }

    /// Oracle: the functional evaluated from closed-form derivatives of
    /// `u = e^{-tau} (x^2 + 2 tau)`.
    #[test]
    fn bernstein_matches_closed_form() {
        let spec = catalog::heat_quadratic();
        let grid = line_grid(4.0, 161, 200);
        let field = solve_with_exact_boundary(&spec, &grid, 0.5, |t, x| {
            closed_form::heat_quadratic(1.0, 1.0 - t, x[0])
        })
        .unwrap();
        let a = 0.01;
        let params = BernsteinParams {
            a,
            radius: 3.0,
            center: vec![0.0],
            constant: 10.0,
        };
        let (v, _) = bernstein_functional(&field, &params).unwrap();
        for k in [0usize, 100] {
            let tau = 1.0 - grid.time(k);
            let e = (-tau).exp();
            for i in (0..161).step_by(8) {
                let x = grid.point(i)[0];
                let eta = cutoff(x.abs() / 3.0);
                let u = e * (x * x + 2.0 * tau);
                let exact = u * u
                    + a * tau * eta.powi(2) * (2.0 * x * e).powi(2)
                    + (a * tau).powi(2) * eta.powi(4) * (2.0 * e).powi(2);
                assert!((v.get(k, i) - exact).abs() < 1e-4 * (1.0 + exact), "{x}");
            }
        }
    }

    #[test]
    fn transform_cross_check_on_weight_terminal() {
        let spec = catalog::heat(
            1.0,
            CoefficientField::parse("1 + x^2", 1)
                .unwrap()
                .with_analytic_gradient(),
            1,
        );
        // closed-form transformed solution on an exact boundary
        let tspec = spaces::transform_to_bounded(&spec, 1).unwrap();
        let grid = line_grid(4.0, 161, 40);
        let exact = |t: f64, x: &[f64]| {
            let tau = 1.0 - t;
            (-tau).exp() * (1.0 + x[0] * x[0] + 2.0 * tau) / (1.0 + x[0] * x[0])
        };
        let v = solve_with_exact_boundary(&tspec, &grid, 0.5, exact).unwrap();
        for i in fd::inner_half_nodes(&grid) {
            let x = grid.point(i);
            let p = spaces::weight(1, &x);
            assert!((v.get(0, i) * p - exact(0.0, &x) * p).abs() <= 1e-3);
        }
        let params = TransformParams::new(
            1,
            Region::cube(1, 4.0).unwrap(),
            vec![81],
            20,
            McParams::new(2000, 20, 3),
            McParams::new(4000, 1, 4).antithetic(true),
        );
        let c = transform_cross_check(&spec, &params, &seq()).unwrap();
        assert!(c.pass, "{c:?}");
        let bad = TransformParams {
            weight_q: 2,
            ..params
        };
        assert!(!transform_cross_check(&spec, &bad, &seq()).unwrap().pass);
    }

    #[test]
    fn schauder_ratio_is_homogeneous_and_vacuous_for_zero_data() {
        let spec = catalog::heat_quadratic();
        let params = SchauderParams::new(
            Region::cube(1, 6.0).unwrap(),
            vec![121],
            40,
            McParams::new(200, 1, 2),
        );
        for mode in [SchauderMode::Interior, SchauderMode::Optimal] {
            let a = schauder_ratio(&spec, &params, mode, &seq()).unwrap();
            let b = schauder_ratio(&spec.with_scaled_data(10.0), &params, mode, &seq()).unwrap();
            let (ra, rb) = (a.ratio.unwrap(), b.ratio.unwrap());
            assert!(((ra - rb) / ra).abs() <= 1e-10, "{ra} vs {rb}");
            assert!(ra > 0.0 && ra.is_finite());
        }
        let zero = spec.with_scaled_data(0.0);
        let c = check_schauder_ratio(&zero, &params, SchauderMode::Optimal, 1.0, &seq()).unwrap();
        assert!(c.pass);
        assert!(c.notes[0].contains("vacuous"));
    }

    #[test]
    fn smoothing_rejects_ladder_too_close_to_horizon() {
        let spec = catalog::smoothing(5.0);
        let p = SmoothingParams::new(vec![0.4, 0.005], 1, McParams::new(100, 1, 1));
        assert!(check_smoothing(&spec, &p, &seq()).is_err());
    }
}
