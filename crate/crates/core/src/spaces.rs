//! Polynomially weighted function spaces on finite sample clouds.
//!
//! With `P(x) = 1 + |x|^(2q)` the weighted norm of order `p` and Hölder
//! exponent `beta` is
//!
//! ```text
//! STANDARD:   sum_{|a| <= p} sup |D^a (f / P)| + sum_{|a| = p} [D^a (f / P)]_beta
//! TRIPLE_BAR: sum_{|a| <= p} sup |D^a f / P|   + sum_{|a| = p} [D^a f / P]_beta
//! ```
//!
//! Both are equivalent on all of `R^d`; here every sup and seminorm is taken
//! over an explicit [`Cloud`], whose descriptor travels with the result.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expr::{Expr, Var};
use crate::fd::Field;
use crate::math;
use crate::problem::{multi_indices, weight_expr, CoefficientField, ProblemSpec, Region};

/// Exhaustive pairwise seminorms are used up to this many samples.
pub const HOLDER_EXHAUSTIVE_LIMIT: usize = 10_000;

/// `P(x) = 1 + |x|^(2q)`, and `1` for `q = 0`.
pub fn weight(q: u32, x: &[f64]) -> f64 {
    if q == 0 {
        return 1.0;
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    1.0 + math::powi(r2, q as i32)
}

/// `n`-th derivative of `s -> s^q` at `s = r2`.
fn radial(q: u32, n: u32, r2: f64) -> f64 {
    if n > q {
        return 0.0;
    }
    let falling: f64 = (0..n).map(|k| (q - k) as f64).product();
    falling * math::powi(r2, (q - n) as i32)
}

/// Closed-form `D^a P(x)` for a multi-index given as an axis list of length
/// at most 3.
pub fn weight_derivative(q: u32, x: &[f64], axes: &[usize]) -> Result<f64> {
    if axes.iter().any(|&a| a >= x.len()) {
        return Err(Error::invalid("derivative axis exceeds the dimension"));
    }
    if q == 0 {
        return Ok(if axes.is_empty() { 1.0 } else { 0.0 });
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let g = |n| radial(q, n, r2);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    Ok(match *axes {
        [] => weight(q, x),
        [i] => 2.0 * g(1) * x[i],
        [i, j] => 4.0 * g(2) * x[i] * x[j] + 2.0 * g(1) * delta(i, j),
        [i, j, k] => {
            8.0 * g(3) * x[i] * x[j] * x[k]
                + 4.0 * g(2) * (delta(i, j) * x[k] + delta(i, k) * x[j] + delta(j, k) * x[i])
        }
        _ => {
            return Err(Error::invalid(
                "weight derivatives are available up to order 3",
            ))
        }
    })
}

/// `[f]_beta = max |f(x) - f(y)| / |x - y|^beta` over distinct pairs.
///
/// Above [`HOLDER_EXHAUSTIVE_LIMIT`] samples the pairs are taken over the
/// strided subsample `0, s, 2s, ...` with `s = ceil(n / limit)`.
pub fn holder_seminorm(points: &[Vec<f64>], values: &[f64], beta: f64) -> Result<f64> {
    holder_seminorm_with(points, values, beta, &Exec::sequential())
}

/// [`holder_seminorm`] with rows of the pair triangle spread over `exec`.
/// The maximum is exact, so the result does not depend on the split.
pub fn holder_seminorm_with(
    points: &[Vec<f64>],
    values: &[f64],
    beta: f64,
    exec: &Exec,
) -> Result<f64> {
    if points.len() != values.len() {
        return Err(Error::invalid("points and values differ in length"));
    }
    if points.len() < 2 {
        return Err(Error::invalid("the seminorm needs at least two samples"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("beta = {beta} is outside (0, 1]")));
    }
    let stride = points.len().div_ceil(HOLDER_EXHAUSTIVE_LIMIT);
    let idx: Vec<usize> = (0..points.len()).step_by(stride).collect();
    let rows = exec.map(idx.len(), |a| {
        let i = idx[a];
        let mut best = 0.0f64;
        for &j in &idx[a + 1..] {
            let r = math::dist(&points[i], &points[j]);
            if r == 0.0 {
                return Err(Error::DuplicatePoint(i, j));
            }
            let q = (values[i] - values[j]).abs() / math::powf(r, beta);
            if q > best {
                best = q;
            }
        }
        Ok(best)
    });
    let mut best = 0.0f64;
    for r in rows {
        best = best.max(r?);
    }
    Ok(best)
}

/// A finite sample set standing in for `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    points: Vec<Vec<f64>>,
    descriptor: String,
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl Cloud {
    pub fn from_points(points: Vec<Vec<f64>>, descriptor: &str) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid(
                "cloud points must share a nonzero dimension",
            ));
        }
        Ok(Cloud {
            points,
            descriptor: descriptor.into(),
        })
    }

    /// Tensor grid with `per_axis` equispaced points per axis, corners
    /// included.
    pub fn tensor(region: &Region, per_axis: usize) -> Result<Self> {
        Self::tensor_with_fill(region, per_axis, 0)
    }

    /// Tensor grid plus `fill` Halton points (indices `1..=fill`, bases the
    /// first `d` primes); fill points equal to an earlier point are dropped.
    pub fn tensor_with_fill(region: &Region, per_axis: usize, fill: usize) -> Result<Self> {
        let d = region.dim();
        let mut points = Vec::new();
        if per_axis > 0 {
            if per_axis < 2 {
                return Err(Error::invalid(
                    "a tensor grid needs at least 2 points per axis",
                ));
            }
            let total = per_axis
                .checked_pow(d as u32)
                .filter(|n| *n <= 1 << 24)
                .ok_or_else(|| Error::invalid("tensor cloud is too large"))?;
            for k in 0..total {
                let mut rest = k;
                let p: Vec<f64> = (0..d)
                    .map(|a| {
                        let j = rest % per_axis;
                        rest /= per_axis;
                        let s = j as f64 / (per_axis - 1) as f64;
                        region.lower[a] + s * (region.upper[a] - region.lower[a])
                    })
                    .collect();
                points.push(p);
            }
        }
        let bases = primes(d);
        let mut seen: BTreeSet<Vec<u64>> = points
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect();
        for i in 1..=fill as u64 {
            let p: Vec<f64> = (0..d)
                .map(|a| {
                    let s = radical_inverse(i, bases[a]);
                    region.lower[a] + s * (region.upper[a] - region.lower[a])
                })
                .collect();
            if seen.insert(p.iter().map(|v| v.to_bits()).collect()) {
                points.push(p);
            }
        }
        if points.is_empty() {
            return Err(Error::invalid("empty cloud"));
        }
        let descriptor = format!(
            "tensor {per_axis}^{d} + halton {fill} on {}",
            region_descriptor(region)
        );
        Ok(Cloud { points, descriptor })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }
}

pub(crate) fn region_descriptor(region: &Region) -> String {
    let axes: Vec<String> = region
        .lower
        .iter()
        .zip(&region.upper)
        .map(|(l, u)| format!("[{l}, {u}]"))
        .collect();
    axes.join("x")
}

/// Values of `f` and its partial derivatives on a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSamples {
    cloud: Cloud,
    data: Vec<(Vec<usize>, Vec<f64>)>,
}

fn sorted(axes: &[usize]) -> Vec<usize> {
    let mut a = axes.to_vec();
    a.sort_unstable();
    a
}

impl DerivativeSamples {
    pub fn new(cloud: Cloud) -> Self {
        DerivativeSamples {
            cloud,
            data: Vec::new(),
        }
    }

    /// Adds `D^axes f` at every cloud point; axis order is irrelevant.
    pub fn insert(&mut self, axes: &[usize], values: Vec<f64>) -> Result<()> {
        if values.len() != self.cloud.len() {
            return Err(Error::invalid(
                "derivative data does not match the cloud size",
            ));
        }
        if axes.iter().any(|&a| a >= self.cloud.dim()) {
            return Err(Error::invalid("derivative axis exceeds the dimension"));
        }
        let key = sorted(axes);
        self.data.retain(|(k, _)| *k != key);
        self.data.push((key, values));
        Ok(())
    }

    pub fn values(&self, axes: &[usize]) -> Option<&[f64]> {
        let key = sorted(axes);
        self.data
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_slice())
    }

    fn require(&self, axes: &[usize]) -> Result<&[f64]> {
        self.values(axes)
            .ok_or_else(|| Error::MissingDerivative(format!("D{axes:?}")))
    }

    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    /// Symbolic derivatives of `f(t, .)` up to `order`.
    pub fn from_field_expr(
        f: &CoefficientField,
        t: f64,
        cloud: Cloud,
        order: usize,
    ) -> Result<Self> {
        let d = cloud.dim();
        if f.dim() != d {
            return Err(Error::invalid("field dimension does not match the cloud"));
        }
        let mut s = DerivativeSamples::new(cloud);
        for k in 0..=order {
            for axes in multi_indices(d, k) {
                let e = f.partial_expr(&axes);
                let vals = eval_on(&e, t, s.cloud.points())?;
                s.insert(&axes, vals)?;
            }
        }
        Ok(s)
    }

    /// Central-difference derivatives of a grid solution up to `order` at the
    /// given nodes of one time slice.
    pub fn from_grid_field(
        field: &Field,
        slice: usize,
        nodes: &[usize],
        order: usize,
    ) -> Result<Self> {
        let g = &field.grid;
        let points: Vec<Vec<f64>> = nodes.iter().map(|&n| g.point(n)).collect();
        let cloud = Cloud::from_points(
            points,
            &format!(
                "{} grid nodes of {} at t = {}",
                nodes.len(),
                crate::fd::grid_descriptor(g),
                g.time(slice)
            ),
        )?;
        let mut s = DerivativeSamples::new(cloud);
        for k in 0..=order {
            for axes in multi_indices(g.dim(), k) {
                let mut vals = Vec::with_capacity(nodes.len());
                for &n in nodes {
                    let v = if axes.is_empty() {
                        Some(field.get(slice, n))
                    } else {
                        field.derivative(slice, n, &axes)
                    };
                    vals.push(v.ok_or_else(|| {
                        Error::MissingDerivative(format!(
                            "D{axes:?} at node {n}: stencil leaves the grid"
                        ))
                    })?);
                }
                s.insert(&axes, vals)?;
            }
        }
        Ok(s)
    }
}

fn eval_on(e: &Expr, t: f64, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|x| {
            e.eval(t, x).map_err(|kind| Error::Domain {
                kind,
                what: "derivative sample".into(),
                t,
                x: x.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormVariant {
    /// Derivatives of `f / P`.
    Standard,
    /// Derivatives of `f`, divided by `P`.
    TripleBar,
}

impl NormVariant {
    pub fn name(self) -> &'static str {
        match self {
            NormVariant::Standard => "standard",
            NormVariant::TripleBar => "triple-bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Sup,
    Seminorm,
}

/// Sum over all multi-indices of one order of the sup (or seminorm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTerm {
    pub kind: TermKind,
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNormResult {
    pub value: f64,
    pub terms: Vec<NormTerm>,
    pub variant: NormVariant,
    pub q: u32,
    pub p: usize,
    pub beta: Option<f64>,
    pub cloud: String,
}

/// Weighted norm of order `p` (at most 2 for [`NormVariant::Standard`]),
/// with the top-order Hölder seminorms when `beta` is given.
pub fn weighted_norm(
    samples: &DerivativeSamples,
    q: u32,
    p: usize,
    beta: Option<f64>,
    variant: NormVariant,
) -> Result<WeightedNormResult> {
    let cloud = samples.cloud();
    let d = cloud.dim();
    let n = cloud.len();
    if variant == NormVariant::Standard && p > 2 {
        return Err(Error::invalid("the standard variant supports p <= 2"));
    }
    let pw: Vec<f64> = cloud.points().iter().map(|x| weight(q, x)).collect();
    let mut weighted: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for k in 0..=p {
        for axes in multi_indices(d, k) {
            let f = samples.require(&axes)?;
            let vals: Vec<f64> = match variant {
                NormVariant::TripleBar => f.iter().zip(&pw).map(|(f, w)| f / w).collect(),
                NormVariant::Standard => quotient(&weighted, &axes, f, &pw, q, cloud.points())?,
            };
            weighted.push((axes, vals));
        }
    }
    let mut terms = Vec::new();
    for k in 0..=p {
        let sup: f64 = weighted
            .iter()
            .filter(|(a, _)| a.len() == k)
            .map(|(_, v)| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .sum();
        terms.push(NormTerm {
            kind: TermKind::Sup,
            order: k,
            value: sup,
        });
    }
    if let Some(beta) = beta {
        let mut semi = 0.0;
        if n >= 2 {
            for (_, v) in weighted.iter().filter(|(a, _)| a.len() == p) {
                semi += holder_seminorm(cloud.points(), v, beta)?;
            }
        }
        terms.push(NormTerm {
            kind: TermKind::Seminorm,
            order: p,
            value: semi,
        });
    }
    Ok(WeightedNormResult {
        value: terms.iter().map(|t| t.value).sum(),
        terms,
        variant,
        q,
        p,
        beta,
        cloud: cloud.descriptor().into(),
    })
}

/// `D^axes (f / P)` from the lower-order quotients already in `done`:
/// `g_i = (f_i - g P_i) / P`, `g_ij = (f_ij - g_i P_j - g_j P_i - g P_ij) / P`.
fn quotient(
    done: &[(Vec<usize>, Vec<f64>)],
    axes: &[usize],
    f: &[f64],
    pw: &[f64],
    q: u32,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let lookup = |a: &[usize]| -> &[f64] {
        let key = sorted(a);
        &done
            .iter()
            .find(|(k, _)| *k == key)
            .expect("lower orders first")
            .1
    };
    let mut out = Vec::with_capacity(f.len());
    match *axes {
        [] => out.extend(f.iter().zip(pw).map(|(f, w)| f / w)),
        [i] => {
            let g = lookup(&[]);
            for (n, x) in points.iter().enumerate() {
                out.push((f[n] - g[n] * weight_derivative(q, x, &[i])?) / pw[n]);
            }
        }
        [i, j] => {
            let g = lookup(&[]);
            let gi = lookup(&[i]);
            let gj = lookup(&[j]);
            for (n, x) in points.iter().enumerate() {
                let v = f[n]
                    - gi[n] * weight_derivative(q, x, &[j])?
                    - gj[n] * weight_derivative(q, x, &[i])?
                    - g[n] * weight_derivative(q, x, &[i, j])?;
                out.push(v / pw[n]);
            }
        }
        _ => unreachable!("order checked by caller"),
    }
    Ok(out)
}

/// `max(a / b, b / a)`; `1` when both vanish, infinite when only one does.
pub fn equivalence_ratio(a: f64, b: f64) -> f64 {
    match (a == 0.0, b == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => (a / b).max(b / a),
    }
}

/// Box on which the lower bound of the transformed potential is sampled.
pub const TRANSFORM_SAMPLE_RADIUS: f64 = 20.0;

/// Rewrites the problem for `v = u / P`: with `u = v P`,
///
/// ```text
/// b~_i = b_i + 2 sum_j a_ij P^-1 D^j P
/// c~   = c - sum_ij a_ij P^-1 D^ij P - sum_i b_i P^-1 D^i P
/// f~   = f / P,   h~ = h / P,   sigma unchanged,
/// ```
///
/// and `v` solves the transformed problem. The new `c0` is the minimum of
/// `c~` sampled on `[-20, 20]^d` (tensor grid plus Halton fill, at `t0`,
/// the midpoint and `T`). The transformed spec has `q = 0`. Any γ-shift of
/// `spec` is carried over unchanged, so shifting and transforming commute.
pub fn transform_to_bounded(spec: &ProblemSpec, q: u32) -> Result<ProblemSpec> {
    if q == 0 {
        return Err(Error::invalid(
            "q = 0 is the identity transform; use the original problem",
        ));
    }
    let d = spec.dim();
    let m = spec.noise_dim();
    let p = weight_expr(q, d);
    let dp: Vec<Expr> = (0..d)
        .map(|i| Expr::div(p.derivative(Var::Space(i)), p.clone()))
        .collect();
    let sigma = spec.diffusion_fields();
    let a = |i: usize, j: usize| {
        let terms = (0..m).map(|k| {
            Expr::mul(
                sigma[i * m + k].expr().clone(),
                sigma[j * m + k].expr().clone(),
            )
        });
        Expr::mul(Expr::Const(0.5), Expr::sum(terms))
    };
    let analytic = spec
        .drift_fields()
        .iter()
        .all(|f| f.has_analytic_gradient())
        && sigma.iter().all(|f| f.has_analytic_gradient())
        && spec.potential_field().has_analytic_gradient()
        && spec.source_field().has_analytic_gradient()
        && spec.terminal_field().has_analytic_gradient();
    let field = |e: Expr| -> Result<CoefficientField> {
        let f = CoefficientField::from_expr(e, d)?;
        Ok(if analytic {
            f.with_analytic_gradient()
        } else {
            f
        })
    };

    let mut drift = Vec::with_capacity(d);
    for (i, b) in spec.drift_fields().iter().enumerate() {
        let corr = Expr::sum((0..d).map(|j| Expr::mul(a(i, j), dp[j].clone())));
        drift.push(field(Expr::add(
            b.expr().clone(),
            Expr::mul(Expr::Const(2.0), corr),
        ))?);
    }
    let mut second = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let dij = Expr::div(
                p.derivative(Var::Space(i)).derivative(Var::Space(j)),
                p.clone(),
            );
            second.push(Expr::mul(a(i, j), dij));
        }
    }
    let first = (0..d).map(|i| Expr::mul(spec.drift_fields()[i].expr().clone(), dp[i].clone()));
    let c = Expr::sub(
        Expr::sub(spec.potential_field().expr().clone(), Expr::sum(second)),
        Expr::sum(first),
    );
    let potential = field(c)?;
    let source = field(Expr::div(spec.source_field().expr().clone(), p.clone()))?;
    let terminal = field(Expr::div(spec.terminal_field().expr().clone(), p.clone()))?;

    let region = Region::cube(d, TRANSFORM_SAMPLE_RADIUS)?;
    let per_axis = match d {
        1 => 4001,
        2 => 61,
        3 => 15,
        _ => 5,
    };
    let cloud = Cloud::tensor_with_fill(&region, per_axis, 1000)?;
    let (t0, t1) = (spec.t0(), spec.horizon());
    let mut c0 = f64::INFINITY;
    for t in [t0, 0.5 * (t0 + t1), t1] {
        for x in cloud.points() {
            let v = potential.eval(t, x).map_err(|kind| Error::Domain {
                kind,
                what: "transformed potential".into(),
                t,
                x: x.clone(),
            })?;
            c0 = c0.min(v);
        }
    }
    Ok(spec
        .replace_fields(drift, potential, source, terminal, c0, 0)
        .with_name(&format!("{}/P{q}", spec.name())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{catalog, shift_zeroth_order, validate_assumptions, Profile};
    use crate::rng::UniformStream;
    use proptest::prelude::*;

    fn pts1(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(1, &[3.0, 4.0]), 26.0);
        assert_eq!(weight(2, &[0.0, 0.0]), 1.0);
        assert_eq!(weight(0, &[7.0, -2.0]), 1.0);
    }

    #[test]
    fn weight_matches_expression() {
        let mut rng = UniformStream::new(3);
        for q in 0..4 {
            let e = weight_expr(q, 2);
            for _ in 0..50 {
                let x = [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)];
                let w = weight(q, &x);
                assert!((e.eval(0.0, &x).unwrap() - w).abs() <= 1e-12 * w);
            }
        }
    }

    #[test]
    fn weight_derivatives_match_symbolic() {
        let mut rng = UniformStream::new(4);
        for q in 1..4u32 {
            let e = weight_expr(q, 3);
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.uniform(-3.0, 3.0)).collect();
                for k in 1..=3 {
                    for axes in multi_indices(3, k) {
                        let sym = axes
                            .iter()
                            .fold(e.clone(), |e, &i| e.derivative(Var::Space(i)))
                            .eval(0.0, &x)
                            .unwrap();
                        let closed = weight_derivative(q, &x, &axes).unwrap();
                        assert!(
                            (sym - closed).abs() <= 1e-9 * (1.0 + sym.abs()),
                            "q={q} axes={axes:?}: {sym} vs {closed}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn weight_second_derivative_at_origin() {
        assert_eq!(weight_derivative(1, &[0.0], &[0, 0]).unwrap(), 2.0);
        assert_eq!(weight_derivative(1, &[0.0, 0.0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(weight_derivative(2, &[0.0], &[0, 0]).unwrap(), 0.0);
        assert!(weight_derivative(1, &[0.0], &[0, 0, 0, 0]).is_err());
    }

    /// Frozen constant for `|D^a P / P| <= C (1 + |x|^2)^{-|a|/2}`, valid for
    /// `q <= 3` and `|a| <= 3`.
    const WEIGHT_RATIO_CONSTANT: f64 = 200.0;

    #[test]
    fn weight_derivative_ratio_decays() {
        let region = Region::cube(2, 50.0).unwrap();
        let cloud = Cloud::tensor_with_fill(&region, 41, 2000).unwrap();
        let mut worst = 0.0f64;
        for q in 1..=3 {
            for x in cloud.points() {
                let p = weight(q, x);
                let s = 1.0 + x[0] * x[0] + x[1] * x[1];
                for k in 1..=3 {
                    for axes in multi_indices(2, k) {
                        let r = weight_derivative(q, x, &axes).unwrap().abs() / p;
                        worst = worst.max(r * math::powf(s, k as f64 / 2.0));
                    }
                }
            }
        }
        assert!(worst <= WEIGHT_RATIO_CONSTANT, "worst = {worst}");
        assert!(
            worst >= WEIGHT_RATIO_CONSTANT / 2.0,
            "constant is loose: {worst}"
        );
    }

    #[test]
    fn holder_examples() {
        let xs = pts1(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(holder_seminorm(&xs, &[2.0; 5], 0.5).unwrap(), 0.0);
        let f: Vec<f64> = xs.iter().map(|p| p[0]).collect();
        assert_eq!(holder_seminorm(&xs, &f, 0.5).unwrap(), 1.0);
        let xs = pts1(&[0.0, 0.01, 0.25, 1.0]);
        let f: Vec<f64> = xs.iter().map(|p| p[0].sqrt()).collect();
        assert!((holder_seminorm(&xs, &f, 0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn holder_rejects_duplicates_and_bad_input() {
        let xs = pts1(&[0.0, 1.0, 0.0]);
        assert!(matches!(
            holder_seminorm(&xs, &[1.0, 2.0, 3.0], 0.5),
            Err(Error::DuplicatePoint(0, 2))
        ));
        assert!(holder_seminorm(&pts1(&[0.0]), &[1.0], 0.5).is_err());
        assert!(holder_seminorm(&pts1(&[0.0, 1.0]), &[1.0, 2.0], 0.0).is_err());
    }

    fn brute_force(points: &[Vec<f64>], values: &[f64], beta: f64) -> f64 {
        let mut best = 0.0f64;
        for i in 0..points.len() {
            for j in 0..points.len() {
                if i != j {
                    let r: f64 = points[i]
                        .iter()
                        .zip(&points[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    best = best.max((values[i] - values[j]).abs() / math::powf(r, beta));
                }
            }
        }
        best
    }

    #[test]
    fn holder_parallel_equals_sequential() {
        let region = Region::cube(2, 1.0).unwrap();
        let cloud = Cloud::tensor_with_fill(&region, 10, 300).unwrap();
        let v: Vec<f64> = cloud
            .points()
            .iter()
            .map(|x| (3.0 * x[0]).sin() * x[1])
            .collect();
        let a = holder_seminorm(cloud.points(), &v, 0.3).unwrap();
        let b = holder_seminorm_with(cloud.points(), &v, 0.3, &Exec::with_workers(4)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a, brute_force(cloud.points(), &v, 0.3));
    }

    #[test]
    fn clouds_have_distinct_points() {
        let region = Region::cube(1, 2.0).unwrap();
        let c = Cloud::tensor_with_fill(&region, 5, 20).unwrap();
        let mut seen = BTreeSet::new();
        for p in c.points() {
            assert!(seen.insert(p[0].to_bits()));
        }
        assert!(c.len() < 25);
        assert!(c.descriptor().contains("halton 20"));
    }

    fn samples_of(f: &CoefficientField, cloud: &Cloud, p: usize) -> DerivativeSamples {
        DerivativeSamples::from_field_expr(f, 0.0, cloud.clone(), p).unwrap()
    }

    #[test]
    fn norm_of_weight_itself() {
        let region = Region::cube(1, 10.0).unwrap();
        let cloud = Cloud::tensor_with_fill(&region, 41, 100).unwrap();
        let f = CoefficientField::parse("1 + x^2", 1)
            .unwrap()
            .with_analytic_gradient();
        let r = weighted_norm(
            &samples_of(&f, &cloud, 0),
            1,
            0,
            Some(0.5),
            NormVariant::Standard,
        )
        .unwrap();
        assert_eq!(r.terms[0].value, 1.0);
        assert_eq!(r.terms[1].kind, TermKind::Seminorm);
        assert_eq!(r.terms[1].value, 0.0);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn norm_of_zero() {
        let region = Region::cube(2, 3.0).unwrap();
        let cloud = Cloud::tensor_with_fill(&region, 7, 30).unwrap();
        let f = CoefficientField::zero(2);
        for v in [NormVariant::Standard, NormVariant::TripleBar] {
            let r = weighted_norm(&samples_of(&f, &cloud, 2), 1, 2, Some(0.5), v).unwrap();
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn missing_derivative_is_reported() {
        let region = Region::cube(1, 1.0).unwrap();
        let cloud = Cloud::tensor(&region, 5).unwrap();
        let f = CoefficientField::parse("x", 1).unwrap();
        let s = samples_of(&f, &cloud, 0);
        assert!(matches!(
            weighted_norm(&s, 1, 1, None, NormVariant::TripleBar),
            Err(Error::MissingDerivative(_))
        ));
        assert!(weighted_norm(&s, 1, 3, None, NormVariant::Standard).is_err());
    }

    #[test]
    fn quadratic_variants_are_equivalent() {
        let region = Region::cube(1, 10.0).unwrap();
        let cloud = Cloud::tensor_with_fill(&region, 201, 200).unwrap();
        let f = CoefficientField::parse("x^2", 1)
            .unwrap()
            .with_analytic_gradient();
        let s = samples_of(&f, &cloud, 0);
        let a = weighted_norm(&s, 1, 0, Some(0.5), NormVariant::Standard).unwrap();
        let b = weighted_norm(&s, 1, 0, Some(0.5), NormVariant::TripleBar).unwrap();
        // for p = 0 both variants coincide
        assert_eq!(a.value, b.value);
        assert!(equivalence_ratio(a.value, b.value) <= 10.0);
    }

    /// Brute force `D(f / P)` for `f = x^3` against the quotient rule.
    #[test]
    fn standard_variant_differentiates_the_quotient() {
        let region = Region::cube(1, 4.0).unwrap();
        let cloud = Cloud::tensor(&region, 33).unwrap();
        let f = CoefficientField::parse("x^3", 1)
            .unwrap()
            .with_analytic_gradient();
        let s = samples_of(&f, &cloud, 2);
        let r = weighted_norm(&s, 1, 2, None, NormVariant::Standard).unwrap();
        let g = CoefficientField::parse("x^3 / (1 + x^2)", 1).unwrap();
        let mut sup = [0.0f64; 3];
        for x in cloud.points() {
            for (k, axes) in [vec![], vec![0], vec![0, 0]].iter().enumerate() {
                let v = g.partial_expr(axes).eval(0.0, x).unwrap();
                sup[k] = sup[k].max(v.abs());
            }
        }
        for (term, s) in r.terms.iter().zip(sup) {
            assert!((term.value - s).abs() < 1e-12 * (1.0 + s));
        }
    }

    #[test]
    fn grid_field_samples_use_stencils() {
        use crate::fd::{FieldSource, Grid};
        let grid = Grid::new(Region::cube(1, 1.0).unwrap(), vec![21], 0.0, 1.0, 2).unwrap();
        let field = Field::from_fn(&grid, FieldSource::Analytic, |_, x| x[0] * x[0]).unwrap();
        let nodes: Vec<usize> = (1..20).collect();
        let s = DerivativeSamples::from_grid_field(&field, 0, &nodes, 2).unwrap();
        for v in s.values(&[0, 0]).unwrap() {
            assert!((v - 2.0).abs() < 1e-10);
        }
        assert!(DerivativeSamples::from_grid_field(&field, 0, &[0], 1).is_err());
    }

    #[test]
    fn transform_of_heat_family() {
        let spec = catalog::heat_quadratic();
        let t = transform_to_bounded(&spec, 1).unwrap();
        assert_eq!(t.q(), 0);
        let v = t.evaluate_coefficients(0.3, &[0.0]).unwrap();
        // a = 1, b = 0, P''(0) / P(0) = 2
        assert_eq!(v.b[0], 0.0);
        assert!((v.c - (1.0 - 2.0)).abs() < 1e-15);
        assert!((t.c0() - (-1.0)).abs() < 1e-12);
        for x in [-3.0, 0.5, 7.0] {
            let p = 1.0 + x * x;
            let v = t.evaluate_coefficients(0.0, &[x]).unwrap();
            assert!((v.b[0] - 4.0 * x / p).abs() < 1e-14);
            assert!((v.c - (1.0 - 2.0 / p)).abs() < 1e-14);
            assert!((t.terminal(&[x]).unwrap() - x * x / p).abs() < 1e-15);
        }
        assert!(transform_to_bounded(&spec, 0).is_err());
    }

    #[test]
    fn transform_of_weight_terminal_is_one() {
        let spec = catalog::heat(
            1.0,
            CoefficientField::parse("1 + x^2", 1)
                .unwrap()
                .with_analytic_gradient(),
            1,
        );
        let t = transform_to_bounded(&spec, 1).unwrap();
        for x in [-5.0, -1.0, 0.0, 2.5, 30.0] {
            assert!((t.terminal(&[x]).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    /// Plugging `u = v P` into the generator: for any smooth `v` the
    /// transformed operator applied to `v` equals `P^-1` times the original
    /// operator applied to `v P`.
    #[test]
    fn transformed_generator_matches_conjugation() {
        let spec = catalog::ou_2d();
        let t = transform_to_bounded(&spec, 1).unwrap();
        let v = CoefficientField::parse("sin(x1) * cos(0.5 * x2) + 0.3 * x1", 2)
            .unwrap()
            .with_analytic_gradient();
        let p = weight_expr(1, 2);
        let u = CoefficientField::from_expr(Expr::mul(v.expr().clone(), p.clone()), 2)
            .unwrap()
            .with_analytic_gradient();
        let gen = |s: &ProblemSpec, f: &CoefficientField, x: &[f64]| {
            let co = s.evaluate_coefficients(0.2, x).unwrap();
            let mut r = -co.c * f.eval(0.2, x).unwrap();
            for i in 0..2 {
                r += co.b[i] * f.partial_expr(&[i]).eval(0.2, x).unwrap();
                for j in 0..2 {
                    r += co.a[i * 2 + j] * f.partial_expr(&[i, j]).eval(0.2, x).unwrap();
                }
            }
            r
        };
        let mut rng = UniformStream::new(9);
        for _ in 0..30 {
            let x = [rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)];
            let lhs = gen(&t, &v, &x);
            let rhs = gen(&spec, &u, &x) / p.eval(0.2, &x).unwrap();
            assert!(
                (lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn transformed_heat_passes_basic_assumptions() {
        let t = transform_to_bounded(&catalog::heat_quadratic(), 1).unwrap();
        let region = Region::cube(1, 6.0).unwrap();
        let r = validate_assumptions(&t, &region, 400, Profile::Basic, 1).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn transform_commutes_with_shift() {
        let spec = catalog::ou_2d();
        let a = transform_to_bounded(&shift_zeroth_order(&spec, 0.7), 1).unwrap();
        let b = shift_zeroth_order(&transform_to_bounded(&spec, 1).unwrap(), 0.7);
        assert_eq!(a.c0().to_bits(), b.c0().to_bits());
        let mut rng = UniformStream::new(5);
        for _ in 0..100 {
            let t = rng.uniform(0.0, 1.0);
            let x = [rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)];
            assert_eq!(
                a.evaluate_coefficients(t, &x).unwrap(),
                b.evaluate_coefficients(t, &x).unwrap()
            );
            assert_eq!(
                a.terminal(&x).unwrap().to_bits(),
                b.terminal(&x).unwrap().to_bits()
            );
        }
    }

    proptest! {
        #[test]
        fn weight_even_monotone(q in 0u32..4, x in -50.0f64..50.0, y in -50.0f64..50.0) {
            prop_assert_eq!(weight(q, &[x, y]), weight(q, &[-x, -y]));
            prop_assert!(weight(q, &[x, y]) >= 1.0);
            let (s, l) = if x.abs() <= y.abs() { (x, y) } else { (y, x) };
            prop_assert!(weight(q, &[s]) <= weight(q, &[l]));
        }

        #[test]
        fn holder_homogeneous_and_monotone(
            xs in proptest::collection::btree_set(-1000i32..1000, 3..40),
            seed in 0u64..1000,
            lambda in -20.0f64..20.0,
            beta in 0.05f64..1.0,
        ) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&i| vec![i as f64 / 100.0]).collect();
            let mut rng = UniformStream::new(seed);
            let vals: Vec<f64> = pts.iter().map(|_| rng.uniform(-1.0, 1.0)).collect();
            let base = holder_seminorm(&pts, &vals, beta).unwrap();
            prop_assert_eq!(base, brute_force(&pts, &vals, beta));
            let scaled: Vec<f64> = vals.iter().map(|v| lambda * v).collect();
            let s = holder_seminorm(&pts, &scaled, beta).unwrap();
            prop_assert!((s - lambda.abs() * base).abs() <= 1e-12 * (1.0 + s));
            let sub = holder_seminorm(&pts[..pts.len() - 1], &vals[..vals.len() - 1], beta).unwrap();
            prop_assert!(sub <= base);
        }

        #[test]
        fn variants_vanish_together(amp in prop_oneof![Just(0.0), -5.0f64..5.0], k in 0.1f64..3.0, q in 1u32..3) {
            let region = Region::cube(1, 5.0).unwrap();
            let cloud = Cloud::tensor_with_fill(&region, 21, 20).unwrap();
            let f = CoefficientField::parse(&format!("({amp}) * sin(({k}) * x) * (1 + x^2)"), 1)
                .unwrap()
                .with_analytic_gradient();
            let s = samples_of(&f, &cloud, 2);
            let a = weighted_norm(&s, q, 2, Some(0.5), NormVariant::Standard).unwrap();
            let b = weighted_norm(&s, q, 2, Some(0.5), NormVariant::TripleBar).unwrap();
            prop_assert_eq!(a.value == 0.0, b.value == 0.0);
            for r in [&a, &b] {
                for t in &r.terms {
                    prop_assert!(r.value >= t.value);
                }
            }
        }
    }
}
