//! Feynman-Kac estimates of `u(t, x)` and of its spatial gradient.
//!
//! Per path the value functional is
//!
//! ```text
//! h(X_N) e^{-I_N} + sum_k w_k f(s_k, X_k) e^{-I_k},   I_k = int_t^{s_k} c(r, X_r) dr
//! ```
//!
//! and the gradient is the pathwise derivative of the same discrete
//! functional with respect to the start point:
//!
//! ```text
//!   e^{-I_N} grad h(X_N)^T J_N  -  h(X_N) e^{-I_N} K_N
//! + sum_k w_k e^{-I_k} (grad f(s_k, X_k)^T J_k - f(s_k, X_k) K_k),
//!   K_k = int_t^{s_k} grad c(r, X_r)^T J_r dr.
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fd::{Field, FieldSource, Grid};
use crate::math;
use crate::problem::ProblemSpec;
use crate::rng::derive_seed;
use crate::sde::{self, check_params, Kernel, Node, PathBatch, Visitor, PATH_CHUNK};

/// Time quadrature for the discount and running-source integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    LeftRectangle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Requires an even `n_paths`.
    pub antithetic: bool,
    pub quadrature: Quadrature,
    /// When set, `n_steps` is the count for the full horizon `[t0, T]` and
    /// later start times use proportionally fewer steps (at least one).
    pub scale_steps_with_horizon: bool,
}

impl McParams {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        McParams {
            n_paths,
            n_steps,
            seed,
            antithetic: false,
            quadrature: Quadrature::Trapezoid,
            scale_steps_with_horizon: false,
        }
    }

    pub fn antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    /// Step count used for a path started at `t`.
    pub fn steps_for(&self, spec: &ProblemSpec, t: f64) -> usize {
        if !self.scale_steps_with_horizon {
            return self.n_steps;
        }
        let full = spec.horizon() - spec.t0();
        let frac = (spec.horizon() - t) / full;
        let n = libm::ceil(self.n_steps as f64 * frac - 1e-9);
        (n as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Value,
    Gradient,
}

/// Monte Carlo estimate with standard errors of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub kind: EstimateKind,
}

impl Estimate {
    /// First component; the value for [`EstimateKind::Value`].
    pub fn value(&self) -> f64 {
        self.mean[0]
    }

    pub fn se(&self) -> f64 {
        self.stderr[0]
    }
}

#[inline]
fn weight(quadrature: Quadrature, k: usize, n: usize, dt: f64) -> f64 {
    match quadrature {
        Quadrature::Trapezoid => {
            if k == 0 || k == n {
                0.5 * dt
            } else {
                dt
            }
        }
        Quadrature::LeftRectangle => {
            if k < n {
                dt
            } else {
                0.0
            }
        }
    }
}

struct ValueAcc<'a> {
    spec: &'a ProblemSpec,
    n: usize,
    dt: f64,
    quadrature: Quadrature,
    has_source: bool,
    total: f64,
}

impl<'a> ValueAcc<'a> {
    fn new(spec: &'a ProblemSpec, n: usize, dt: f64, quadrature: Quadrature) -> Self {
        ValueAcc {
            spec,
            n,
            dt,
            quadrature,
            has_source: !spec.source_is_zero(),
            total: 0.0,
        }
    }
}

impl Visitor for ValueAcc<'_> {
    fn visit(&mut self, node: &Node<'_>) -> Result<()> {
        let disc = math::exp(-node.discount);
        if self.has_source {
            let w = weight(self.quadrature, node.k, self.n, self.dt);
            if w != 0.0 {
                self.total += w * self.spec.source(node.s, node.x)? * disc;
            }
        }
        if node.k == self.n {
            self.total += self.spec.terminal(node.x)? * disc;
        }
        Ok(())
    }
}

struct GradientAcc<'a> {
    spec: &'a ProblemSpec,
    n: usize,
    dt: f64,
    quadrature: Quadrature,
    has_source: bool,
    constant_potential: bool,
    /// `grad c^T J` at the previous node and now.
    g_prev: Vec<f64>,
    g: Vec<f64>,
    k_int: Vec<f64>,
    buf: Vec<f64>,
    total: Vec<f64>,
}

impl<'a> GradientAcc<'a> {
    fn new(spec: &'a ProblemSpec, n: usize, dt: f64, quadrature: Quadrature) -> Self {
        let d = spec.dim();
        GradientAcc {
            spec,
            n,
            dt,
            quadrature,
            has_source: !spec.source_is_zero(),
            constant_potential: spec.potential_field().as_constant().is_some(),
            g_prev: vec![0.0; d],
            g: vec![0.0; d],
            k_int: vec![0.0; d],
            buf: vec![0.0; d],
            total: vec![0.0; d],
        }
    }

    /// `out_l = sum_i v_i J_il`
    fn times_j(v: &[f64], j: &[f64], out: &mut [f64]) {
        let d = v.len();
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..d {
                acc += v[i] * j[i * d + l];
            }
            *o = acc;
        }
    }
}

impl Visitor for GradientAcc<'_> {
    fn visit(&mut self, node: &Node<'_>) -> Result<()> {
        let j = node
            .j
            .ok_or_else(|| Error::MissingGradient("first variation".into()))?;
        let d = self.g.len();
        if !self.constant_potential {
            self.spec
                .potential_gradient(node.s, node.x, &mut self.buf)?;
            Self::times_j(&self.buf, j, &mut self.g);
            if node.k > 0 {
                for l in 0..d {
                    self.k_int[l] += match self.quadrature {
                        Quadrature::Trapezoid => 0.5 * (self.g_prev[l] + self.g[l]) * self.dt,
                        Quadrature::LeftRectangle => self.g_prev[l] * self.dt,
                    };
                }
            }
            core::mem::swap(&mut self.g_prev, &mut self.g);
        }
        let disc = math::exp(-node.discount);
        if self.has_source {
            let w = weight(self.quadrature, node.k, self.n, self.dt);
            if w != 0.0 {
                let f = self.spec.source(node.s, node.x)?;
                self.spec.source_gradient(node.s, node.x, &mut self.buf)?;
                Self::times_j(&self.buf, j, &mut self.g);
                for l in 0..d {
                    self.total[l] += w * disc * (self.g[l] - f * self.k_int[l]);
                }
            }
        }
        if node.k == self.n {
            let h = self.spec.terminal(node.x)?;
            self.spec.terminal_gradient(node.x, &mut self.buf)?;
            Self::times_j(&self.buf, j, &mut self.g);
            for l in 0..d {
                self.total[l] += disc * (self.g[l] - h * self.k_int[l]);
            }
        }
        Ok(())
    }
}

/// Value functional of every stored path.
pub fn discounted_payoff(batch: &PathBatch, spec: &ProblemSpec) -> Result<Vec<f64>> {
    let n = batch.n_steps();
    let dt = (spec.horizon() - batch.t_grid[0]) / n as f64;
    (0..batch.n_paths)
        .map(|p| {
            let mut acc = ValueAcc::new(spec, n, dt, batch.quadrature);
            batch.replay(p, &mut acc)?;
            Ok(acc.total)
        })
        .collect()
}

/// Gradient functional of every stored path (needs the variation).
pub fn payoff_gradients(batch: &PathBatch, spec: &ProblemSpec) -> Result<Vec<Vec<f64>>> {
    let n = batch.n_steps();
    let dt = (spec.horizon() - batch.t_grid[0]) / n as f64;
    (0..batch.n_paths)
        .map(|p| {
            let mut acc = GradientAcc::new(spec, n, dt, batch.quadrature);
            batch.replay(p, &mut acc)?;
            Ok(acc.total)
        })
        .collect()
}

/// Mean and standard error; antithetic samples are averaged in pairs first.
fn summarize(values: &[f64], antithetic: bool) -> (f64, f64) {
    if antithetic {
        let pairs: Vec<f64> = values.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        math::mean_stderr(&pairs)
    } else {
        math::mean_stderr(values)
    }
}

fn kernel<'a>(spec: &'a ProblemSpec, t: f64, x: &'a [f64], p: &McParams) -> Kernel<'a> {
    let mut k = Kernel::new(spec, t, x, p.steps_for(spec, t), p.seed);
    k.antithetic = p.antithetic;
    k.quadrature = p.quadrature;
    k
}

/// Monte Carlo estimate of `u(t, x)`.
pub fn estimate_value(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    exec: &Exec,
) -> Result<Estimate> {
    check_params(spec, t, x, params)?;
    let k = kernel(spec, t, x, params);
    let (n, dt) = (k.n_steps, k.dt());
    let k = &k;
    let payoffs = exec.try_map_chunks(params.n_paths, PATH_CHUNK, |range, out| {
        let mut ws = k.workspace();
        for p in range {
            let mut acc = ValueAcc::new(spec, n, dt, params.quadrature);
            k.run(p, &mut ws, &mut acc)?;
            out.push(acc.total);
        }
        Ok::<(), Error>(())
    })?;
    let (mean, se) = summarize(&payoffs, params.antithetic);
    Ok(Estimate {
        mean: vec![mean],
        stderr: vec![se],
        n_paths: params.n_paths,
        n_steps: n,
        seed: params.seed,
        kind: EstimateKind::Value,
    })
}

/// Monte Carlo estimate of `D_x u(t, x)` by the pathwise formula.
pub fn estimate_gradient(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    exec: &Exec,
) -> Result<Estimate> {
    check_params(spec, t, x, params)?;
    let mut k = kernel(spec, t, x, params);
    k.variation = true;
    let (n, dt) = (k.n_steps, k.dt());
    let k = &k;
    let d = spec.dim();
    let grads: Vec<Vec<f64>> = exec.try_map_chunks(params.n_paths, PATH_CHUNK, |range, out| {
        let mut ws = k.workspace();
        for p in range {
            let mut acc = GradientAcc::new(spec, n, dt, params.quadrature);
            k.run(p, &mut ws, &mut acc)?;
            out.push(acc.total);
        }
        Ok::<(), Error>(())
    })?;
    let mut mean = Vec::with_capacity(d);
    let mut stderr = Vec::with_capacity(d);
    for l in 0..d {
        let col: Vec<f64> = grads.iter().map(|g| g[l]).collect();
        let (m, s) = summarize(&col, params.antithetic);
        mean.push(m);
        stderr.push(s);
    }
    Ok(Estimate {
        mean,
        stderr,
        n_paths: params.n_paths,
        n_steps: n,
        seed: params.seed,
        kind: EstimateKind::Gradient,
    })
}

/// [`estimate_value`] at the listed `(slice, flat)` nodes of `grid`, with
/// node seed `derive_seed(params.seed, slice * n_space + flat)`. Nodes at
/// `t = T` take `h` exactly with zero stderr. Returns `(value, stderr)`.
pub fn estimate_at_nodes(
    spec: &ProblemSpec,
    grid: &Grid,
    nodes: &[(usize, usize)],
    params: &McParams,
    exec: &Exec,
) -> Result<Vec<(f64, f64)>> {
    if grid.dim() != spec.dim() {
        return Err(Error::invalid("grid dimension does not match d"));
    }
    let n_space = grid.n_space();
    let inner = if nodes.len() >= exec.workers() {
        Exec::sequential()
    } else {
        exec.clone()
    };
    let results: Vec<Result<(f64, f64)>> = exec.map(nodes.len(), |q| {
        let (slice, flat) = nodes[q];
        let t = grid.time(slice);
        let x = grid.point(flat);
        if t >= spec.horizon() {
            return Ok((spec.terminal(&x)?, 0.0));
        }
        let p = params.with_seed(derive_seed(params.seed, (slice * n_space + flat) as u64));
        let e = estimate_value(spec, t, &x, &p, &inner)?;
        Ok((e.value(), e.se()))
    });
    results.into_iter().collect()
}

/// [`estimate_at_nodes`] on every node. Returns `(values, stderrs)`.
pub fn estimate_on_grid(
    spec: &ProblemSpec,
    grid: &Grid,
    params: &McParams,
    exec: &Exec,
) -> Result<(Field, Field)> {
    let n_space = grid.n_space();
    let nodes: Vec<(usize, usize)> = (0..grid.n_slices())
        .flat_map(|k| (0..n_space).map(move |i| (k, i)))
        .collect();
    let est = estimate_at_nodes(spec, grid, &nodes, params, exec)?;
    let (values, errors): (Vec<f64>, Vec<f64>) = est.into_iter().unzip();
    Ok((
        Field::new(grid.clone(), values, FieldSource::MonteCarlo)?,
        Field::new(grid.clone(), errors, FieldSource::MonteCarlo)?,
    ))
}

/// Simulates a batch with the variation and evaluates both functionals;
/// convenience for inspecting individual paths.
pub fn batch_estimates(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    exec: &Exec,
) -> Result<(PathBatch, Vec<f64>, Vec<Vec<f64>>)> {
    let batch = sde::simulate_with_variation(spec, t, x, params, exec)?;
    let v = discounted_payoff(&batch, spec)?;
    let g = payoff_gradients(&batch, spec)?;
    Ok((batch, v, g))
}
