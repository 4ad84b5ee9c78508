//! Euler-Maruyama paths of `dX = b(s, X) ds + sigma(s, X) dW`, the first
//! variation `J = dX/dx`, and strong-error studies.
//!
//! Noise for path `p` at step `k` is addressed by `(seed, stream, k)` in a
//! counter-based generator, so a path does not depend on how paths are
//! scheduled across workers. With antithetic sampling, paths `2i` and
//! `2i + 1` share stream `i` with opposite signs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fk::{McParams, Quadrature};
use crate::math;
use crate::problem::ProblemSpec;
use crate::rng::{derive_seed_str, NoiseKey, UniformStream};

pub const SCHEME: &str = "euler-maruyama";

/// Paths are simulated in fixed blocks so results do not depend on the
/// worker count.
pub(crate) const PATH_CHUNK: usize = 64;

/// Uniform time grid `t = s_0 < ... < s_N = T`.
pub fn time_grid(t: f64, horizon: f64, n_steps: usize) -> Vec<f64> {
    let dt = (horizon - t) / n_steps as f64;
    let mut g: Vec<f64> = (0..=n_steps).map(|k| t + k as f64 * dt).collect();
    g[n_steps] = horizon;
    g
}

/// State seen by a [`Visitor`] at grid node `k`.
pub(crate) struct Node<'a> {
    pub k: usize,
    pub s: f64,
    pub x: &'a [f64],
    /// Row-major `d x d`, present when the variation is simulated.
    pub j: Option<&'a [f64]>,
    /// Running `int_t^s c(r, X_r) dr`.
    pub discount: f64,
}

pub(crate) trait Visitor {
    fn visit(&mut self, node: &Node<'_>) -> Result<()>;
}

pub(crate) struct Workspace {
    x: Vec<f64>,
    j: Vec<f64>,
    jn: Vec<f64>,
    m: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
    db: Vec<f64>,
    dsigma: Vec<f64>,
    dw: Vec<f64>,
    z: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize, m: usize) -> Self {
        Workspace {
            x: vec![0.0; d],
            j: vec![0.0; d * d],
            jn: vec![0.0; d * d],
            m: vec![0.0; d * d],
            b: vec![0.0; d],
            sigma: vec![0.0; d * m],
            db: vec![0.0; d * d],
            dsigma: vec![0.0; m * d * d],
            dw: vec![0.0; m],
            z: vec![0.0; m],
        }
    }
}

/// One Euler-Maruyama path at a time.
pub(crate) struct Kernel<'a> {
    pub spec: &'a ProblemSpec,
    pub t: f64,
    pub x0: &'a [f64],
    pub n_steps: usize,
    pub key: NoiseKey,
    pub antithetic: bool,
    /// Each increment is the sum of this many finer increments; used to
    /// couple coarse and fine levels of a nested ladder.
    pub substeps: usize,
    pub variation: bool,
    pub quadrature: Quadrature,
}

impl<'a> Kernel<'a> {
    pub fn new(spec: &'a ProblemSpec, t: f64, x0: &'a [f64], n_steps: usize, seed: u64) -> Self {
        Kernel {
            spec,
            t,
            x0,
            n_steps,
            key: NoiseKey::new(seed),
            antithetic: false,
            substeps: 1,
            variation: false,
            quadrature: Quadrature::Trapezoid,
        }
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.spec.dim(), self.spec.noise_dim())
    }

    pub fn dt(&self) -> f64 {
        (self.spec.horizon() - self.t) / self.n_steps as f64
    }

    fn increments(&self, path: usize, k: usize, ws: &mut Workspace) {
        let (stream, sign) = if self.antithetic {
            ((path / 2) as u64, if path % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path as u64, 1.0)
        };
        let fine_dt = self.dt() / self.substeps as f64;
        let scale = sign * math::sqrt(fine_dt);
        if self.substeps == 1 {
            self.key.normals(stream, k as u64, &mut ws.dw);
            ws.dw.iter_mut().for_each(|v| *v *= scale);
            return;
        }
        ws.dw.fill(0.0);
        for sub in 0..self.substeps {
            self.key
                .normals(stream, (k * self.substeps + sub) as u64, &mut ws.z);
            for (w, z) in ws.dw.iter_mut().zip(&ws.z) {
                *w += scale * z;
            }
        }
    }

    pub fn run(&self, path: usize, ws: &mut Workspace, visitor: &mut impl Visitor) -> Result<()> {
        let spec = self.spec;
        let (d, m) = (spec.dim(), spec.noise_dim());
        let n = self.n_steps;
        let dt = self.dt();
        let horizon = spec.horizon();
        let wrap = |step: usize| {
            move |e: Error| Error::Path {
                path,
                step,
                source: alloc::boxed::Box::new(e),
            }
        };

        ws.x.copy_from_slice(self.x0);
        if self.variation {
            ws.j.fill(0.0);
            for i in 0..d {
                ws.j[i * d + i] = 1.0;
            }
        }
        let mut discount = 0.0;
        let mut c_prev = 0.0;
        for k in 0..=n {
            let s = if k == n {
                horizon
            } else {
                self.t + k as f64 * dt
            };
            let c = spec.potential(s, &ws.x).map_err(wrap(k))?;
            if k > 0 {
                discount += match self.quadrature {
                    Quadrature::Trapezoid => 0.5 * (c_prev + c) * dt,
                    Quadrature::LeftRectangle => c_prev * dt,
                };
            }
            c_prev = c;
            visitor.visit(&Node {
                k,
                s,
                x: &ws.x,
                j: if self.variation { Some(&ws.j) } else { None },
                discount,
            })?;
            if k == n {
                break;
            }

            spec.drift(s, &ws.x, &mut ws.b).map_err(wrap(k))?;
            spec.diffusion(s, &ws.x, &mut ws.sigma).map_err(wrap(k))?;
            self.increments(path, k, ws);

            if self.variation {
                spec.drift_jacobian(s, &ws.x, &mut ws.db).map_err(wrap(k))?;
                spec.diffusion_jacobians(s, &ws.x, &mut ws.dsigma)
                    .map_err(wrap(k))?;
                // M = Db dt + sum_k' Dsigma_k' dW_k'
                for (mv, db) in ws.m.iter_mut().zip(&ws.db) {
                    *mv = db * dt;
                }
                for (kk, w) in ws.dw.iter().enumerate() {
                    let block = &ws.dsigma[kk * d * d..(kk + 1) * d * d];
                    for (mv, g) in ws.m.iter_mut().zip(block) {
                        *mv += g * w;
                    }
                }
                for i in 0..d {
                    for l in 0..d {
                        let mut acc = ws.j[i * d + l];
                        for r in 0..d {
                            acc += ws.m[i * d + r] * ws.j[r * d + l];
                        }
                        ws.jn[i * d + l] = acc;
                    }
                }
                core::mem::swap(&mut ws.j, &mut ws.jn);
                if ws.j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { path, step: k + 1 });
                }
            }

            for i in 0..d {
                let mut noise = 0.0;
                for kk in 0..m {
                    noise += ws.sigma[i * m + kk] * ws.dw[kk];
                }
                ws.x[i] += ws.b[i] * dt + noise;
            }
            if ws.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { path, step: k + 1 });
            }
        }
        Ok(())
    }
}

pub(crate) fn check_params(spec: &ProblemSpec, t: f64, x: &[f64], p: &McParams) -> Result<()> {
    if p.n_paths == 0 || p.n_steps == 0 {
        return Err(Error::invalid("n_paths and n_steps must be positive"));
    }
    if p.antithetic && !p.n_paths.is_multiple_of(2) {
        return Err(Error::invalid(
            "antithetic sampling needs an even path count",
        ));
    }
    if !(t < spec.horizon()) || !t.is_finite() {
        return Err(Error::invalid("start time must be finite and before T"));
    }
    if x.len() != spec.dim() {
        return Err(Error::invalid("start point dimension does not match d"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("start point must be finite"));
    }
    Ok(())
}

/// Simulated trajectories on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub t_grid: Vec<f64>,
    pub d: usize,
    pub n_paths: usize,
    /// `[path][step][i]`, flat.
    pub states: Vec<f64>,
    /// `[path][step][i][j]`, flat.
    pub variation: Option<Vec<f64>>,
    /// `[path][step]`, flat.
    pub discount: Vec<f64>,
    pub seed: u64,
    pub antithetic: bool,
    pub quadrature: Quadrature,
    pub scheme: &'static str,
}

impl PathBatch {
    pub fn n_steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.t_grid.len() + step) * self.d;
        &self.states[at..at + self.d]
    }

    pub fn variation_at(&self, path: usize, step: usize) -> Option<&[f64]> {
        let dd = self.d * self.d;
        self.variation.as_ref().map(|v| {
            let at = (path * self.t_grid.len() + step) * dd;
            &v[at..at + dd]
        })
    }

    pub fn discount_at(&self, path: usize, step: usize) -> f64 {
        self.discount[path * self.t_grid.len() + step]
    }

    /// `(path, step)` pairs where `det J <= 0`.
    pub fn degenerate_variation(&self) -> Vec<(usize, usize)> {
        let mut bad = Vec::new();
        if self.variation.is_none() {
            return bad;
        }
        for p in 0..self.n_paths {
            for k in 0..self.t_grid.len() {
                let j = self.variation_at(p, k).expect("variation present");
                if !(math::determinant(j, self.d) > 0.0) {
                    bad.push((p, k));
                }
            }
        }
        bad
    }

    /// Replays the stored path `p` into a visitor.
    pub(crate) fn replay(&self, p: usize, visitor: &mut impl Visitor) -> Result<()> {
        for k in 0..self.t_grid.len() {
            visitor.visit(&Node {
                k,
                s: self.t_grid[k],
                x: self.state(p, k),
                j: self.variation_at(p, k),
                discount: self.discount_at(p, k),
            })?;
        }
        Ok(())
    }
}

struct Recorder<'a> {
    states: &'a mut Vec<f64>,
    variation: Option<&'a mut Vec<f64>>,
    discount: &'a mut Vec<f64>,
}

impl Visitor for Recorder<'_> {
    fn visit(&mut self, node: &Node<'_>) -> Result<()> {
        self.states.extend_from_slice(node.x);
        if let (Some(v), Some(j)) = (self.variation.as_deref_mut(), node.j) {
            v.extend_from_slice(j);
        }
        self.discount.push(node.discount);
        Ok(())
    }
}

fn simulate(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    variation: bool,
    exec: &Exec,
) -> Result<PathBatch> {
    check_params(spec, t, x, params)?;
    let n_steps = params.steps_for(spec, t);
    let mut kernel = Kernel::new(spec, t, x, n_steps, params.seed);
    kernel.antithetic = params.antithetic;
    kernel.variation = variation;
    kernel.quadrature = params.quadrature;
    let kernel = &kernel;
    type Rec = (Vec<f64>, Vec<f64>, Vec<f64>);
    let parts: Vec<Rec> = exec.try_map_chunks(params.n_paths, PATH_CHUNK, |range, out| {
        let mut ws = kernel.workspace();
        for p in range {
            let (mut s, mut v, mut dsc) = (Vec::new(), Vec::new(), Vec::new());
            let mut rec = Recorder {
                states: &mut s,
                variation: if variation { Some(&mut v) } else { None },
                discount: &mut dsc,
            };
            kernel.run(p, &mut ws, &mut rec)?;
            out.push((s, v, dsc));
        }
        Ok::<(), Error>(())
    })?;
    let d = spec.dim();
    let nodes = n_steps + 1;
    let mut states = Vec::with_capacity(params.n_paths * nodes * d);
    let mut var = Vec::with_capacity(if variation {
        params.n_paths * nodes * d * d
    } else {
        0
    });
    let mut discount = Vec::with_capacity(params.n_paths * nodes);
    for (s, v, dsc) in parts {
        states.extend(s);
        var.extend(v);
        discount.extend(dsc);
    }
    Ok(PathBatch {
        t_grid: time_grid(t, spec.horizon(), n_steps),
        d,
        n_paths: params.n_paths,
        states,
        variation: variation.then_some(var),
        discount,
        seed: params.seed,
        antithetic: params.antithetic,
        quadrature: params.quadrature,
        scheme: SCHEME,
    })
}

/// Euler-Maruyama paths from `(t, x)` with running discount integrals.
pub fn simulate_paths(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    exec: &Exec,
) -> Result<PathBatch> {
    simulate(spec, t, x, params, false, exec)
}

/// As [`simulate_paths`], also carrying `J = dX/dx` driven by the same noise.
pub fn simulate_with_variation(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    params: &McParams,
    exec: &Exec,
) -> Result<PathBatch> {
    simulate(spec, t, x, params, true, exec)
}

/// Strong errors of a nested step ladder against its finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub n_steps: Vec<usize>,
    pub step_sizes: Vec<f64>,
    /// Estimated `E|X_dt(T) - X_ref(T)|` per level (finest level excluded).
    pub errors: Vec<f64>,
    /// 95% half-widths of the error estimates.
    pub half_widths: Vec<f64>,
    pub reference_steps: usize,
    /// Log-log slope of error against step size; `None` when an error is 0.
    pub slope: Option<f64>,
    /// Bootstrap 95% interval of the slope over resampled paths.
    pub slope_interval: Option<(f64, f64)>,
    pub n_paths: usize,
    pub seed: u64,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

struct Terminal<'a>(&'a mut [f64]);

impl Visitor for Terminal<'_> {
    fn visit(&mut self, node: &Node<'_>) -> Result<()> {
        self.0.copy_from_slice(node.x);
        Ok(())
    }
}

/// Coarse levels reuse the Brownian increments of the finest level, summed
/// over the nested sub-steps.
pub fn strong_error(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    ladder: &[usize],
    n_paths: usize,
    seed: u64,
    exec: &Exec,
) -> Result<ConvergenceReport> {
    if ladder.len() < 2 {
        return Err(Error::invalid("ladder needs at least two levels"));
    }
    for w in ladder.windows(2) {
        if w[0] == 0 || w[1] <= w[0] || w[1] % w[0] != 0 {
            return Err(Error::invalid(
                "ladder must be increasing and nested (each level divides the next)",
            ));
        }
    }
    let params = McParams::new(n_paths, ladder[0], seed);
    check_params(spec, t, x, &params)?;
    let finest = *ladder.last().expect("nonempty");
    let levels = ladder.len();
    let d = spec.dim();
    let kernels: Vec<Kernel<'_>> = ladder
        .iter()
        .map(|&n| {
            let mut k = Kernel::new(spec, t, x, n, seed);
            k.substeps = finest / n;
            k
        })
        .collect();
    let kernels = &kernels;
    // per path: |X_l(T) - X_ref(T)| for each coarse level
    let per_path: Vec<Vec<f64>> = exec.try_map_chunks(n_paths, PATH_CHUNK, |range, out| {
        let mut ws = kernels[0].workspace();
        let mut ends = vec![vec![0.0; d]; levels];
        for p in range {
            for (l, k) in kernels.iter().enumerate() {
                k.run(p, &mut ws, &mut Terminal(&mut ends[l]))?;
            }
            let reference = &ends[levels - 1];
            out.push(
                ends[..levels - 1]
                    .iter()
                    .map(|e| math::dist(e, reference))
                    .collect(),
            );
        }
        Ok::<(), Error>(())
    })?;

    let horizon = spec.horizon() - t;
    let coarse = levels - 1;
    let step_sizes: Vec<f64> = ladder.iter().map(|&n| horizon / n as f64).collect();
    let mut errors = Vec::with_capacity(coarse);
    let mut half_widths = Vec::with_capacity(coarse);
    for l in 0..coarse {
        let col: Vec<f64> = per_path.iter().map(|r| r[l]).collect();
        let (mean, se) = math::mean_stderr(&col);
        errors.push(mean);
        half_widths.push(1.96 * se);
    }
    let fit = |errs: &[f64]| -> Option<f64> {
        if errs.iter().any(|e| !(*e > 0.0)) {
            return None;
        }
        Some(math::log_log_slope(&step_sizes[..coarse], errs))
    };
    let slope = fit(&errors);
    let slope_interval = slope.and_then(|_| {
        let mut rng = UniformStream::new(derive_seed_str(seed, "bootstrap"));
        let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        let mut sums = vec![0.0; coarse];
        for _ in 0..BOOTSTRAP_RESAMPLES {
            sums.fill(0.0);
            for _ in 0..n_paths {
                let r = &per_path[rng.below(n_paths)];
                for (s, v) in sums.iter_mut().zip(r) {
                    *s += v;
                }
            }
            let means: Vec<f64> = sums.iter().map(|s| s / n_paths as f64).collect();
            if let Some(s) = fit(&means) {
                slopes.push(s);
            }
        }
        if slopes.is_empty() {
            return None;
        }
        slopes.sort_by(|a, b| a.total_cmp(b));
        Some((
            math::quantile(&slopes, 0.025),
            math::quantile(&slopes, 0.975),
        ))
    });
    Ok(ConvergenceReport {
        n_steps: ladder.to_vec(),
        step_sizes,
        errors,
        half_widths,
        reference_steps: finest,
        slope,
        slope_interval,
        n_paths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{catalog, CoefficientField, Family};
    use proptest::prelude::*;

    fn consts(b: f64, s: f64, c: f64) -> ProblemSpec {
        ProblemSpec::builder("t", 1, 1)
            .drift(vec![CoefficientField::constant(b, 1)])
            .diffusion(vec![CoefficientField::constant(s, 1)])
            .potential(CoefficientField::constant(c, 1))
            .c0(c)
            .build()
            .unwrap()
    }

    fn linear_drift(mu: f64, s: f64) -> ProblemSpec {
        ProblemSpec::builder("t", 1, 1)
            .drift(vec![CoefficientField::family(
                Family::Affine {
                    offset: 0.0,
                    weights: vec![mu],
                },
                1,
            )
            .unwrap()])
            .diffusion(vec![CoefficientField::constant(s, 1)])
            .build()
            .unwrap()
    }

    #[test]
    fn degenerate_dynamics_stay_put() {
        let s = consts(0.0, 0.0, 0.0);
        let b = simulate_paths(
            &s,
            0.0,
            &[1.5],
            &McParams::new(4, 10, 1),
            &Exec::sequential(),
        )
        .unwrap();
        assert!(b.states.iter().all(|v| *v == 1.5));
    }

    #[test]
    fn constant_drift_is_exact_on_the_grid() {
        let s = consts(1.0, 0.0, 0.0);
        let b = simulate_paths(
            &s,
            0.0,
            &[0.0],
            &McParams::new(2, 8, 1),
            &Exec::sequential(),
        )
        .unwrap();
        for k in 0..=8 {
            assert!((b.state(1, k)[0] - b.t_grid[k]).abs() < 1e-15);
        }
        assert_eq!(b.t_grid[0], 0.0);
        assert_eq!(b.t_grid[8], 1.0);
    }

    #[test]
    fn brownian_variance_at_horizon() {
        let s = consts(0.0, 1.0, 0.0);
        let n = 100_000;
        let b = simulate_paths(
            &s,
            0.0,
            &[0.0],
            &McParams::new(n, 4, 7),
            &Exec::sequential(),
        )
        .unwrap();
        let ends: Vec<f64> = (0..n).map(|p| b.state(p, 4)[0]).collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn antithetic_pairs_cancel_for_constant_coefficients() {
        let s = consts(0.0, 0.7, 0.0);
        let mut p = McParams::new(10, 5, 3);
        p.antithetic = true;
        let b = simulate_paths(&s, 0.0, &[0.0], &p, &Exec::sequential()).unwrap();
        for i in 0..5 {
            let a = b.state(2 * i, 5)[0];
            let c = b.state(2 * i + 1, 5)[0];
            assert_eq!(a + c, 0.0);
        }
    }

    #[test]
    fn variation_is_identity_for_constant_coefficients() {
        let s = consts(0.3, 1.0, 0.0);
        let b = simulate_with_variation(
            &s,
            0.0,
            &[0.0],
            &McParams::new(3, 6, 2),
            &Exec::sequential(),
        )
        .unwrap();
        assert!(b.variation.as_ref().unwrap().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn linear_drift_variation_matches_exponential() {
        let s = linear_drift(0.5, 0.3);
        let n = 1000;
        let b = simulate_with_variation(
            &s,
            0.0,
            &[1.0],
            &McParams::new(1, n, 2),
            &Exec::sequential(),
        )
        .unwrap();
        let j = b.variation_at(0, n).unwrap()[0];
        let euler = (1.0 + 0.5 / n as f64).powi(n as i32);
        assert!((j - euler).abs() < 1e-12);
        assert!((j - math::exp(0.5)).abs() < 0.5 * 0.25 * math::exp(0.5) / n as f64 * 1.01);
    }

    #[test]
    fn variation_matches_bump_and_revalue() {
        let s = catalog::gbm();
        let n = 1000;
        let eps = 1e-4;
        let x = 1.3;
        let p = McParams::new(8, n, 11);
        let ex = Exec::sequential();
        let base = simulate_with_variation(&s, 0.0, &[x], &p, &ex).unwrap();
        let up = simulate_paths(&s, 0.0, &[x + eps], &p, &ex).unwrap();
        for path in 0..8 {
            let fd = (up.state(path, n)[0] - base.state(path, n)[0]) / eps;
            let j = base.variation_at(path, n).unwrap()[0];
            assert!(((fd - j) / j).abs() <= 1e-3, "{fd} vs {j}");
        }
        assert!(base.degenerate_variation().is_empty());
    }

    #[test]
    fn discount_is_the_trapezoid_of_the_stored_path() {
        let s = ProblemSpec::builder("t", 1, 1)
            .diffusion(vec![CoefficientField::constant(1.0, 1)])
            .potential(CoefficientField::parse("1 + x1^2", 1).unwrap())
            .c0(1.0)
            .build()
            .unwrap();
        let b = simulate_paths(
            &s,
            0.2,
            &[0.5],
            &McParams::new(3, 20, 4),
            &Exec::sequential(),
        )
        .unwrap();
        let dt = (1.0 - 0.2) / 20.0;
        for p in 0..3 {
            let mut acc = 0.0;
            for k in 1..=20 {
                let c0 = s.potential(b.t_grid[k - 1], b.state(p, k - 1)).unwrap();
                let c1 = s.potential(b.t_grid[k], b.state(p, k)).unwrap();
                acc += 0.5 * (c0 + c1) * dt;
                assert!(b.discount_at(p, k) >= b.discount_at(p, k - 1));
            }
            assert_eq!(acc, b.discount_at(p, 20));
        }
    }

    #[test]
    fn overflow_aborts_with_path_and_step() {
        let s = ProblemSpec::builder("t", 1, 1)
            .drift(vec![CoefficientField::parse("x1^2", 1).unwrap()])
            .diffusion(vec![CoefficientField::constant(1.0, 1)])
            .build()
            .unwrap();
        match simulate_paths(
            &s,
            0.0,
            &[10.0],
            &McParams::new(2, 50, 1),
            &Exec::sequential(),
        ) {
            Err(Error::NonFiniteState { path: 0, step }) => assert!(step >= 1),
            Err(Error::Path {
                path: 0,
                step,
                source,
            }) => {
                assert!(step >= 1);
                assert!(matches!(
                    *source,
                    Error::Domain {
                        kind: crate::error::DomainError::NonFinite,
                        ..
                    }
                ));
            }
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn evaluation_errors_carry_path_and_step() {
        let s = ProblemSpec::builder("t", 1, 1)
            .drift(vec![CoefficientField::parse("log(x1)", 1).unwrap()])
            .diffusion(vec![CoefficientField::constant(1.0, 1)])
            .build()
            .unwrap();
        match simulate_paths(
            &s,
            0.0,
            &[-1.0],
            &McParams::new(2, 5, 1),
            &Exec::sequential(),
        ) {
            Err(Error::Path {
                path: 0, step: 0, ..
            }) => {}
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn deterministic_ladder_has_zero_errors() {
        let s = consts(1.0, 0.0, 0.0);
        let r = strong_error(&s, 0.0, &[0.0], &[8, 16, 32], 16, 1, &Exec::sequential()).unwrap();
        assert!(r.errors.iter().all(|e| *e == 0.0));
        assert!(r.slope.is_none());
    }

    #[test]
    fn non_nested_ladder_is_rejected() {
        let s = consts(1.0, 0.0, 0.0);
        assert!(strong_error(&s, 0.0, &[0.0], &[8, 12], 4, 1, &Exec::sequential()).is_err());
    }

    #[test]
    fn finest_level_matches_exact_ou_moments() {
        let s = catalog::additive_ou();
        let n = 1024;
        let paths = 20_000;
        let b = simulate_paths(
            &s,
            0.0,
            &[1.0],
            &McParams::new(paths, n, 5),
            &Exec::sequential(),
        )
        .unwrap();
        let ends: Vec<f64> = (0..paths).map(|p| b.state(p, n)[0]).collect();
        let (mean, se) = math::mean_stderr(&ends);
        let exact_mean = math::exp(-1.0);
        let exact_var = (1.0 - math::exp(-2.0)) / 2.0;
        assert!((mean - exact_mean).abs() < 4.0 * se);
        let var = ends.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (paths - 1) as f64;
        // sd of a sample variance of a Gaussian is var * sqrt(2 / (n - 1))
        assert!((var - exact_var).abs() < 4.0 * exact_var * (2.0 / paths as f64).sqrt());
    }

    #[test]
    fn gbm_errors_against_exact_solution_have_order_one_half() {
        // Exact GBM from the summed fine increments is an independent reference.
        let s = catalog::gbm();
        let finest = 1024usize;
        let x = 1.0;
        let paths = 2000;
        let key = NoiseKey::new(3);
        let mut errs = Vec::new();
        let mut sizes = Vec::new();
        for n in [8usize, 16, 32, 64, 128] {
            let x0 = [x];
            let mut kernel = Kernel::new(&s, 0.0, &x0, n, 3);
            kernel.substeps = finest / n;
            let mut ws = kernel.workspace();
            let mut acc = 0.0;
            let mut end = [0.0];
            let mut z = [0.0];
            for p in 0..paths {
                kernel.run(p, &mut ws, &mut Terminal(&mut end)).unwrap();
                let mut w = 0.0;
                for k in 0..finest {
                    key.normals(p as u64, k as u64, &mut z);
                    w += (1.0 / finest as f64).sqrt() * z[0];
                }
                let exact = x * math::exp((0.1 - 0.02) + 0.2 * w);
                acc += (end[0] - exact).abs();
            }
            errs.push(acc / paths as f64);
            sizes.push(1.0 / n as f64);
        }
        let slope = math::log_log_slope(&sizes, &errs);
        assert!((0.4..=0.6).contains(&slope), "{slope}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn batches_do_not_depend_on_worker_count(seed in any::<u64>(), x in -2.0f64..2.0) {
            let s = catalog::ou_2d();
            let mut p = McParams::new(130, 12, seed);
            p.antithetic = true;
            let a = simulate_with_variation(&s, 0.1, &[x, -x], &p, &Exec::sequential()).unwrap();
            let b = simulate_with_variation(&s, 0.1, &[x, -x], &p, &Exec::with_workers(4)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn starts_at_x_with_identity_variation(seed in any::<u64>(), x in -3.0f64..3.0) {
            let s = catalog::gbm();
            let b = simulate_with_variation(&s, 0.0, &[x], &McParams::new(5, 4, seed), &Exec::sequential()).unwrap();
            for p in 0..5 {
                prop_assert_eq!(b.state(p, 0)[0], x);
                prop_assert_eq!(b.variation_at(p, 0).unwrap()[0], 1.0);
                prop_assert_eq!(b.discount_at(p, 0), 0.0);
            }
        }
    }
}
