//! Finite differences on boxes: the Cauchy-Dirichlet problem
//!
//! ```text
//! D_t v + A^t v - c v + f = 0  in (t1, t2) x U,   v = g on the lateral boundary,
//! v(t2, .) = terminal,
//! ```
//!
//! by a theta scheme with central differences, and the residual of the
//! backward equation on a sampled field.
//!
//! The reaction term is exponentially fitted: with `z = c dt`, the scheme
//! uses `zbar = (1 - e^{-z}) / ((1 - theta) + theta e^{-z})` in place of `z`
//! and scales the source by `zbar / z`. Both are `z + O(z^3)` for
//! Crank-Nicolson, and they make spatially constant solutions exact.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fk::{self, McParams};
use crate::harness::BoundCheck;
use crate::math;
use crate::problem::{ProblemSpec, Region};
use crate::rng::derive_seed_str;

/// Space-time box with a uniform tensor grid. Spatial nodes are numbered
/// with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub region: Region,
    /// Nodes per axis, each at least 3.
    pub nodes: Vec<usize>,
    pub t1: f64,
    pub t2: f64,
    /// Number of time steps; there are `n_time + 1` slices.
    pub n_time: usize,
}

impl Grid {
    pub fn new(region: Region, nodes: Vec<usize>, t1: f64, t2: f64, n_time: usize) -> Result<Self> {
        if nodes.len() != region.dim() {
            return Err(Error::invalid("one node count per axis is required"));
        }
        if nodes.iter().any(|n| *n < 3) {
            return Err(Error::invalid("each axis needs at least 3 nodes"));
        }
        if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
            return Err(Error::invalid("grid needs t1 < t2"));
        }
        if n_time == 0 {
            return Err(Error::invalid("grid needs at least one time step"));
        }
        Ok(Grid {
            region,
            nodes,
            t1,
            t2,
            n_time,
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_space(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn n_slices(&self) -> usize {
        self.n_time + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t2 - self.t1) / self.n_time as f64
    }

    pub fn time(&self, slice: usize) -> f64 {
        if slice == self.n_time {
            self.t2
        } else {
            self.t1 + slice as f64 * self.dt()
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.region.upper[axis] - self.region.lower[axis]) / (self.nodes[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        if j + 1 == self.nodes[axis] {
            self.region.upper[axis]
        } else {
            self.region.lower[axis] + j as f64 * self.spacing(axis)
        }
    }

    /// Flat offset of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.nodes[..axis].iter().product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|n| {
                let j = flat % n;
                flat /= n;
                j
            })
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.nodes)
            .rev()
            .fold(0, |acc, (j, n)| acc * n + j)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, j)| self.coord(a, *j))
            .collect()
    }

    /// Distance in nodes to the nearest face.
    pub fn depth(&self, flat: usize) -> usize {
        self.multi_index(flat)
            .iter()
            .zip(&self.nodes)
            .map(|(j, n)| (*j).min(n - 1 - j))
            .min()
            .unwrap_or(0)
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.depth(flat) == 0
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_space())
            .filter(|&i| self.is_boundary(i))
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_space())
            .filter(|&i| !self.is_boundary(i))
            .collect()
    }

    /// Every other node and every other time step, when the counts allow.
    pub fn coarsened(&self) -> Option<Grid> {
        if !self.n_time.is_multiple_of(2) {
            return None;
        }
        let mut nodes = Vec::with_capacity(self.dim());
        for n in &self.nodes {
            if (n - 1) % 2 != 0 || (n - 1) / 2 + 1 < 3 {
                return None;
            }
            nodes.push((n - 1) / 2 + 1);
        }
        Grid::new(
            self.region.clone(),
            nodes,
            self.t1,
            self.t2,
            self.n_time / 2,
        )
        .ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    FiniteDifference,
    MonteCarlo,
    Analytic,
}

impl FieldSource {
    pub fn tag(self) -> &'static str {
        match self {
            FieldSource::FiniteDifference => "FD",
            FieldSource::MonteCarlo => "MC",
            FieldSource::Analytic => "analytic",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "FD" => FieldSource::FiniteDifference,
            "MC" => FieldSource::MonteCarlo,
            "analytic" => FieldSource::Analytic,
            _ => return None,
        })
    }
}

/// Values on every node of a grid, `values[slice * n_space + flat]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub source: FieldSource,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, source: FieldSource) -> Result<Self> {
        if values.len() != grid.n_space() * grid.n_slices() {
            return Err(Error::invalid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_space() * grid.n_slices()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("field value {i} is not finite")));
        }
        Ok(Field {
            grid,
            values,
            source,
        })
    }

    pub fn from_fn(
        grid: &Grid,
        source: FieldSource,
        mut f: impl FnMut(f64, &[f64]) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_space() * grid.n_slices());
        let points: Vec<Vec<f64>> = (0..grid.n_space()).map(|i| grid.point(i)).collect();
        for k in 0..grid.n_slices() {
            let t = grid.time(k);
            for x in &points {
                values.push(f(t, x));
            }
        }
        Field::new(grid.clone(), values, source)
    }

    pub fn get(&self, slice: usize, flat: usize) -> f64 {
        self.values[slice * self.grid.n_space() + flat]
    }

    pub fn slice(&self, slice: usize) -> &[f64] {
        let n = self.grid.n_space();
        &self.values[slice * n..(slice + 1) * n]
    }

    /// Largest `|value|` over nodes at least `depth` nodes from the faces.
    pub fn max_abs_inner(&self, slice: usize, depth: usize) -> f64 {
        self.slice(slice)
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.depth(*i) >= depth)
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    /// Central-difference mixed partial over `axes` at a node. Per axis the
    /// stencil depends on the order: first `(-1, 0, 1) / 2h`, second
    /// `(1, -2, 1) / h^2`, third `(-1, 2, 0, -2, 1) / 2h^3`; mixed partials
    /// use the tensor product. `None` when the stencil leaves the grid.
    pub fn derivative(&self, slice: usize, flat: usize, axes: &[usize]) -> Option<f64> {
        let g = &self.grid;
        let d = g.dim();
        let mut order = vec![0usize; d];
        for &a in axes {
            if a >= d {
                return None;
            }
            order[a] += 1;
        }
        let idx = g.multi_index(flat);
        for a in 0..d {
            let reach = match order[a] {
                0 => 0,
                1 | 2 => 1,
                3 => 2,
                _ => return None,
            };
            if idx[a] < reach || idx[a] + reach >= g.nodes[a] {
                return None;
            }
        }
        let data = self.slice(slice);
        let stencils: Vec<Vec<(isize, f64)>> = (0..d)
            .map(|a| {
                let h = g.spacing(a);
                match order[a] {
                    0 => vec![(0, 1.0)],
                    1 => vec![(-1, -0.5 / h), (1, 0.5 / h)],
                    2 => vec![(-1, 1.0 / (h * h)), (0, -2.0 / (h * h)), (1, 1.0 / (h * h))],
                    _ => {
                        let s = 0.5 / (h * h * h);
                        vec![(-2, -s), (-1, 2.0 * s), (1, -2.0 * s), (2, s)]
                    }
                }
            })
            .collect();
        // tensor product over axes
        let mut acc = 0.0;
        let mut counters = vec![0usize; d];
        loop {
            let mut pos = flat as isize;
            let mut w = 1.0;
            for a in 0..d {
                let (o, c) = stencils[a][counters[a]];
                pos += o * g.stride(a) as isize;
                w *= c;
            }
            acc += w * data[pos as usize];
            let mut a = 0;
            loop {
                if a == d {
                    return Some(acc);
                }
                counters[a] += 1;
                if counters[a] < stencils[a].len() {
                    break;
                }
                counters[a] = 0;
                a += 1;
            }
        }
    }
}

/// Lateral data: values at [`Grid::boundary_nodes`] for every slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl Boundary {
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, &[f64]) -> f64) -> Self {
        let nodes = grid.boundary_nodes();
        let mut values = Vec::with_capacity(nodes.len() * grid.n_slices());
        for k in 0..grid.n_slices() {
            let t = grid.time(k);
            for &i in &nodes {
                values.push(f(t, &grid.point(i)));
            }
        }
        Boundary { nodes, values }
    }

    pub fn from_field(field: &Field) -> Self {
        let nodes = field.grid.boundary_nodes();
        let mut values = Vec::with_capacity(nodes.len() * field.grid.n_slices());
        for k in 0..field.grid.n_slices() {
            for &i in &nodes {
                values.push(field.get(k, i));
            }
        }
        Boundary { nodes, values }
    }

    /// Values in slice-major order over `grid.boundary_nodes()`.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let nodes = grid.boundary_nodes();
        if values.len() != nodes.len() * grid.n_slices() {
            return Err(Error::invalid("boundary data has the wrong length"));
        }
        Ok(Boundary { nodes, values })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    fn slice(&self, k: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Restriction to the boundary of a coarsened grid.
    fn restrict(&self, fine: &Grid, coarse: &Grid) -> Boundary {
        let map: alloc::collections::BTreeMap<usize, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(p, n)| (*n, p))
            .collect();
        let nodes = coarse.boundary_nodes();
        let mut values = Vec::with_capacity(nodes.len() * coarse.n_slices());
        for k in 0..coarse.n_slices() {
            let row = self.slice(2 * k);
            for &c in &nodes {
                let idx: Vec<usize> = coarse.multi_index(c).iter().map(|j| 2 * j).collect();
                values.push(row[map[&fine.flat(&idx)]]);
            }
        }
        Boundary { nodes, values }
    }
}

/// Banded LU without pivoting; rows stored as `band[i * w + (j - i + bw)]`.
struct BandLu {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandLu {
    fn zeros(n: usize, bw: usize) -> Self {
        BandLu {
            n,
            bw,
            band: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = 2 * self.bw + 1;
        &mut self.band[i * w + (j + self.bw - i)]
    }

    fn factor(&mut self, step: usize) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.band[k * w + bw];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::Singular { step, row: k });
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let lik = self.band[i * w + (k + bw - i)] / pivot;
                if lik == 0.0 {
                    continue;
                }
                self.band[i * w + (k + bw - i)] = lik;
                for j in k + 1..=last {
                    let ukj = self.band[k * w + (j + bw - k)];
                    if ukj != 0.0 {
                        self.band[i * w + (j + bw - i)] -= lik * ukj;
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::needless_range_loop)]
    fn solve(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                s -= self.band[i * w + (j + bw - i)] * x[j];
            }
            x[i] = s / self.band[i * w + bw];
        }
    }
}

/// Diffusion and drift stencil of `A^t` on the interior nodes at one time.
struct Level {
    /// `coef[p * width + s]` multiplies `u[node + offsets[s]]`.
    coef: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
}

struct Stencil<'a> {
    spec: &'a ProblemSpec,
    grid: &'a Grid,
    interior: Vec<usize>,
    points: Vec<Vec<f64>>,
    offsets: Vec<isize>,
}

impl<'a> Stencil<'a> {
    fn new(spec: &'a ProblemSpec, grid: &'a Grid) -> Self {
        let d = grid.dim();
        let mut offsets = vec![0isize];
        for a in 0..d {
            let s = grid.stride(a) as isize;
            offsets.push(-s);
            offsets.push(s);
        }
        for a in 0..d {
            for b in a + 1..d {
                let (sa, sb) = (grid.stride(a) as isize, grid.stride(b) as isize);
                offsets.extend([sa + sb, sa - sb, -sa + sb, -sa - sb]);
            }
        }
        let interior = grid.interior_nodes();
        let points = interior.iter().map(|&i| grid.point(i)).collect();
        Stencil {
            spec,
            grid,
            interior,
            points,
            offsets,
        }
    }

    fn width(&self) -> usize {
        self.offsets.len()
    }

    fn bandwidth(&self) -> usize {
        self.offsets
            .iter()
            .map(|o| o.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    fn level(&self, t: f64, check_ellipticity: bool, with_source: bool) -> Result<Level> {
        let spec = self.spec;
        let (d, m) = (spec.dim(), spec.noise_dim());
        let w = self.width();
        let mut coef = vec![0.0; self.interior.len() * w];
        let mut c = vec![0.0; self.interior.len()];
        let mut f = vec![0.0; self.interior.len()];
        let mut b = vec![0.0; d];
        let mut sigma = vec![0.0; d * m];
        let mut a = vec![0.0; d * d];
        let h: Vec<f64> = (0..d).map(|ax| self.grid.spacing(ax)).collect();
        for (p, x) in self.points.iter().enumerate() {
            spec.drift(t, x, &mut b)?;
            spec.diffusion(t, x, &mut sigma)?;
            spec.diffusion_matrix(&sigma, &mut a);
            if check_ellipticity {
                let e = math::symmetric_eigenvalues(&a, d)[0];
                if !(e > 0.0) {
                    return Err(Error::NotElliptic {
                        t,
                        x: x.clone(),
                        eigenvalue: e,
                    });
                }
            }
            let row = &mut coef[p * w..(p + 1) * w];
            for ax in 0..d {
                let diff = a[ax * d + ax] / (h[ax] * h[ax]);
                let adv = b[ax] / (2.0 * h[ax]);
                row[0] -= 2.0 * diff;
                row[1 + 2 * ax] += diff - adv;
                row[2 + 2 * ax] += diff + adv;
            }
            let mut s = 1 + 2 * d;
            for ax in 0..d {
                for bx in ax + 1..d {
                    // 2 a_ab D^ab u with the 4-point cross stencil
                    let q = 2.0 * a[ax * d + bx] / (4.0 * h[ax] * h[bx]);
                    row[s] += q;
                    row[s + 1] -= q;
                    row[s + 2] -= q;
                    row[s + 3] += q;
                    s += 4;
                }
            }
            c[p] = spec.potential(t, x)?;
            if with_source {
                f[p] = spec.source(t, x)?;
            }
        }
        Ok(Level { coef, c, f })
    }
}

/// Fitted reaction `zbar(z)` and source factor `zbar / z`.
#[inline]
fn fitted(z: f64, theta: f64) -> (f64, f64) {
    if z.abs() < 1e-8 {
        // series: zbar = z + (theta - 1/2) z^2 + O(z^3)
        let zbar = z + (theta - 0.5) * z * z;
        return (zbar, 1.0 + (theta - 0.5) * z);
    }
    let e = math::exp(-z);
    let zbar = -math::expm1(-z) / ((1.0 - theta) + theta * e);
    (zbar, zbar / z)
}

/// Largest mesh Peclet number `h |b_i| / (2 a_ii)` over interior nodes at
/// the first and last time; the discrete maximum principle of the implicit
/// scheme needs it to be at most 1.
pub fn max_peclet(spec: &ProblemSpec, grid: &Grid) -> Result<f64> {
    let (d, m) = (spec.dim(), spec.noise_dim());
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * m];
    let mut a = vec![0.0; d * d];
    let mut worst: f64 = 0.0;
    for t in [grid.t1, grid.t2] {
        for i in grid.interior_nodes() {
            let x = grid.point(i);
            spec.drift(t, &x, &mut b)?;
            spec.diffusion(t, &x, &mut sigma)?;
            spec.diffusion_matrix(&sigma, &mut a);
            for ax in 0..d {
                let aii = a[ax * d + ax];
                let pe = grid.spacing(ax) * b[ax].abs() / (2.0 * aii);
                worst = worst.max(if aii > 0.0 { pe } else { f64::INFINITY });
            }
        }
    }
    Ok(worst)
}

/// Backward theta scheme from `terminal` at `t2` down to `t1`, with the
/// lateral nodes pinned to `boundary` on every slice. `theta = 1/2` is
/// Crank-Nicolson, `theta = 1` implicit Euler. The banded factorization is
/// reused across steps when `b, sigma, c` do not depend on time.
pub fn solve_dirichlet(
    spec: &ProblemSpec,
    grid: &Grid,
    terminal: &[f64],
    boundary: &Boundary,
    theta: f64,
) -> Result<Field> {
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::invalid("theta must lie in [1/2, 1]"));
    }
    if grid.dim() != spec.dim() {
        return Err(Error::invalid("grid dimension does not match d"));
    }
    if grid.dim() > 3 {
        return Err(Error::invalid("finite differences support d <= 3"));
    }
    let n = grid.n_space();
    if terminal.len() != n {
        return Err(Error::invalid("terminal slice has the wrong length"));
    }
    if boundary.nodes() != grid.boundary_nodes().as_slice() {
        return Err(Error::invalid("boundary data does not match the grid"));
    }
    let st = Stencil::new(spec, grid);
    let w = st.width();
    let bw = st.bandwidth();
    let dt = grid.dt();
    let autonomous = spec.operator_is_autonomous();
    let with_source = !spec.source_is_zero();

    let mut values = vec![0.0; n * grid.n_slices()];
    let last = grid.n_time;
    values[last * n..].copy_from_slice(terminal);
    let mut next = st.level(grid.t2, true, with_source)?;
    let mut lu: Option<BandLu> = None;
    let mut rhs = vec![0.0; n];

    for k in (0..last).rev() {
        let t = grid.time(k);
        let cur = if autonomous && !with_source {
            None
        } else {
            Some(st.level(t, !autonomous, with_source)?)
        };
        let cur_ref = cur.as_ref().unwrap_or(&next);

        // explicit part from slice k + 1
        let u_next = &values[(k + 1) * n..(k + 2) * n];
        rhs.fill(0.0);
        for (p, &node) in st.interior.iter().enumerate() {
            let row = &next.coef[p * w..(p + 1) * w];
            let mut lu_next = 0.0;
            for (s, off) in st.offsets.iter().enumerate() {
                lu_next += row[s] * u_next[(node as isize + off) as usize];
            }
            let (zb_next, g_next) = fitted(next.c[p] * dt, theta);
            let (_, g_cur) = fitted(cur_ref.c[p] * dt, theta);
            rhs[node] = u_next[node]
                + (1.0 - theta) * (dt * lu_next - zb_next * u_next[node])
                + dt * (theta * g_cur * cur_ref.f[p] + (1.0 - theta) * g_next * next.f[p]);
        }
        for (&node, v) in boundary.nodes().iter().zip(boundary.slice(k)) {
            rhs[node] = *v;
        }

        if lu.is_none() || !autonomous {
            let mut m = BandLu::zeros(n, bw);
            for &node in boundary.nodes() {
                *m.at(node, node) = 1.0;
            }
            for (p, &node) in st.interior.iter().enumerate() {
                let row = &cur_ref.coef[p * w..(p + 1) * w];
                let (zb, _) = fitted(cur_ref.c[p] * dt, theta);
                for (s, off) in st.offsets.iter().enumerate() {
                    let j = (node as isize + off) as usize;
                    *m.at(node, j) -= theta * dt * row[s];
                }
                *m.at(node, node) += 1.0 + theta * zb;
            }
            m.factor(k)?;
            lu = Some(m);
        }
        lu.as_ref().expect("factored").solve(&mut rhs);
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { step: k, row: i });
        }
        values[k * n..(k + 1) * n].copy_from_slice(&rhs);
        if let Some(c) = cur {
            next = c;
        }
    }
    Field::new(grid.clone(), values, FieldSource::FiniteDifference)
}

/// `D_t u + A^t u - c u + f` on the interior nodes of every slice, by
/// central differences in space and second-order differences in time
/// (one-sided on the first and last slice). Boundary nodes are set to 0.
pub fn residual(spec: &ProblemSpec, field: &Field) -> Result<Field> {
    let g = &field.grid;
    if g.n_slices() < 3 {
        return Err(Error::invalid("residual needs at least 3 time slices"));
    }
    let n = g.n_space();
    let st = Stencil::new(spec, g);
    let w = st.width();
    let dt = g.dt();
    let mut out = vec![0.0; n * g.n_slices()];
    let last = g.n_time;
    for k in 0..=last {
        let lv = st.level(g.time(k), false, true)?;
        let u = field.slice(k);
        for (p, &node) in st.interior.iter().enumerate() {
            let dtu = if k == 0 {
                (-3.0 * field.get(0, node) + 4.0 * field.get(1, node) - field.get(2, node))
                    / (2.0 * dt)
            } else if k == last {
                (3.0 * field.get(last, node) - 4.0 * field.get(last - 1, node)
                    + field.get(last - 2, node))
                    / (2.0 * dt)
            } else {
                (field.get(k + 1, node) - field.get(k - 1, node)) / (2.0 * dt)
            };
            let row = &lv.coef[p * w..(p + 1) * w];
            let mut au = 0.0;
            for (s, off) in st.offsets.iter().enumerate() {
                au += row[s] * u[(node as isize + off) as usize];
            }
            out[k * n + node] = dtu + au - lv.c[p] * u[node] + lv.f[p];
        }
    }
    Field::new(g.clone(), out, field.source)
}

/// Monte Carlo budgets for [`localized_cross_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCheckParams {
    /// Paths for the lateral boundary data, per node.
    pub boundary: McParams,
    /// Paths for the independent interior estimates, per node.
    pub interior: McParams,
    pub theta: f64,
    /// Added to the potential of the finite-difference side only.
    pub corrupt_potential: f64,
}

impl CrossCheckParams {
    pub fn new(boundary: McParams, interior: McParams) -> Self {
        CrossCheckParams {
            boundary,
            interior,
            theta: 0.5,
            corrupt_potential: 0.0,
        }
    }
}

/// Lateral data from Monte Carlo at every slice; the terminal slice is `h`
/// when `t2 = T`. Returns the boundary and the largest boundary stderr.
pub fn monte_carlo_boundary(
    spec: &ProblemSpec,
    grid: &Grid,
    params: &McParams,
    exec: &Exec,
) -> Result<(Boundary, f64)> {
    let nodes = grid.boundary_nodes();
    let wanted: Vec<(usize, usize)> = (0..grid.n_slices())
        .flat_map(|k| nodes.iter().map(move |&i| (k, i)))
        .collect();
    let est = fk::estimate_at_nodes(spec, grid, &wanted, params, exec)?;
    let se = est.iter().fold(0.0f64, |m, e| m.max(e.1));
    let values = est.into_iter().map(|e| e.0).collect();
    Ok((Boundary::from_values(grid, values)?, se))
}

/// Terminal slice `h` (or Monte Carlo when `t2 < T`).
pub fn terminal_slice(
    spec: &ProblemSpec,
    grid: &Grid,
    params: &McParams,
    exec: &Exec,
) -> Result<(Vec<f64>, f64)> {
    let last = grid.n_time;
    let wanted: Vec<(usize, usize)> = (0..grid.n_space()).map(|i| (last, i)).collect();
    let est = fk::estimate_at_nodes(spec, grid, &wanted, params, exec)?;
    let se = est.iter().fold(0.0f64, |m, e| m.max(e.1));
    Ok((est.into_iter().map(|e| e.0).collect(), se))
}

/// Interior nodes in the inner half of the box (at least one node deep).
pub fn inner_half_nodes(grid: &Grid) -> Vec<usize> {
    let center = grid.region.center();
    (0..grid.n_space())
        .filter(|&i| {
            if grid.is_boundary(i) {
                return false;
            }
            let x = grid.point(i);
            (0..grid.dim()).all(|a| {
                let half = 0.25 * (grid.region.upper[a] - grid.region.lower[a]);
                (x[a] - center[a]).abs() <= half + 1e-12
            })
        })
        .collect()
}

/// Localization identity: the Dirichlet problem on a box with lateral data
/// taken from the Cauchy solution reproduces the Cauchy solution inside.
///
/// Boundary data come from Monte Carlo; the finite-difference interior is
/// compared at the inner half of the box, on the first and middle slices,
/// against independent Monte Carlo estimates. The allowance is
/// `3 sqrt(se_node^2 + se_boundary^2)` plus the change under one grid
/// coarsening (when the grid can be coarsened).
pub fn localized_cross_check(
    spec: &ProblemSpec,
    grid: &Grid,
    params: &CrossCheckParams,
    exec: &Exec,
) -> Result<BoundCheck> {
    let (boundary, se_b) = monte_carlo_boundary(spec, grid, &params.boundary, exec)?;
    let (terminal, se_t) = terminal_slice(spec, grid, &params.boundary, exec)?;
    let fd_spec = if params.corrupt_potential != 0.0 {
        spec.with_potential_offset(params.corrupt_potential)
    } else {
        spec.clone()
    };
    let fine = solve_dirichlet(&fd_spec, grid, &terminal, &boundary, params.theta)?;
    let coarse = match grid.coarsened() {
        Some(cg) => {
            let cb = boundary.restrict(grid, &cg);
            let ct: Vec<f64> = (0..cg.n_space())
                .map(|i| {
                    let idx: Vec<usize> = cg.multi_index(i).iter().map(|j| 2 * j).collect();
                    terminal[grid.flat(&idx)]
                })
                .collect();
            Some((solve_dirichlet(&fd_spec, &cg, &ct, &cb, params.theta)?, cg))
        }
        None => None,
    };

    let compare = inner_half_nodes(grid);
    let slices = [0usize, grid.n_time / 2];
    let wanted: Vec<(usize, usize)> = slices
        .iter()
        .flat_map(|&k| compare.iter().map(move |&i| (k, i)))
        .collect();
    let interior_params = params
        .interior
        .with_seed(derive_seed_str(params.interior.seed, "interior"));
    let mc = fk::estimate_at_nodes(spec, grid, &wanted, &interior_params, exec)?;

    let mut worst: f64 = 0.0;
    let mut se_node: f64 = 0.0;
    let mut scheme: f64 = 0.0;
    for (&(k, i), (v, se)) in wanted.iter().zip(&mc) {
        let u = fine.get(k, i);
        worst = worst.max((u - v).abs());
        se_node = se_node.max(*se);
        if let Some((cf, cg)) = &coarse {
            let idx = grid.multi_index(i);
            if k % 2 == 0 && idx.iter().all(|j| j % 2 == 0) {
                let ci: Vec<usize> = idx.iter().map(|j| j / 2).collect();
                scheme = scheme.max((u - cf.get(k / 2, cg.flat(&ci))).abs());
            }
        }
    }
    let se_bdry = se_b.max(se_t);
    let tol = 3.0 * math::sqrt(se_node * se_node + se_bdry * se_bdry) + scheme;
    let mut check = BoundCheck::new("localized-cross-check", "localization", worst, 0.0, tol)
        .input("spec", spec.name())
        .input("grid", grid_descriptor(grid))
        .input("boundary_paths", params.boundary.n_paths)
        .input("boundary_steps", params.boundary.n_steps)
        .input("interior_paths", params.interior.n_paths)
        .input("seed", params.boundary.seed)
        .input("theta", params.theta)
        .note(format!(
            "stderr node {se_node:.3e}, boundary {se_bdry:.3e}, scheme {scheme:.3e}"
        ));
    if params.corrupt_potential != 0.0 {
        check = check.note(format!(
            "finite-difference potential offset by {}",
            params.corrupt_potential
        ));
    }
    Ok(check)
}

pub fn grid_descriptor(grid: &Grid) -> String {
    format!(
        "[{:?}, {:?}] nodes {:?} t [{}, {}] steps {}",
        grid.region.lower, grid.region.upper, grid.nodes, grid.t1, grid.t2, grid.n_time
    )
}
