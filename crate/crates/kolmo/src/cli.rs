//! The `kolmo` command line.
//!
//! Every subcommand takes the problem either as a file (`--problem`) or by
//! catalog name (`--catalog`). JSON goes to stdout unless `--out` is given;
//! CSV outputs always need a path.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kolmo_core::harness::suite::{self, SuiteConfig};
use kolmo_core::problem::catalog;
use kolmo_core::spaces::{self, Cloud, DerivativeSamples, NormVariant};
use kolmo_core::{fd, fk, harness, sde, Exec, Grid, McParams, ProblemSpec, Region};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem_file::read_problem;
use crate::report::{self, ConvergenceJson, EstimateJson, NormJson, ReportJson, SuiteFile};
use crate::table;

#[derive(Debug, Parser)]
#[command(
    name = "kolmo",
    version,
    about = "Feynman-Kac Monte Carlo and finite differences for Kolmogorov backward equations"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo value at a point, or on a grid with --out.
    Estimate(EstimateArgs),
    /// Pathwise Monte Carlo gradient at a point.
    Gradient(PointArgs),
    /// Finite-difference solve on a box with Monte Carlo lateral data.
    Solve(SolveArgs),
    /// Weighted norms of a coefficient or of a field file.
    Norms(NormsArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
    /// Strong convergence of Euler-Maruyama on a nested step ladder.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem file (TOML).
    #[arg(long, conflicts_with = "catalog", required_unless_present = "catalog")]
    pub problem: Option<PathBuf>,
    /// Built-in problem: heat-quadratic, heat-tanh, constant-data, smoothing,
    /// gbm, additive-ou, ou.
    #[arg(long)]
    pub catalog: Option<String>,
}

impl ProblemArgs {
    pub fn load(&self) -> Result<ProblemSpec> {
        match (&self.problem, &self.catalog) {
            (Some(p), _) => read_problem(p),
            (None, Some(name)) => catalog::by_name(name).ok_or_else(|| {
                Error::format(format!(
                    "unknown catalog problem '{name}' (known: {})",
                    catalog::NAMES.join(", ")
                ))
            }),
            (None, None) => Err(Error::format("give --problem or --catalog")),
        }
    }
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = suite::DEFAULT_SEED)]
    pub seed: u64,
    /// Antithetic pairs (needs an even path count).
    #[arg(long)]
    pub antithetic: bool,
}

impl McArgs {
    fn params(&self) -> McParams {
        McParams::new(self.paths, self.steps, self.seed).antithetic(self.antithetic)
    }
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Start time (default t0).
    #[arg(long)]
    pub t: Option<f64>,
    /// Start point, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub x: Vec<f64>,
    /// JSON output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Box as lo:hi per axis, comma separated, e.g. --region=-3:3,-2:2.
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Nodes per axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<usize>,
    /// Time steps between t0 and T.
    #[arg(long, default_value_t = 20)]
    pub n_time: usize,
}

impl GridArgs {
    fn grid(&self, spec: &ProblemSpec) -> Result<Grid> {
        let src = self
            .region
            .as_deref()
            .ok_or_else(|| Error::format("--region is required"))?;
        let region = parse_region(src)?;
        if region.dim() != spec.dim() {
            return Err(Error::format(format!(
                "region has {} axes, problem has d = {}",
                region.dim(),
                spec.dim()
            )));
        }
        let nodes = match self.nodes.len() {
            1 => vec![self.nodes[0]; spec.dim()],
            n if n == spec.dim() => self.nodes.clone(),
            _ => return Err(Error::format("--nodes needs one count or one per axis")),
        };
        Ok(Grid::new(
            region,
            nodes,
            spec.t0(),
            spec.horizon(),
            self.n_time,
        )?)
    }
}

pub fn parse_region(src: &str) -> Result<Region> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in src.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| Error::format(format!("region axis '{part}' is not lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(format!("bad number '{s}' in region")))
        };
        lower.push(parse(lo)?);
        upper.push(parse(hi)?);
    }
    Ok(Region::new(lower, upper)?)
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Start time for a point estimate (default t0).
    #[arg(long)]
    pub t: Option<f64>,
    /// Start point for a point estimate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Output: JSON for a point estimate, grid CSV with --region.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the simulated paths of a point estimate to this CSV.
    #[arg(long)]
    pub dump_paths: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// 0.5 is Crank-Nicolson, 1 implicit Euler.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Paths per lateral boundary node.
    #[arg(long, default_value_t = 4000)]
    pub boundary_paths: usize,
    /// Time steps per boundary path over the full horizon.
    #[arg(long, default_value_t = 40)]
    pub boundary_steps: usize,
    #[arg(long, default_value_t = suite::DEFAULT_SEED)]
    pub seed: u64,
    /// Field CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Standard,
    TripleBar,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefficientArg {
    Terminal,
    Potential,
    Source,
}

#[derive(Debug, Args)]
pub struct NormsArgs {
    /// Field CSV; norms of one slice on the inner half of its grid.
    #[arg(long, conflicts_with_all = ["problem", "catalog"])]
    pub field: Option<PathBuf>,
    /// Slice of --field (default: first).
    #[arg(long, default_value_t = 0)]
    pub slice: usize,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<String>,
    /// Coefficient of the problem to measure.
    #[arg(long, value_enum, default_value_t = CoefficientArg::Terminal)]
    pub coefficient: CoefficientArg,
    /// Time at which the coefficient is evaluated (default t0).
    #[arg(long)]
    pub t: Option<f64>,
    /// Sample box, lo:hi per axis.
    #[arg(long, allow_hyphen_values = true, default_value = "-10:10")]
    pub region: String,
    /// Tensor points per axis of the sample cloud.
    #[arg(long, default_value_t = 201)]
    pub per_axis: usize,
    /// Additional Halton points.
    #[arg(long, default_value_t = 200)]
    pub fill: usize,
    /// Weight exponent (default: the problem's q; 1 for fields).
    #[arg(long)]
    pub q: Option<u32>,
    /// Derivative order.
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    /// Hölder exponent of the top-order seminorm.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Both)]
    pub variant: VariantArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suite configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checks to run, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Append the planted negative controls.
    #[arg(long)]
    pub negative_controls: bool,
    /// Multiplies every path budget.
    #[arg(long)]
    pub path_scale: Option<f64>,
    /// JSON report output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Measure the frozen constants instead of running checks.
    #[arg(long)]
    pub calibrate: bool,
    /// List the checks and controls.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub x: Vec<f64>,
    /// Nested step counts, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "8,16,32,64,128,256,512,1024"
    )]
    pub ladder: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = suite::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn emit_json(value: &impl Serialize, out: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn check_point(spec: &ProblemSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(Error::format(format!(
            "--x has {} coordinates, problem has d = {}",
            x.len(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Runs one parsed command line; returns the process exit status.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let exec = match cli.workers {
        Some(n) => Exec::with_workers(n),
        None => Exec::default(),
    };
    match cli.command {
        Command::Estimate(a) => estimate(a, &exec, stdout),
        Command::Gradient(a) => gradient(a, &exec, stdout),
        Command::Solve(a) => solve(a, &exec, stdout),
        Command::Norms(a) => norms(a, stdout),
        Command::Verify(a) => verify(a, &exec, stdout),
        Command::Convergence(a) => convergence(a, &exec, stdout),
    }
}

fn estimate(a: EstimateArgs, exec: &Exec, stdout: &mut dyn Write) -> Result<i32> {
    let spec = a.problem.load()?;
    let params = a.mc.params();
    if a.grid.region.is_some() {
        if !a.x.is_empty() || a.dump_paths.is_some() {
            return Err(Error::format(
                "--x and --dump-paths apply to point estimates only",
            ));
        }
        let out = a
            .out
            .as_ref()
            .ok_or_else(|| Error::format("grid estimates need --out"))?;
        let grid = a.grid.grid(&spec)?;
        let (values, errors) = fk::estimate_on_grid(&spec, &grid, &params, exec)?;
        let mut w = create(out)?;
        table::write_grid(&mut w, &values, Some(&errors.values))?;
        w.flush()?;
        writeln!(
            stdout,
            "wrote {} nodes to {}",
            values.values.len(),
            out.display()
        )?;
        return Ok(0);
    }
    if a.x.is_empty() {
        return Err(Error::format(
            "give --x for a point estimate or --region for a grid",
        ));
    }
    check_point(&spec, &a.x)?;
    let t = a.t.unwrap_or(spec.t0());
    let e = fk::estimate_value(&spec, t, &a.x, &params, exec)?;
    if let Some(p) = &a.dump_paths {
        let batch = sde::simulate_paths(&spec, t, &a.x, &params, exec)?;
        let mut w = create(p)?;
        table::write_paths(&mut w, &batch)?;
        w.flush()?;
    }
    emit_json(
        &EstimateJson::new(spec.name(), t, &a.x, &e, a.mc.antithetic),
        a.out.as_ref(),
        stdout,
    )?;
    Ok(0)
}

fn gradient(a: PointArgs, exec: &Exec, stdout: &mut dyn Write) -> Result<i32> {
    let spec = a.problem.load()?;
    check_point(&spec, &a.x)?;
    let t = a.t.unwrap_or(spec.t0());
    let e = fk::estimate_gradient(&spec, t, &a.x, &a.mc.params(), exec)?;
    emit_json(
        &EstimateJson::new(spec.name(), t, &a.x, &e, a.mc.antithetic),
        a.out.as_ref(),
        stdout,
    )?;
    Ok(0)
}

fn solve(a: SolveArgs, exec: &Exec, stdout: &mut dyn Write) -> Result<i32> {
    let spec = a.problem.load()?;
    let grid = a.grid.grid(&spec)?;
    let mut params = McParams::new(a.boundary_paths, a.boundary_steps, a.seed);
    params.scale_steps_with_horizon = true;
    let (field, se) = harness::solve_with_mc_boundary(&spec, &grid, &params, a.theta, exec)?;
    let mut w = create(&a.out)?;
    table::write_field(&mut w, &field, None)?;
    w.flush()?;
    writeln!(
        stdout,
        "wrote {} nodes to {} (grid {}, largest boundary stderr {:.3e})",
        field.values.len(),
        a.out.display(),
        fd::grid_descriptor(&grid),
        se
    )?;
    Ok(0)
}

fn norms(a: NormsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let order = a.p;
    let (samples, default_q) = if let Some(path) = &a.field {
        let t = table::read_field(File::open(path)?)?;
        let g = &t.field.grid;
        if a.slice >= g.n_slices() {
            return Err(Error::format(format!(
                "--slice {} out of range (field has {} slices)",
                a.slice,
                g.n_slices()
            )));
        }
        let nodes = fd::inner_half_nodes(g);
        (
            DerivativeSamples::from_grid_field(&t.field, a.slice, &nodes, order)?,
            1,
        )
    } else {
        let spec = ProblemArgs {
            problem: a.problem.clone(),
            catalog: a.catalog.clone(),
        }
        .load()?;
        let region = parse_region(&a.region)?;
        let cloud = Cloud::tensor_with_fill(&region, a.per_axis, a.fill)?;
        let f = match a.coefficient {
            CoefficientArg::Terminal => spec.terminal_field(),
            CoefficientArg::Potential => spec.potential_field(),
            CoefficientArg::Source => spec.source_field(),
        };
        let t = a.t.unwrap_or(spec.t0());
        (
            DerivativeSamples::from_field_expr(f, t, cloud, order)?,
            spec.q(),
        )
    };
    let q = a.q.unwrap_or(default_q);
    let variants: &[NormVariant] = match a.variant {
        VariantArg::Standard => &[NormVariant::Standard],
        VariantArg::TripleBar => &[NormVariant::TripleBar],
        VariantArg::Both => &[NormVariant::Standard, NormVariant::TripleBar],
    };
    let records = variants
        .iter()
        .map(|v| spaces::weighted_norm(&samples, q, order, a.beta, *v).map(|n| NormJson::from(&n)))
        .collect::<kolmo_core::Result<Vec<_>>>()?;
    emit_json(&records, a.out.as_ref(), stdout)?;
    Ok(0)
}

#[derive(Serialize)]
struct CalibrationJson {
    seed: u64,
    schauder_measured: Vec<[f64; 2]>,
    schauder_frozen: Vec<[f64; 2]>,
    bernstein_measured: f64,
    bernstein_frozen: f64,
    kappa_measured: f64,
    kappa_frozen: f64,
}

fn verify(a: VerifyArgs, exec: &Exec, stdout: &mut dyn Write) -> Result<i32> {
    if a.list {
        for (name, c) in suite::CHECKS {
            writeln!(stdout, "{name}\tcriterion {c}")?;
        }
        for (name, c) in suite::CONTROLS {
            writeln!(stdout, "{name}\tcriterion {c}\tcontrol")?;
        }
        return Ok(0);
    }
    let mut config = match &a.config {
        Some(p) => SuiteFile::read(p)?.config(),
        None => SuiteConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(c) = a.checks {
        config.checks = Some(c);
    }
    if a.negative_controls {
        config.negative_controls = true;
    }
    if let Some(s) = a.path_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::format("--path-scale must be positive"));
        }
        config.path_scale = s;
    }
    if a.calibrate {
        let c = suite::calibrate(&config, exec)?;
        let json = CalibrationJson {
            seed: config.seed,
            schauder_measured: c.schauder,
            schauder_frozen: suite::SCHAUDER_CALIBRATION.to_vec(),
            bernstein_measured: c.bernstein,
            bernstein_frozen: suite::BERNSTEIN_CONSTANT,
            kappa_measured: c.kappa,
            kappa_frozen: suite::NORM_KAPPA,
        };
        emit_json(&json, a.report.as_ref(), stdout)?;
        return Ok(0);
    }
    let rep = suite::run_suite(&config, exec)?;
    write!(stdout, "{}", report::summary(&rep))?;
    if let Some(p) = &a.report {
        emit_json(&ReportJson::from(&rep), Some(p), stdout)?;
    }
    Ok(report::exit_code(&rep))
}

fn convergence(a: ConvergenceArgs, exec: &Exec, stdout: &mut dyn Write) -> Result<i32> {
    let spec = a.problem.load()?;
    check_point(&spec, &a.x)?;
    let t = a.t.unwrap_or(spec.t0());
    let r = sde::strong_error(&spec, t, &a.x, &a.ladder, a.paths, a.seed, exec)?;
    emit_json(
        &ConvergenceJson::new(spec.name(), &r),
        a.out.as_ref(),
        stdout,
    )?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_regions() {
        let r = parse_region("-3:3,-2.5:1").unwrap();
        assert_eq!(r.lower, vec![-3.0, -2.5]);
        assert_eq!(r.upper, vec![3.0, 1.0]);
        assert!(parse_region("1:0").is_err());
        assert!(parse_region("-1,1").is_err());
        assert!(parse_region("a:1").is_err());
    }

    #[test]
    fn command_line_shapes() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "kolmo",
            "estimate",
            "--catalog",
            "heat-quadratic",
            "--x",
            "-0.5",
            "--paths",
            "10",
        ])
        .unwrap();
        match cli.command {
            Command::Estimate(a) => assert_eq!(a.x, vec![-0.5]),
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["kolmo", "gradient", "--x", "0"]).is_err());
        assert!(Cli::try_parse_from([
            "kolmo",
            "gradient",
            "--catalog",
            "ou",
            "--problem",
            "p.toml",
            "--x",
            "0,0"
        ])
        .is_err());
    }

    #[test]
    fn small_point_estimate_runs() {
        let cli = Cli::try_parse_from([
            "kolmo",
            "--workers",
            "1",
            "estimate",
            "--catalog",
            "heat-quadratic",
            "--x",
            "1",
            "--paths",
            "2000",
            "--steps",
            "10",
            "--antithetic",
        ])
        .unwrap();
        let mut out = Vec::new();
        assert_eq!(run(cli, &mut out).unwrap(), 0);
        let e: EstimateJson = serde_json::from_slice(&out).unwrap();
        let exact = catalog::closed_form::heat_quadratic(1.0, 1.0, 1.0);
        assert!((e.mean[0] - exact).abs() < 5.0 * e.stderr[0] + 1e-12);
        assert_eq!(e.kind, "value");
    }
}
