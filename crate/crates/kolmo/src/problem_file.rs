//! Problem files.
//!
//! A problem file is TOML with a top-level `name` and three sections:
//!
//! ```toml
//! name = "heat-quadratic"
//!
//! [dimensions]
//! d = 1            # state dimension
//! m = 1            # noise dimension
//!
//! [coefficients]
//! drift = ["0"]                        # d entries, optional (zero)
//! diffusion = [["1.4142135623730951"]] # d rows of m entries
//! potential = 1.0                      # optional (zero)
//! source = "0"                         # optional (zero)
//! terminal = { family = "radial_poly", coeffs = [0.0, 1.0] }
//!
//! [constants]
//! T = 1.0          # horizon
//! t0 = 0.0         # optional, default 0
//! c0 = 1.0         # optional, declared lower bound of c
//! q = 1            # optional, weight exponent of P = 1 + |x|^(2q)
//! delta = 1.0      # optional, declared ellipticity constant
//! gamma = 0.0      # optional, zeroth-order shift
//! ```
//!
//! A coefficient is one of
//!
//! * a number;
//! * an expression string over `t, x1..xd` (gradients are symbolic);
//! * `{ expr = "...", gradient = "symbolic" | "central", growth = ... }`,
//!   where `growth` is `"bounded"`, `"linear"`, `"unspecified"` or the
//!   integer degree of polynomial growth;
//! * `{ family = "...", ... }` with the parameters below. Axes are 1-based.
//!
//! | family          | parameters                      |
//! |-----------------|---------------------------------|
//! | `constant`      | `value`                         |
//! | `affine`        | `offset`, `weights` (d numbers) |
//! | `ou_drift`      | `rate`, `mean`, `axis`          |
//! | `linear_growth` | `base`, `slope`                 |
//! | `radial_poly`   | `coeffs` (of `|x|^0, |x|^2, ..`)|
//! | `weight`        | `q`                             |
//! | `tanh`          | `amplitude`, `rate`, `axis`     |
//! | `sine`          | `amplitude`, `frequency`, `axis`|
//!
//! [`write_problem`] followed by [`parse_problem`] reproduces the spec
//! exactly: expressions are written fully parenthesized and numbers in
//! shortest round-trip form.

use std::path::Path;

use kolmo_core::problem::{Family, Growth};
use kolmo_core::{CoefficientField, Expr, ProblemSpec};
use toml::{Table, Value};

use crate::error::{Error, Result};

pub fn read_problem(path: &Path) -> Result<ProblemSpec> {
    let src = std::fs::read_to_string(path)?;
    parse_problem(&src)
}

pub fn write_problem_file(spec: &ProblemSpec, path: &Path) -> Result<()> {
    std::fs::write(path, write_problem(spec)?)?;
    Ok(())
}

pub fn parse_problem(src: &str) -> Result<ProblemSpec> {
    let root: Table = src.parse()?;
    check_keys(
        &root,
        "",
        &["name", "dimensions", "coefficients", "constants"],
    )?;
    let name = match root.get("name") {
        None => "problem".to_string(),
        Some(v) => v
            .as_str()
            .ok_or_else(|| Error::format("name must be a string"))?
            .to_string(),
    };

    let dims = section(&root, "dimensions")?;
    check_keys(dims, "dimensions", &["d", "m"])?;
    let d = uint(dims, "dimensions", "d")?.ok_or_else(|| missing("dimensions", "d"))? as usize;
    let m = uint(dims, "dimensions", "m")?.unwrap_or(d as u64) as usize;

    let coeffs = section(&root, "coefficients")?;
    check_keys(
        coeffs,
        "coefficients",
        &["drift", "diffusion", "potential", "source", "terminal"],
    )?;
    let mut b = ProblemSpec::builder(&name, d, m);
    if let Some(v) = coeffs.get("drift") {
        let items = array(v, "coefficients.drift")?;
        if items.len() != d {
            return Err(Error::format(format!(
                "coefficients.drift needs {d} entries, got {}",
                items.len()
            )));
        }
        let drift = items
            .iter()
            .enumerate()
            .map(|(i, v)| coefficient(v, d, &format!("coefficients.drift[{}]", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        b = b.drift(drift);
    }
    let rows = array(
        coeffs
            .get("diffusion")
            .ok_or_else(|| missing("coefficients", "diffusion"))?,
        "coefficients.diffusion",
    )?;
    if rows.len() != d {
        return Err(Error::format(format!(
            "coefficients.diffusion needs {d} rows, got {}",
            rows.len()
        )));
    }
    let mut diffusion = Vec::with_capacity(d * m);
    for (i, row) in rows.iter().enumerate() {
        let what = format!("coefficients.diffusion[{}]", i + 1);
        let row = array(row, &what)?;
        if row.len() != m {
            return Err(Error::format(format!(
                "{what} needs {m} entries, got {}",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            diffusion.push(coefficient(v, d, &format!("{what}[{}]", j + 1))?);
        }
    }
    b = b.diffusion(diffusion);
    if let Some(v) = coeffs.get("potential") {
        b = b.potential(coefficient(v, d, "coefficients.potential")?);
    }
    if let Some(v) = coeffs.get("source") {
        b = b.source(coefficient(v, d, "coefficients.source")?);
    }
    let h = coeffs
        .get("terminal")
        .ok_or_else(|| missing("coefficients", "terminal"))?;
    b = b.terminal(coefficient(h, d, "coefficients.terminal")?);

    let k = section(&root, "constants")?;
    check_keys(k, "constants", &["T", "t0", "c0", "q", "delta", "gamma"])?;
    let horizon = float(k, "constants", "T")?.ok_or_else(|| missing("constants", "T"))?;
    let t0 = float(k, "constants", "t0")?.unwrap_or(0.0);
    b = b.horizon(t0, horizon);
    b = b.c0(float(k, "constants", "c0")?.unwrap_or(0.0));
    let q = uint(k, "constants", "q")?.unwrap_or(0);
    b = b.q(u32::try_from(q).map_err(|_| Error::format("constants.q is too large"))?);
    b = b.delta(float(k, "constants", "delta")?);
    b = b.gamma(float(k, "constants", "gamma")?.unwrap_or(0.0));
    Ok(b.build()?)
}

pub fn write_problem(spec: &ProblemSpec) -> Result<String> {
    let d = spec.dim();
    let m = spec.noise_dim();
    let mut root = Table::new();
    root.insert("name".into(), Value::String(spec.name().into()));

    let mut dims = Table::new();
    dims.insert("d".into(), Value::Integer(d as i64));
    dims.insert("m".into(), Value::Integer(m as i64));
    root.insert("dimensions".into(), Value::Table(dims));

    let mut coeffs = Table::new();
    coeffs.insert(
        "drift".into(),
        Value::Array(spec.drift_fields().iter().map(coefficient_value).collect()),
    );
    let rows = spec
        .diffusion_fields()
        .chunks(m)
        .map(|row| Value::Array(row.iter().map(coefficient_value).collect()))
        .collect();
    coeffs.insert("diffusion".into(), Value::Array(rows));
    coeffs.insert(
        "potential".into(),
        coefficient_value(spec.potential_field()),
    );
    coeffs.insert("source".into(), coefficient_value(spec.source_field()));
    coeffs.insert("terminal".into(), coefficient_value(spec.terminal_field()));
    root.insert("coefficients".into(), Value::Table(coeffs));

    let mut k = Table::new();
    k.insert("T".into(), Value::Float(spec.horizon()));
    k.insert("t0".into(), Value::Float(spec.t0()));
    k.insert("c0".into(), Value::Float(spec.base_c0()));
    k.insert("q".into(), Value::Integer(spec.q() as i64));
    if let Some(delta) = spec.delta() {
        k.insert("delta".into(), Value::Float(delta));
    }
    if spec.gamma() != 0.0 {
        k.insert("gamma".into(), Value::Float(spec.gamma()));
    }
    root.insert("constants".into(), Value::Table(k));
    Ok(toml::to_string(&root)?)
}

fn coefficient_value(f: &CoefficientField) -> Value {
    if let Some(family) = f.family_spec() {
        return family_value(family);
    }
    let expr = f.expr().to_string();
    let default_growth = if f.expr().as_const().is_some() {
        Growth::Bounded
    } else {
        Growth::Unspecified
    };
    if f.has_analytic_gradient() && f.growth() == default_growth {
        return Value::String(expr);
    }
    let mut t = Table::new();
    t.insert("expr".into(), Value::String(expr));
    let gradient = if f.has_analytic_gradient() {
        "symbolic"
    } else {
        "central"
    };
    t.insert("gradient".into(), Value::String(gradient.into()));
    t.insert(
        "growth".into(),
        match f.growth() {
            Growth::Bounded => Value::String("bounded".into()),
            Growth::Linear => Value::String("linear".into()),
            Growth::Unspecified => Value::String("unspecified".into()),
            Growth::Polynomial(k) => Value::Integer(k as i64),
        },
    );
    Value::Table(t)
}

fn family_value(family: &Family) -> Value {
    let mut t = Table::new();
    t.insert("family".into(), Value::String(family.name().into()));
    let floats = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
    let axis = |a: usize| Value::Integer(a as i64 + 1);
    match family {
        Family::Constant { value } => {
            t.insert("value".into(), Value::Float(*value));
        }
        Family::Affine { offset, weights } => {
            t.insert("offset".into(), Value::Float(*offset));
            t.insert("weights".into(), floats(weights));
        }
        Family::OuDrift {
            rate,
            mean,
            axis: a,
        } => {
            t.insert("rate".into(), Value::Float(*rate));
            t.insert("mean".into(), Value::Float(*mean));
            t.insert("axis".into(), axis(*a));
        }
        Family::LinearGrowth { base, slope } => {
            t.insert("base".into(), Value::Float(*base));
            t.insert("slope".into(), Value::Float(*slope));
        }
        Family::RadialPoly { coeffs } => {
            t.insert("coeffs".into(), floats(coeffs));
        }
        Family::Weight { q } => {
            t.insert("q".into(), Value::Integer(*q as i64));
        }
        Family::Tanh {
            amplitude,
            rate,
            axis: a,
        } => {
            t.insert("amplitude".into(), Value::Float(*amplitude));
            t.insert("rate".into(), Value::Float(*rate));
            t.insert("axis".into(), axis(*a));
        }
        Family::Sine {
            amplitude,
            frequency,
            axis: a,
        } => {
            t.insert("amplitude".into(), Value::Float(*amplitude));
            t.insert("frequency".into(), Value::Float(*frequency));
            t.insert("axis".into(), axis(*a));
        }
    }
    Value::Table(t)
}

fn coefficient(v: &Value, d: usize, what: &str) -> Result<CoefficientField> {
    match v {
        Value::Integer(_) | Value::Float(_) => {
            let c = Expr::Const(number(v, what)?);
            Ok(CoefficientField::from_expr(c, d)?.with_analytic_gradient())
        }
        Value::String(s) => Ok(CoefficientField::parse(s, d)
            .map_err(|e| Error::format(format!("{what}: {e}")))?
            .with_analytic_gradient()),
        Value::Table(t) if t.contains_key("family") => family(t, d, what),
        Value::Table(t) => {
            check_keys(t, what, &["expr", "gradient", "growth"])?;
            let src = t
                .get("expr")
                .and_then(Value::as_str)
                .ok_or_else(|| missing(what, "expr"))?;
            let mut f = CoefficientField::parse(src, d)
                .map_err(|e| Error::format(format!("{what}: {e}")))?;
            match t.get("gradient").map(|g| g.as_str()) {
                None | Some(Some("symbolic")) => f = f.with_analytic_gradient(),
                Some(Some("central")) => {}
                _ => {
                    return Err(Error::format(format!(
                        "{what}.gradient must be \"symbolic\" or \"central\""
                    )))
                }
            }
            if let Some(g) = t.get("growth") {
                let growth = match g {
                    Value::String(s) if s == "bounded" => Growth::Bounded,
                    Value::String(s) if s == "linear" => Growth::Linear,
                    Value::String(s) if s == "unspecified" => Growth::Unspecified,
                    Value::Integer(k) if *k >= 0 => Growth::Polynomial(*k as u32),
                    _ => {
                        return Err(Error::format(format!(
                            "{what}.growth must be bounded, linear, unspecified or a degree"
                        )))
                    }
                };
                f = f.with_growth(growth);
            }
            Ok(f)
        }
        _ => Err(Error::format(format!(
            "{what} must be a number, an expression string or a table"
        ))),
    }
}

fn family(t: &Table, d: usize, what: &str) -> Result<CoefficientField> {
    let name = t
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::format(format!("{what}.family must be a string")))?;
    let f = |key: &str| -> Result<f64> {
        number(
            t.get(key).ok_or_else(|| missing(what, key))?,
            &format!("{what}.{key}"),
        )
    };
    let list = |key: &str| -> Result<Vec<f64>> {
        let what = format!("{what}.{key}");
        array(
            t.get(key)
                .ok_or_else(|| Error::format(format!("{what} is missing")))?,
            &what,
        )?
        .iter()
        .map(|v| number(v, &what))
        .collect()
    };
    let axis = || -> Result<usize> {
        match t.get("axis") {
            None => Ok(0),
            Some(Value::Integer(a)) if *a >= 1 => Ok(*a as usize - 1),
            Some(_) => Err(Error::format(format!(
                "{what}.axis must be an integer >= 1"
            ))),
        }
    };
    let (family, keys): (Family, &[&str]) = match name {
        "constant" => (Family::Constant { value: f("value")? }, &["value"]),
        "affine" => (
            Family::Affine {
                offset: f("offset")?,
                weights: list("weights")?,
            },
            &["offset", "weights"],
        ),
        "ou_drift" => (
            Family::OuDrift {
                rate: f("rate")?,
                mean: f("mean")?,
                axis: axis()?,
            },
            &["rate", "mean", "axis"],
        ),
        "linear_growth" => (
            Family::LinearGrowth {
                base: f("base")?,
                slope: f("slope")?,
            },
            &["base", "slope"],
        ),
        "radial_poly" => (
            Family::RadialPoly {
                coeffs: list("coeffs")?,
            },
            &["coeffs"],
        ),
        "weight" => {
            let q = match t.get("q") {
                Some(Value::Integer(q)) if *q >= 0 => *q as u32,
                _ => return Err(Error::format(format!("{what}.q must be an integer >= 0"))),
            };
            (Family::Weight { q }, &["q"])
        }
        "tanh" => (
            Family::Tanh {
                amplitude: f("amplitude")?,
                rate: f("rate")?,
                axis: axis()?,
            },
            &["amplitude", "rate", "axis"],
        ),
        "sine" => (
            Family::Sine {
                amplitude: f("amplitude")?,
                frequency: f("frequency")?,
                axis: axis()?,
            },
            &["amplitude", "frequency", "axis"],
        ),
        other => return Err(Error::format(format!("{what}: unknown family '{other}'"))),
    };
    let mut allowed = vec!["family"];
    allowed.extend_from_slice(keys);
    check_keys(t, what, &allowed)?;
    Ok(CoefficientField::family(family, d)?)
}

fn section<'a>(root: &'a Table, name: &str) -> Result<&'a Table> {
    root.get(name)
        .ok_or_else(|| Error::format(format!("missing section [{name}]")))?
        .as_table()
        .ok_or_else(|| Error::format(format!("[{name}] must be a table")))
}

fn check_keys(t: &Table, what: &str, allowed: &[&str]) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            let at = if what.is_empty() {
                String::new()
            } else {
                format!(" in {what}")
            };
            return Err(Error::format(format!("unknown key '{k}'{at}")));
        }
    }
    Ok(())
}

fn missing(what: &str, key: &str) -> Error {
    Error::format(format!("{what}.{key} is missing"))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::format(format!("{what} must be an array")))
}

fn number(v: &Value, what: &str) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::format(format!("{what} must be a number"))),
    }
}

fn float(t: &Table, what: &str, key: &str) -> Result<Option<f64>> {
    t.get(key)
        .map(|v| number(v, &format!("{what}.{key}")))
        .transpose()
}

fn uint(t: &Table, what: &str, key: &str) -> Result<Option<u64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(_) => Err(Error::format(format!(
            "{what}.{key} must be a non-negative integer"
        ))),
    }
}
