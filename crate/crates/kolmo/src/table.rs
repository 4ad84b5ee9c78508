//! CSV files for grids, fields and simulated paths.
//!
//! Grid file (Monte Carlo estimates on a grid): one header line
//!
//! ```text
//! t,x1,..,xd,value,stderr
//! ```
//!
//! then one row per node, time slices in increasing order and nodes in
//! the grid's flat order within a slice. Field files are the same table
//! preceded by a metadata line `# source=FD` (or `MC`, `analytic`); the
//! `stderr` column is 0 where no standard error applies. Both forms are read
//! by [`read_field`], so fields move freely between solvers.
//!
//! Path file: header `path,step,s,x1,..,xd,discount`, one row per path and
//! time step, where `discount` is the running integral `int_t^s c(r, X_r) dr`
//! (the path's weight is `exp(-discount)`).
//!
//! Numbers are written in shortest round-trip form, so reading back gives
//! the same bits.

use std::io::{BufRead, BufReader, Read, Write};

use kolmo_core::fd::FieldSource;
use kolmo_core::{Field, Grid, PathBatch, Region};

use crate::error::{Error, Result};

/// A field together with its per-node standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub field: Field,
    pub stderr: Vec<f64>,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn grid_header(d: usize, lead: &[&str], tail: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

/// Grid format without the source line.
pub fn write_grid<W: Write>(out: W, field: &Field, stderr: Option<&[f64]>) -> Result<()> {
    write_table(out, field, stderr)
}

/// Field format: `# source=..` line followed by the grid table.
pub fn write_field<W: Write>(mut out: W, field: &Field, stderr: Option<&[f64]>) -> Result<()> {
    writeln!(out, "# source={}", field.source.tag())?;
    write_table(out, field, stderr)
}

fn write_table<W: Write>(out: W, field: &Field, stderr: Option<&[f64]>) -> Result<()> {
    let g = &field.grid;
    if let Some(se) = stderr {
        if se.len() != field.values.len() {
            return Err(Error::format("stderr length does not match the field"));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(grid_header(g.dim(), &["t"], &["value", "stderr"]))?;
    let points: Vec<Vec<f64>> = (0..g.n_space()).map(|i| g.point(i)).collect();
    let mut row = Vec::with_capacity(g.dim() + 3);
    for k in 0..g.n_slices() {
        let t = g.time(k);
        for (i, x) in points.iter().enumerate() {
            let n = k * g.n_space() + i;
            row.clear();
            row.push(num(t));
            row.extend(x.iter().map(|v| num(*v)));
            row.push(num(field.values[n]));
            row.push(num(stderr.map_or(0.0, |s| s[n])));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either form; without a source line the field is taken as Monte
/// Carlo output. The grid is rebuilt from the distinct coordinates.
pub fn read_field<R: Read>(input: R) -> Result<GridTable> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let mut source = FieldSource::MonteCarlo;
    let mut head = String::new();
    if let Some(meta) = first.trim().strip_prefix('#') {
        for item in meta.split_whitespace() {
            if let Some(tag) = item.strip_prefix("source=") {
                source = FieldSource::from_tag(tag)
                    .ok_or_else(|| Error::format(format!("unknown field source '{tag}'")))?;
            }
        }
    } else {
        head = first;
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(head.as_bytes().chain(input));
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let d = cols
        .len()
        .checked_sub(3)
        .filter(|d| *d >= 1)
        .ok_or_else(|| Error::format("grid header must be t,x1..xd,value,stderr"))?;
    if cols != grid_header(d, &["t"], &["value", "stderr"]) {
        return Err(Error::format(format!(
            "unexpected grid header '{}'",
            cols.join(",")
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!("bad number '{s}' in row {}", rows.len() + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format("grid file has no rows"));
    }
    let distinct = |col: usize| -> Vec<f64> {
        let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let times = distinct(0);
    let axes: Vec<Vec<f64>> = (1..=d).map(distinct).collect();
    let region = Region::new(
        axes.iter().map(|a| a[0]).collect(),
        axes.iter().map(|a| a[a.len() - 1]).collect(),
    )?;
    let nodes = axes.iter().map(|a| a.len()).collect();
    let grid = Grid::new(
        region,
        nodes,
        times[0],
        times[times.len() - 1],
        times.len() - 1,
    )?;
    let n = grid.n_space() * grid.n_slices();
    if rows.len() != n {
        return Err(Error::format(format!(
            "grid has {n} nodes but the file has {} rows",
            rows.len()
        )));
    }
    let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-9 * scale.max(1.0);
    let t_scale = times[times.len() - 1].abs().max(times[0].abs());
    let mut values = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for (idx, row) in rows.iter().enumerate() {
        let (k, i) = (idx / grid.n_space(), idx % grid.n_space());
        let p = grid.point(i);
        let ok = close(row[0], grid.time(k), t_scale)
            && p.iter().enumerate().all(|(a, x)| {
                let s = grid.region.lower[a].abs().max(grid.region.upper[a].abs());
                close(row[1 + a], *x, s)
            });
        if !ok {
            return Err(Error::format(format!(
                "row {} is not on a uniform grid in slice-major order",
                idx + 1
            )));
        }
        values.push(row[d + 1]);
        stderr.push(row[d + 2]);
    }
    Ok(GridTable {
        field: Field::new(grid, values, source)?,
        stderr,
    })
}

pub fn write_paths<W: Write>(out: W, batch: &PathBatch) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(grid_header(batch.d, &["path", "step", "s"], &["discount"]))?;
    let mut row = Vec::with_capacity(batch.d + 4);
    for p in 0..batch.n_paths {
        for (k, s) in batch.t_grid.iter().enumerate() {
            row.clear();
            row.push(p.to_string());
            row.push(k.to_string());
            row.push(num(*s));
            row.extend(batch.state(p, k).iter().map(|v| num(*v)));
            row.push(num(batch.discount_at(p, k)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of a path file.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub path: usize,
    pub step: usize,
    pub s: f64,
    pub x: Vec<f64>,
    pub discount: f64,
}

pub fn read_paths<R: Read>(input: R) -> Result<Vec<PathRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let d = header
        .len()
        .checked_sub(4)
        .filter(|d| *d >= 1)
        .ok_or_else(|| Error::format("path header must be path,step,s,x1..xd,discount"))?;
    if header.iter().collect::<Vec<_>>() != grid_header(d, &["path", "step", "s"], &["discount"]) {
        return Err(Error::format("unexpected path header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |s: &str| Error::format(format!("bad field '{s}' in path file"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(s));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        out.push(PathRow {
            path: int(&rec[0])?,
            step: int(&rec[1])?,
            s: float(&rec[2])?,
            x: (0..d).map(|a| float(&rec[3 + a])).collect::<Result<_>>()?,
            discount: float(&rec[3 + d])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kolmo_core::problem::catalog;
    use kolmo_core::{Exec, McParams};

    fn grid2() -> Grid {
        Grid::new(
            Region::new(vec![-1.0, 0.0], vec![1.0, 0.3]).unwrap(),
            vec![5, 4],
            0.1,
            0.7,
            3,
        )
        .unwrap()
    }

    #[test]
    fn field_round_trips_bit_exactly() {
        let g = grid2();
        let f = Field::from_fn(&g, FieldSource::FiniteDifference, |t, x| {
            (t * 3.7).sin() + x[0] / 3.0 - x[1] * 1e-17
        })
        .unwrap();
        let se: Vec<f64> = (0..f.values.len()).map(|i| i as f64 / 7.0).collect();
        let mut buf = Vec::new();
        write_field(&mut buf, &f, Some(&se)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# source=FD\nt,x1,x2,value,stderr\n"));
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back.field, f);
        assert_eq!(back.stderr, se);
    }

    #[test]
    fn grid_form_reads_as_monte_carlo() {
        let g = Grid::new(Region::cube(1, 2.0).unwrap(), vec![9], 0.0, 1.0, 4).unwrap();
        let f = Field::from_fn(&g, FieldSource::MonteCarlo, |t, x| t - x[0]).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &f, None).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf).lines().next(),
            Some("t,x1,value,stderr")
        );
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back.field, f);
        assert!(back.stderr.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn rejects_shuffled_rows() {
        let g = Grid::new(Region::cube(1, 1.0).unwrap(), vec![3], 0.0, 1.0, 1).unwrap();
        let f = Field::from_fn(&g, FieldSource::Analytic, |_, x| x[0]).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(2, 3);
        assert!(read_field(lines.join("\n").as_bytes()).is_err());
        assert!(read_field("t,y,value,stderr\n0,0,0,0\n".as_bytes()).is_err());
        assert!(read_field("# source=XX\nt,x1,value,stderr\n0,0,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn paths_round_trip() {
        let spec = catalog::ou_2d();
        let params = McParams::new(6, 5, 11);
        let batch =
            kolmo_core::sde::simulate_paths(&spec, 0.0, &[0.5, -0.2], &params, &Exec::sequential())
                .unwrap();
        let mut buf = Vec::new();
        write_paths(&mut buf, &batch).unwrap();
        let rows = read_paths(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 6 * 6);
        for r in &rows {
            assert_eq!(r.s, batch.t_grid[r.step]);
            assert_eq!(r.x.as_slice(), batch.state(r.path, r.step));
            assert_eq!(r.discount, batch.discount_at(r.path, r.step));
        }
        assert_eq!(rows[0].discount, 0.0);
    }
}
