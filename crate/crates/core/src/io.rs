//! Plain-text artifact formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! format here reads back bit-exactly.
//!
//! Snapshot grid:
//! ```text
//! t n_x n_y x_min x_max y_min y_max
//! u[0,0] u[0,1] ... u[0,n_y-1]
//! ...
//! u[n_x-1,0] ... u[n_x-1,n_y-1]
//! ```
//! One line per x index; the grid's time range is not part of the file.
//!
//! Fronts and isochrones share a CSV layout with header `t,x,y`. Fronts list
//! polyline vertices in order, one polyline after another.
//!
//! Parameter checkpoint:
//! ```text
//! firefront-params 1
//! dims 6 h1 h2 1
//! activation tanh
//! W1 h1 6
//! <h1 lines of 6 values>
//! b1 h1 1
//! ...
//! b3 1 1
//! ```
//! A variational checkpoint starts with `firefront-variational 1`, adds a
//! `prior sigma1 sigma2 mix` line after the activation, then a `mu` line
//! followed by the six blocks of means and a `rho` line followed by the six
//! blocks of pre-scales.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::bayes::{PriorConfig, VariationalParams};
use crate::contour::Polyline;
use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField};
use crate::metrics::IsochroneSet;
use crate::net::{Activation, NetworkParams, NetworkShape};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_f64(tok: &str, path: &str, line: usize) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("`{tok}` is not a number")))
}

fn parse_usize(tok: &str, path: &str, line: usize) -> Result<usize> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("`{tok}` is not a count")))
}

pub fn format_snapshot(t: f64, u: &ScalarField) -> String {
    let g = &u.grid;
    let mut out = format!(
        "{t} {} {} {} {} {} {}\n",
        g.n_x, g.n_y, g.x_min, g.x_max, g.y_min, g.y_max
    );
    for row in u.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a snapshot; `name` labels errors. The returned grid has the unit
/// time range with `n_t = 1`.
pub fn parse_snapshot(text: &str, name: &str) -> Result<(f64, ScalarField)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(name, 1, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 7 {
        return Err(parse_err(name, 1, format!("header needs 7 fields, found {}", h.len())));
    }
    let t = parse_f64(h[0], name, 1)?;
    let (n_x, n_y) = (parse_usize(h[1], name, 1)?, parse_usize(h[2], name, 1)?);
    let b: Vec<f64> = h[3..].iter().map(|s| parse_f64(s, name, 1)).collect::<Result<_>>()?;
    let grid = GridSpec {
        x_min: b[0],
        x_max: b[1],
        y_min: b[2],
        y_max: b[3],
        n_x,
        n_y,
        t_min: 0.0,
        t_max: 1.0,
        n_t: 1,
    };
    grid.validate().map_err(|e| parse_err(name, 1, e.to_string()))?;
    let mut values = Array2::zeros((n_x, n_y));
    let mut i = 0;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if i == n_x {
            return Err(parse_err(name, ln + 1, "more rows than n_x"));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| parse_f64(s, name, ln + 1))
            .collect::<Result<_>>()?;
        if row.len() != n_y {
            return Err(parse_err(
                name,
                ln + 1,
                format!("expected {n_y} values, found {}", row.len()),
            ));
        }
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
        i += 1;
    }
    if i != n_x {
        return Err(parse_err(
            name,
            text.lines().count(),
            format!("expected {n_x} rows, found {i}"),
        ));
    }
    Ok((t, ScalarField { grid, values }))
}

pub fn read_snapshot(path: &Path) -> Result<(f64, ScalarField)> {
    parse_snapshot(&read_text(path)?, &path.display().to_string())
}

/// `t,x,y` rows for the fronts at the given times.
pub fn fronts_csv(times: &[f64], fronts: &[Vec<Polyline>]) -> String {
    let mut out = String::from("t,x,y\n");
    for (t, lines) in times.iter().zip(fronts) {
        for l in lines {
            for (x, y) in &l.points {
                writeln!(out, "{t},{x},{y}").unwrap();
            }
        }
    }
    out
}

pub fn isochrones_csv(set: &IsochroneSet) -> String {
    let mut out = String::from("t,x,y\n");
    for (t, x, y) in set.points() {
        writeln!(out, "{t},{x},{y}").unwrap();
    }
    out
}

pub fn parse_isochrones(text: &str, name: &str) -> Result<IsochroneSet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "t,x,y" => {}
        Some((_, h)) => return Err(parse_err(name, 1, format!("expected header `t,x,y`, found `{h}`"))),
        None => return Err(parse_err(name, 1, "missing header `t,x,y`")),
    }
    let mut points = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                name,
                ln + 1,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let p = (
            parse_f64(cols[0], name, ln + 1)?,
            parse_f64(cols[1], name, ln + 1)?,
            parse_f64(cols[2], name, ln + 1)?,
        );
        if !(p.0.is_finite() && p.1.is_finite() && p.2.is_finite()) {
            return Err(parse_err(name, ln + 1, "non-finite value"));
        }
        points.push(p);
    }
    Ok(IsochroneSet::from_points(points))
}

pub fn load_isochrones(path: &Path) -> Result<IsochroneSet> {
    parse_isochrones(&read_text(path)?, &path.display().to_string())
}

/// ASCII greymap of a field, `x` to the right and `y` up, scaled linearly
/// from the field minimum (black) to its maximum (white).
pub fn pgm(u: &ScalarField) -> String {
    let (nx, ny) = u.values.dim();
    let lo = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P2\n{nx} {ny}\n255\n");
    for j in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|i| {
                (((u.values[[i, j]] - lo) / span) * 255.0)
                    .round()
                    .clamp(0.0, 255.0)
                    .to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn write_blocks(out: &mut String, p: &NetworkParams) {
    for (name, (rows, cols), data) in p.blocks() {
        writeln!(out, "{name} {rows} {cols}").unwrap();
        for r in 0..rows {
            let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
}

fn write_header(out: &mut String, magic: &str, shape: &NetworkShape) {
    let d = shape.layer_dims();
    writeln!(out, "{magic} 1").unwrap();
    writeln!(out, "dims {} {} {} {}", d[0], d[1], d[2], d[3]).unwrap();
    writeln!(out, "activation {}", shape.activation.name()).unwrap();
}

pub fn format_params(p: &NetworkParams) -> String {
    let mut out = String::new();
    write_header(&mut out, "firefront-params", p.shape());
    write_blocks(&mut out, p);
    out
}

pub fn format_variational(phi: &VariationalParams, prior: &PriorConfig) -> String {
    let mut out = String::new();
    write_header(&mut out, "firefront-variational", phi.mu.shape());
    writeln!(out, "prior {} {} {}", prior.sigma1, prior.sigma2, prior.mix).unwrap();
    out.push_str("mu\n");
    write_blocks(&mut out, &phi.mu);
    out.push_str("rho\n");
    write_blocks(&mut out, &phi.rho);
    out
}

/// A parsed checkpoint of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Point(NetworkParams),
    Variational(VariationalParams, PriorConfig),
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    name: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            if !l.trim().is_empty() {
                return Ok((i + 1, l));
            }
        }
        Err(parse_err(self.name, self.last + 1, "unexpected end of file"))
    }

    fn keyword(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (ln, l) = self.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.first() != Some(&key) {
            return Err(parse_err(self.name, ln, format!("expected `{key}`, found `{l}`")));
        }
        Ok((ln, toks[1..].to_vec()))
    }
}

fn read_blocks(lines: &mut Lines<'_>, shape: NetworkShape) -> Result<NetworkParams> {
    let mut p = NetworkParams::zeros(shape);
    let layout: Vec<(&'static str, (usize, usize), usize)> =
        p.blocks().iter().map(|(n, s, d)| (*n, *s, d.len())).collect();
    let mut offset = 0;
    for (name, (rows, cols), len) in layout {
        let (ln, toks) = lines.keyword(name)?;
        let dims: Vec<usize> = toks
            .iter()
            .map(|t| parse_usize(t, lines.name, ln))
            .collect::<Result<_>>()?;
        if dims != [rows, cols] {
            return Err(parse_err(
                lines.name,
                ln,
                format!("{name} must be {rows} x {cols}, found {dims:?}"),
            ));
        }
        for r in 0..rows {
            let (ln, l) = lines.next()?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| parse_f64(t, lines.name, ln))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(parse_err(
                    lines.name,
                    ln,
                    format!("expected {cols} values, found {}", vals.len()),
                ));
            }
            p.as_mut_slice()[offset + r * cols..offset + (r + 1) * cols].copy_from_slice(&vals);
        }
        offset += len;
    }
    if !p.is_finite() {
        return Err(parse_err(lines.name, lines.last, "non-finite parameter"));
    }
    Ok(p)
}

pub fn parse_checkpoint(text: &str, name: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        name,
        last: 0,
    };
    let (ln, magic) = lines.next()?;
    let variational = match magic.trim() {
        "firefront-params 1" => false,
        "firefront-variational 1" => true,
        other => return Err(parse_err(name, ln, format!("unknown checkpoint header `{other}`"))),
    };
    let (ln, dims) = lines.keyword("dims")?;
    let dims: Vec<usize> = dims.iter().map(|t| parse_usize(t, name, ln)).collect::<Result<_>>()?;
    let (ln2, act) = lines.keyword("activation")?;
    let activation = act
        .first()
        .and_then(|a| Activation::parse(a))
        .ok_or_else(|| parse_err(name, ln2, "activation must be `tanh` or `relu`"))?;
    let shape = NetworkShape::from_dims(&dims, activation).map_err(|e| parse_err(name, ln, e.to_string()))?;
    if !variational {
        return Ok(Checkpoint::Point(read_blocks(&mut lines, shape)?));
    }
    let (ln, pr) = lines.keyword("prior")?;
    if pr.len() != 3 {
        return Err(parse_err(name, ln, "prior needs sigma1 sigma2 mix"));
    }
    let prior = PriorConfig {
        sigma1: parse_f64(pr[0], name, ln)?,
        sigma2: parse_f64(pr[1], name, ln)?,
        mix: parse_f64(pr[2], name, ln)?,
    };
    prior.validate().map_err(|e| parse_err(name, ln, e.to_string()))?;
    lines.keyword("mu")?;
    let mu = read_blocks(&mut lines, shape)?;
    lines.keyword("rho")?;
    let rho = read_blocks(&mut lines, shape)?;
    Ok(Checkpoint::Variational(VariationalParams { mu, rho }, prior))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_text(path)?, &path.display().to_string())
}
