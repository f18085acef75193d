//! Line-oriented text formats.
//!
//! Instance files:
//!
//! ```text
//! # comment
//! n 3
//! h 0 1.0
//! e 0 1 -0.4
//! ```
//!
//! `e i i v` sets a diagonal entry (default 1). Edge-parameter files hold
//! `g i j value` and `z i j value` records for directed edges `{i,j}`.
//! Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::decomposition::EdgeParams;
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::model::{QuadraticProblem, RawProblem};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(idx, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (idx + 1, body.split_whitespace().collect()))
    })
}

pub fn parse_problem(text: &str) -> Result<RawProblem> {
    let mut n: Option<usize> = None;
    let mut h: Vec<Option<f64>> = Vec::new();
    let mut entries: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();

    for (line, toks) in content_lines(text) {
        let mut it = toks.iter().copied();
        let kind = it.next().unwrap_or_default();
        if kind != "n" && n.is_none() {
            return Err(parse_err(line, "expected `n <count>` header first"));
        }
        let check = |v: usize| -> Result<usize> {
            let count = n.unwrap_or(0);
            if v >= count {
                Err(parse_err(line, format!("vertex {v} out of range (n = {count})")))
            } else {
                Ok(v)
            }
        };
        match kind {
            "n" => {
                if n.is_some() {
                    return Err(parse_err(line, "duplicate `n` header"));
                }
                let count: usize = field(it.next(), line, "vertex count")?;
                n = Some(count);
                h = vec![None; count];
            }
            "h" => {
                let i = check(field(it.next(), line, "vertex")?)?;
                let value: f64 = field(it.next(), line, "value")?;
                if h[i].replace(value).is_some() {
                    return Err(parse_err(line, format!("duplicate h entry for vertex {i}")));
                }
            }
            "e" => {
                let i = check(field(it.next(), line, "vertex")?)?;
                let j = check(field(it.next(), line, "vertex")?)?;
                let value: f64 = field(it.next(), line, "value")?;
                let key = (i.min(j), i.max(j));
                match entries.get(&key) {
                    Some(&(prev, _)) if prev != value => {
                        return Err(parse_err(
                            line,
                            format!(
                                "entry ({}, {}) = {value} conflicts with earlier value {prev}",
                                key.0, key.1
                            ),
                        ));
                    }
                    Some(_) => {}
                    None => {
                        entries.insert(key, (value, line));
                    }
                }
            }
            other => return Err(parse_err(line, format!("unknown record `{other}`"))),
        }
        if it.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
    }

    let n = n.ok_or_else(|| parse_err(0, "missing `n <count>` header"))?;
    for i in 0..n {
        entries.entry((i, i)).or_insert((1.0, 0));
    }
    Ok(RawProblem {
        n,
        entries: entries.into_iter().map(|((i, j), (v, _))| (i, j, v)).collect(),
        h: h.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
    })
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<RawProblem> {
    parse_problem(&fs::read_to_string(path)?)
}

pub fn format_raw_problem(raw: &RawProblem) -> String {
    let mut out = format!("n {}\n", raw.n);
    for (i, v) in raw.h.iter().enumerate() {
        let _ = writeln!(out, "h {i} {}", fmt_f64(*v));
    }
    for &(i, j, v) in &raw.entries {
        if i == j && v == 1.0 {
            continue;
        }
        let _ = writeln!(out, "e {i} {j} {}", fmt_f64(v));
    }
    out
}

pub fn format_problem(p: &QuadraticProblem) -> String {
    format_raw_problem(&p.to_raw())
}

pub fn save_problem(path: impl AsRef<Path>, p: &QuadraticProblem) -> Result<()> {
    fs::write(path, format_problem(p))?;
    Ok(())
}

/// `g`/`z` records for every directed edge, in arc order.
pub fn format_edge_params(p: &QuadraticProblem, params: &EdgeParams) -> String {
    let mut out = String::new();
    for id in 0..p.num_arcs() {
        let (i, j) = p.arc(id);
        let _ = writeln!(out, "g {i} {j} {}", fmt_f64(params.gamma[id]));
    }
    for id in 0..p.num_arcs() {
        let (i, j) = p.arc(id);
        let _ = writeln!(out, "z {i} {j} {}", fmt_f64(params.z[id]));
    }
    out
}

/// Reads `g`/`z` records. Every directed edge needs a `g` record; missing `z`
/// records default to 0.
pub fn parse_edge_params(p: &QuadraticProblem, text: &str) -> Result<EdgeParams> {
    let mut gamma = vec![None; p.num_arcs()];
    let mut z = vec![0.0; p.num_arcs()];
    for (line, toks) in content_lines(text) {
        let mut it = toks.iter().copied();
        let kind = it.next().unwrap_or_default();
        if kind != "g" && kind != "z" {
            return Err(parse_err(line, format!("unknown record `{kind}`")));
        }
        let i: usize = field(it.next(), line, "vertex")?;
        let j: usize = field(it.next(), line, "vertex")?;
        let value: f64 = field(it.next(), line, "value")?;
        if it.next().is_some() {
            return Err(parse_err(line, "trailing tokens"));
        }
        let id = p
            .arc_id(i, j)
            .ok_or_else(|| parse_err(line, format!("({i}, {j}) is not an edge")))?;
        if kind == "g" {
            gamma[id] = Some(value);
        } else {
            z[id] = value;
        }
    }
    let gamma = gamma
        .into_iter()
        .enumerate()
        .map(|(id, g)| {
            g.ok_or_else(|| {
                let (from, to) = p.arc(id);
                Error::MissingEdgeValue { from, to }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EdgeParams::new(p, gamma, z)
}

pub fn load_edge_params(p: &QuadraticProblem, path: impl AsRef<Path>) -> Result<EdgeParams> {
    parse_edge_params(p, &fs::read_to_string(path)?)
}

/// One CSV line per trace row: `t, max|Δγ|, max|Δz|, residual, illposed`,
/// followed by `tick, activated, staleness` for asynchronous runs.
pub fn format_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for row in &trace.rows {
        let _ = write!(
            out,
            "{}, {}, {}, {}, {}",
            row.t,
            fmt_f64(row.delta_gamma),
            fmt_f64(row.delta_z),
            fmt_f64(row.residual),
            u8::from(row.ill_posed)
        );
        if let Some(a) = &row.schedule {
            let _ = write!(out, ", {}, {}, {}", a.tick, a.activated, a.max_staleness);
        }
        out.push('\n');
    }
    out
}

pub fn save_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    fs::write(path, format_trace(trace))?;
    Ok(())
}
