//! The trace file schema. One row per iterate; a fixed header; floats in
//! shortest round-trip form so identical runs produce identical bytes
//! (wall_ms is the one column allowed to differ between repeats).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const TRACE_HEADER: &str =
    "iter,f_lovasz,f_set_rounded,best_so_far,queries_cum,regret_static,regret_dynamic,wall_ms";

#[derive(Clone, Debug, Default)]
pub struct TraceRow {
    pub iter: usize,
    /// Extension value at recorded rows, empty elsewhere.
    pub f_lovasz: Option<f64>,
    pub f_set_rounded: f64,
    pub best_so_far: f64,
    pub queries_cum: u64,
    /// Cumulative regrets; empty outside online modes (and above the
    /// exhaustive-comparator limit).
    pub regret_static: Option<f64>,
    pub regret_dynamic: Option<f64>,
    pub wall_ms: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> CliResult<()> {
    let file = File::create(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| CliError::runtime(format!("writing {}: {e}", path.display()));
    writeln!(out, "{TRACE_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            fmt_opt(r.f_lovasz),
            r.f_set_rounded,
            r.best_so_far,
            r.queries_cum,
            fmt_opt(r.regret_static),
            fmt_opt(r.regret_dynamic),
            r.wall_ms
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

fn parse_opt(field: &str, path: &Path, line: usize, name: &str) -> CliResult<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| {
        CliError::config(format!(
            "{} line {line}: field {name} is not a number: {field:?}",
            path.display()
        ))
    })
}

pub fn read_trace(path: &Path) -> CliResult<Vec<TraceRow>> {
    let file = File::open(path)
        .map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?
        .unwrap_or_default();
    if header != TRACE_HEADER {
        return Err(CliError::config(format!(
            "{} is not a trace file: header {header:?}, expected {TRACE_HEADER:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::config(format!(
                "{} line {lineno}: expected 8 fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let bad = |name: &str, v: &str| {
            CliError::config(format!(
                "{} line {lineno}: field {name} is not a number: {v:?}",
                path.display()
            ))
        };
        rows.push(TraceRow {
            iter: fields[0].parse().map_err(|_| bad("iter", fields[0]))?,
            f_lovasz: parse_opt(fields[1], path, lineno, "f_lovasz")?,
            f_set_rounded: fields[2]
                .parse()
                .map_err(|_| bad("f_set_rounded", fields[2]))?,
            best_so_far: fields[3].parse().map_err(|_| bad("best_so_far", fields[3]))?,
            queries_cum: fields[4].parse().map_err(|_| bad("queries_cum", fields[4]))?,
            regret_static: parse_opt(fields[5], path, lineno, "regret_static")?,
            regret_dynamic: parse_opt(fields[6], path, lineno, "regret_dynamic")?,
            wall_ms: fields[7].parse().map_err(|_| bad("wall_ms", fields[7]))?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::config(format!(
            "{} holds no rows",
            path.display()
        )));
    }
    Ok(rows)
}
