//! Trace comparison: per-file finals, gradient-query rates, ratios against
//! the first trace, and an optional aligned best-so-far matrix.

use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::tracefmt::{read_trace, TraceRow};

struct TraceSummary {
    name: String,
    rows: usize,
    final_best: f64,
    final_lovasz: Option<f64>,
    /// Gradient queries per update step: every iteration also spends one
    /// rounding query, even between strided trace rows, so the iter span
    /// is subtracted from the query delta.
    grad_per_iter: Option<f64>,
    queries_total: u64,
    wall_ms: f64,
    curve: Vec<f64>,
}

fn summarise(name: String, rows: &[TraceRow]) -> TraceSummary {
    let last = rows.last().expect("read_trace rejects empty traces");
    let span = last.iter.checked_sub(rows[0].iter).filter(|&t| t > 0);
    let grad_per_iter = span.and_then(|t| {
        let dq = last.queries_cum.checked_sub(rows[0].queries_cum)?;
        let grads = dq.checked_sub(t as u64)?;
        Some(grads as f64 / t as f64)
    });
    TraceSummary {
        name,
        rows: rows.len(),
        final_best: last.best_so_far,
        final_lovasz: last.f_lovasz,
        grad_per_iter,
        queries_total: last.queries_cum,
        wall_ms: last.wall_ms,
        curve: rows.iter().map(|r| r.best_so_far).collect(),
    }
}

/// Distinct short names from file stems, suffixing duplicates.
fn stem_names(paths: &[impl AsRef<Path>]) -> Vec<String> {
    let mut seen = std::collections::HashMap::new();
    paths
        .iter()
        .map(|p| {
            let stem = p
                .as_ref()
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.as_ref().display().to_string());
            let count = seen.entry(stem.clone()).or_insert(0usize);
            *count += 1;
            if *count == 1 {
                stem
            } else {
                format!("{stem}-{count}")
            }
        })
        .collect()
}

pub fn compare(paths: &[impl AsRef<Path>], curves_out: Option<&Path>) -> CliResult<()> {
    if paths.len() < 2 {
        return Err(CliError::config(
            "compare needs at least two trace files",
        ));
    }
    let names = stem_names(paths);
    let mut summaries = Vec::with_capacity(paths.len());
    for (path, name) in paths.iter().zip(names) {
        summaries.push(summarise(name, &read_trace(path.as_ref())?));
    }

    let base = &summaries[0];
    println!("comparing {} traces (ratios against {})", summaries.len(), base.name);
    for s in &summaries {
        let ratio = match (s.grad_per_iter, base.grad_per_iter) {
            (Some(a), Some(b)) if b > 0.0 => format!("{}", a / b),
            _ => "-".to_string(),
        };
        let speedup = if s.wall_ms > 0.0 {
            format!("{:.3}", base.wall_ms / s.wall_ms)
        } else {
            "-".to_string()
        };
        println!(
            "{}: rows={} final_best={} final_lovasz={} grad_per_iter={} \
             queries_total={} wall_ms={:.1} query_ratio={} wall_speedup={}",
            s.name,
            s.rows,
            s.final_best,
            s.final_lovasz.map(|v| v.to_string()).unwrap_or_else(|| "-".to_string()),
            s.grad_per_iter.map(|v| v.to_string()).unwrap_or_else(|| "-".to_string()),
            s.queries_total,
            s.wall_ms,
            ratio,
            speedup,
        );
    }

    if let Some(out) = curves_out {
        write_curves(&summaries, out)?;
        println!("curves: {}", out.display());
    }
    Ok(())
}

/// Aligned best-so-far columns, shorter traces padded with their final
/// value so every curve spans the longest horizon.
fn write_curves(summaries: &[TraceSummary], out: &Path) -> CliResult<()> {
    let rows = summaries.iter().map(|s| s.curve.len()).max().unwrap_or(0);
    let mut text = String::from("iter");
    for s in summaries {
        text.push(',');
        text.push_str(&s.name);
    }
    text.push('\n');
    for k in 0..rows {
        text.push_str(&k.to_string());
        for s in summaries {
            let v = *s.curve.get(k).unwrap_or_else(|| {
                s.curve.last().expect("read_trace rejects empty traces")
            });
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    std::fs::write(out, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))
}
