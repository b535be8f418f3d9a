//! `subzero`: config-driven experiments minimising submodular set functions
//! through projected descent on their Lovász extensions.

mod compare;
mod config;
mod error;
mod problems;
mod runner;
mod tracefmt;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "subzero",
    version,
    about = "Projected-descent experiments on Lovász extensions of submodular costs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (cell x seed) of a config; write traces and a summary.
    Run { config: PathBuf },
    /// Parse and validate a config without running anything.
    Validate { config: PathBuf },
    /// Compare two or more trace files.
    Compare {
        #[arg(required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        /// Also write aligned best-so-far curves to this CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// List every problem the [problem] section can name.
    ListProblems,
    /// Write a generic plotting script for trace and curve files.
    PlotStub {
        #[arg(long, default_value = "plot_traces.py")]
        out: PathBuf,
    },
}

fn base_dir(config_path: &Path) -> &Path {
    let parent = config_path.parent().unwrap_or(Path::new("."));
    if parent.as_os_str().is_empty() {
        Path::new(".")
    } else {
        parent
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    match cli.cmd {
        Cmd::Run { config } => {
            let cfg = config::load(&config)?;
            runner::run(&cfg, base_dir(&config))
        }
        Cmd::Validate { config } => {
            let cfg = config::load(&config)?;
            let cells = if cfg.kind == config::Kind::LovaszBench {
                8 * cfg.seeds.len()
            } else {
                cfg.seeds.len()
            };
            println!(
                "ok: {} / {} / {} cells -> {}",
                cfg.kind.name(),
                cfg.problem.name(),
                cells,
                cfg.output_dir.display()
            );
            Ok(0)
        }
        Cmd::Compare { traces, curves } => {
            compare::compare(&traces, curves.as_deref())?;
            Ok(0)
        }
        Cmd::ListProblems => {
            print!("{}", problems::registry_text());
            Ok(0)
        }
        Cmd::PlotStub { out } => {
            std::fs::write(&out, PLOT_STUB).map_err(|e| {
                error::CliError::runtime(format!("cannot write {}: {e}", out.display()))
            })?;
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code().into());
        }
    }
}

const PLOT_STUB: &str = r#"#!/usr/bin/env python3
"""Plot trace or curve CSVs produced by `subzero run` / `subzero compare`.

Usage: python3 plot_traces.py trace-a.csv [trace-b.csv ...]
Each trace plots best_so_far against iter (solid) and, where present,
f_lovasz against iter (dotted). Curve files from `compare --curves`
plot every column against iter.
"""
import csv
import sys

import matplotlib.pyplot as plt

TRACE_HEADER = [
    "iter", "f_lovasz", "f_set_rounded", "best_so_far",
    "queries_cum", "regret_static", "regret_dynamic", "wall_ms",
]


def load(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    return header, rows


def column(header, rows, name):
    idx = header.index(name)
    out = []
    for row in rows:
        out.append(float(row[idx]) if row[idx] else None)
    return out


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    fig, ax = plt.subplots()
    for path in sys.argv[1:]:
        header, rows = load(path)
        iters = column(header, rows, "iter")
        if header == TRACE_HEADER:
            ax.plot(iters, column(header, rows, "best_so_far"), label=f"{path} best")
            lov = column(header, rows, "f_lovasz")
            pairs = [(i, v) for i, v in zip(iters, lov) if v is not None]
            if pairs:
                ax.plot(*zip(*pairs), linestyle=":", label=f"{path} extension")
        else:
            for name in header[1:]:
                ax.plot(iters, column(header, rows, name), label=f"{path} {name}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    ax.legend()
    plt.tight_layout()
    plt.savefig("traces.png", dpi=150)
    print("wrote traces.png")


if __name__ == "__main__":
    main()
"#;
