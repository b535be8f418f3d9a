//! Experiment configuration: a three-section plain-text file parsed as
//! TOML ([experiment], [problem], [solver]), fully validated before any
//! cell runs. Unknown keys are errors so typos surface with the field
//! name; numeric and cross-field rules surface with a section.field path.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use subzero_core::smoothing::OracleVariant;

use crate::error::{CliError, CliResult};
use crate::problems::ProblemSpec;

/// Environment variable that overrides [experiment].output_dir.
pub const OUTPUT_DIR_ENV: &str = "SUBZERO_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Offline,
    OnlineStatic,
    OnlineDynamic,
    ClusterOffline,
    ClusterOnline,
    LovaszBench,
}

impl Kind {
    pub fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "offline" => Kind::Offline,
            "online-static" => Kind::OnlineStatic,
            "online-dynamic" => Kind::OnlineDynamic,
            "cluster-offline" => Kind::ClusterOffline,
            "cluster-online" => Kind::ClusterOnline,
            "lovasz-bench" => Kind::LovaszBench,
            other => {
                return Err(CliError::config(format!(
                    "experiment.kind: unknown kind {other:?} (offline, online-static, \
                     online-dynamic, cluster-offline, cluster-online, lovasz-bench)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Offline => "offline",
            Kind::OnlineStatic => "online-static",
            Kind::OnlineDynamic => "online-dynamic",
            Kind::ClusterOffline => "cluster-offline",
            Kind::ClusterOnline => "cluster-online",
            Kind::LovaszBench => "lovasz-bench",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, Kind::OnlineStatic | Kind::OnlineDynamic | Kind::ClusterOnline)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ZeroOrder,
    Subgradient,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ZeroOrder => "zero-order",
            Method::Subgradient => "subgradient",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Exact,
    Stochastic,
    Taylor,
    LowRank,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Exact => "exact",
            BackendKind::Stochastic => "stochastic",
            BackendKind::Taylor => "taylor",
            BackendKind::LowRank => "lowrank",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Center,
    Empty,
    Full,
}

#[derive(Clone, Debug)]
pub enum Tuning {
    Explicit {
        step: f64,
        mu: Option<f64>,
        iterations: usize,
    },
    /// Offline rates from a target accuracy (and a starting-distance bound).
    TheoremOffline { epsilon: f64, r0: Option<f64> },
    /// Online rates for a fixed horizon; the dynamic comparator's path
    /// length is either measured from the sequence or supplied.
    TheoremOnline {
        iterations: usize,
        p_star: Option<PStar>,
    },
}

#[derive(Clone, Copy, Debug)]
pub enum PStar {
    MeasuredFromPath,
    Value(f64),
}

#[derive(Clone, Debug)]
pub struct SolverSpec {
    pub method: Method,
    pub backend: BackendKind,
    pub rho: f64,
    pub landmarks: Option<usize>,
    pub variant: OracleVariant,
    pub batch: usize,
    pub tuning: Tuning,
    pub trace_stride: usize,
    pub init: Init,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub kind: Kind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub problem: ProblemSpec,
    pub solver: SolverSpec,
}

// --- raw TOML shape -------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    problem: crate::problems::RawProblem,
    solver: RawSolver,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: String,
    seeds: Vec<u64>,
    output_dir: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    method: String,
    backend: Option<String>,
    rho: Option<f64>,
    landmarks: Option<usize>,
    variant: Option<String>,
    batch: Option<usize>,
    mode: Option<String>,
    step: Option<f64>,
    mu: Option<f64>,
    iterations: Option<usize>,
    epsilon: Option<f64>,
    r0: Option<f64>,
    p_star: Option<toml::Value>,
    trace_stride: Option<usize>,
    init: Option<String>,
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(format!("{name} must be positive, got {v}")))
    }
}

fn parse_variant(s: &str) -> CliResult<OracleVariant> {
    Ok(match s {
        "forward" => OracleVariant::Forward,
        "central" => OracleVariant::Central,
        "backward" => OracleVariant::Backward,
        "split" => OracleVariant::OnlineSplit,
        "split-reverse" => OracleVariant::OnlineSplitReverse,
        other => {
            return Err(CliError::config(format!(
                "solver.variant: unknown variant {other:?} (forward, central, backward, \
                 split, split-reverse)"
            )))
        }
    })
}

pub fn load(path: &Path) -> CliResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    // toml reports line/column and the offending field in its message.
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;

    let kind = Kind::parse(&raw.experiment.kind)?;
    if raw.experiment.seeds.is_empty() {
        return Err(CliError::config(
            "experiment.seeds: at least one seed is required",
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &s in &raw.experiment.seeds {
        if !seen.insert(s) {
            return Err(CliError::config(format!(
                "experiment.seeds: seed {s} appears twice"
            )));
        }
    }

    let output_dir = match std::env::var(OUTPUT_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(raw.experiment.output_dir.as_deref().unwrap_or("out")),
    };

    let problem = ProblemSpec::resolve(kind, &raw.problem)?;
    let solver = resolve_solver(kind, &problem, &raw.solver)?;

    Ok(Config {
        kind,
        seeds: raw.experiment.seeds,
        output_dir,
        problem,
        solver,
    })
}

fn resolve_solver(kind: Kind, problem: &ProblemSpec, raw: &RawSolver) -> CliResult<SolverSpec> {
    let method = match raw.method.as_str() {
        "zero-order" => Method::ZeroOrder,
        "subgradient" => Method::Subgradient,
        other => {
            return Err(CliError::config(format!(
                "solver.method: unknown method {other:?} (zero-order, subgradient)"
            )))
        }
    };
    let backend = match raw.backend.as_deref().unwrap_or("exact") {
        "exact" => BackendKind::Exact,
        "stochastic" => BackendKind::Stochastic,
        "taylor" => BackendKind::Taylor,
        "lowrank" => BackendKind::LowRank,
        other => {
            return Err(CliError::config(format!(
                "solver.backend: unknown backend {other:?} (exact, stochastic, taylor, lowrank)"
            )))
        }
    };

    if kind.is_online() {
        if method != Method::ZeroOrder {
            return Err(CliError::config(
                "solver.method: online modes use the zero-order split oracle",
            ));
        }
        if backend != BackendKind::Exact {
            return Err(CliError::config(
                "solver.backend: online modes support the exact backend only",
            ));
        }
    }
    if matches!(backend, BackendKind::Taylor | BackendKind::LowRank) && !problem.has_kernel() {
        return Err(CliError::config(format!(
            "solver.backend: the {} backend needs a kernel problem (two-moons, moving-clusters)",
            backend.name()
        )));
    }
    if method == Method::Subgradient && backend == BackendKind::Stochastic && kind != Kind::LovaszBench
    {
        return Err(CliError::config(
            "solver.backend: the partial-sum backend only defines value estimates; \
             it has no subgradient route (use method = \"zero-order\")",
        ));
    }

    let rho = raw.rho.unwrap_or(0.5);
    if backend == BackendKind::Stochastic || kind == Kind::LovaszBench {
        if !(rho.is_finite() && rho > 0.0 && rho <= 1.0) {
            return Err(CliError::config(format!(
                "solver.rho: sampling fraction must lie in (0, 1], got {rho}"
            )));
        }
    }
    if let Some(m) = raw.landmarks {
        if m == 0 {
            return Err(CliError::config("solver.landmarks: must be at least 1"));
        }
        if let Some(p) = problem.kernel_points() {
            if m > p {
                return Err(CliError::config(format!(
                    "solver.landmarks: {m} exceeds the {p} kernel points"
                )));
            }
        }
    }

    let variant = match raw.variant.as_deref() {
        Some(s) => parse_variant(s)?,
        None => {
            if kind.is_online() {
                OracleVariant::OnlineSplit
            } else {
                OracleVariant::Forward
            }
        }
    };
    if kind.is_online() && !variant.is_online() {
        return Err(CliError::config(
            "solver.variant: online modes need split or split-reverse",
        ));
    }
    if !kind.is_online() && variant.is_online() {
        return Err(CliError::config(
            "solver.variant: split variants only apply to online modes",
        ));
    }

    let batch = raw.batch.unwrap_or(1);
    if batch == 0 {
        return Err(CliError::config("solver.batch: must be at least 1"));
    }
    let trace_stride = raw.trace_stride.unwrap_or(1);
    if trace_stride == 0 {
        return Err(CliError::config("solver.trace_stride: must be at least 1"));
    }

    let init = match raw.init.as_deref().unwrap_or("center") {
        "center" => Init::Center,
        "empty" => Init::Empty,
        "full" => Init::Full,
        other => {
            return Err(CliError::config(format!(
                "solver.init: unknown start {other:?} (center, empty, full)"
            )))
        }
    };

    let mode = raw.mode.as_deref().unwrap_or("explicit");
    let tuning = match (mode, kind.is_online()) {
        ("explicit", _) => {
            let step = positive(
                "solver.step",
                raw.step
                    .ok_or_else(|| CliError::config("solver.step: required in explicit mode"))?,
            )?;
            let iterations = raw.iterations.ok_or_else(|| {
                CliError::config("solver.iterations: required in explicit mode")
            })?;
            // The bench fans out both methods, so its zero-order cells
            // always need mu no matter what [solver].method says.
            let mu_required =
                method == Method::ZeroOrder || kind.is_online() || kind == Kind::LovaszBench;
            let mu = if mu_required {
                Some(positive(
                    "solver.mu",
                    raw.mu.ok_or_else(|| {
                        CliError::config("solver.mu: required for smoothing oracles")
                    })?,
                )?)
            } else {
                raw.mu
            };
            Tuning::Explicit { step, mu, iterations }
        }
        ("theorem", false) => {
            let epsilon = positive(
                "solver.epsilon",
                raw.epsilon.ok_or_else(|| {
                    CliError::config("solver.epsilon: required in theorem mode (offline)")
                })?,
            )?;
            if method == Method::Subgradient {
                return Err(CliError::config(
                    "solver.mode: theorem rates tune the zero-order method",
                ));
            }
            let r0 = raw.r0.map(|v| positive("solver.r0", v)).transpose()?;
            Tuning::TheoremOffline { epsilon, r0 }
        }
        ("theorem", true) => {
            let iterations = raw.iterations.ok_or_else(|| {
                CliError::config("solver.iterations: required in theorem mode (online)")
            })?;
            let p_star = match (&raw.p_star, kind) {
                (None, Kind::OnlineDynamic | Kind::ClusterOnline) => Some(PStar::MeasuredFromPath),
                (None, _) => None,
                (Some(v), _) => Some(parse_p_star(v)?),
            };
            if p_star.is_some() && kind == Kind::OnlineStatic {
                return Err(CliError::config(
                    "solver.p_star: the static tuning takes no path length",
                ));
            }
            if matches!(p_star, Some(PStar::MeasuredFromPath)) {
                if let Some(n) = problem.dimension() {
                    if n > subzero_core::online::COMPARATOR_LIMIT {
                        return Err(CliError::config(format!(
                            "solver.p_star: measuring the comparator path needs n <= {}; \
                             supply a numeric p_star for n = {n}",
                            subzero_core::online::COMPARATOR_LIMIT
                        )));
                    }
                }
            }
            Tuning::TheoremOnline { iterations, p_star }
        }
        (other, _) => {
            return Err(CliError::config(format!(
                "solver.mode: unknown mode {other:?} (explicit, theorem)"
            )))
        }
    };

    Ok(SolverSpec {
        method,
        backend,
        rho,
        landmarks: raw.landmarks,
        variant,
        batch,
        tuning,
        trace_stride,
        init,
    })
}

fn parse_p_star(v: &toml::Value) -> CliResult<PStar> {
    match v {
        toml::Value::String(s) if s == "path" => Ok(PStar::MeasuredFromPath),
        toml::Value::Float(f) if f.is_finite() && *f >= 0.0 => Ok(PStar::Value(*f)),
        toml::Value::Integer(i) if *i >= 0 => Ok(PStar::Value(*i as f64)),
        _ => Err(CliError::config(format!(
            "solver.p_star: expected \"path\" or a non-negative number, got {v}"
        ))),
    }
}
