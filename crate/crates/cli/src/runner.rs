//! Cell execution. A config expands into (method, backend, seed) cells;
//! each cell builds its own instance, owns its RNG streams and trace file,
//! and the summary is written once after all cells join.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use subzero_core::clustering::{
    clustering_accuracy, mutual_info_cost, nystrom_approx, taylor_mutual_info,
};
use subzero_core::lovasz::{ExactExtension, ExtensionSubgradient, StochasticExtension};
use subzero_core::online::{
    derive_dynamic_hyperparams, derive_static_hyperparams, dynamic_regret_bound, minimiser_path,
    path_length, regret_ledger, reverse_drift_penalty, static_regret_bound, OnlineHyperparams,
    OnlineOptions, OnlineProblem, OnlineTrace, COMPARATOR_LIMIT,
};
use subzero_core::optim::{
    derive_offline_hyperparams, estimate_lipschitz, offline_gap_bound, solve_offline, Descent,
    LipschitzMode, SolveOptions, EXACT_LIPSCHITZ_LIMIT,
};
use subzero_core::rng::{stream, StreamDomain};
use subzero_core::setfn::{value_table, SetFunction, SubsetVector};
use subzero_core::smoothing::OracleVariant;
use subzero_core::CubePoint;

use crate::config::{BackendKind, Config, Init, Kind, Method, PStar, Tuning};
use crate::error::{CliError, CliResult};
use crate::tracefmt::{write_trace, TraceRow};

pub const SUMMARY_HEADER: &str = "cell,kind,problem,method,backend,seed,status,rows,\
f_lovasz_best,f_set_best,accuracy,regret_static,regret_dynamic,bound_rhs,reverse_penalty,\
queries_total,wall_ms,error";

/// Fixed probe seed for sampled Lipschitz estimates, so every cell of a
/// config derives the same hyperparameters regardless of its run seed.
const LIPSCHITZ_SEED: u64 = 1799;
const LIPSCHITZ_POINTS: usize = 256;

#[derive(Clone, Copy)]
struct CellPlan {
    method: Method,
    backend: BackendKind,
    seed: u64,
}

struct CellStats {
    rows: usize,
    f_lovasz_best: f64,
    f_set_best: f64,
    accuracy: Option<f64>,
    regret_static: Option<f64>,
    regret_dynamic: Option<f64>,
    bound_rhs: Option<f64>,
    reverse_penalty: Option<f64>,
    queries_total: u64,
    wall_ms: f64,
}

struct CellOutcome {
    name: String,
    plan: CellPlan,
    result: Result<CellStats, String>,
}

pub fn run(config: &Config, base_dir: &Path) -> CliResult<i32> {
    std::fs::create_dir_all(&config.output_dir).map_err(|e| {
        CliError::config(format!(
            "cannot create output directory {}: {e}",
            config.output_dir.display()
        ))
    })?;
    if let Some(cloud) = config.problem.load_cloud(base_dir)? {
        let path = config.output_dir.join("cloud.csv");
        std::fs::write(&path, cloud.to_csv())
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    }

    let plans = expand_cells(config);
    let outcomes: Vec<CellOutcome> = plans
        .par_iter()
        .map(|plan| run_cell(config, base_dir, plan))
        .collect();

    let summary_path = config.output_dir.join("summary.csv");
    write_summary(config, &outcomes, &summary_path)?;

    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    let ok = outcomes.len() - failed;
    println!(
        "summary: {} ({ok} ok, {failed} failed)",
        summary_path.display()
    );
    if let Some(acc) = mean_of(&outcomes, |s| s.accuracy) {
        println!("mean accuracy over ok cells: {acc:.4}");
    }
    Ok(if failed > 0 { 3 } else { 0 })
}

fn expand_cells(config: &Config) -> Vec<CellPlan> {
    match config.kind {
        // The backend study fans out over every gradient route x value
        // backend; the [solver] method/backend fields only set defaults
        // elsewhere.
        Kind::LovaszBench => {
            let mut v = Vec::new();
            for method in [Method::ZeroOrder, Method::Subgradient] {
                for backend in [
                    BackendKind::Exact,
                    BackendKind::Stochastic,
                    BackendKind::Taylor,
                    BackendKind::LowRank,
                ] {
                    for &seed in &config.seeds {
                        v.push(CellPlan {
                            method,
                            backend,
                            seed,
                        });
                    }
                }
            }
            v
        }
        _ => config
            .seeds
            .iter()
            .map(|&seed| CellPlan {
                method: config.solver.method,
                backend: config.solver.backend,
                seed,
            })
            .collect(),
    }
}

fn run_cell(config: &Config, base_dir: &Path, plan: &CellPlan) -> CellOutcome {
    let name = format!(
        "{}-{}-s{}",
        plan.method.name(),
        plan.backend.name(),
        plan.seed
    );
    let trace_path = config.output_dir.join(format!("trace-{name}.csv"));
    let result = execute_cell(config, base_dir, plan, &trace_path).map_err(|e| e.to_string());
    if result.is_err() {
        // Nothing ran to completion; flush the schema so the failed cell
        // still leaves a well-formed (empty) trace behind.
        let _ = write_trace(&trace_path, &[]);
    }
    match &result {
        Ok(s) => {
            let acc = s
                .accuracy
                .map(|a| format!(" accuracy={a:.4}"))
                .unwrap_or_default();
            println!(
                "cell {name}: ok rows={} f_set_best={}{acc}",
                s.rows, s.f_set_best
            );
        }
        Err(e) => println!("cell {name}: failed ({e})"),
    }
    CellOutcome {
        name,
        plan: *plan,
        result,
    }
}

fn execute_cell(
    config: &Config,
    base_dir: &Path,
    plan: &CellPlan,
    trace_path: &Path,
) -> CliResult<CellStats> {
    match config.kind {
        Kind::Offline | Kind::ClusterOffline | Kind::LovaszBench => {
            run_offline_cell(config, base_dir, plan, trace_path)
        }
        Kind::OnlineStatic | Kind::OnlineDynamic | Kind::ClusterOnline => {
            run_online_cell(config, plan, trace_path)
        }
    }
}

fn make_init(init: Init, n: usize) -> CubePoint {
    match init {
        Init::Center => CubePoint::uniform_center(n),
        Init::Empty => CubePoint::vertex(&SubsetVector::empty(n)),
        Init::Full => CubePoint::vertex(&SubsetVector::full(n)),
    }
}

fn lipschitz_value(f: &SetFunction) -> CliResult<f64> {
    let mode = if f.n() <= EXACT_LIPSCHITZ_LIMIT {
        LipschitzMode::Exact
    } else {
        LipschitzMode::Sampled {
            points: LIPSCHITZ_POINTS,
            seed: LIPSCHITZ_SEED,
        }
    };
    Ok(estimate_lipschitz(f, mode)?.value)
}

// --- offline cells --------------------------------------------------------

fn run_offline_cell(
    config: &Config,
    base_dir: &Path,
    plan: &CellPlan,
    trace_path: &Path,
) -> CliResult<CellStats> {
    let instance = config.problem.build_offline(base_dir)?;
    let f = &instance.f;
    let n = f.n();

    // (step, mu, iterations, l0 used by the theorem tuning)
    let (step, mu, iterations, tuned_l0) = match &config.solver.tuning {
        Tuning::Explicit {
            step,
            mu,
            iterations,
        } => (*step, *mu, *iterations, None),
        Tuning::TheoremOffline { epsilon, r0 } => {
            let l0 = lipschitz_value(f)?;
            let r0 = r0.unwrap_or((n as f64).sqrt());
            let hp = derive_offline_hyperparams(n, *epsilon, l0, r0)?;
            (hp.step, Some(hp.mu), hp.iterations, Some(l0))
        }
        Tuning::TheoremOnline { .. } => {
            return Err(CliError::config(
                "online theorem tuning cannot drive an offline run",
            ))
        }
    };

    let mut opts = SolveOptions::new(step, iterations, plan.seed, make_init(config.solver.init, n));
    opts.trace_stride = config.solver.trace_stride;
    let need_mu = || {
        mu.ok_or_else(|| CliError::config("solver.mu: required for smoothing oracles"))
    };

    // Extra drive queries for backends that run against their own oracle
    // (the trace column meters the true cost only).
    let mut drive_queries = 0u64;
    let kernel_ctx = |what: &str| {
        instance.kernel.as_ref().ok_or_else(|| {
            CliError::config(format!("the {what} backend needs a kernel problem"))
        })
    };

    let trace = match (plan.method, plan.backend) {
        (Method::ZeroOrder, BackendKind::Exact) => {
            let obj = ExactExtension::new(f, true);
            solve_offline(
                f,
                &Descent::ZeroOrder {
                    objective: &obj,
                    variant: config.solver.variant,
                    mu: need_mu()?,
                    batch: config.solver.batch,
                },
                &opts,
            )?
        }
        (Method::ZeroOrder, BackendKind::Stochastic) => {
            let obj = StochasticExtension::new(
                f,
                config.solver.rho,
                stream(plan.seed, StreamDomain::Backend, 0),
            )?;
            solve_offline(
                f,
                &Descent::ZeroOrder {
                    objective: &obj,
                    variant: config.solver.variant,
                    mu: need_mu()?,
                    batch: config.solver.batch,
                },
                &opts,
            )?
        }
        (Method::ZeroOrder, BackendKind::Taylor) => {
            let ctx = kernel_ctx("taylor")?;
            let obj = taylor_mutual_info(&ctx.kernel, &ctx.eta)?;
            solve_offline(
                f,
                &Descent::ZeroOrder {
                    objective: &obj,
                    variant: config.solver.variant,
                    mu: need_mu()?,
                    batch: config.solver.batch,
                },
                &opts,
            )?
        }
        (Method::ZeroOrder, BackendKind::LowRank) => {
            let ctx = kernel_ctx("lowrank")?;
            let drive_f = lowrank_cost(config, plan, ctx)?;
            let obj = ExactExtension::new(&drive_f, true);
            let trace = solve_offline(
                f,
                &Descent::ZeroOrder {
                    objective: &obj,
                    variant: config.solver.variant,
                    mu: need_mu()?,
                    batch: config.solver.batch,
                },
                &opts,
            )?;
            drive_queries = drive_f.query_count();
            trace
        }
        // The partial-sum backend estimates values only, so first-order
        // cells fall back to the exact chain subgradient.
        (Method::Subgradient, BackendKind::Exact) | (Method::Subgradient, BackendKind::Stochastic) => {
            let oracle = ExtensionSubgradient::new(f);
            solve_offline(f, &Descent::Subgradient { oracle: &oracle }, &opts)?
        }
        (Method::Subgradient, BackendKind::Taylor) => {
            let ctx = kernel_ctx("taylor")?;
            let oracle = taylor_mutual_info(&ctx.kernel, &ctx.eta)?;
            solve_offline(f, &Descent::Subgradient { oracle: &oracle }, &opts)?
        }
        (Method::Subgradient, BackendKind::LowRank) => {
            let ctx = kernel_ctx("lowrank")?;
            let drive_f = lowrank_cost(config, plan, ctx)?;
            let oracle = ExtensionSubgradient::new(&drive_f);
            let trace = solve_offline(f, &Descent::Subgradient { oracle: &oracle }, &opts)?;
            drive_queries = drive_f.query_count();
            trace
        }
    };

    let mut rows = Vec::with_capacity(trace.len());
    let mut best = f64::INFINITY;
    for k in 0..trace.len() {
        best = best.min(trace.set_values[k]);
        rows.push(TraceRow {
            iter: k,
            f_lovasz: trace.lovasz_values[k],
            f_set_rounded: trace.set_values[k],
            best_so_far: best,
            queries_cum: trace.queries_cumulative[k],
            regret_static: None,
            regret_dynamic: None,
            wall_ms: trace.wall_ms[k],
        });
    }
    write_trace(trace_path, &rows)?;

    let best_rec = trace.best()?;
    let accuracy = match &instance.kernel {
        Some(ctx) => Some(clustering_accuracy(&best_rec.s_hat, &ctx.cloud.truth)?),
        None => None,
    };
    let bound_rhs = match (tuned_l0, plan.method) {
        (Some(l0), Method::ZeroOrder) => {
            Some(offline_gap_bound(n, step, need_mu()?, l0, iterations))
        }
        _ => None,
    };

    Ok(CellStats {
        rows: trace.len(),
        f_lovasz_best: best_rec.f_lovasz_best,
        f_set_best: best_rec.f_set_best,
        accuracy,
        regret_static: None,
        regret_dynamic: None,
        bound_rhs,
        reverse_penalty: None,
        queries_total: f.query_count() + drive_queries,
        wall_ms: trace.wall_ms.last().copied().unwrap_or(0.0),
    })
}

fn lowrank_cost(
    config: &Config,
    plan: &CellPlan,
    ctx: &crate::problems::KernelContext,
) -> CliResult<SetFunction> {
    let p = ctx.kernel.n();
    let landmarks = config.solver.landmarks.unwrap_or((p.div_ceil(4)).max(1));
    if landmarks > p {
        return Err(CliError::config(format!(
            "solver.landmarks: {landmarks} exceeds the {p} kernel points"
        )));
    }
    let nys = nystrom_approx(&ctx.kernel, landmarks, plan.seed)?;
    Ok(mutual_info_cost(Arc::new(nys), ctx.eta.clone())?)
}

// --- online cells ---------------------------------------------------------

fn run_online_cell(config: &Config, plan: &CellPlan, trace_path: &Path) -> CliResult<CellStats> {
    let (iterations, theorem) = match &config.solver.tuning {
        Tuning::Explicit { iterations, .. } => (*iterations, false),
        Tuning::TheoremOnline { iterations, .. } => (*iterations, true),
        Tuning::TheoremOffline { .. } => {
            return Err(CliError::config(
                "offline theorem tuning cannot drive an online run",
            ))
        }
    };
    let rounds = iterations + 1;
    let instance = config.problem.build_online(rounds)?;
    let problem = &instance.problem;
    let n = problem.n();

    let (params, bound_rhs) = if theorem {
        let mode = if n <= EXACT_LIPSCHITZ_LIMIT {
            LipschitzMode::Exact
        } else {
            LipschitzMode::Sampled {
                points: LIPSCHITZ_POINTS,
                seed: LIPSCHITZ_SEED,
            }
        };
        let l0 = problem.sequence_lipschitz(mode)?.value;
        match config.kind {
            Kind::OnlineStatic => (
                derive_static_hyperparams(n, l0, iterations)?,
                Some(static_regret_bound(n, l0, iterations)),
            ),
            _ => {
                let p_star = match &config.solver.tuning {
                    Tuning::TheoremOnline {
                        p_star: Some(PStar::Value(v)),
                        ..
                    } => *v,
                    _ => {
                        if n > COMPARATOR_LIMIT {
                            return Err(CliError::config(format!(
                                "comparator path needs n <= {COMPARATOR_LIMIT}; \
                                 supply a numeric solver.p_star"
                            )));
                        }
                        path_length(&minimiser_path(problem)?).total
                    }
                };
                (
                    derive_dynamic_hyperparams(n, l0, iterations, p_star)?,
                    Some(dynamic_regret_bound(n, l0, iterations, p_star)),
                )
            }
        }
    } else {
        let (step, mu) = match &config.solver.tuning {
            Tuning::Explicit { step, mu, .. } => (*step, *mu),
            _ => unreachable!("explicit branch"),
        };
        let mu = mu
            .ok_or_else(|| CliError::config("solver.mu: required for smoothing oracles"))?;
        (OnlineHyperparams { step, mu }, None)
    };

    let mut opts = OnlineOptions::new(params, plan.seed, make_init(config.solver.init, n));
    opts.variant = config.solver.variant;
    opts.batch = config.solver.batch;
    opts.record_drift = config.solver.variant == OracleVariant::OnlineSplitReverse;

    let trace = subzero_core::online::solve_online(problem, &opts)?;

    let prefix = if n <= COMPARATOR_LIMIT {
        Some(prefix_regrets(problem, &trace)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(trace.rounds());
    let mut best = f64::INFINITY;
    for k in 0..trace.rounds() {
        best = best.min(trace.losses[k]);
        rows.push(TraceRow {
            iter: k,
            f_lovasz: Some(trace.lovasz_values[k]),
            f_set_rounded: trace.losses[k],
            best_so_far: best,
            queries_cum: trace.queries_cumulative[k],
            regret_static: prefix.as_ref().map(|(s, _)| s[k]),
            regret_dynamic: prefix.as_ref().map(|(_, d)| d[k]),
            wall_ms: trace.wall_ms[k],
        });
    }
    write_trace(trace_path, &rows)?;

    let (regret_static, regret_dynamic) = if n <= COMPARATOR_LIMIT {
        let ledger = regret_ledger(problem, &trace)?;
        (Some(ledger.static_lovasz), Some(ledger.dynamic_lovasz))
    } else {
        (None, None)
    };

    let reverse_penalty = if config.solver.variant == OracleVariant::OnlineSplitReverse {
        within_round_drift(problem)?
            .or_else(|| {
                trace
                    .drift_observed
                    .as_ref()
                    .map(|d| d.iter().cloned().fold(0.0f64, f64::max))
            })
            .map(|v| reverse_drift_penalty(v, rounds))
    } else {
        None
    };

    let accuracy = match &instance.truth {
        Some(truth) => {
            let last = trace
                .played_sets
                .last()
                .ok_or_else(|| CliError::runtime("online trace is empty"))?;
            Some(clustering_accuracy(last, truth)?)
        }
        None => None,
    };

    let f_lovasz_best = trace
        .lovasz_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let f_set_best = trace.losses.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(CellStats {
        rows: trace.rounds(),
        f_lovasz_best,
        f_set_best,
        accuracy,
        regret_static,
        regret_dynamic,
        bound_rhs,
        reverse_penalty,
        queries_total: trace.queries_cumulative.last().copied().unwrap_or(0),
        wall_ms: trace.wall_ms.last().copied().unwrap_or(0.0),
    })
}

/// Cumulative set-level regrets after each round: played losses so far
/// minus (best fixed set so far | sum of per-round minima so far).
fn prefix_regrets(
    problem: &OnlineProblem,
    trace: &OnlineTrace,
) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let n = problem.n();
    let mut cumulative = vec![0.0f64; 1 << n];
    let mut played = 0.0;
    let mut round_mins = 0.0;
    let mut stat = Vec::with_capacity(problem.rounds());
    let mut dynam = Vec::with_capacity(problem.rounds());
    for k in 0..problem.rounds() {
        let table = value_table(problem.round(k))?;
        let mut round_min = f64::INFINITY;
        for (mask, &v) in table.iter().enumerate() {
            cumulative[mask] += v;
            round_min = round_min.min(v);
        }
        round_mins += round_min;
        let fixed_min = cumulative.iter().cloned().fold(f64::INFINITY, f64::min);
        played += trace.losses[k];
        stat.push(played - fixed_min);
        dynam.push(played - round_mins);
    }
    Ok((stat, dynam))
}

/// Largest |f_k - f_{k+1/2}| over all sets and rounds, when the ground set
/// is small enough to enumerate.
fn within_round_drift(problem: &OnlineProblem) -> CliResult<Option<f64>> {
    if problem.n() > COMPARATOR_LIMIT {
        return Ok(None);
    }
    let mut v = 0.0f64;
    for k in 0..problem.rounds() {
        let now = value_table(problem.round(k))?;
        let half = value_table(problem.half(k))?;
        for (a, b) in now.iter().zip(&half) {
            v = v.max((a - b).abs());
        }
    }
    Ok(Some(v))
}

// --- summary ---------------------------------------------------------------

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_safe(s: &str) -> String {
    s.replace(',', ";").replace('\n', " ")
}

fn mean_of<F>(outcomes: &[CellOutcome], pick: F) -> Option<f64>
where
    F: Fn(&CellStats) -> Option<f64>,
{
    let values: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().and_then(&pick))
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn write_summary(config: &Config, outcomes: &[CellOutcome], path: &Path) -> CliResult<()> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for o in outcomes {
        let head = format!(
            "{},{},{},{},{},{}",
            o.name,
            config.kind.name(),
            config.problem.name(),
            o.plan.method.name(),
            o.plan.backend.name(),
            o.plan.seed
        );
        match &o.result {
            Ok(s) => text.push_str(&format!(
                "{head},ok,{},{},{},{},{},{},{},{},{},{},\n",
                s.rows,
                s.f_lovasz_best,
                s.f_set_best,
                fmt_opt(s.accuracy),
                fmt_opt(s.regret_static),
                fmt_opt(s.regret_dynamic),
                fmt_opt(s.bound_rhs),
                fmt_opt(s.reverse_penalty),
                s.queries_total,
                s.wall_ms,
            )),
            Err(e) => text.push_str(&format!("{head},failed,0,,,,,,,,,,{}\n", csv_safe(e))),
        }
    }

    let ok = outcomes.iter().filter(|o| o.result.is_ok()).count();
    if ok > 0 {
        let m = |pick: fn(&CellStats) -> Option<f64>| fmt_opt(mean_of(outcomes, pick));
        text.push_str(&format!(
            "mean,{},{},,,,ok:{ok}/{},{},{},{},{},{},{},{},{},{},{},\n",
            config.kind.name(),
            config.problem.name(),
            outcomes.len(),
            m(|s| Some(s.rows as f64)),
            m(|s| Some(s.f_lovasz_best)),
            m(|s| Some(s.f_set_best)),
            m(|s| s.accuracy),
            m(|s| s.regret_static),
            m(|s| s.regret_dynamic),
            m(|s| s.bound_rhs),
            m(|s| s.reverse_penalty),
            m(|s| Some(s.queries_total as f64)),
            m(|s| Some(s.wall_ms)),
        ));
    }

    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
