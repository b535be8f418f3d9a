//! Named problem registry: every instance the runner can build, resolved
//! from the [problem] config section with kind-specific parameter checks.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use subzero_core::clustering::{
    label_priors, moving_clusters, mutual_info_cost, rbf_kernel, two_moons, KernelMatrix,
    PointCloud,
};
use subzero_core::online::OnlineProblem;
use subzero_core::setfn::{ConcaveMap, SetFunction};

use crate::config::Kind;
use crate::error::{CliError, CliResult};

/// Loose union of every recognised [problem] key; kinds reject the keys
/// they do not take so typos fail with the field name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProblem {
    kind: String,
    n: Option<usize>,
    weight: Option<f64>,
    scale: Option<f64>,
    weights: Option<Vec<f64>>,
    amplitude: Option<f64>,
    period: Option<f64>,
    points: Option<usize>,
    noise: Option<f64>,
    labelled: Option<usize>,
    shift: Option<f64>,
    sigma_sq: Option<f64>,
    data_seed: Option<u64>,
    cloud_csv: Option<String>,
}

impl RawProblem {
    fn set_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.n.is_some() {
            v.push("n");
        }
        if self.weight.is_some() {
            v.push("weight");
        }
        if self.scale.is_some() {
            v.push("scale");
        }
        if self.weights.is_some() {
            v.push("weights");
        }
        if self.amplitude.is_some() {
            v.push("amplitude");
        }
        if self.period.is_some() {
            v.push("period");
        }
        if self.points.is_some() {
            v.push("points");
        }
        if self.noise.is_some() {
            v.push("noise");
        }
        if self.labelled.is_some() {
            v.push("labelled");
        }
        if self.shift.is_some() {
            v.push("shift");
        }
        if self.sigma_sq.is_some() {
            v.push("sigma_sq");
        }
        if self.data_seed.is_some() {
            v.push("data_seed");
        }
        if self.cloud_csv.is_some() {
            v.push("cloud_csv");
        }
        v
    }
}

fn check_allowed(kind: &str, raw: &RawProblem, allowed: &[&str]) -> CliResult<()> {
    for f in raw.set_fields() {
        if !allowed.contains(&f) {
            return Err(CliError::config(format!(
                "problem.{f}: not a parameter of {kind:?}"
            )));
        }
    }
    Ok(())
}

fn need_n(raw: &RawProblem, min: usize) -> CliResult<usize> {
    let n = raw
        .n
        .ok_or_else(|| CliError::config("problem.n: required"))?;
    if n < min {
        return Err(CliError::config(format!(
            "problem.n: need at least {min}, got {n}"
        )));
    }
    Ok(n)
}

fn finite_pos(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(format!("{name} must be positive, got {v}")))
    }
}

/// Where a clustering instance's points come from.
#[derive(Clone, Debug)]
pub enum CloudSource {
    Generated {
        points: usize,
        noise: f64,
        labelled: usize,
        data_seed: u64,
    },
    CsvFile(String),
}

#[derive(Clone, Debug)]
pub enum ProblemSpec {
    PathCut {
        n: usize,
        weight: f64,
    },
    CycleCut {
        n: usize,
        weight: f64,
    },
    StarCut {
        n: usize,
        weight: f64,
    },
    ConcaveCard {
        n: usize,
        scale: f64,
    },
    Modular {
        weights: Vec<f64>,
    },
    RotatingModular {
        n: usize,
    },
    ScaledCutDrift {
        n: usize,
        amplitude: f64,
        period: f64,
    },
    AnchoredDriftModular {
        n: usize,
        amplitude: f64,
        period: f64,
    },
    TwoMoons {
        source: CloudSource,
        sigma_sq: f64,
    },
    MovingClusters {
        points: usize,
        noise: f64,
        labelled: usize,
        shift: f64,
        sigma_sq: f64,
        data_seed: u64,
    },
}

/// A built offline instance: the cost oracle plus, for clustering
/// problems, the kernel artefacts the surrogate backends reuse.
pub struct OfflineInstance {
    pub f: SetFunction,
    pub kernel: Option<KernelContext>,
}

pub struct KernelContext {
    pub kernel: Arc<KernelMatrix>,
    pub eta: Vec<f64>,
    pub cloud: PointCloud,
}

pub struct OnlineInstance {
    pub problem: OnlineProblem,
    /// Ground-truth cluster labels, present for clustering sequences.
    pub truth: Option<Vec<bool>>,
}

impl ProblemSpec {
    pub fn resolve(kind: Kind, raw: &RawProblem) -> CliResult<Self> {
        let spec = match raw.kind.as_str() {
            "path-cut" => {
                check_allowed("path-cut", raw, &["n", "weight"])?;
                ProblemSpec::PathCut {
                    n: need_n(raw, 2)?,
                    weight: finite_pos("problem.weight", raw.weight.unwrap_or(1.0))?,
                }
            }
            "cycle-cut" => {
                check_allowed("cycle-cut", raw, &["n", "weight"])?;
                ProblemSpec::CycleCut {
                    n: need_n(raw, 3)?,
                    weight: finite_pos("problem.weight", raw.weight.unwrap_or(1.0))?,
                }
            }
            "star-cut" => {
                check_allowed("star-cut", raw, &["n", "weight"])?;
                ProblemSpec::StarCut {
                    n: need_n(raw, 2)?,
                    weight: finite_pos("problem.weight", raw.weight.unwrap_or(1.0))?,
                }
            }
            "concave-card" => {
                check_allowed("concave-card", raw, &["n", "scale"])?;
                ProblemSpec::ConcaveCard {
                    n: need_n(raw, 1)?,
                    scale: finite_pos("problem.scale", raw.scale.unwrap_or(1.0))?,
                }
            }
            "modular" => {
                check_allowed("modular", raw, &["weights"])?;
                let weights = raw
                    .weights
                    .clone()
                    .ok_or_else(|| CliError::config("problem.weights: required"))?;
                if weights.is_empty() {
                    return Err(CliError::config(
                        "problem.weights: need at least one weight",
                    ));
                }
                if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
                    return Err(CliError::config(format!(
                        "problem.weights: weights must be finite, got {w}"
                    )));
                }
                ProblemSpec::Modular { weights }
            }
            "rotating-modular" => {
                check_allowed("rotating-modular", raw, &["n"])?;
                ProblemSpec::RotatingModular { n: need_n(raw, 2)? }
            }
            "scaled-cut-drift" => {
                check_allowed("scaled-cut-drift", raw, &["n", "amplitude", "period"])?;
                let amplitude = raw.amplitude.unwrap_or(0.5);
                if !(amplitude.is_finite() && (0.0..1.0).contains(&amplitude)) {
                    return Err(CliError::config(format!(
                        "problem.amplitude: need a value in [0, 1) to keep the cut \
                         weights positive, got {amplitude}"
                    )));
                }
                ProblemSpec::ScaledCutDrift {
                    n: need_n(raw, 2)?,
                    amplitude,
                    period: finite_pos("problem.period", raw.period.unwrap_or(7.0))?,
                }
            }
            "anchored-drift-modular" => {
                check_allowed("anchored-drift-modular", raw, &["n", "amplitude", "period"])?;
                let amplitude = raw.amplitude.unwrap_or(0.3);
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(CliError::config(format!(
                        "problem.amplitude: must be non-negative, got {amplitude}"
                    )));
                }
                ProblemSpec::AnchoredDriftModular {
                    n: need_n(raw, 3)?,
                    amplitude,
                    period: finite_pos("problem.period", raw.period.unwrap_or(7.0))?,
                }
            }
            "two-moons" => {
                let sigma_sq = finite_pos("problem.sigma_sq", raw.sigma_sq.unwrap_or(0.05))?;
                let source = if let Some(path) = &raw.cloud_csv {
                    check_allowed("two-moons (from CSV)", raw, &["cloud_csv", "sigma_sq"])?;
                    CloudSource::CsvFile(path.clone())
                } else {
                    check_allowed(
                        "two-moons",
                        raw,
                        &["points", "noise", "labelled", "sigma_sq", "data_seed"],
                    )?;
                    let points = raw
                        .points
                        .ok_or_else(|| CliError::config("problem.points: required"))?;
                    if points < 2 {
                        return Err(CliError::config(format!(
                            "problem.points: need at least 2, got {points}"
                        )));
                    }
                    let labelled = raw.labelled.unwrap_or(0);
                    if labelled > points {
                        return Err(CliError::config(format!(
                            "problem.labelled: cannot reveal {labelled} of {points} labels"
                        )));
                    }
                    let noise = raw.noise.unwrap_or(0.05);
                    if !(noise.is_finite() && noise >= 0.0) {
                        return Err(CliError::config(format!(
                            "problem.noise: must be non-negative, got {noise}"
                        )));
                    }
                    CloudSource::Generated {
                        points,
                        noise,
                        labelled,
                        data_seed: raw.data_seed.unwrap_or(7),
                    }
                };
                ProblemSpec::TwoMoons { source, sigma_sq }
            }
            "moving-clusters" => {
                check_allowed(
                    "moving-clusters",
                    raw,
                    &["points", "noise", "labelled", "shift", "sigma_sq", "data_seed"],
                )?;
                let points = raw
                    .points
                    .ok_or_else(|| CliError::config("problem.points: required"))?;
                if points < 2 {
                    return Err(CliError::config(format!(
                        "problem.points: need at least 2, got {points}"
                    )));
                }
                let labelled = raw.labelled.unwrap_or(0);
                if labelled > points {
                    return Err(CliError::config(format!(
                        "problem.labelled: cannot reveal {labelled} of {points} labels"
                    )));
                }
                let noise = raw.noise.unwrap_or(0.05);
                if !(noise.is_finite() && noise >= 0.0) {
                    return Err(CliError::config(format!(
                        "problem.noise: must be non-negative, got {noise}"
                    )));
                }
                let shift = raw.shift.unwrap_or(0.02);
                if !shift.is_finite() {
                    return Err(CliError::config(format!(
                        "problem.shift: must be finite, got {shift}"
                    )));
                }
                ProblemSpec::MovingClusters {
                    points,
                    noise,
                    labelled,
                    shift,
                    sigma_sq: finite_pos("problem.sigma_sq", raw.sigma_sq.unwrap_or(0.05))?,
                    data_seed: raw.data_seed.unwrap_or(7),
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "problem.kind: unknown problem {other:?} (run `subzero list-problems`)"
                )))
            }
        };

        let compatible: &[Kind] = match &spec {
            ProblemSpec::PathCut { .. }
            | ProblemSpec::CycleCut { .. }
            | ProblemSpec::StarCut { .. }
            | ProblemSpec::ConcaveCard { .. }
            | ProblemSpec::Modular { .. } => &[Kind::Offline],
            ProblemSpec::RotatingModular { .. }
            | ProblemSpec::ScaledCutDrift { .. }
            | ProblemSpec::AnchoredDriftModular { .. } => {
                &[Kind::OnlineStatic, Kind::OnlineDynamic]
            }
            ProblemSpec::TwoMoons { .. } => &[Kind::ClusterOffline, Kind::LovaszBench],
            ProblemSpec::MovingClusters { .. } => &[Kind::ClusterOnline],
        };
        if !compatible.contains(&kind) {
            let names: Vec<&str> = compatible.iter().map(|k| k.name()).collect();
            return Err(CliError::config(format!(
                "problem.kind: {} does not fit experiment kind {} (expected {})",
                spec.name(),
                kind.name(),
                names.join(" or ")
            )));
        }
        Ok(spec)
    }

    pub fn name(&self) -> String {
        match self {
            ProblemSpec::PathCut { n, .. } => format!("path-cut-n{n}"),
            ProblemSpec::CycleCut { n, .. } => format!("cycle-cut-n{n}"),
            ProblemSpec::StarCut { n, .. } => format!("star-cut-n{n}"),
            ProblemSpec::ConcaveCard { n, .. } => format!("concave-card-n{n}"),
            ProblemSpec::Modular { weights } => format!("modular-n{}", weights.len()),
            ProblemSpec::RotatingModular { n } => format!("rotating-modular-n{n}"),
            ProblemSpec::ScaledCutDrift { n, .. } => format!("scaled-cut-drift-n{n}"),
            ProblemSpec::AnchoredDriftModular { n, .. } => {
                format!("anchored-drift-modular-n{n}")
            }
            ProblemSpec::TwoMoons { source, .. } => match source {
                CloudSource::Generated { points, .. } => format!("two-moons-p{points}"),
                CloudSource::CsvFile(_) => "two-moons-csv".to_string(),
            },
            ProblemSpec::MovingClusters { points, .. } => {
                format!("moving-clusters-p{points}")
            }
        }
    }

    pub fn has_kernel(&self) -> bool {
        matches!(
            self,
            ProblemSpec::TwoMoons { .. } | ProblemSpec::MovingClusters { .. }
        )
    }

    /// Ground-set size for generated kernel problems (unknown for CSV-fed
    /// clouds until load time).
    pub fn kernel_points(&self) -> Option<usize> {
        match self {
            ProblemSpec::TwoMoons {
                source: CloudSource::Generated { points, .. },
                ..
            } => Some(*points),
            ProblemSpec::MovingClusters { points, .. } => Some(*points),
            _ => None,
        }
    }

    /// Ground-set size when it is known before building (CSV clouds are
    /// sized at load time).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            ProblemSpec::PathCut { n, .. }
            | ProblemSpec::CycleCut { n, .. }
            | ProblemSpec::StarCut { n, .. }
            | ProblemSpec::ConcaveCard { n, .. }
            | ProblemSpec::RotatingModular { n }
            | ProblemSpec::ScaledCutDrift { n, .. }
            | ProblemSpec::AnchoredDriftModular { n, .. } => Some(*n),
            ProblemSpec::Modular { weights } => Some(weights.len()),
            _ => self.kernel_points(),
        }
    }

    /// The point sample behind a kernel problem (the unshifted base cloud
    /// for moving sequences); None for combinatorial instances.
    pub fn load_cloud(&self, base_dir: &Path) -> CliResult<Option<PointCloud>> {
        match self {
            ProblemSpec::TwoMoons { source, .. } => match source {
                CloudSource::Generated {
                    points,
                    noise,
                    labelled,
                    data_seed,
                } => Ok(Some(two_moons(*points, *noise, *labelled, *data_seed)?)),
                CloudSource::CsvFile(path) => {
                    let full = base_dir.join(path);
                    let text = std::fs::read_to_string(&full).map_err(|e| {
                        CliError::config(format!("cannot read {}: {e}", full.display()))
                    })?;
                    Ok(Some(PointCloud::from_csv(&text)?))
                }
            },
            ProblemSpec::MovingClusters {
                points,
                noise,
                labelled,
                data_seed,
                ..
            } => Ok(Some(two_moons(*points, *noise, *labelled, *data_seed)?)),
            _ => Ok(None),
        }
    }

    pub fn build_offline(&self, base_dir: &Path) -> CliResult<OfflineInstance> {
        let f = match self {
            ProblemSpec::PathCut { n, weight } => {
                let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, *weight)).collect();
                SetFunction::graph_cut(*n, &edges)?
            }
            ProblemSpec::CycleCut { n, weight } => {
                let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, *weight)).collect();
                edges.push((n - 1, 0, *weight));
                SetFunction::graph_cut(*n, &edges)?
            }
            ProblemSpec::StarCut { n, weight } => {
                let edges: Vec<_> = (1..*n).map(|i| (0, i, *weight)).collect();
                SetFunction::graph_cut(*n, &edges)?
            }
            ProblemSpec::ConcaveCard { n, scale } => {
                SetFunction::concave_cardinality(*n, ConcaveMap::Sqrt { a: *scale, b: 0.0 })?
            }
            ProblemSpec::Modular { weights } => SetFunction::modular(weights)?,
            ProblemSpec::TwoMoons { sigma_sq, .. } => {
                let cloud = match self.load_cloud(base_dir)? {
                    Some(cloud) => cloud,
                    None => unreachable!("two-moons always has a cloud"),
                };
                let kernel = Arc::new(rbf_kernel(&cloud, *sigma_sq)?);
                let eta = label_priors(&cloud);
                let f = mutual_info_cost(Arc::clone(&kernel), eta.clone())?;
                return Ok(OfflineInstance {
                    f,
                    kernel: Some(KernelContext { kernel, eta, cloud }),
                });
            }
            other => {
                return Err(CliError::config(format!(
                    "{} is an online sequence, not an offline instance",
                    other.name()
                )))
            }
        };
        Ok(OfflineInstance { f, kernel: None })
    }

    pub fn build_online(&self, rounds: usize) -> CliResult<OnlineInstance> {
        match self {
            ProblemSpec::RotatingModular { n } => {
                let n = *n;
                let problem = OnlineProblem::generate(rounds, |k, half| {
                    let hot = (2 * k + half as usize) % n;
                    let weights: Vec<f64> = (0..n)
                        .map(|j| if j == hot { -2.0 } else { 1.0 })
                        .collect();
                    SetFunction::modular(&weights)
                })?;
                Ok(OnlineInstance {
                    problem,
                    truth: None,
                })
            }
            ProblemSpec::ScaledCutDrift {
                n,
                amplitude,
                period,
            } => {
                let (n, amplitude, period) = (*n, *amplitude, *period);
                let problem = OnlineProblem::generate(rounds, |k, half| {
                    let t = k as f64 + if half { 0.5 } else { 0.0 };
                    let scale =
                        1.0 + amplitude * (2.0 * std::f64::consts::PI * t / period).sin();
                    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, scale)).collect();
                    SetFunction::graph_cut(n, &edges)
                })?;
                Ok(OnlineInstance {
                    problem,
                    truth: None,
                })
            }
            ProblemSpec::AnchoredDriftModular {
                n,
                amplitude,
                period,
            } => {
                let (n, amplitude, period) = (*n, *amplitude, *period);
                // Wave depends on the round only, so the half-step function
                // equals the round function and drift lives between rounds.
                let problem = OnlineProblem::generate(rounds, |k, _half| {
                    let wave =
                        amplitude * (2.0 * std::f64::consts::PI * k as f64 / period).sin();
                    let weights: Vec<f64> = (0..n)
                        .map(|j| if j < 2 { -1.5 + wave } else { 1.0 + wave })
                        .collect();
                    SetFunction::modular(&weights)
                })?;
                Ok(OnlineInstance {
                    problem,
                    truth: None,
                })
            }
            ProblemSpec::MovingClusters {
                points,
                noise,
                labelled,
                shift,
                sigma_sq,
                data_seed,
            } => {
                let clouds =
                    moving_clusters(*points, *noise, *labelled, rounds, *shift, *data_seed)?;
                let truth = clouds[0].truth.clone();
                let sigma_sq = *sigma_sq;
                let problem = OnlineProblem::generate(rounds, |k, half| {
                    let cloud = &clouds[2 * k + half as usize];
                    let kernel = Arc::new(rbf_kernel(cloud, sigma_sq)?);
                    mutual_info_cost(kernel, label_priors(cloud))
                })?;
                Ok(OnlineInstance {
                    problem,
                    truth: Some(truth),
                })
            }
            other => {
                return Err(CliError::config(format!(
                    "{} is an offline instance, not an online sequence",
                    other.name()
                )))
            }
        }
    }
}

pub fn registry_text() -> String {
    let rows: &[(&str, &str, &str)] = &[
        (
            "path-cut",
            "offline",
            "cut function of the n-node path graph; n (>= 2), weight (default 1)",
        ),
        (
            "cycle-cut",
            "offline",
            "cut function of the n-node cycle; n (>= 3), weight (default 1)",
        ),
        (
            "star-cut",
            "offline",
            "cut function of the n-node star, hub = element 0; n (>= 2), weight (default 1)",
        ),
        (
            "concave-card",
            "offline",
            "scale * sqrt(|S|); n (>= 1), scale (default 1)",
        ),
        (
            "modular",
            "offline",
            "sum of per-element weights; weights = [..] (finite, may be negative)",
        ),
        (
            "rotating-modular",
            "online-static | online-dynamic",
            "modular losses whose favoured element advances every half-step; n (>= 2)",
        ),
        (
            "scaled-cut-drift",
            "online-static | online-dynamic",
            "path cut rescaled by 1 + amplitude*sin(2*pi*t/period); n (>= 2), \
             amplitude in [0, 1) (default 0.5), period (default 7)",
        ),
        (
            "anchored-drift-modular",
            "online-static | online-dynamic",
            "modular losses with a fixed minimiser {0, 1} and a per-round additive wave; \
             n (>= 3), amplitude (default 0.3), period (default 7)",
        ),
        (
            "two-moons",
            "cluster-offline | lovasz-bench",
            "mutual-information clustering cost on a two-moons sample; points, \
             noise (default 0.05), labelled (default 0), sigma_sq (default 0.05), \
             data_seed (default 7); or cloud_csv = \"file\" with sigma_sq",
        ),
        (
            "moving-clusters",
            "cluster-online",
            "two-moons sequence with one moon translating shift/2 per half-step; \
             points, noise (default 0.05), labelled (default 0), shift (default 0.02), \
             sigma_sq (default 0.05), data_seed (default 7)",
        ),
    ];
    let mut out = String::from("problems (problem.kind values):\n");
    for (name, kinds, desc) in rows {
        out.push_str(&format!("  {name:<24} [{kinds}]\n      {desc}\n"));
    }
    out
}
