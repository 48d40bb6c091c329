//! Support-recovery metrics, ROC sweeps, change-point error summaries and
//! graph distance matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{detect_with, ChangePointReport, DetectOptions, Threshold};
use crate::clime::{support, tv_clime_at};
use crate::error::{Error, Result};
use crate::graph::GraphEstimate;
use crate::kernel::KernelSpec;
use crate::panel::TimeSeriesPanel;
use crate::rng::replication_seed;
use crate::sim::{build_sim_design, SimDesign};

/// Sensitivity and specificity; `None` when the true positive (resp. negative)
/// class is empty and the ratio is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensSpec {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Counts over all ordered pairs `(j, k)`; `include_diagonal = false` restricts to `j != k`.
pub fn sensitivity_specificity(
    est: &GraphEstimate,
    truth: &GraphEstimate,
    include_diagonal: bool,
) -> Result<SensSpec> {
    let p = truth.p();
    if est.p() != p {
        return Err(Error::InvalidArgument(format!(
            "graph sizes differ: {} vs {p}",
            est.p()
        )));
    }
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..p {
        for k in 0..p {
            if j == k && !include_diagonal {
                continue;
            }
            match (truth.has_edge(j, k), est.has_edge(j, k)) {
                (true, e) => {
                    pos += 1;
                    tp += e as usize;
                }
                (false, e) => {
                    neg += 1;
                    tn += !e as usize;
                }
            }
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(SensSpec {
        sensitivity: ratio(tp, pos),
        specificity: ratio(tn, neg),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub u: f64,
    pub sensitivity: f64,
    pub one_minus_specificity: f64,
    pub t: f64,
    pub lambda: f64,
}

/// Which true graph the estimate at threshold `u` is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum TruthConvention {
    /// A single true support `|omega_jk| > u0` for the whole sweep.
    Fixed(f64),
    /// The significant edges at the same level, `|omega_jk| > u`.
    #[default]
    Matching,
    /// Positives are edges with `|omega_jk| > factor * u`, negatives are exact
    /// zeros (`|omega_jk| <= 1e-8`); pairs in between are not scored.
    Significant { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocOptions {
    pub truth: TruthConvention,
    pub include_diagonal: bool,
}

impl Default for RocOptions {
    fn default() -> Self {
        Self {
            truth: TruthConvention::default(),
            include_diagonal: true,
        }
    }
}

/// Fits tv-CLIME once at `(t, lambda)` and sweeps the support threshold over `u_grid`.
#[allow(clippy::too_many_arguments)]
pub fn roc_sweep(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    lambda: f64,
    u_grid: &[f64],
    truth_design: &SimDesign,
    report: &ChangePointReport,
    opts: &RocOptions,
) -> Result<Vec<RocPoint>> {
    if u_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "u grid must be sorted increasing".into(),
        ));
    }
    let est = tv_clime_at(panel, t, spec, lambda, report)?;
    let i = ((t * panel.n() as f64).round() as usize).clamp(1, panel.n());
    let omega = truth_design.true_precision(i)?;
    let zero_tol = 1e-8;
    let mut out = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let est_graph = support(&est, u);
        let ss = match opts.truth {
            TruthConvention::Fixed(u0) => {
                let truth = GraphEstimate::threshold(&omega, t, u0, true);
                sensitivity_specificity(&est_graph, &truth, opts.include_diagonal)?
            }
            TruthConvention::Matching => {
                let truth = GraphEstimate::threshold(&omega, t, u, true);
                sensitivity_specificity(&est_graph, &truth, opts.include_diagonal)?
            }
            TruthConvention::Significant { factor } => {
                let pos = GraphEstimate::threshold(&omega, t, factor * u, true);
                let nonzero = GraphEstimate::threshold(&omega, t, zero_tol, true);
                scored_rates(&est_graph, &pos, &nonzero, opts.include_diagonal)
            }
        };
        // Levels at which the true graph has an empty class carry no ROC point.
        if let (Some(sens), Some(spec)) = (ss.sensitivity, ss.specificity) {
            out.push(RocPoint {
                u,
                sensitivity: sens,
                one_minus_specificity: 1.0 - spec,
                t,
                lambda,
            });
        }
    }
    Ok(out)
}

/// Sensitivity over `positives`, specificity over the complement of `nonzero`.
fn scored_rates(
    est: &GraphEstimate,
    positives: &GraphEstimate,
    nonzero: &GraphEstimate,
    include_diagonal: bool,
) -> SensSpec {
    let p = est.p();
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..p {
        for k in 0..p {
            if j == k && !include_diagonal {
                continue;
            }
            if positives.has_edge(j, k) {
                pos += 1;
                tp += est.has_edge(j, k) as usize;
            } else if !nonzero.has_edge(j, k) {
                neg += 1;
                tn += !est.has_edge(j, k) as usize;
            }
        }
    }
    SensSpec {
        sensitivity: (pos > 0).then(|| tp as f64 / pos as f64),
        specificity: (neg > 0).then(|| tn as f64 / neg as f64),
    }
}

/// Trapezoidal area under `(1 - specificity, sensitivity)` with the corners
/// `(0, 0)` and `(1, 1)` appended.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points
        .iter()
        .map(|r| (r.one_minus_specificity, r.sensitivity))
        .collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("u,sensitivity,one_minus_specificity,t,lambda\n");
    for r in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.u, r.sensitivity, r.one_minus_specificity, r.t, r.lambda
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpErrorSummary {
    pub mean_count: f64,
    pub mean_abs_distance: f64,
    pub replications: usize,
    pub h: f64,
    pub delta0: f64,
}

/// Mean detected count and mean distance from each true point to its nearest
/// estimate. A replication without detections is scored against the nearest
/// end of its search grid.
pub fn changepoint_error(
    reports: &[ChangePointReport],
    truth: &[usize],
    delta0: f64,
) -> Result<CpErrorSummary> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument(
            "true change-point set is empty".into(),
        ));
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one replication".into(),
        ));
    }
    let mut count = 0.0;
    let mut dist = 0.0;
    for r in reports {
        count += r.iota_hat as f64;
        let estimates: Vec<usize> = if r.points.is_empty() {
            vec![r.window, r.n - r.window]
        } else {
            r.indices()
        };
        let per: f64 = truth
            .iter()
            .map(|&c| estimates.iter().map(|&e| e.abs_diff(c)).min().unwrap_or(0) as f64)
            .sum();
        dist += per / truth.len() as f64;
    }
    let reps = reports.len() as f64;
    Ok(CpErrorSummary {
        mean_count: count / reps,
        mean_abs_distance: dist / reps,
        replications: reports.len(),
        h: reports[0].h,
        delta0,
    })
}

/// Number of ordered pairs on which each two adjacencies disagree.
pub fn graph_distance_matrix(graphs: &[GraphEstimate]) -> Result<Vec<Vec<usize>>> {
    if let Some(first) = graphs.first() {
        if let Some(bad) = graphs.iter().find(|g| g.p() != first.p()) {
            return Err(Error::InvalidArgument(format!(
                "graph sizes differ: {} vs {}",
                bad.p(),
                first.p()
            )));
        }
    }
    let m = graphs.len();
    let mut out = vec![vec![0usize; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let p = graphs[a].p();
            let mut d = 0;
            for j in 0..p {
                for k in 0..p {
                    d += (graphs[a].has_edge(j, k) != graphs[b].has_edge(j, k)) as usize;
                }
            }
            out[a][b] = d;
            out[b][a] = d;
        }
    }
    Ok(out)
}

/// Setting for a replicated change-point experiment on the simulated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpExperiment {
    pub n: usize,
    pub p: usize,
    pub delta0: f64,
    pub h: f64,
    pub replications: usize,
    pub seed: u64,
    pub exclusion_factor: f64,
}

/// Runs the replications in parallel; replication `r` uses a seed derived from
/// `(seed, r)`, so results do not depend on the thread count.
pub fn run_cp_experiment(exp: &CpExperiment) -> Result<(CpErrorSummary, Vec<ChangePointReport>)> {
    let opts = DetectOptions {
        exclusion_factor: exp.exclusion_factor,
    };
    let reports: Vec<ChangePointReport> = (0..exp.replications)
        .into_par_iter()
        .map(|r| {
            let design = build_sim_design(exp.n, exp.p, exp.delta0, replication_seed(exp.seed, r))?;
            let panel = design.simulate_panel()?;
            detect_with(&panel, exp.h, Threshold::Auto, &opts)
        })
        .collect::<Result<_>>()?;
    let truth = build_sim_design(exp.n, exp.p, exp.delta0, 0)?.change_points;
    let summary = changepoint_error(&reports, &truth, exp.delta0)?;
    Ok((summary, reports))
}
