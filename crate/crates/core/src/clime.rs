//! Constrained L1 minimization for sparse precision matrices and its
//! time-varying, kernel-smoothed version.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::changepoint::ChangePointReport;
use crate::error::{Error, Result};
use crate::graph::GraphEstimate;
use crate::kernel::{kernel_weights, reflected_covariance, smoothed_covariance, KernelSpec};
use crate::lp::{solve_dual_simplex, LpFailure, SimplexOptions};
use crate::panel::TimeSeriesPanel;
use crate::rng::{stream_rng, Stream};

/// Largest tolerated `(|Sigma omega_j - e_j|_inf - lambda)_+` over columns.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Column `j` of the CLIME estimate: `min |w|_1  s.t.  |Sigma w - e_j|_inf <= lambda`.
///
/// Solved as a linear program in `w = w+ - w-` with `2p` nonnegative variables.
pub fn clime_column(sigma: &DMatrix<f64>, j: usize, lambda: f64) -> Result<Vec<f64>> {
    let p = sigma.nrows();
    if !sigma.is_square() || j >= p {
        return Err(Error::InvalidArgument(format!(
            "column {j} of a {}x{} matrix",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be a finite nonnegative number, got {lambda}"
        )));
    }
    let a = DMatrix::from_fn(2 * p, 2 * p, |r, c| {
        let v = sigma[(r % p, c % p)];
        if (r < p) == (c < p) {
            v
        } else {
            -v
        }
    });
    let b: Vec<f64> = (0..2 * p)
        .map(|r| {
            let e = if r % p == j { 1.0 } else { 0.0 };
            if r < p {
                e + lambda
            } else {
                lambda - e
            }
        })
        .collect();
    let cost = vec![1.0; 2 * p];
    match solve_dual_simplex(&a, &b, &cost, &SimplexOptions::default()) {
        Ok(sol) => Ok((0..p).map(|k| sol.x[k] - sol.x[p + k]).collect()),
        Err(LpFailure::Infeasible { .. }) => Err(Error::Infeasible {
            column: j,
            lambda,
            min_lambda: min_feasible_lambda(sigma, j)?,
        }),
        Err(LpFailure::IterationLimit {
            iterations,
            residual,
        }) => Err(Error::NotConverged {
            column: j,
            iterations,
            residual,
        }),
    }
}

/// `min_w |Sigma w - e_j|_inf`, the smallest lambda for which column `j` is feasible.
pub fn min_feasible_lambda(sigma: &DMatrix<f64>, j: usize) -> Result<f64> {
    let p = sigma.nrows();
    let a = DMatrix::from_fn(2 * p, 2 * p + 1, |r, c| {
        if c == 2 * p {
            return -1.0;
        }
        let v = sigma[(r % p, c % p)];
        if (r < p) == (c < p) {
            v
        } else {
            -v
        }
    });
    let b: Vec<f64> = (0..2 * p)
        .map(|r| {
            let e = if r % p == j { 1.0 } else { 0.0 };
            if r < p {
                e
            } else {
                -e
            }
        })
        .collect();
    let mut cost = vec![0.0; 2 * p + 1];
    cost[2 * p] = 1.0;
    match solve_dual_simplex(&a, &b, &cost, &SimplexOptions::default()) {
        Ok(sol) => Ok(sol.x[2 * p]),
        Err(LpFailure::Infeasible { .. }) => unreachable!("auxiliary program is always feasible"),
        Err(LpFailure::IterationLimit {
            iterations,
            residual,
        }) => Err(Error::NotConverged {
            column: j,
            iterations,
            residual,
        }),
    }
}

/// Symmetrized CLIME output at one time point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionEstimate {
    #[serde(skip)]
    pub omega_raw: DMatrix<f64>,
    #[serde(skip)]
    pub omega: DMatrix<f64>,
    pub t: f64,
    pub lambda: f64,
    pub feasibility_gap: f64,
    /// False inside the neighbourhood of a change point where recovery is not expected.
    pub reliable: bool,
}

impl PrecisionEstimate {
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}

/// Keeps, for each pair, the entry of smaller magnitude (ties keep the upper one).
pub fn symmetrize(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let p = raw.nrows();
    let mut out = raw.clone();
    for j in 0..p {
        for k in j + 1..p {
            let (a, b) = (raw[(j, k)], raw[(k, j)]);
            let v = if b.abs() < a.abs() { b } else { a };
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    out
}

/// `max_j (|Sigma omega_j - e_j|_inf - lambda)_+`.
pub fn feasibility_gap(sigma: &DMatrix<f64>, omega: &DMatrix<f64>, lambda: f64) -> f64 {
    let prod = sigma * omega;
    let p = sigma.nrows();
    let mut gap = 0.0f64;
    for k in 0..p {
        for j in 0..p {
            let target = if j == k { 1.0 } else { 0.0 };
            gap = gap.max((prod[(j, k)] - target).abs() - lambda);
        }
    }
    gap.max(0.0)
}

/// CLIME on every column, then symmetrization.
pub fn clime(sigma: &DMatrix<f64>, lambda: f64) -> Result<PrecisionEstimate> {
    clime_at(sigma, lambda, f64::NAN)
}

fn clime_at(sigma: &DMatrix<f64>, lambda: f64, t: f64) -> Result<PrecisionEstimate> {
    let p = sigma.nrows();
    let columns: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|j| clime_column(sigma, j, lambda))
        .collect();
    let mut omega_raw = DMatrix::zeros(p, p);
    let mut failed = Vec::new();
    let mut first = None;
    for (j, col) in columns.into_iter().enumerate() {
        match col {
            Ok(v) => omega_raw.set_column(j, &nalgebra::DVector::from_vec(v)),
            Err(e) => {
                failed.push(j);
                first.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first {
        if failed.len() == 1 {
            return Err(first);
        }
        return Err(Error::ColumnsFailed {
            p,
            failed,
            first: Box::new(first),
        });
    }
    let gap = feasibility_gap(sigma, &omega_raw, lambda);
    if gap > FEASIBILITY_TOL {
        return Err(Error::NotConverged {
            column: usize::MAX,
            iterations: 0,
            residual: gap,
        });
    }
    Ok(PrecisionEstimate {
        omega: symmetrize(&omega_raw),
        omega_raw,
        t,
        lambda,
        feasibility_gap: gap,
        reliable: true,
    })
}

/// Effective support `1{|omega_jk| >= u}`.
pub fn support(precision: &PrecisionEstimate, u: f64) -> GraphEstimate {
    GraphEstimate::threshold(&precision.omega, precision.t, u, false)
}

/// Result of the time-varying pipeline at one grid point.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub t: f64,
    pub estimate: Result<PrecisionEstimate>,
}

/// How the covariance at `t` is formed, given the detected change points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Smooth,
    /// Within `b + h^2` of a change point: reflected samples are used.
    Boundary,
    /// Within `h^2` of a change point: estimated with reflection but flagged.
    Unreliable,
}

pub fn classify(t: f64, n: usize, b: f64, report: &ChangePointReport) -> Region {
    let h2 = report.h * report.h;
    let dist = report
        .points
        .iter()
        .map(|cp| (t - cp.index as f64 / n as f64).abs())
        .fold(f64::INFINITY, f64::min);
    if dist < h2 {
        Region::Unreliable
    } else if dist < b + h2 {
        Region::Boundary
    } else {
        Region::Smooth
    }
}

/// The covariance estimate tv-CLIME uses at `t`.
pub fn local_covariance(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    report: &ChangePointReport,
) -> Result<(DMatrix<f64>, Region)> {
    let region = classify(t, panel.n(), spec.bandwidth, report);
    let snap = match region {
        Region::Smooth => smoothed_covariance(panel, t, spec)?,
        Region::Boundary | Region::Unreliable => {
            reflected_covariance(panel, t, spec, &report.indices())?
        }
    };
    Ok((snap.into_matrix(), region))
}

/// tv-CLIME over an evaluation grid. Failures at one `t` do not stop the others.
pub fn tv_clime_path(
    panel: &TimeSeriesPanel,
    grid: &[f64],
    spec: &KernelSpec,
    lambda: f64,
    report: &ChangePointReport,
) -> Vec<PathPoint> {
    grid.iter()
        .map(|&t| PathPoint {
            t,
            estimate: tv_clime_at(panel, t, spec, lambda, report),
        })
        .collect()
}

pub fn tv_clime_at(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    lambda: f64,
    report: &ChangePointReport,
) -> Result<PrecisionEstimate> {
    let b = spec.bandwidth;
    if t < b - 1e-12 || t > 1.0 - b + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [b, 1 - b] = [{b}, {}]",
            1.0 - b
        )));
    }
    let (sigma, region) = local_covariance(panel, t, spec, report)?;
    let mut est = clime_at(&sigma, lambda, t)?;
    est.reliable = region != Region::Unreliable;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityOptions {
    pub n_subsamples: usize,
    pub subsample_fraction: f64,
    pub instability_cap: f64,
    pub seed: u64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            n_subsamples: 20,
            subsample_fraction: 0.8,
            instability_cap: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySelection {
    pub lambda: f64,
    /// No lambda met the cap; `lambda` is the largest candidate.
    pub cap_exceeded: bool,
    /// Raw instability per lambda, aligned with the candidate grid.
    pub instability: Vec<f64>,
}

/// Smallest lambda whose edge-selection instability over contiguous block
/// subsamples of the local window stays below the cap.
///
/// Instability is the mean over pairs `j < k` of `2 theta (1 - theta)`, with
/// `theta` the fraction of subsamples in which `omega_jk != 0`. It is made
/// monotone by taking the running supremum from the largest lambda down.
pub fn stability_select_lambda(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    lambda_grid: &[f64],
    opts: &StabilityOptions,
) -> Result<StabilitySelection> {
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "lambda grid must be nonempty and strictly increasing".into(),
        ));
    }
    if opts.n_subsamples < 2 {
        return Err(Error::InvalidArgument(
            "need at least two subsamples".into(),
        ));
    }
    if !(opts.subsample_fraction > 0.0 && opts.subsample_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction must lie in (0, 1], got {}",
            opts.subsample_fraction
        )));
    }
    let weights = kernel_weights(panel.n(), t, spec)?;
    let window: Vec<(usize, f64)> = weights.support().collect();
    let len = window.len();
    let block = ((opts.subsample_fraction * len as f64).floor() as usize).clamp(1, len);
    let mut rng = stream_rng(opts.seed, Stream::Subsample);
    let starts: Vec<usize> = (0..opts.n_subsamples)
        .map(|_| rng.random_range(0..=len - block))
        .collect();
    let p = panel.p();
    let covariances: Vec<DMatrix<f64>> = starts
        .iter()
        .map(|&s| {
            let part = &window[s..s + block];
            let total: f64 = part.iter().map(|(_, w)| w).sum();
            let mut m = DMatrix::zeros(p, p);
            for &(i, w) in part {
                let x = nalgebra::DVector::from_column_slice(panel.obs(i));
                m += (&x * x.transpose()) * (w / total);
            }
            m
        })
        .collect();

    let pairs = (p * (p - 1) / 2).max(1) as f64;
    let mut instability = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let mut freq = vec![0usize; p * p];
        for sigma in &covariances {
            let est = clime(sigma, lambda)?;
            for j in 0..p {
                for k in j + 1..p {
                    if est.omega[(j, k)] != 0.0 {
                        freq[j * p + k] += 1;
                    }
                }
            }
        }
        let mut total = 0.0;
        for j in 0..p {
            for k in j + 1..p {
                let theta = freq[j * p + k] as f64 / covariances.len() as f64;
                total += 2.0 * theta * (1.0 - theta);
            }
        }
        instability.push(total / pairs);
    }

    let mut running = 0.0f64;
    let mut chosen = None;
    for (idx, &d) in instability.iter().enumerate().rev() {
        running = running.max(d);
        if running <= opts.instability_cap {
            chosen = Some(idx);
        } else {
            break;
        }
    }
    Ok(match chosen {
        Some(idx) => StabilitySelection {
            lambda: lambda_grid[idx],
            cap_exceeded: false,
            instability,
        },
        None => StabilitySelection {
            lambda: *lambda_grid.last().unwrap(),
            cap_exceeded: true,
            instability,
        },
    })
}
