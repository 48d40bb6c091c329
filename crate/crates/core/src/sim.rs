//! Piecewise locally stationary panels with known covariance paths.
//!
//! The generator is a vector moving average of order `lag_cap`,
//!
//! ```text
//! X_i = sum_{m=0}^{lag_cap} A_m(i) e_{i-m},   A_m(i) = (1 + m)^{-beta} B_m(i)
//! ```
//!
//! with block-diagonal `B_m`, standardized Student-t innovations and an abrupt
//! rank-one component `A_0 = alpha alpha^T` that is switched on between the two
//! change points. `B_1` drifts slowly: at every step two of its nonzero entries
//! are shrunk towards zero and two in-block entries are bumped upward.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphEstimate;
use crate::kernel::{CovarianceSnapshot, SnapshotSource};
use crate::panel::TimeSeriesPanel;
use crate::rng::{stream_rng, Stream};

pub const LAG_CAP: usize = 100;
pub const BLOCK_SIZE: usize = 5;
pub const JUMP_SUPPORT: usize = 20;
pub const DEFAULT_DF: usize = 8;
pub const SHRINK_STEP: f64 = 0.05;
pub const BUMP_STEP: f64 = 0.03;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditKind {
    SoftThreshold,
    Increase,
}

/// One modification of `B_1`, addressed by its flat block-storage position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub pos: usize,
    pub kind: EditKind,
    pub before: f64,
    pub after: f64,
}

/// Edits applied when moving from `B_1(i - 1)` to `B_1(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStep {
    pub i: usize,
    pub edits: Vec<Edit>,
}

/// Switches that turn off parts of the design, used for controlled experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Let `B_1` drift over time.
    pub evolve: bool,
    /// Include the `alpha alpha^T` regime between the change points.
    pub jumps: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            evolve: true,
            jumps: true,
        }
    }
}

/// Complete, replayable description of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub lag_cap: usize,
    pub beta: f64,
    pub block_size: usize,
    pub delta0: f64,
    pub df: usize,
    pub seed: u64,
    pub options: SimOptions,
    /// 1-based indices where the `A_0` regime switches.
    pub change_points: Vec<usize>,
    pub alpha: Vec<f64>,
    /// `B_m(1)` for `m = 1..=lag_cap`, each stored block by block in row-major order.
    pub base_blocks: Vec<Vec<f64>>,
    /// Drift of `B_1`, one entry per `i = 2..=n`.
    pub evolution: Vec<EvolutionStep>,
}

/// Builds the default design: drift on, jumps at `round(0.3 n)` and `round(0.65 n)`.
pub fn build_sim_design(n: usize, p: usize, delta0: f64, seed: u64) -> Result<SimDesign> {
    SimDesign::with_options(n, p, delta0, seed, SimOptions::default())
}

impl SimDesign {
    pub fn with_options(
        n: usize,
        p: usize,
        delta0: f64,
        seed: u64,
        options: SimOptions,
    ) -> Result<Self> {
        if p == 0 || !p.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::BlockSize {
                p,
                block: BLOCK_SIZE,
            });
        }
        if n < 100 {
            return Err(Error::InvalidArgument(format!(
                "n = {n} is too small; need n >= 100 so change points stay inside the panel"
            )));
        }
        if !(delta0 > 0.0) || !delta0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "delta0 must be positive, got {delta0}"
            )));
        }

        let mut rng = stream_rng(seed, Stream::Design);
        let block_len = BLOCK_SIZE * BLOCK_SIZE;
        let stored = (p / BLOCK_SIZE) * block_len;
        let base_blocks: Vec<Vec<f64>> = (0..LAG_CAP)
            .map(|_| {
                (0..stored)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();

        let mut evolution = Vec::new();
        if options.evolve {
            let mut b1 = base_blocks[0].clone();
            for i in 2..=n {
                let edits = evolve_step(&mut b1, &mut rng);
                evolution.push(EvolutionStep { i, edits });
            }
        }

        let k = JUMP_SUPPORT.min(p);
        let alpha = (0..p).map(|j| if j < k { delta0 } else { 0.0 }).collect();
        let change_points = if options.jumps {
            vec![
                (0.3 * n as f64).round() as usize,
                (0.65 * n as f64).round() as usize,
            ]
        } else {
            Vec::new()
        };

        Ok(Self {
            n,
            p,
            lag_cap: LAG_CAP,
            beta: 1.0,
            block_size: BLOCK_SIZE,
            delta0,
            df: DEFAULT_DF,
            seed,
            options,
            change_points,
            alpha,
            base_blocks,
            evolution,
        })
    }

    fn decay(&self, m: usize) -> f64 {
        (1.0 + m as f64).powf(-self.beta)
    }

    /// Whether `A_0(i) = alpha alpha^T` (as opposed to zero).
    pub fn jump_active(&self, i: usize) -> bool {
        match self.change_points.as_slice() {
            [start, end, ..] => i >= *start && i < *end,
            _ => false,
        }
    }

    /// `B_1(i)` in block storage, replaying the drift log.
    pub fn b1_blocks(&self, i: usize) -> Vec<f64> {
        let mut b1 = self.base_blocks[0].clone();
        for step in self.evolution.iter().take_while(|s| s.i <= i) {
            for e in &step.edits {
                b1[e.pos] = e.after;
            }
        }
        b1
    }

    /// Dense `A_m(i)`.
    pub fn coefficient(&self, m: usize, i: usize) -> Result<DMatrix<f64>> {
        self.check_index(i)?;
        if m > self.lag_cap {
            return Err(Error::InvalidArgument(format!(
                "lag {m} exceeds lag cap {}",
                self.lag_cap
            )));
        }
        if m == 0 {
            let a = DMatrix::from_fn(self.p, self.p, |j, k| self.alpha[j] * self.alpha[k]);
            return Ok(if self.jump_active(i) {
                a
            } else {
                DMatrix::zeros(self.p, self.p)
            });
        }
        let blocks = if m == 1 {
            self.b1_blocks(i)
        } else {
            self.base_blocks[m - 1].clone()
        };
        Ok(blocks_to_dense(&blocks, self.p, self.block_size) * self.decay(m))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// `sum_{m >= 2} A_m A_m^T`, which does not depend on time.
    fn static_covariance(&self) -> DMatrix<f64> {
        let mut sigma = DMatrix::zeros(self.p, self.p);
        for m in 2..=self.lag_cap {
            let w = self.decay(m) * self.decay(m);
            add_block_gram(&mut sigma, &self.base_blocks[m - 1], self.block_size, w);
        }
        sigma
    }

    fn covariance_with(&self, static_part: &DMatrix<f64>, b1: &[f64], i: usize) -> DMatrix<f64> {
        let mut sigma = static_part.clone();
        let d1 = self.decay(1);
        add_block_gram(&mut sigma, b1, self.block_size, d1 * d1);
        if self.jump_active(i) {
            let norm2: f64 = self.alpha.iter().map(|a| a * a).sum();
            for j in 0..self.p {
                for k in 0..self.p {
                    sigma[(j, k)] += norm2 * self.alpha[j] * self.alpha[k];
                }
            }
        }
        sigma
    }

    /// `Sigma(t_i) = sum_m A_m(i) A_m(i)^T`.
    pub fn true_covariance(&self, i: usize) -> Result<CovarianceSnapshot> {
        self.check_index(i)?;
        let sigma = self.covariance_with(&self.static_covariance(), &self.b1_blocks(i), i);
        Ok(CovarianceSnapshot::new(
            sigma,
            i as f64 / self.n as f64,
            SnapshotSource::True,
        ))
    }

    /// True covariances at every `i = 1..=n`, replaying the drift once.
    pub fn covariance_path(&self) -> Vec<DMatrix<f64>> {
        let static_part = self.static_covariance();
        let mut b1 = self.base_blocks[0].clone();
        let mut steps = self.evolution.iter().peekable();
        (1..=self.n)
            .map(|i| {
                while let Some(step) = steps.next_if(|s| s.i <= i) {
                    for e in &step.edits {
                        b1[e.pos] = e.after;
                    }
                }
                self.covariance_with(&static_part, &b1, i)
            })
            .collect()
    }

    /// Ground-truth graph `1{|omega_jk(t_i)| > u}` with `Omega = Sigma^{-1}`.
    pub fn true_graph(&self, i: usize, u: f64) -> Result<GraphEstimate> {
        let omega = self.true_precision(i)?;
        Ok(GraphEstimate::threshold(
            &omega,
            i as f64 / self.n as f64,
            u,
            true,
        ))
    }

    pub fn true_precision(&self, i: usize) -> Result<DMatrix<f64>> {
        let sigma = self.true_covariance(i)?;
        checked_inverse(sigma.matrix())
    }

    /// Upper bound on `|Sigma(t_{i+1}) - Sigma(t_i)|_max` away from the jumps.
    ///
    /// Each step edits at most four entries of `A_1` by at most `e = 0.05 * 2^{-beta}`,
    /// so with `E = A_1(i+1) - A_1(i)` the increment `A_1 E^T + E A_1^T + E E^T`
    /// is bounded by `2 R e + 4 e^2`, `R` the largest row L1 norm of `A_1` over time.
    pub fn evolution_bound(&self) -> f64 {
        let e = SHRINK_STEP.max(BUMP_STEP) * self.decay(1);
        let mut b1 = self.base_blocks[0].clone();
        let mut r = max_row_l1(&b1, self.block_size);
        for step in &self.evolution {
            for ed in &step.edits {
                b1[ed.pos] = ed.after;
            }
            r = r.max(max_row_l1(&b1, self.block_size));
        }
        2.0 * r * self.decay(1) * e + 4.0 * e * e
    }

    /// Simulates the `n x p` panel. Innovations `e_{1-lag_cap}, .., e_n` come from a
    /// stream independent of the one used to draw the design.
    pub fn simulate_panel(&self) -> Result<TimeSeriesPanel> {
        let (n, p, lag) = (self.n, self.p, self.lag_cap);
        let mut rng = stream_rng(self.seed, Stream::Innovations);
        let eps = standardized_t_draws(self.df, n + lag, p, &mut rng)?;
        // eps row r holds e_{r + 1 - lag}; X_i uses rows i - 1 + lag - m.
        let bs = self.block_size;
        let decays: Vec<f64> = (0..=lag).map(|m| self.decay(m)).collect();
        let mut b1 = self.base_blocks[0].clone();
        let mut steps = self.evolution.iter().peekable();
        let mut data = vec![0.0; n * p];
        for i in 1..=n {
            while let Some(step) = steps.next_if(|s| s.i <= i) {
                for e in &step.edits {
                    b1[e.pos] = e.after;
                }
            }
            let x = &mut data[(i - 1) * p..i * p];
            for m in 1..=lag {
                let blocks = if m == 1 {
                    &b1
                } else {
                    &self.base_blocks[m - 1]
                };
                let r = i - 1 + lag - m;
                let e = &eps[r * p..(r + 1) * p];
                block_matvec_add(blocks, bs, decays[m], e, x);
            }
            if self.jump_active(i) {
                let r = i - 1 + lag;
                let e = &eps[r * p..(r + 1) * p];
                let proj: f64 = self.alpha.iter().zip(e).map(|(a, v)| a * v).sum();
                for (xj, aj) in x.iter_mut().zip(&self.alpha) {
                    *xj += aj * proj;
                }
            }
        }
        TimeSeriesPanel::from_rows(n, p, data)
    }
}

fn evolve_step<R: Rng + ?Sized>(b1: &mut [f64], rng: &mut R) -> Vec<Edit> {
    let mut edits = Vec::with_capacity(4);
    let support: Vec<usize> = (0..b1.len()).filter(|&k| b1[k] != 0.0).collect();
    let take = support.len().min(2);
    for idx in sample(rng, support.len(), take).into_iter() {
        let pos = support[idx];
        let before = b1[pos];
        let after = soft_threshold(before, SHRINK_STEP);
        b1[pos] = after;
        edits.push(Edit {
            pos,
            kind: EditKind::SoftThreshold,
            before,
            after,
        });
    }
    let take = b1.len().min(2);
    for pos in sample(rng, b1.len(), take).into_iter() {
        let before = b1[pos];
        let after = before + BUMP_STEP;
        b1[pos] = after;
        edits.push(Edit {
            pos,
            kind: EditKind::Increase,
            before,
            after,
        });
    }
    edits
}

/// `sign(a) * max(|a| - tau, 0)`.
pub fn soft_threshold(a: f64, tau: f64) -> f64 {
    a.signum() * (a.abs() - tau).max(0.0)
}

fn blocks_to_dense(blocks: &[f64], p: usize, bs: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for g in 0..p / bs {
        for r in 0..bs {
            for c in 0..bs {
                m[(g * bs + r, g * bs + c)] = blocks[g * bs * bs + r * bs + c];
            }
        }
    }
    m
}

fn add_block_gram(sigma: &mut DMatrix<f64>, blocks: &[f64], bs: usize, weight: f64) {
    let nb = sigma.nrows() / bs;
    for g in 0..nb {
        let b = &blocks[g * bs * bs..(g + 1) * bs * bs];
        for r in 0..bs {
            for c in 0..bs {
                let dot: f64 = (0..bs).map(|l| b[r * bs + l] * b[c * bs + l]).sum();
                sigma[(g * bs + r, g * bs + c)] += weight * dot;
            }
        }
    }
}

fn block_matvec_add(blocks: &[f64], bs: usize, scale: f64, v: &[f64], out: &mut [f64]) {
    let nb = out.len() / bs;
    for g in 0..nb {
        let b = &blocks[g * bs * bs..(g + 1) * bs * bs];
        let vg = &v[g * bs..(g + 1) * bs];
        for r in 0..bs {
            let dot: f64 = b[r * bs..(r + 1) * bs]
                .iter()
                .zip(vg)
                .map(|(a, x)| a * x)
                .sum();
            out[g * bs + r] += scale * dot;
        }
    }
}

fn max_row_l1(blocks: &[f64], bs: usize) -> f64 {
    blocks
        .chunks(bs)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a symmetric positive definite matrix, refusing condition numbers above 1e12.
pub fn checked_inverse(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sigma.clone().symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > MAX_CONDITION {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::IllConditioned { condition });
    }
    sigma
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })
}

/// `rows x cols` i.i.d. Student-t(df) draws rescaled to unit variance, row-major.
pub fn standardized_t_innovations(
    df: usize,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::Innovations);
    standardized_t_draws(df, rows, cols, &mut rng)
}

fn standardized_t_draws<R: Rng + ?Sized>(
    df: usize,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if df <= 2 {
        return Err(Error::InvalidArgument(format!(
            "Student-t with df = {df} has infinite variance; need df > 2"
        )));
    }
    let dist = StudentT::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let scale = t_scale(df);
    Ok((0..rows * cols).map(|_| dist.sample(rng) * scale).collect())
}

/// `sqrt((df - 2) / df)`, the factor that gives a t(df) variable unit variance.
pub fn t_scale(df: usize) -> f64 {
    ((df as f64 - 2.0) / df as f64).sqrt()
}
