//! Dense dual simplex for `min c^T x  s.t.  A x <= b, x >= 0` with `c >= 0`.
//!
//! Nonnegative costs make the all-slack basis dual feasible, so the dual simplex
//! starts without a phase one and only has to repair negative right-hand sides.
//! The basic solution of the final basis is recomputed from the original data
//! with an LU solve, which removes the drift accumulated by tableau updates.

use nalgebra::{DMatrix, DVector};

/// Outcome of a failed solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpFailure {
    /// Row `row` of the tableau proves that no `x >= 0` satisfies the constraints.
    Infeasible {
        row: usize,
    },
    IterationLimit {
        iterations: usize,
        residual: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: Option<usize>,
    /// Right-hand sides above `-feas_tol` count as feasible.
    pub feas_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            feas_tol: 1e-11,
            pivot_tol: 1e-10,
            bland_after: 50,
        }
    }
}

struct Tableau {
    cols: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Self {
        let (m, n) = a.shape();
        let cols = n + m;
        let mut t = vec![0.0; m * cols];
        for r in 0..m {
            for j in 0..n {
                t[r * cols + j] = a[(r, j)];
            }
            t[r * cols + n + r] = 1.0;
        }
        let mut d = c.to_vec();
        d.resize(cols, 0.0);
        Self {
            cols,
            t,
            rhs: b.to_vec(),
            d,
            basis: (n..n + m).collect(),
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + q];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        self.rhs[r] /= piv;
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        let rhs_r = self.rhs[r];
        for (i, row) in before.chunks_exact_mut(cols).enumerate().chain(
            after
                .chunks_exact_mut(cols)
                .enumerate()
                .map(|(k, row)| (r + 1 + k, row)),
        ) {
            let f = row[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
                self.rhs[i] -= f * rhs_r;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(pivot_row.iter()) {
                *v -= f * pv;
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
    }
}

/// Solves `min c^T x  s.t.  A x <= b, x >= 0`. Requires `c >= 0`.
pub fn solve_dual_simplex(
    a: &DMatrix<f64>,
    b: &[f64],
    c: &[f64],
    opts: &SimplexOptions,
) -> Result<LpSolution, LpFailure> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    assert!(
        c.iter().all(|&v| v >= 0.0),
        "dual simplex start needs c >= 0"
    );

    let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let feas_tol = opts.feas_tol * scale;
    let max_iter = opts.max_iterations.unwrap_or(50 * (m + n) + 1000);

    let mut tab = Tableau::new(a, b, c);
    let mut degenerate_run = 0usize;
    let mut iterations = 0usize;
    loop {
        let bland = degenerate_run >= opts.bland_after;
        // Leaving row.
        let mut leave: Option<usize> = None;
        for r in 0..m {
            if tab.rhs[r] < -feas_tol {
                leave = match leave {
                    None => Some(r),
                    Some(l) if bland => {
                        if tab.basis[r] < tab.basis[l] {
                            Some(r)
                        } else {
                            Some(l)
                        }
                    }
                    Some(l) => {
                        if tab.rhs[r] < tab.rhs[l] {
                            Some(r)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
        }
        let Some(r) = leave else { break };
        if iterations >= max_iter {
            let residual = tab.rhs.iter().fold(0.0f64, |acc, &v| acc.max(-v));
            return Err(LpFailure::IterationLimit {
                iterations,
                residual,
            });
        }

        // Entering column: minimum ratio d_j / |alpha_rj| over alpha_rj < 0.
        let row = &tab.t[r * tab.cols..(r + 1) * tab.cols];
        let row_max = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let piv_tol = opts.pivot_tol * row_max.max(1.0);
        let mut enter: Option<(usize, f64, f64)> = None;
        for (j, &arj) in row.iter().enumerate() {
            if arj < -piv_tol {
                let ratio = tab.d[j].max(0.0) / -arj;
                enter = match enter {
                    None => Some((j, ratio, arj)),
                    Some((q, best, aq)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        // Among ties prefer the larger pivot, unless Bland's rule is on.
                        let better = if tie {
                            !bland && arj.abs() > aq.abs()
                        } else {
                            ratio < best
                        };
                        if better {
                            Some((j, ratio, arj))
                        } else {
                            Some((q, best, aq))
                        }
                    }
                };
            }
        }
        let Some((q, ratio, _)) = enter else {
            return Err(LpFailure::Infeasible { row: r });
        };
        if ratio <= 1e-14 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        tab.pivot(r, q);
        iterations += 1;
    }

    let x = refine(a, b, &tab.basis, n).unwrap_or_else(|| {
        let mut x = vec![0.0; n];
        for (r, &j) in tab.basis.iter().enumerate() {
            if j < n {
                x[j] = tab.rhs[r].max(0.0);
            }
        }
        x
    });
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution {
        x,
        objective,
        iterations,
    })
}

/// Recomputes the basic solution `B x_B = b` from the original constraint data.
fn refine(a: &DMatrix<f64>, b: &[f64], basis: &[usize], n: usize) -> Option<Vec<f64>> {
    let m = b.len();
    let bmat = DMatrix::from_fn(m, m, |r, k| {
        let j = basis[k];
        if j < n {
            a[(r, j)]
        } else if j - n == r {
            1.0
        } else {
            0.0
        }
    });
    let xb = bmat.lu().solve(&DVector::from_column_slice(b))?;
    let scale = xb.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if xb.iter().any(|v| !v.is_finite() || *v < -1e-9 * scale) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (k, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = xb[k].max(0.0);
        }
    }
    Some(x)
}
