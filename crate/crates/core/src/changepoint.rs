//! Localized covariance-difference scan and recursive change-point detection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Half-window `w = ceil(h n)` in samples.
pub fn window_len(h: f64, n: usize) -> usize {
    // Guard against products like 0.14 * 1000 = 140.00000000000003.
    (h * n as f64 - 1e-9).ceil().max(1.0) as usize
}

/// `D(s) = n^{-1} (sum_{i<w} X_{s-i} X_{s-i}^T - sum_{i=1}^{w} X_{s+i} X_{s+i}^T)`,
/// `s` 1-based.
pub fn diff_stat(panel: &TimeSeriesPanel, s: usize, w: usize) -> Result<DMatrix<f64>> {
    let n = panel.n();
    if w == 0 || s < w || s + w > n {
        return Err(Error::WindowOverflow { s, w, n });
    }
    let p = panel.p();
    // Separate sums so that swapping the windows flips the sign bit for bit.
    let mut left = DMatrix::zeros(p, p);
    let mut right = DMatrix::zeros(p, p);
    for i in 0..w {
        add_outer(&mut left, panel.obs(s - i));
        add_outer(&mut right, panel.obs(s + 1 + i));
    }
    Ok((left - right) / n as f64)
}

fn add_outer(m: &mut DMatrix<f64>, x: &[f64]) {
    let p = x.len();
    for k in 0..p {
        for j in 0..p {
            m[(j, k)] += x[j] * x[k];
        }
    }
}

/// `|D(s)|_inf` over the search grid `s = w..=n-w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanCurve {
    pub n: usize,
    pub grid: Vec<usize>,
    pub scores: Vec<f64>,
    pub h: f64,
    pub window: usize,
}

impl ScanCurve {
    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.grid
            .iter()
            .zip(&self.scores)
            .fold(None, |best: Option<(usize, f64)>, (&s, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((s, v)),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,score\n");
        for (s, v) in self.grid.iter().zip(&self.scores) {
            out.push_str(&format!("{s},{v}\n"));
        }
        out
    }
}

fn check_bandwidth(h: f64, n: usize) -> Result<usize> {
    if !(h > 1.0 / n as f64 && h < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth h = {h} must lie in (1/n, 1/2) = ({}, 0.5)",
            1.0 / n as f64
        )));
    }
    let w = window_len(h, n);
    if 2 * w > n {
        return Err(Error::InvalidArgument(format!(
            "degenerate search grid: window {w} leaves no point in n = {n}"
        )));
    }
    Ok(w)
}

/// Sliding-window scan: each step adds and drops one rank-one term per window,
/// so the whole curve costs `O(n p^2)`.
pub fn scan(panel: &TimeSeriesPanel, h: f64) -> Result<ScanCurve> {
    let n = panel.n();
    let p = panel.p();
    let w = check_bandwidth(h, n)?;
    // Upper triangle of n * D(s), row-major.
    let mut acc = vec![0.0; p * p];
    let update = |acc: &mut [f64], x: &[f64], sign: f64| {
        for j in 0..p {
            let sx = sign * x[j];
            let row = &mut acc[j * p..(j + 1) * p];
            for k in j..p {
                row[k] += sx * x[k];
            }
        }
    };
    for i in 1..=w {
        update(&mut acc, panel.obs(i), 1.0);
        update(&mut acc, panel.obs(w + i), -1.0);
    }
    let norm = |acc: &[f64]| {
        let mut m = 0.0f64;
        for j in 0..p {
            for v in &acc[j * p + j..(j + 1) * p] {
                m = m.max(v.abs());
            }
        }
        m / n as f64
    };
    let grid: Vec<usize> = (w..=n - w).collect();
    let mut scores = Vec::with_capacity(grid.len());
    scores.push(norm(&acc));
    for s in w..n - w {
        // Move from s to s + 1.
        update(&mut acc, panel.obs(s + 1), 2.0);
        update(&mut acc, panel.obs(s + 1 - w), -1.0);
        update(&mut acc, panel.obs(s + 1 + w), -1.0);
        scores.push(norm(&acc));
    }
    Ok(ScanCurve {
        n,
        grid,
        scores,
        h,
        window: w,
    })
}

/// Scan recomputing `D(s)` from scratch at each grid point. Quadratic in `n`.
pub fn scan_naive(panel: &TimeSeriesPanel, h: f64) -> Result<ScanCurve> {
    let n = panel.n();
    let w = check_bandwidth(h, n)?;
    let grid: Vec<usize> = (w..=n - w).collect();
    let scores = grid
        .iter()
        .map(|&s| diff_stat(panel, s, w).map(|d| d.amax()))
        .collect::<Result<_>>()?;
    Ok(ScanCurve {
        n,
        grid,
        scores,
        h,
        window: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    /// Last index of the left window at the peak.
    pub index: usize,
    pub score: f64,
}

/// Early-stopping threshold for [`detect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Largest ratio between consecutive peaks.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Grid points within `exclusion_factor * w` of a detection are removed.
    pub exclusion_factor: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            exclusion_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub n: usize,
    pub h: f64,
    /// Threshold in force; `None` when no finite threshold applies.
    pub nu: Option<f64>,
    pub iota_hat: usize,
    pub points: Vec<ChangePoint>,
    /// Every peak found when the grid is exhausted, in detection order.
    pub peak_sequence: Vec<ChangePoint>,
    pub window: usize,
    pub exclusion_radius: usize,
}

impl ChangePointReport {
    /// A report with no change points, e.g. for data known to be stationary.
    pub fn empty(n: usize, h: f64) -> Self {
        Self {
            n,
            h,
            nu: None,
            iota_hat: 0,
            points: Vec::new(),
            peak_sequence: Vec::new(),
            window: 0,
            exclusion_radius: 0,
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.points.iter().map(|c| c.index).collect()
    }

    /// Separation and ordering guarantees of the recursive search.
    pub fn check_invariants(&self) -> Result<()> {
        for pair in self.points.windows(2) {
            if pair[1].score > pair[0].score {
                return Err(Error::InvalidArgument(
                    "scores not in detection order".into(),
                ));
            }
        }
        for (a, x) in self.points.iter().enumerate() {
            if let Some(nu) = self.nu {
                if x.score < nu {
                    return Err(Error::InvalidArgument(format!(
                        "retained score {} below nu {nu}",
                        x.score
                    )));
                }
            }
            for y in &self.points[a + 1..] {
                if x.index.abs_diff(y.index) <= self.exclusion_radius {
                    return Err(Error::InvalidArgument(format!(
                        "points {} and {} closer than {}",
                        x.index, y.index, self.exclusion_radius
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Repeated argmax over a shrinking grid until it is exhausted.
pub fn peak_sequence(curve: &ScanCurve, radius: usize) -> Vec<ChangePoint> {
    let mut alive = vec![true; curve.grid.len()];
    let mut peaks = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for (k, &ok) in alive.iter().enumerate() {
            if ok && best.is_none_or(|b| curve.scores[k] > curve.scores[b]) {
                best = Some(k);
            }
        }
        let Some(k) = best else { break };
        let s = curve.grid[k];
        peaks.push(ChangePoint {
            index: s,
            score: curve.scores[k],
        });
        for (a, &g) in alive.iter_mut().zip(&curve.grid) {
            if g.abs_diff(s) <= radius {
                *a = false;
            }
        }
    }
    peaks
}

/// Ratio rule on a nonincreasing peak list: `iota = argmax_l peak_l / peak_{l+1}`
/// (first maximum wins), `nu = peak_iota`. Trailing nonpositive peaks are dropped.
pub fn select_threshold(peaks: &[f64]) -> Result<(usize, f64)> {
    let positive: Vec<f64> = peaks.iter().copied().take_while(|&v| v > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::TooFewPeaks(positive.len()));
    }
    let mut best = (1usize, positive[0] / positive[1]);
    for l in 2..positive.len() {
        let r = positive[l - 1] / positive[l];
        if r > best.1 {
            best = (l, r);
        }
    }
    Ok((best.0, positive[best.0 - 1]))
}

pub fn detect(panel: &TimeSeriesPanel, h: f64, nu: Threshold) -> Result<ChangePointReport> {
    detect_with(panel, h, nu, &DetectOptions::default())
}

/// Recursive detection: take the surviving argmax, drop its neighbourhood,
/// stop once the surviving maximum falls below `nu`.
///
/// With [`Threshold::Auto`] the grid is exhausted first and `nu` is picked by
/// [`select_threshold`]; fewer than two positive peaks yield an empty report.
pub fn detect_with(
    panel: &TimeSeriesPanel,
    h: f64,
    nu: Threshold,
    opts: &DetectOptions,
) -> Result<ChangePointReport> {
    let curve = scan(panel, h)?;
    Ok(detect_on_curve(&curve, nu, opts))
}

pub fn detect_on_curve(
    curve: &ScanCurve,
    nu: Threshold,
    opts: &DetectOptions,
) -> ChangePointReport {
    let radius = (opts.exclusion_factor * curve.window as f64).round() as usize;
    let peaks = peak_sequence(curve, radius);
    let (count, nu) = match nu {
        Threshold::Fixed(v) => (peaks.iter().take_while(|c| c.score >= v).count(), Some(v)),
        Threshold::Auto => {
            let scores: Vec<f64> = peaks.iter().map(|c| c.score).collect();
            match select_threshold(&scores) {
                Ok((iota, v)) => (iota, Some(v)),
                Err(_) => (0, None),
            }
        }
    };
    let nu = nu.filter(|v| v.is_finite());
    ChangePointReport {
        n: curve.n,
        h: curve.h,
        nu,
        iota_hat: count,
        points: peaks[..count].to_vec(),
        peak_sequence: peaks,
        window: curve.window,
        exclusion_radius: radius,
    }
}
