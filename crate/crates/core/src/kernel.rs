//! Kernel weights and locally smoothed covariance matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Uniform,
    Triangular,
    Epanechnikov,
}

impl KernelFamily {
    /// `K(u)`, supported on `[-1, 1]` and integrating to one.
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelFamily::Uniform => 0.5,
            KernelFamily::Triangular => 1.0 - a,
            KernelFamily::Epanechnikov => 0.75 * (1.0 - a * a),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Uniform => "uniform",
            KernelFamily::Triangular => "triangular",
            KernelFamily::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "triangular" => Ok(Self::Triangular),
            "epanechnikov" => Ok(Self::Epanechnikov),
            other => Err(Error::Parse(format!("unknown kernel family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must lie in (0, 1), got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.family.eval(u)
    }

    /// `K_b(u, v) = K(|u - v| / b) / b`.
    pub fn scaled(&self, u: f64, v: f64) -> f64 {
        self.family.eval((u - v).abs() / self.bandwidth) / self.bandwidth
    }
}

pub fn kernel_eval(spec: &KernelSpec, u: f64) -> f64 {
    spec.eval(u)
}

/// Normalized kernel weights over the grid `t_i = i / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub t: f64,
    /// `weights[i - 1]` is the weight of observation `i`.
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// 1-based indices with nonzero weight.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(r, &w)| (r + 1, w))
    }
}

pub fn kernel_weights(n: usize, t: f64, spec: &KernelSpec) -> Result<WeightVector> {
    let mut weights: Vec<f64> = (1..=n)
        .map(|i| spec.scaled(i as f64 / n as f64, t))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyKernelSupport {
            t,
            b: spec.bandwidth,
        });
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightVector { t, weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotSource {
    True,
    Smoothed,
    Reflected,
}

/// A `p x p` covariance matrix tagged with the time it describes.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSnapshot {
    matrix: DMatrix<f64>,
    pub t: f64,
    pub source: SnapshotSource,
    pub kernel: Option<KernelSpec>,
}

#[derive(Serialize)]
struct SnapshotSidecar {
    t: f64,
    b: Option<f64>,
    family: Option<KernelFamily>,
    source: SnapshotSource,
}

impl CovarianceSnapshot {
    /// Panics if `matrix` is not square and symmetric to within 1e-12.
    pub fn new(matrix: DMatrix<f64>, t: f64, source: SnapshotSource) -> Self {
        assert!(matrix.is_square(), "covariance must be square");
        let asym = (&matrix - matrix.transpose()).amax();
        assert!(asym <= 1e-12, "covariance asymmetric by {asym:e}");
        Self {
            matrix,
            t,
            source,
            kernel: None,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn sidecar_json(&self) -> String {
        let side = SnapshotSidecar {
            t: self.t,
            b: self.kernel.map(|k| k.bandwidth),
            family: self.kernel.map(|k| k.family),
            source: self.source,
        };
        serde_json::to_string_pretty(&side).expect("sidecar serializes")
    }
}

/// Accumulates `sum_i w_i x_i x_i^T` over the upper triangle and mirrors it.
fn weighted_gram<'a>(p: usize, terms: impl Iterator<Item = (f64, &'a [f64])>) -> DMatrix<f64> {
    let mut acc = vec![0.0; p * p];
    for (w, x) in terms {
        for j in 0..p {
            let wx = w * x[j];
            let row = &mut acc[j * p..(j + 1) * p];
            for k in j..p {
                row[k] += wx * x[k];
            }
        }
    }
    DMatrix::from_fn(p, p, |j, k| {
        if j <= k {
            acc[j * p + k]
        } else {
            acc[k * p + j]
        }
    })
}

/// `Sigma_hat(t) = sum_i w(t, t_i) X_i X_i^T`.
pub fn smoothed_covariance(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
) -> Result<CovarianceSnapshot> {
    let w = kernel_weights(panel.n(), t, spec)?;
    let m = weighted_gram(panel.p(), w.support().map(|(i, wi)| (wi, panel.obs(i))));
    let mut snap = CovarianceSnapshot::new(m, t, SnapshotSource::Smoothed);
    snap.kernel = Some(*spec);
    Ok(snap)
}

/// Index of the sample standing in for observation `i` when smoothing at `t`
/// next to the change point `c`.
///
/// The break sits between `c` and `c + 1` (the left scan window ends at `c`).
/// The side of `t` is that of the nearest grid index. Samples on the other side
/// are mirrored across the break to `2c + 1 - i`, clamped to `1..=n` unless
/// `clamp` is false.
pub fn reflected_index(i: usize, t: f64, c: usize, n: usize, clamp: bool) -> Result<usize> {
    let t_index = (t * n as f64).round() as i64;
    let c = c as i64;
    let i_signed = i as i64;
    let same_side = (i_signed <= c) == (t_index <= c);
    if same_side {
        return Ok(i);
    }
    let mirrored = 2 * c + 1 - i_signed;
    if mirrored >= 1 && mirrored <= n as i64 {
        Ok(mirrored as usize)
    } else if clamp {
        Ok(mirrored.clamp(1, n as i64) as usize)
    } else {
        Err(Error::IndexOutOfRange {
            index: mirrored.max(0) as usize,
            n,
        })
    }
}

/// Kernel-smoothed covariance with samples across the nearest change point
/// replaced by their mirror images. Falls back to [`smoothed_covariance`] when
/// `changepoints` is empty.
pub fn reflected_covariance(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    changepoints: &[usize],
) -> Result<CovarianceSnapshot> {
    reflected_covariance_with(panel, t, spec, changepoints, true)
}

pub fn reflected_covariance_with(
    panel: &TimeSeriesPanel,
    t: f64,
    spec: &KernelSpec,
    changepoints: &[usize],
    clamp: bool,
) -> Result<CovarianceSnapshot> {
    let n = panel.n();
    let tn = t * n as f64;
    let Some(&c) = changepoints
        .iter()
        .min_by(|a, b| (**a as f64 - tn).abs().total_cmp(&(**b as f64 - tn).abs()))
    else {
        return smoothed_covariance(panel, t, spec);
    };
    let w = kernel_weights(n, t, spec)?;
    let mut terms = Vec::new();
    for (i, wi) in w.support() {
        let src = reflected_index(i, t, c, n, clamp)?;
        terms.push((wi, panel.obs(src)));
    }
    let m = weighted_gram(panel.p(), terms.into_iter());
    let mut snap = CovarianceSnapshot::new(m, t, SnapshotSource::Reflected);
    snap.kernel = Some(*spec);
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [KernelFamily; 3] = [
        KernelFamily::Uniform,
        KernelFamily::Triangular,
        KernelFamily::Epanechnikov,
    ];

    #[test]
    fn kernel_values() {
        assert_eq!(KernelFamily::Epanechnikov.eval(0.0), 0.75);
        assert_eq!(KernelFamily::Uniform.eval(-1.0), 0.5);
        assert_eq!(KernelFamily::Triangular.eval(0.5), 0.5);
        for f in FAMILIES {
            assert_eq!(f.eval(1.5), 0.0);
            assert_eq!(f.eval(-1.5), 0.0);
        }
    }

    #[test]
    fn kernels_integrate_to_one() {
        // Trapezoid rule on 1e5 intervals; the uniform kernel's jumps sit on grid nodes
        // at +-1, where the half-weight endpoints account for them exactly.
        let m = 100_000;
        let h = 2.0 / m as f64;
        for f in FAMILIES {
            let mut s = 0.5 * (f.eval(-1.0) + f.eval(1.0));
            for k in 1..m {
                s += f.eval(-1.0 + k as f64 * h);
            }
            assert!((s * h - 1.0).abs() < 1e-9, "{f}: {}", s * h);
        }
    }

    #[test]
    fn weights_match_hand_rolled_loop() {
        let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.25).unwrap();
        let w = kernel_weights(10, 0.5, &spec).unwrap();
        // Grid 0.1..1.0; |t_i - 0.5| / 0.25 = 1.6, 1.2, 0.8, 0.4, 0, 0.4, 0.8, 1.2, 1.6, 2.0.
        let raw = [0.0, 0.0, 0.27, 0.63, 0.75, 0.63, 0.27, 0.0, 0.0, 0.0];
        let total: f64 = raw.iter().sum();
        for (a, r) in w.weights.iter().zip(raw) {
            assert!((a - r / total).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_weights_are_flat_inside_window() {
        let spec = KernelSpec::new(KernelFamily::Uniform, 0.1).unwrap();
        let w = kernel_weights(100, 0.5, &spec).unwrap();
        let inside: Vec<f64> = w.support().map(|(_, x)| x).collect();
        assert_eq!(inside.len(), 21);
        assert!(inside.iter().all(|&x| (x - 1.0 / 21.0).abs() < 1e-15));
    }

    #[test]
    fn empty_support_is_an_error() {
        let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.01).unwrap();
        let err = kernel_weights(10, 0.55, &spec).unwrap_err();
        assert_eq!(err, Error::EmptyKernelSupport { t: 0.55, b: 0.01 });
    }

    #[test]
    fn constant_panel_gives_outer_product() {
        let c = [1.5, -2.0, 0.25];
        let data: Vec<f64> = (0..50).flat_map(|_| c).collect();
        let panel = TimeSeriesPanel::from_rows(50, 3, data).unwrap();
        let spec = KernelSpec::new(KernelFamily::Triangular, 0.2).unwrap();
        let s = smoothed_covariance(&panel, 0.4, &spec).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert!((s.matrix()[(j, k)] - c[j] * c[k]).abs() < 1e-14);
            }
        }
        assert_eq!(s.source, SnapshotSource::Smoothed);
    }

    #[test]
    fn four_point_uniform_hand_computation() {
        // t = 0.5, b = 0.3: grid 0.25, 0.5, 0.75, 1.0 keeps i = 1, 2, 3 with weight 1/3.
        let panel = TimeSeriesPanel::from_rows(4, 2, vec![1.0, 0.0, 1.0, 2.0, -1.0, 1.0, 9.0, 9.0])
            .unwrap();
        let spec = KernelSpec::new(KernelFamily::Uniform, 0.3).unwrap();
        let s = smoothed_covariance(&panel, 0.5, &spec).unwrap();
        let expected = [[3.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 5.0 / 3.0]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((s.matrix()[(j, k)] - expected[j][k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reflection_at_change_point_uses_one_side() {
        // Left of c = 5 rows are 1, right rows are 100.
        let data: Vec<f64> = (1..=10)
            .flat_map(|i| if i <= 5 { [1.0, 1.0] } else { [100.0, 100.0] })
            .collect();
        let panel = TimeSeriesPanel::from_rows(10, 2, data).unwrap();
        let spec = KernelSpec::new(KernelFamily::Uniform, 0.3).unwrap();
        let s = reflected_covariance(&panel, 0.5, &spec, &[5]).unwrap();
        assert_eq!(s.source, SnapshotSource::Reflected);
        assert!((s.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        let right = reflected_covariance(&panel, 0.6, &spec, &[5]).unwrap();
        assert!((right.matrix()[(0, 0)] - 1e4).abs() < 1e-8);
        let plain = smoothed_covariance(&panel, 0.5, &spec).unwrap();
        assert!(plain.matrix()[(0, 0)] > 1000.0);
    }

    #[test]
    fn reflected_index_clamps_or_errors() {
        assert_eq!(reflected_index(9, 0.2, 3, 10, true).unwrap(), 1);
        assert!(reflected_index(9, 0.2, 3, 10, false).is_err());
        assert_eq!(reflected_index(4, 0.2, 3, 10, true).unwrap(), 3);
        assert_eq!(reflected_index(2, 0.2, 3, 10, true).unwrap(), 2);
    }

    #[test]
    fn no_change_points_falls_back() {
        let panel = TimeSeriesPanel::from_rows(4, 2, vec![1.0, 0.0, 1.0, 2.0, -1.0, 1.0, 9.0, 9.0])
            .unwrap();
        let spec = KernelSpec::new(KernelFamily::Uniform, 0.3).unwrap();
        let a = reflected_covariance(&panel, 0.5, &spec, &[]).unwrap();
        let b = smoothed_covariance(&panel, 0.5, &spec).unwrap();
        assert_eq!(a, b);
    }
}
