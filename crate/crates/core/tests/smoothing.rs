use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tvnet::kernel::{
    kernel_weights, reflected_covariance, smoothed_covariance, KernelFamily, KernelSpec,
};
use tvnet::TimeSeriesPanel;

fn family(k: u8) -> KernelFamily {
    match k % 3 {
        0 => KernelFamily::Uniform,
        1 => KernelFamily::Triangular,
        _ => KernelFamily::Epanechnikov,
    }
}

fn gaussian_panel(n: usize, p: usize, scale: impl Fn(usize) -> f64, seed: u64) -> TimeSeriesPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * p);
    for i in 1..=n {
        for _ in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(scale(i) * z);
        }
    }
    TimeSeriesPanel::from_rows(n, p, data).unwrap()
}

proptest! {
    #[test]
    fn weights_are_normalized_and_local(
        n in 20usize..600,
        t in 0.0f64..1.0,
        b in 0.02f64..0.5,
        k in 0u8..3,
    ) {
        let spec = KernelSpec::new(family(k), b).unwrap();
        let Ok(w) = kernel_weights(n, t, &spec) else {
            // Only possible when no grid point is strictly inside the window.
            prop_assert!((1..=n).all(|i| (i as f64 / n as f64 - t).abs() >= b - 1e-12));
            return Ok(());
        };
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (r, &wi) in w.weights.iter().enumerate() {
            prop_assert!(wi >= 0.0);
            let dist = ((r + 1) as f64 / n as f64 - t).abs();
            if dist > b + 1e-12 {
                prop_assert_eq!(wi, 0.0);
            }
        }
    }

    #[test]
    fn smoothed_covariance_is_psd(seed in 0u64..1000, t in 0.1f64..0.9, k in 0u8..3) {
        let panel = gaussian_panel(80, 6, |_| 1.0, seed);
        let spec = KernelSpec::new(family(k), 0.1).unwrap();
        let s = smoothed_covariance(&panel, t, &spec).unwrap().into_matrix();
        prop_assert!(s.symmetric_eigenvalues().min() > -1e-10);
    }
}

#[test]
fn reflection_without_change_points_is_plain_smoothing() {
    let panel = gaussian_panel(200, 4, |_| 1.0, 1);
    let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.15).unwrap();
    let a = smoothed_covariance(&panel, 0.4, &spec).unwrap();
    let b = reflected_covariance(&panel, 0.4, &spec, &[]).unwrap();
    assert_eq!(a.matrix(), b.matrix());
}

/// Variance 1 up to index 150, variance 4 afterwards. Smoothing at i = 140
/// with b = 0.1 straddles the break; reflection should remove the bias.
#[test]
fn reflection_removes_bias_at_a_step() {
    let (n, p, reps) = (300, 3, 300);
    let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.1).unwrap();
    let mut plain = Vec::new();
    let mut reflected = Vec::new();
    for r in 0..reps {
        let panel = gaussian_panel(n, p, |i| if i <= 150 { 1.0 } else { 2.0 }, 100 + r);
        plain.push(
            smoothed_covariance(&panel, 140.0 / 300.0, &spec)
                .unwrap()
                .matrix()[(0, 0)],
        );
        reflected.push(
            reflected_covariance(&panel, 140.0 / 300.0, &spec, &[150])
                .unwrap()
                .matrix()[(0, 0)],
        );
    }
    let (m_plain, _) = mean_se(&plain);
    let (m_refl, se_refl) = mean_se(&reflected);
    assert!(
        (m_refl - 1.0).abs() < 3.0 * se_refl,
        "reflected mean {m_refl} +- {se_refl}"
    );
    assert!(m_plain > 1.2, "plain mean {m_plain}");
}

#[test]
fn wider_bandwidth_reduces_variance() {
    let spec_narrow = KernelSpec::new(KernelFamily::Epanechnikov, 0.05).unwrap();
    let spec_wide = KernelSpec::new(KernelFamily::Epanechnikov, 0.2).unwrap();
    let mut narrow = Vec::new();
    let mut wide = Vec::new();
    for r in 0..200 {
        let panel = gaussian_panel(400, 2, |_| 1.0, 900 + r);
        narrow.push(
            smoothed_covariance(&panel, 0.5, &spec_narrow)
                .unwrap()
                .matrix()[(0, 1)],
        );
        wide.push(
            smoothed_covariance(&panel, 0.5, &spec_wide)
                .unwrap()
                .matrix()[(0, 1)],
        );
    }
    let var = |v: &[f64]| mean_se(v).1.powi(2) * v.len() as f64;
    assert!(var(&wide) < var(&narrow) * 0.5);
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
