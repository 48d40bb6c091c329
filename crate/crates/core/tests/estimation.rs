use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tvnet::changepoint::{ChangePoint, ChangePointReport};
use tvnet::clime::{stability_select_lambda, tv_clime_at, StabilityOptions};
use tvnet::eval::{graph_distance_matrix, roc_auc, roc_sweep, RocOptions, TruthConvention};
use tvnet::kernel::smoothed_covariance;
use tvnet::{
    build_sim_design, clime, tv_clime_path, GraphEstimate, KernelFamily, KernelSpec,
    TimeSeriesPanel,
};

fn noise_panel(n: usize, p: usize, seed: u64) -> TimeSeriesPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * p)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    TimeSeriesPanel::from_rows(n, p, data).unwrap()
}

fn report_at(n: usize, h: f64, points: &[usize]) -> ChangePointReport {
    let mut r = ChangePointReport::empty(n, h);
    r.points = points
        .iter()
        .map(|&index| ChangePoint { index, score: 1.0 })
        .collect();
    r.iota_hat = points.len();
    r
}

#[test]
fn path_without_change_points_is_plain_smoothing() {
    let panel = noise_panel(300, 6, 1);
    let spec = KernelSpec::new(KernelFamily::Uniform, 0.2).unwrap();
    let grid = [0.2, 0.5, 0.8];
    let path = tv_clime_path(
        &panel,
        &grid,
        &spec,
        0.1,
        &ChangePointReport::empty(300, 0.2),
    );
    for pt in path {
        let sigma = smoothed_covariance(&panel, pt.t, &spec)
            .unwrap()
            .into_matrix();
        let direct = clime(&sigma, 0.1).unwrap();
        let est = pt.estimate.unwrap();
        assert_eq!(est.omega, direct.omega);
        assert!(est.reliable);
    }
}

#[test]
fn path_flags_points_next_to_a_change_and_survives_bad_grid_points() {
    let panel = noise_panel(400, 5, 2);
    let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.1).unwrap();
    let report = report_at(400, 0.2, &[200]);
    // h^2 = 0.04: t = 0.52 is flagged, t = 0.6 is reflected but trusted.
    let path = tv_clime_path(&panel, &[0.05, 0.52, 0.6, 0.9], &spec, 0.1, &report);
    assert!(path[0].estimate.is_err());
    assert!(!path[1].estimate.as_ref().unwrap().reliable);
    assert!(path[2].estimate.as_ref().unwrap().reliable);
    assert!(path[3].estimate.is_ok());
}

#[test]
fn duplicated_subsamples_are_perfectly_stable() {
    let panel = noise_panel(200, 5, 3);
    let spec = KernelSpec::new(KernelFamily::Uniform, 0.2).unwrap();
    let opts = StabilityOptions {
        subsample_fraction: 1.0,
        ..StabilityOptions::default()
    };
    let sel = stability_select_lambda(&panel, 0.5, &spec, &[0.01, 0.05, 0.1], &opts).unwrap();
    assert!(sel.instability.iter().all(|&d| d == 0.0));
    assert_eq!(sel.lambda, 0.01);
    assert!(!sel.cap_exceeded);
}

#[test]
fn stability_selection_on_the_simulated_design() {
    let design = build_sim_design(1000, 50, 2.0, 2024).unwrap();
    let panel = design.simulate_panel().unwrap();
    let spec = KernelSpec::new(KernelFamily::Uniform, 0.2).unwrap();
    let grid = [0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.15, 0.2];
    let sel =
        stability_select_lambda(&panel, 0.5, &spec, &grid, &StabilityOptions::default()).unwrap();
    assert!((0.02..=0.1).contains(&sel.lambda), "{sel:?}");
}

#[test]
fn roc_sweep_is_monotone_in_u() {
    let design = build_sim_design(600, 20, 1.0, 5).unwrap();
    let panel = design.simulate_panel().unwrap();
    let spec = KernelSpec::new(KernelFamily::Uniform, 0.2).unwrap();
    let report = report_at(600, 0.2, &design.change_points);
    let u_grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.01).collect();
    // Monotonicity needs one truth for the whole sweep.
    let fixed = RocOptions {
        truth: TruthConvention::Fixed(1e-8),
        ..RocOptions::default()
    };
    let roc = roc_sweep(&panel, 0.8, &spec, 0.06, &u_grid, &design, &report, &fixed).unwrap();
    assert_eq!(roc.len(), u_grid.len());
    assert_eq!(roc[0].sensitivity, 1.0);
    for w in roc.windows(2) {
        assert!(w[1].sensitivity <= w[0].sensitivity);
        assert!(w[1].one_minus_specificity <= w[0].one_minus_specificity);
    }
    let auc = roc_auc(&roc);
    assert!((0.0..=1.0).contains(&auc));

    for r in roc_sweep(
        &panel,
        0.8,
        &spec,
        0.06,
        &u_grid,
        &design,
        &report,
        &RocOptions::default(),
    )
    .unwrap()
    {
        assert!((0.0..=1.0).contains(&r.sensitivity));
        assert!((0.0..=1.0).contains(&r.one_minus_specificity));
    }
}

proptest! {
    #[test]
    fn stability_instability_in_range(seed in 0u64..200, frac in 0.3f64..1.0) {
        let panel = noise_panel(120, 4, seed);
        let spec = KernelSpec::new(KernelFamily::Uniform, 0.3).unwrap();
        let opts = StabilityOptions { n_subsamples: 6, subsample_fraction: frac, seed, ..StabilityOptions::default() };
        let sel = stability_select_lambda(&panel, 0.5, &spec, &[0.0, 0.05, 0.2], &opts).unwrap();
        prop_assert!(sel.instability.iter().all(|&d| (0.0..=0.5).contains(&d)));
    }

    #[test]
    fn distance_matrix_matches_brute_force(bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 25), 1..6)) {
        let graphs: Vec<GraphEstimate> = bits
            .iter()
            .map(|b| GraphEstimate::from_fn(5, 0.0, 0.0, |j, k| b[j.min(k) * 5 + j.max(k)]))
            .collect();
        let d = graph_distance_matrix(&graphs).unwrap();
        for a in 0..graphs.len() {
            prop_assert_eq!(d[a][a], 0);
            for b in 0..graphs.len() {
                prop_assert_eq!(d[a][b], d[b][a]);
                let brute = (0..25)
                    .filter(|&q| {
                        let (j, k) = (q / 5, q % 5);
                        let idx = j.min(k) * 5 + j.max(k);
                        bits[a][idx] != bits[b][idx]
                    })
                    .count();
                prop_assert_eq!(d[a][b], brute);
            }
        }
    }
}

#[test]
fn tv_clime_rejects_points_outside_the_bandwidth_margin() {
    let panel = noise_panel(100, 3, 9);
    let spec = KernelSpec::new(KernelFamily::Uniform, 0.2).unwrap();
    let empty = ChangePointReport::empty(100, 0.2);
    assert!(tv_clime_at(&panel, 0.1, &spec, 0.1, &empty).is_err());
    assert!(tv_clime_at(&panel, 0.2, &spec, 0.1, &empty).is_ok());
}
