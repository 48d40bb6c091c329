//! CLIME columns checked against LP solvers that share no code with the
//! dual simplex in `tvnet::lp`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvnet::clime::{clime, clime_column, feasibility_gap, support};
use tvnet::sim::checked_inverse;

/// `min |w|_1  s.t.  |Sigma w - e_j|_inf <= lambda` through minilp, with free
/// variables `w` and auxiliaries `a >= |w|`.
fn reference_l1(sigma: &DMatrix<f64>, j: usize, lambda: f64) -> f64 {
    let p = sigma.nrows();
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..p)
        .map(|_| pb.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let a: Vec<_> = (0..p)
        .map(|_| pb.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for k in 0..p {
        pb.add_constraint([(w[k], 1.0), (a[k], -1.0)], ComparisonOp::Le, 0.0);
        pb.add_constraint([(w[k], -1.0), (a[k], -1.0)], ComparisonOp::Le, 0.0);
    }
    for r in 0..p {
        let row: Vec<_> = (0..p).map(|k| (w[k], sigma[(r, k)])).collect();
        let e = if r == j { 1.0 } else { 0.0 };
        pb.add_constraint(row.clone(), ComparisonOp::Le, e + lambda);
        pb.add_constraint(row, ComparisonOp::Ge, e - lambda);
    }
    pb.solve().expect("reference solve").objective()
}

/// Exhaustive vertex enumeration for `p = 2`: every optimum of the LP over
/// `(w+, w-) in R^4_+` is attained at a point where four of the eight
/// constraints (four box rows, four sign bounds) are active.
fn vertex_enumeration_p2(sigma: &DMatrix<f64>, j: usize, lambda: f64) -> (f64, [f64; 2]) {
    // Rows g_r(x) <= h_r over x = (w1+, w2+, w1-, w2-).
    let mut g = Vec::new();
    let mut h = Vec::new();
    for r in 0..2 {
        let e = if r == j { 1.0 } else { 0.0 };
        let row = [sigma[(r, 0)], sigma[(r, 1)], -sigma[(r, 0)], -sigma[(r, 1)]];
        g.push(row);
        h.push(e + lambda);
        g.push(row.map(|v| -v));
        h.push(lambda - e);
    }
    for k in 0..4 {
        let mut row = [0.0; 4];
        row[k] = -1.0;
        g.push(row);
        h.push(0.0);
    }
    let mut best = (f64::INFINITY, [0.0; 2]);
    let m = g.len();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                for d in c + 1..m {
                    let idx = [a, b, c, d];
                    let mat = DMatrix::from_fn(4, 4, |r, k| g[idx[r]][k]);
                    let rhs = nalgebra::DVector::from_fn(4, |r, _| h[idx[r]]);
                    let Some(x) = mat.lu().solve(&rhs) else {
                        continue;
                    };
                    let feasible =
                        (0..m).all(|r| (0..4).map(|k| g[r][k] * x[k]).sum::<f64>() <= h[r] + 1e-12);
                    if feasible {
                        let obj: f64 = x.iter().sum();
                        if obj < best.0 - 1e-14 {
                            best = (obj, [x[0] - x[2], x[1] - x[3]]);
                        }
                    }
                }
            }
        }
    }
    best
}

fn random_pd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(p, p) * 0.5
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn column_residual(sigma: &DMatrix<f64>, w: &[f64], j: usize) -> f64 {
    (0..sigma.nrows())
        .map(|r| {
            let s: f64 = (0..w.len()).map(|k| sigma[(r, k)] * w[k]).sum();
            (s - if r == j { 1.0 } else { 0.0 }).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn two_by_two_matches_vertex_enumeration() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    for j in 0..2 {
        let (opt, w_ref) = vertex_enumeration_p2(&sigma, j, 0.05);
        let w = clime_column(&sigma, j, 0.05).unwrap();
        assert!((l1(&w) - opt).abs() < 1e-6, "{} vs {opt}", l1(&w));
        assert!((w[0] - w_ref[0]).abs() < 1e-6 && (w[1] - w_ref[1]).abs() < 1e-6);
        assert!(column_residual(&sigma, &w, j) <= 0.05 + 1e-9);
    }
}

#[test]
fn vertex_enumeration_agrees_with_minilp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let sigma = random_pd(2, &mut rng);
        for lambda in [0.0, 0.02, 0.3] {
            let (opt, _) = vertex_enumeration_p2(&sigma, 1, lambda);
            assert!((opt - reference_l1(&sigma, 1, lambda)).abs() < 1e-7);
        }
    }
}

#[test]
fn random_six_by_six_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sigma = random_pd(6, &mut rng);
    let est = clime(&sigma, 0.02).unwrap();
    assert!(est.feasibility_gap <= 1e-9);
    assert_eq!(est.omega, est.omega.transpose());
    for j in 0..6 {
        let col: Vec<f64> = est.omega_raw.column(j).iter().copied().collect();
        assert!((l1(&col) - reference_l1(&sigma, j, 0.02)).abs() < 1e-6);
    }
}

#[test]
fn objective_is_nonincreasing_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let sigma = random_pd(5, &mut rng);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let w = clime_column(&sigma, 2, lambda).unwrap();
            let obj = l1(&w);
            assert!(obj <= prev + 1e-9);
            prev = obj;
        }
        assert_eq!(prev, 0.0, "lambda >= 1 admits w = 0");
    }
}

#[test]
fn exact_inverse_at_lambda_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for p in [3, 8, 15, 20] {
        let sigma = random_pd(p, &mut rng);
        let inv = checked_inverse(&sigma).unwrap();
        let est = clime(&sigma, 0.0).unwrap();
        assert!((&est.omega_raw - &inv).amax() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn columns_are_feasible_and_optimal(seed in 0u64..10_000, p in 2usize..=6, li in 0usize..4) {
        let lambda = [0.0, 0.01, 0.05, 0.2][li];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = random_pd(p, &mut rng);
        for j in 0..p {
            let w = clime_column(&sigma, j, lambda).unwrap();
            prop_assert!(column_residual(&sigma, &w, j) <= lambda + 1e-9);
            let reference = reference_l1(&sigma, j, lambda);
            prop_assert!((l1(&w) - reference).abs() < 1e-6, "{} vs {}", l1(&w), reference);
        }
    }

    #[test]
    fn support_is_symmetric_and_nested(seed in 0u64..10_000, p in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = random_pd(p, &mut rng);
        let est = clime(&sigma, 0.05).unwrap();
        prop_assert!(feasibility_gap(&sigma, &est.omega_raw, 0.05) <= 1e-9);
        let mut prev = support(&est, 0.0);
        prop_assert_eq!(prev.count(), p * p);
        for u in [0.01, 0.05, 0.1, 0.5, 1.0, 10.0] {
            let g = support(&est, u);
            prop_assert!(g.is_symmetric());
            for j in 0..p {
                for k in 0..p {
                    prop_assert!(!g.has_edge(j, k) || prev.has_edge(j, k));
                }
            }
            prev = g;
        }
        prop_assert_eq!(support(&est, est.omega.amax() * 1.01 + 1e-12).count(), 0);
    }
}
