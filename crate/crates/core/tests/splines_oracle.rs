mod common;

use evtpool::splines;
use evtpool::SplineBasis;
use proptest::prelude::*;

fn grid_decrease(a: &[f64], b: &SplineBasis, n: usize) -> f64 {
    let (lo, hi) = b.domain();
    let mut prev = splines::spline_eval(lo, a, b).unwrap();
    let mut total = 0.0;
    for k in 1..=n {
        let y = splines::spline_eval((lo + (hi - lo) * k as f64 / n as f64).min(hi), a, b).unwrap();
        total += (prev - y).max(0.0);
        prev = y;
    }
    total
}

prop_compose! {
    fn basis_and_coeffs()(q in 6usize..14, degree in 2usize..5, lo in -2.0f64..3.0, width in 0.5f64..5.0)
        (a in proptest::collection::vec(-2.0f64..2.0, q), q in Just(q), degree in Just(degree), lo in Just(lo), width in Just(width))
        -> (SplineBasis, Vec<f64>)
    {
        let d = degree.min(q - 1);
        (SplineBasis::clamped(lo, lo + width, q, d).unwrap(), a)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity_and_nonnegativity((b, _) in basis_and_coeffs(), f in 0.0f64..=1.0) {
        let (lo, hi) = b.domain();
        let v = b.eval(lo + f * (hi - lo)).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn affine_coefficients_are_unpenalized(q in 3usize..20, c0 in -5.0f64..5.0, c1 in -2.0f64..2.0) {
        let p = splines::build_penalty_matrix::<f64>(q).unwrap();
        let a: Vec<f64> = (0..q).map(|k| c0 + c1 * k as f64).collect();
        prop_assert!(splines::roughness_penalty(&a, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn roughness_is_sum_of_squared_second_differences(a in proptest::collection::vec(-3.0f64..3.0, 3..15)) {
        let p = splines::build_penalty_matrix::<f64>(a.len()).unwrap();
        let direct: f64 = a.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).sum();
        prop_assert!((splines::roughness_penalty(&a, &p).unwrap() - direct).abs() < 1e-10 * (1.0 + direct));
    }

    #[test]
    fn monotonicity_penalty_matches_dense_grid((b, a) in basis_and_coeffs()) {
        let exact = splines::monotonicity_penalty(&a, &b).unwrap();
        let grid = grid_decrease(&a, &b, 100_000);
        prop_assert!((exact - grid).abs() < 1e-6, "{} vs {}", exact, grid);
    }

    #[test]
    fn increasing_coefficients_are_unpenalized((b, mut a) in basis_and_coeffs()) {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assert!(splines::monotonicity_penalty(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn derivative_matches_differences((b, a) in basis_and_coeffs(), f in 0.05f64..0.95) {
        let (lo, hi) = b.domain();
        let x = lo + f * (hi - lo);
        let h = 1e-6 * (hi - lo);
        let fd = (splines::spline_eval(x + h, &a, &b).unwrap() - splines::spline_eval(x - h, &a, &b).unwrap()) / (2.0 * h);
        let d = splines::derivative_eval(x, &a, &b).unwrap();
        prop_assert!((d - fd).abs() < 1e-5 * (1.0 + d.abs()));
    }

    #[test]
    fn monotonicity_gradient_matches_differences((b, a) in basis_and_coeffs()) {
        let (lo, hi) = b.domain();
        let (_, g) = splines::monotonicity_penalty_grad(&a, &b, lo, hi).unwrap();
        for k in 0..a.len() {
            let mut up = a.clone();
            let mut dn = a.clone();
            up[k] += 1e-7;
            dn[k] -= 1e-7;
            let fd = (splines::monotonicity_penalty(&up, &b).unwrap() - splines::monotonicity_penalty(&dn, &b).unwrap()) / 2e-7;
            prop_assert!((g[k] - fd).abs() < 1e-5 * (1.0 + g[k].abs()), "{} {} {}", k, g[k], fd);
        }
    }
}

#[test]
fn basis_matches_truncated_power_oracle() {
    let degree = 4;
    let knots: Vec<f64> = (0..16).map(|k| 0.5 * k as f64 + 0.07 * ((k * 7) % 5) as f64).collect();
    let b = SplineBasis::from_knots(knots.clone(), degree).unwrap();
    let (lo, hi) = b.domain();
    let mut worst: f64 = 0.0;
    for k in 0..=1000 {
        let x = lo + (hi - lo) * k as f64 / 1000.0;
        for (i, v) in b.eval(x).unwrap().iter().enumerate() {
            let o = common::truncated_power_bspline(&knots[i..i + degree + 2], degree, x.min(hi - 1e-12));
            worst = worst.max((v - o).abs());
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn clamped_interior_functions_match_truncated_power_oracle() {
    let (q, degree) = (12, 3);
    let b = SplineBasis::clamped(1.0, 4.0, q, degree).unwrap();
    let knots = b.knots().to_vec();
    for i in degree..q - degree {
        for k in 0..200 {
            let x = 1.0 + 3.0 * k as f64 / 200.0;
            let v = b.eval(x).unwrap()[i];
            let o = common::truncated_power_bspline(&knots[i..i + degree + 2], degree, x);
            assert!((v - o).abs() < 1e-10, "function {i} at {x}: {v} vs {o}");
        }
    }
}

#[test]
fn greville_coefficients_reproduce_lines() {
    let b = SplineBasis::clamped(2.0, 6.0, 10, 4).unwrap();
    let a: Vec<f64> = b.greville().iter().map(|g| 0.3 - 1.7 * g).collect();
    for k in 0..=50 {
        let x = 2.0 + 4.0 * k as f64 / 50.0;
        assert!((splines::spline_eval(x, &a, &b).unwrap() - (0.3 - 1.7 * x)).abs() < 1e-12);
    }
}

#[test]
fn stationary_points_are_zeros_of_the_derivative() {
    let b = SplineBasis::clamped(0.0, 5.0, 9, 4).unwrap();
    let a = [0.0, 1.0, 2.5, 1.0, -1.0, 0.5, 2.0, 1.5, 3.0];
    let pts = splines::stationary_points(&a, &b, 0.0, 5.0).unwrap();
    assert!(!pts.is_empty());
    for x in pts {
        assert!(splines::derivative_eval(x, &a, &b).unwrap().abs() < 1e-8);
    }
}

#[test]
fn evaluation_outside_the_domain_errors() {
    let b = SplineBasis::clamped(0.0, 1.0, 6, 3).unwrap();
    assert!(b.eval(1.5).is_err());
    assert!(SplineBasis::clamped(0.0, 1.0, 3, 3).is_err());
}
