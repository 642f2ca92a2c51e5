use mqplab_core::hjb::ScalarRiccati;
use mqplab_core::linalg::{from_row_major, to_row_major, Expm};
use mqplab_core::tails::{analytic_tail_swimmers, predicted_tail_cramer, swimmer_tail_routes};
use mqplab_core::*;
use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;

proptest! {
    #[test]
    fn bk_tensor_is_trace_free_and_exchange_symmetric(d in 2usize..=3, dc in 0.01f64..10.0) {
        let t = bk_covariance(d, dc).unwrap();
        for i in 0..d { for j in 0..d { for k in 0..d { for l in 0..d {
            prop_assert!((t.get(i, j, k, l) - t.get(k, l, i, j)).abs() < 1e-12);
        }}}}
        for k in 0..d { for l in 0..d {
            let tr: f64 = (0..d).map(|i| t.get(i, i, k, l)).sum();
            prop_assert!(tr.abs() < 1e-12 * dc.max(1.0));
        }}
    }

    #[test]
    fn tail_routes_agree_in_rational_arithmetic(phi_n in 1i64..400, phi_d in 1i64..20, d in 2i64..=3, dn in 1i64..50, dd in 1i64..20) {
        let (a, b) = swimmer_tail_routes(Ratio::new(phi_n, phi_d), Ratio::from_integer(d), Ratio::new(dn, dd));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cramer_route_equals_density_route(d in 2usize..=3, dc in 0.1f64..3.0, extra in 0.01f64..20.0) {
        let df = d as f64;
        let phi = df * (df - 1.0) * dc / 2.0 + extra;
        let a = analytic_tail_swimmers(phi, d, dc).unwrap();
        let b = predicted_tail_cramer(phi, df * (df - 1.0) * dc / 2.0, 1.0 / ((df - 1.0) * dc)).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn swimmer_density_normalized(d in 2usize..=3, dc in 0.2f64..3.0, kappa in 0.1f64..5.0, margin in 0.5f64..20.0) {
        let df = d as f64;
        let phi = df * (df - 1.0) * dc / 2.0 + margin;
        let den = StationaryDensity::swimmers(d, dc, kappa, phi).unwrap();
        prop_assert!((den.total_mass() - 1.0).abs() < 1e-8);
        let s = den.inner_scale();
        prop_assert!(den.cdf(0.5 * s) <= den.cdf(s) && den.cdf(s) <= den.cdf(4.0 * s) && den.cdf(4.0 * s) <= 1.0);
    }

    #[test]
    fn thermal_moments_agree(c_over_d in 1.2f64..12.0, dc in 0.2f64..3.0, kappa in 0.1f64..5.0, qf in 0.05f64..0.9) {
        let den = StationaryDensity::thermal(c_over_d * dc, dc, kappa).unwrap();
        let q = qf * den.tail_exponent();
        let (a, b) = (den.moment(q).unwrap(), den.moment_quadrature(q).unwrap());
        prop_assert!((a - b).abs() < 1e-6 * a, "{} {}", a, b);
    }

    #[test]
    fn scalar_riccati_solves_its_equation(a in -3.0f64..3.0, g in 0.1f64..4.0, beta in 0.0f64..10.0, pf in 0.0f64..5.0, t in -5.0f64..-0.01) {
        prop_assume!(a.abs() + beta > 0.1);
        let eq = ScalarRiccati { a, g, beta };
        let h = 1e-5;
        let p = eq.value(t, pf, 0.0).unwrap();
        let dp = (eq.value(t + h, pf, 0.0).unwrap() - eq.value(t - h, pf, 0.0).unwrap()) / (2.0 * h);
        let rhs = beta + 2.0 * a * p - g * p * p;
        prop_assert!((dp + rhs).abs() < 1e-5 * (1.0 + rhs.abs() + p * p), "{} {}", dp, rhs);
        let di = (eq.integral(t - h, pf, 0.0).unwrap() - eq.integral(t + h, pf, 0.0).unwrap()) / (2.0 * h);
        prop_assert!((di - p).abs() < 1e-5 * (1.0 + p.abs()));
    }

    #[test]
    fn hill_is_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>().powf(-0.5)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        let (a, b) = (hill_plateau(&xs).unwrap(), hill_plateau(&ys).unwrap());
        prop_assert!((a.alpha_hat - b.alpha_hat).abs() < 1e-9 * a.alpha_hat);
        prop_assert!(a.ci_low <= a.alpha_hat && a.alpha_hat <= a.ci_high);
    }

    #[test]
    fn expm_inverse_and_determinant(entries in proptest::collection::vec(-2.0f64..2.0, 9)) {
        let m = DMatrix::from_row_slice(3, 3, &entries);
        let mut e = Expm::new(3);
        let (mut pos, mut neg) = (vec![0.0; 9], vec![0.0; 9]);
        e.compute(&to_row_major(&m), &mut pos);
        e.compute(&to_row_major(&(-&m)), &mut neg);
        let prod = from_row_major(&pos, 3) * from_row_major(&neg, 3);
        prop_assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-10);
        let det = from_row_major(&pos, 3).determinant();
        prop_assert!((det - m.trace().exp()).abs() < 1e-10 * det.abs().max(1.0));
    }

    #[test]
    fn optimal_gain_beats_neighbours(d in 2usize..=3, dc in 0.2f64..2.0, beta in 0.0f64..30.0, q in 0.5f64..4.0) {
        let m = CssModel::Swimmers { d, d_coef: dc, kappa: 1.0 };
        let r = optimize_gain(&m, q, beta, MomentMethod::ClosedForm).unwrap();
        let c = |p: f64| mqplab_core::css::expected_cost_at(&m, p, q, beta, MomentMethod::ClosedForm).unwrap();
        let eps = 1e-4 * r.phi_star;
        prop_assert!(c(r.phi_star) <= c(r.phi_star - eps) + 1e-12 && c(r.phi_star) <= c(r.phi_star + eps) + 1e-12);
        prop_assert!(r.phi_star > r.convex_window.0);
    }
}
