use std::sync::Arc;

use fraclap::*;
use nalgebra::DVector;
use proptest::prelude::*;

fn forms(n: usize, s: f64, q: f64) -> EnergyForms {
    let params = FractionalParams::new(s, q, 1).unwrap();
    let mesh = Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap());
    EnergyForms::assemble(mesh, params).unwrap()
}

fn coeffs(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn order() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.25, 0.5, 0.75])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quotient_is_scale_invariant(
        s in order(),
        c in coeffs(17, -1.0, 1.0),
        t in prop_oneof![-50.0..-0.01, 0.01..50.0f64],
    ) {
        let f = forms(16, s, 1.5);
        let u = f.function(DVector::from_vec(c)).unwrap();
        prop_assume!(!u.is_zero());
        let tu = f.function(u.coeffs() * t).unwrap();
        let a = rayleigh_quotient(&u, &f, 1.5).unwrap();
        let b = rayleigh_quotient(&tu, &f, 1.5).unwrap();
        prop_assert!((a / b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_nonnegative(
        s in order(),
        c in coeffs(13, -2.0, 2.0),
        shift in -5.0..5.0f64,
    ) {
        let f = forms(12, s, 1.5);
        let one = DVector::from_element(13, 1.0);
        prop_assert!((f.k() * &one).amax() <= 1e-12 * f.k().amax());
        let u = DVector::from_vec(c);
        let e = f.seminorm_energy(&u);
        prop_assert!(e >= 0.0);
        prop_assert!((u.dot(&(f.k() * &u)) - e).abs() <= 1e-10 * e.max(1.0));
        let shifted = f.seminorm_energy(&u.add_scalar(shift));
        prop_assert!((shifted - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn scaling_matches_direct_assembly(
        s in order(),
        c in coeffs(9, -1.0, 1.0),
        eps in 0.01..1.0f64,
    ) {
        let params = FractionalParams::new(s, 1.5, 1).unwrap();
        let f = forms(8, s, 1.5);
        let scaled = Arc::new(scale_mesh(f.mesh(), eps).unwrap());
        let direct = EnergyForms::assemble(scaled.clone(), params).unwrap();
        let c = DVector::from_vec(c);
        let u = f.function(c.clone()).unwrap();
        prop_assume!(!u.is_zero());
        let v = DiscreteFunction::new(scaled, c).unwrap();
        let a = scaled_quotient(&u, eps, &f, &params).unwrap();
        let b = rayleigh_quotient(&v, &direct, 1.5).unwrap();
        prop_assert!((a / b - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn lq_gradient_is_the_derivative(
        q in prop::sample::select(vec![1.5, 3.0, 4.0]),
        c in coeffs(11, 0.5, 1.5),
        d in coeffs(11, -1.0, 1.0),
    ) {
        let f = forms(10, 0.5, q);
        let (u, v) = (DVector::from_vec(c), DVector::from_vec(d));
        let g = lq_gradient(&f.function(u.clone()).unwrap(), q).unwrap();
        let h = 1e-5;
        let phi = |x: DVector<f64>| f.lq().integral_pow(&x, q) / q;
        let fd = (phi(&u + &v * h) - phi(&u - &v * h)) / (2.0 * h);
        prop_assert!((fd - g.dot(&v)).abs() <= 1e-7 * (1.0 + fd.abs()));
    }

    #[test]
    fn extremals_are_normalized_and_below_the_constant(
        c in coeffs(17, 0.5, 1.5),
        eps in 0.01..1.0f64,
    ) {
        let params = FractionalParams::new(0.5, 3.0, 1).unwrap();
        let f = forms(16, 0.5, 3.0);
        let init = f.function(DVector::from_vec(c)).unwrap();
        let r = minimize_rayleigh(&f, &params, eps, &init, &SolverOptions::default()).unwrap();
        prop_assert!(r.converged);
        prop_assert!((lq_norm(&r.u, 3.0).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!(f.integral(r.u.coeffs()) >= 0.0);
        prop_assert!(r.scaled <= 1.0 + 1e-12);
        prop_assert!((r.lambda - r.scaled).abs() <= 1e-12);
        let direct = scaled_quotient(&r.u, eps, &f, &params).unwrap();
        prop_assert!((direct / r.sobolev - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bound_is_monotone(
        s in 0.05..0.95f64,
        q in 1.05..6.0f64,
        c in 0.01..10.0f64,
        ratio in 1.01..4.0f64,
        measure in 0.1..10.0f64,
    ) {
        let a = epsilon0_bound_value(c, s, q, measure).unwrap();
        let b = epsilon0_bound_value(c * ratio, s, q, measure).unwrap();
        prop_assert!(a > 0.0 && b > a);
        let lifted = epsilon0_bound_value(c, s, q * ratio, 1.0).unwrap();
        prop_assert!(lifted < epsilon0_bound_value(c, s, q, 1.0).unwrap());
    }

    #[test]
    fn grid_is_geometric(
        lo in 1e-4..0.5f64,
        span in 1.1..100.0f64,
        points in 2usize..40,
    ) {
        let hi = (lo * span).min(1.0);
        prop_assume!(hi > lo);
        let g = geometric_grid(lo, hi, points).unwrap();
        prop_assert_eq!(g.len(), points);
        prop_assert_eq!((g[0], g[points - 1]), (lo, hi));
        let r = (hi / lo).powf(1.0 / (points - 1) as f64);
        for w in g.windows(2) {
            prop_assert!((w[1] / w[0] / r - 1.0).abs() <= 1e-12);
        }
    }
}
