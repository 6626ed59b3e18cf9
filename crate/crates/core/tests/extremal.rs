use std::sync::Arc;

use fraclap::extremal::random_starts;
use fraclap::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, s: f64, q: f64) -> (EnergyForms, FractionalParams) {
    let params = FractionalParams::new(s, q, 1).unwrap();
    let mesh = Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap());
    (EnergyForms::assemble(mesh, params).unwrap(), params)
}

fn random_function(forms: &EnergyForms, rng: &mut ChaCha8Rng) -> DiscreteFunction {
    let n = forms.mesh().n_nodes();
    forms
        .function(DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .unwrap()
}

#[test]
fn quotient_of_constants() {
    let (forms, _) = setup(16, 0.5, 4.0);
    for c in [1.0, -2.5, 1e-3] {
        let u = DiscreteFunction::constant(forms.mesh().clone(), c);
        assert!((rayleigh_quotient(&u, &forms, 4.0).unwrap() - 1.0).abs() < 1e-14);
    }
    let params = FractionalParams::new(0.3, 3.0, 1).unwrap();
    let mesh = Arc::new(build_interval_mesh(0.0, 2.0, 12).unwrap());
    let forms = EnergyForms::assemble(mesh.clone(), params).unwrap();
    let u = DiscreteFunction::constant(mesh, 0.7);
    let expect = 2f64.powf(1.0 - 2.0 / 3.0);
    assert!((rayleigh_quotient(&u, &forms, 3.0).unwrap() / expect - 1.0).abs() < 1e-14);
    let zero = DiscreteFunction::constant(forms.mesh().clone(), 0.0);
    assert!(rayleigh_quotient(&zero, &forms, 3.0).is_err());
}

#[test]
fn quotient_is_homogeneous() {
    let (forms, _) = setup(24, 0.5, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let u = random_function(&forms, &mut rng);
        let f = rayleigh_quotient(&u, &forms, 4.0).unwrap();
        for t in [-3.0, 0.5, 10.0] {
            let tu = u.with_coeffs(u.coeffs() * t).unwrap();
            assert!((rayleigh_quotient(&tu, &forms, 4.0).unwrap() / f - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn scaled_quotient_of_constant() {
    let params = FractionalParams::new(0.5, 3.0, 2).unwrap();
    let mesh = Arc::new(build_rect_mesh(2.0, 1.0, 3, 2).unwrap());
    let forms = EnergyForms::assemble(mesh.clone(), params).unwrap();
    let u = DiscreteFunction::constant(mesh, 1.0);
    for eps in [1e-3, 0.1, 0.7] {
        let expect = (2.0_f64 * eps * eps).powf(1.0 - 2.0 / 3.0);
        let got = scaled_quotient(&u, eps, &forms, &params).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-12);
    }
    assert!(scaled_quotient(&u, 0.0, &forms, &params).is_err());
    assert!(scaled_quotient(&u, -1.0, &forms, &params).is_err());
}

#[test]
fn scaled_quotient_at_unit_eps_is_the_quotient() {
    let (forms, params) = setup(16, 0.5, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = random_function(&forms, &mut rng);
    let a = scaled_quotient(&u, 1.0, &forms, &params).unwrap();
    let b = rayleigh_quotient(&u, &forms, 4.0).unwrap();
    assert!((a / b - 1.0).abs() < 1e-14);
}

#[test]
fn scaled_quotient_matches_direct_assembly() {
    let (forms, params) = setup(64, 0.5, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for eps in [0.25, 0.03] {
        let scaled = Arc::new(scale_mesh(forms.mesh(), eps).unwrap());
        let direct = EnergyForms::assemble(scaled.clone(), params).unwrap();
        for _ in 0..4 {
            let u = random_function(&forms, &mut rng);
            let v = DiscreteFunction::new(scaled.clone(), u.coeffs().clone()).unwrap();
            let expect = rayleigh_quotient(&v, &direct, 4.0).unwrap();
            let got = scaled_quotient(&u, eps, &forms, &params).unwrap();
            assert!(
                (got / expect - 1.0).abs() < 1e-10,
                "eps {eps}: {got} vs {expect}"
            );
        }
    }
}

#[test]
fn constant_solves_the_rescaled_equation() {
    for (s, q) in [(0.25, 1.5), (0.5, 4.0), (0.75, 3.0)] {
        let params = FractionalParams::new(s, q, 1).unwrap();
        let mesh = Arc::new(build_interval_mesh(0.0, 2.0, 32).unwrap());
        let forms = EnergyForms::assemble(mesh.clone(), params).unwrap();
        let u = DiscreteFunction::constant(mesh, 2f64.powf(-1.0 / q));
        let lambda = 2f64.powf(1.0 - 2.0 / q);
        for eps in [1e-3, 0.1, 1.0] {
            let r = weak_residual(&u, eps, lambda, &forms, &params).unwrap();
            assert!(r <= 1e-10, "s = {s}, q = {q}, eps = {eps}: {r:e}");
        }
    }
}

#[test]
fn generic_point_has_positive_residual() {
    let (forms, params) = setup(16, 0.5, 4.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_function(&forms, &mut rng);
    assert!(weak_residual(&u, 0.5, 1.0, &forms, &params).unwrap() > 1e-3);
}

#[test]
fn linear_exponent_is_rejected() {
    let params = FractionalParams::new(0.5, 2.0, 1).unwrap();
    let mesh = Arc::new(build_interval_mesh(0.0, 1.0, 8).unwrap());
    let forms = EnergyForms::assemble(mesh.clone(), params).unwrap();
    let init = DiscreteFunction::constant(mesh, 1.0);
    let err =
        minimize_rayleigh(&forms, &params, 0.5, &init, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Invalid(ref m) if m.contains("q != 2")));
}

#[test]
fn zero_initial_guess_is_rejected() {
    let (forms, params) = setup(8, 0.5, 4.0);
    let init = DiscreteFunction::constant(forms.mesh().clone(), 0.0);
    assert!(minimize_rayleigh(&forms, &params, 0.5, &init, &SolverOptions::default()).is_err());
}

fn check_result(r: &ExtremalResult, forms: &EnergyForms, params: &FractionalParams) {
    let q = params.q();
    assert!((lq_norm(&r.u, q).unwrap() - 1.0).abs() < 1e-10);
    assert!(forms.integral(r.u.coeffs()) >= 0.0);
    let direct = scaled_quotient(&r.u, r.eps, forms, params).unwrap();
    assert!((r.sobolev / direct - 1.0).abs() < 1e-12);
    assert_eq!(r.lambda, r.scaled);
    let bound = forms.mesh().measure().powf(1.0 - 2.0 / q);
    assert!(r.scaled <= bound * (1.0 + 1e-9));
    assert!(r.scaled >= 0.0);
    // accepted steps decrease the quotient; recorded values carry rounding
    for w in r.trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-13), "trace increased: {w:?}");
    }
    if r.converged {
        let res = weak_residual(&r.u, r.eps, r.lambda, forms, params).unwrap();
        assert!(res <= 1e-9, "residual {res:e}");
    }
}

#[test]
fn extremals_satisfy_their_contracts() {
    let opts = SolverOptions::default();
    for (s, q) in [(0.25, 1.5), (0.5, 3.0), (0.75, 4.0)] {
        let (forms, params) = setup(48, s, q);
        let n = forms.mesh().n_nodes();
        for (i, x0) in random_starts(n, 3, 9).into_iter().enumerate() {
            let init = forms.function(x0).unwrap();
            for eps in [0.01, 0.3, 1.0] {
                let r = minimize_rayleigh(&forms, &params, eps, &init, &opts).unwrap();
                assert!(r.converged, "s = {s}, q = {q}, start {i}, eps = {eps}");
                check_result(&r, &forms, &params);
            }
        }
    }
}

#[test]
fn sign_is_canonical() {
    let (forms, params) = setup(24, 0.5, 4.0);
    let init = DiscreteFunction::constant(forms.mesh().clone(), -2.0);
    let r = minimize_rayleigh(&forms, &params, 0.5, &init, &SolverOptions::default()).unwrap();
    assert!(r.u.coeffs().iter().all(|v| *v > 0.0));
}

#[test]
fn mass_preconditioner_reaches_the_same_extremal() {
    let (forms, params) = setup(16, 0.5, 4.0);
    let init = forms
        .function(random_starts(forms.mesh().n_nodes(), 1, 3).remove(0))
        .unwrap();
    let energy = SolverOptions::default();
    let mass = SolverOptions {
        preconditioner: Preconditioner::Mass,
        ..energy
    };
    let a = minimize_rayleigh(&forms, &params, 0.5, &init, &energy).unwrap();
    let b = minimize_rayleigh(&forms, &params, 0.5, &init, &mass).unwrap();
    assert!(a.converged && b.converged);
    assert!((a.scaled - b.scaled).abs() < 1e-10);
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let (forms, params) = setup(32, 0.5, 4.0);
    let init = forms
        .function(random_starts(forms.mesh().n_nodes(), 1, 1).remove(0))
        .unwrap();
    let opts = SolverOptions {
        max_iter: 1,
        ..Default::default()
    };
    let r = minimize_rayleigh(&forms, &params, 0.5, &init, &opts).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 1);
}

/// Minimum of the scaled quotient over the 3-coefficient sphere by an angular
/// grid search followed by shrinking-stencil refinement.
fn sphere_search(forms: &EnergyForms, params: &FractionalParams, eps: f64) -> f64 {
    let mesh = forms.mesh().clone();
    let f = |th: f64, ph: f64| {
        let c = DVector::from_vec(vec![ph.sin() * th.cos(), ph.sin() * th.sin(), ph.cos()]);
        let u = DiscreteFunction::new(mesh.clone(), c).unwrap();
        scaled_quotient(&u, eps, forms, params).unwrap_or(f64::INFINITY)
    };
    let n = 720;
    let (dt, dp) = (
        2.0 * std::f64::consts::PI / n as f64,
        std::f64::consts::PI / n as f64,
    );
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (th, ph) = (i as f64 * dt, (j as f64 + 0.5) * dp);
            let v = f(th, ph);
            if v < best.0 {
                best = (v, th, ph);
            }
        }
    }
    let (mut v, mut th, mut ph) = best;
    let mut h = dt;
    while h > 1e-12 {
        let mut moved = false;
        for (a, b) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let cand = f(th + a * h, ph + b * h);
            if cand < v {
                (v, th, ph) = (cand, th + a * h, ph + b * h);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    v
}

#[test]
fn three_node_minimum_matches_sphere_search() {
    let (forms, params) = setup(2, 0.5, 4.0);
    let eps = 0.5;
    let oracle = sphere_search(&forms, &params, eps);
    let ms =
        multistart_extremals(&forms, &params, eps, 8, 0, &SolverOptions::default(), None).unwrap();
    let best = ms.best();
    assert!(best.converged);
    assert!(
        (best.sobolev - oracle).abs() < 1e-4,
        "{} vs {}",
        best.sobolev,
        oracle
    );
    let init = DiscreteFunction::constant(forms.mesh().clone(), 1.0);
    let single = minimize_rayleigh(&forms, &params, eps, &init, &SolverOptions::default()).unwrap();
    assert!((single.sobolev - oracle).abs() < 1e-4);
}

#[test]
fn small_domain_limit() {
    let (forms, params) = setup(256, 0.5, 4.0);
    let opts = SolverOptions::default();
    let ms = multistart_extremals(&forms, &params, 1e-3, 8, 42, &opts, None).unwrap();
    assert_eq!(ms.n_clusters(), 1);
    let best = ms.best();
    assert!((best.scaled - 1.0).abs() <= 2e-2);
    assert!(distance_to_constant(&best.u, &forms, 4.0) <= 0.05);
    assert!(ms.runs.iter().all(|r| r.converged));
}

#[test]
fn multistart_is_deterministic_per_seed() {
    let (forms, params) = setup(64, 0.5, 4.0);
    let opts = SolverOptions::default();
    let a = multistart_extremals(&forms, &params, 1e-3, 8, 7, &opts, None).unwrap();
    let b = multistart_extremals(&forms, &params, 1e-3, 8, 7, &opts, None).unwrap();
    let c = multistart_extremals(&forms, &params, 1e-3, 8, 8, &opts, None).unwrap();
    assert_eq!(a.runs.len(), b.runs.len());
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.u.coeffs(), y.u.coeffs());
        assert_eq!(x.scaled.to_bits(), y.scaled.to_bits());
    }
    assert_eq!(a.n_clusters(), c.n_clusters());
    assert!((a.best().scaled - c.best().scaled).abs() < 1e-9);
}

#[test]
fn multistart_needs_two_starts() {
    let (forms, params) = setup(8, 0.5, 4.0);
    let opts = SolverOptions::default();
    assert!(multistart_extremals(&forms, &params, 0.5, 1, 0, &opts, None).is_err());
}

#[test]
fn multistart_separates_distinct_minimizers() {
    // On a long interval the constant is no longer minimal and the two
    // mirror-image extremals are both found.
    let params = FractionalParams::new(0.5, 4.0, 1).unwrap();
    let mesh = Arc::new(build_interval_mesh(0.0, 8.0, 64).unwrap());
    let forms = EnergyForms::assemble(mesh, params).unwrap();
    let opts = SolverOptions::default();
    let ms = multistart_extremals(&forms, &params, 1.0, 16, 3, &opts, None).unwrap();
    let best = ms.best();
    let bound = 8f64.powf(0.5);
    assert!(best.scaled < bound * (1.0 - 1e-3));
    assert!(ms.n_clusters() >= 2, "clusters: {}", ms.n_clusters());
}
