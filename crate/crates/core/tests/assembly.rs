use std::sync::Arc;

use fraclap::assembly::assemble_gagliardo_with;
use fraclap::quadrature::gauss_legendre;
use fraclap::*;
use nalgebra::{DVector, SymmetricEigen};

fn interval(n: usize) -> Arc<Mesh> {
    Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap())
}

fn quad(k: &nalgebra::DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(k * u))
}

/// `½∬(x-y)²|x-y|^{-1-2s}` over the unit square, i.e. the halved seminorm of `u = x`.
fn linear_seminorm_1d(s: f64) -> f64 {
    0.5 / ((1.0 - s) * (3.0 - 2.0 * s))
}

/// Halved seminorm of `u(x) = x₁` on the unit square, from the autocorrelation
/// `(1-|z₁|)(1-|z₂|)` of the square written in polar coordinates.
fn linear_seminorm_square(s: f64) -> f64 {
    let rule = gauss_legendre(40);
    let p = 2.0 - 2.0 * s;
    let mut total = 0.0;
    for (lo, hi) in [
        (0.0, std::f64::consts::FRAC_PI_4),
        (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2),
    ] {
        for (t, w) in rule.iter() {
            let th = lo + (hi - lo) * t;
            let (c, sn) = (th.cos(), th.sin());
            let r = 1.0 / c.max(sn);
            let radial = r.powf(p) / p - (c + sn) * r.powf(p + 1.0) / (p + 1.0)
                + c * sn * r.powf(p + 2.0) / (p + 2.0);
            total += w * (hi - lo) * c * c * radial;
        }
    }
    // four quadrants of z, times the ½ of the halved form
    4.0 * total * 0.5
}

#[test]
fn interval_mesh_examples() {
    let m = build_interval_mesh(0.0, 1.0, 4).unwrap();
    assert_eq!(m.n_nodes(), 5);
    let xs: Vec<f64> = (0..5).map(|i| m.node(i)[0]).collect();
    assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(build_interval_mesh(0.0, 2.0, 2).unwrap().measure(), 2.0);
    assert!(matches!(
        build_interval_mesh(1.0, 0.0, 4),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn rect_mesh_examples() {
    let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
    assert_eq!((m.n_nodes(), m.n_elements()), (4, 2));
    assert!((m.measure() - 1.0).abs() < 1e-15);
    assert!((build_rect_mesh(2.0, 3.0, 2, 3).unwrap().measure() - 6.0).abs() < 1e-14);
    assert!(build_rect_mesh(0.0, 1.0, 1, 1).is_err());
}

#[test]
fn measure_scales_with_dimension() {
    let line = build_interval_mesh(0.0, 1.0, 8).unwrap();
    let square = build_rect_mesh(1.0, 1.0, 3, 3).unwrap();
    for k in 0..=12 {
        let eps = 10f64.powf(-3.0 + 0.25 * k as f64);
        let a = scale_mesh(&line, eps).unwrap().measure();
        let b = scale_mesh(&square, eps).unwrap().measure();
        assert!((a / eps - 1.0).abs() < 1e-14);
        assert!((b / (eps * eps) - 1.0).abs() < 1e-14);
    }
    let half = scale_mesh(&line, 0.5).unwrap();
    assert_eq!(half.node(half.n_nodes() - 1)[0], 0.5);
    assert_eq!(scale_mesh(&square, 1.0).unwrap(), square);
    assert!((scale_mesh(&square, 0.1).unwrap().measure() - 0.01).abs() < 1e-16);
    assert!(scale_mesh(&line, 0.0).is_err());
}

#[test]
fn refinement_preserves_measure() {
    for n in [2, 4, 8, 16, 32] {
        assert_eq!(build_interval_mesh(0.0, 3.0, n).unwrap().measure(), 3.0);
        let r = build_rect_mesh(2.0, 1.5, n, n).unwrap();
        assert!((r.measure() - 3.0).abs() < 1e-12 * 3.0);
    }
}

#[test]
fn interval_form_invariants() {
    for s in [0.25, 0.5, 0.75] {
        let mesh = interval(32);
        let k = assemble_gagliardo(&mesh, &FractionalParams::new(s, 3.0, 1).unwrap()).unwrap();
        let scale = k.amax();
        assert!((&k - k.transpose()).amax() <= 1e-12 * scale);
        let ones = DVector::from_element(mesh.n_nodes(), 1.0);
        assert!((&k * &ones).amax() <= 1e-10 * scale);
        let eig = SymmetricEigen::new(k.clone()).eigenvalues;
        assert!(eig.min() >= -1e-12 * scale);
        let m = assemble_mass(&mesh);
        assert!(SymmetricEigen::new(m).eigenvalues.min() > 0.0);
    }
}

#[test]
fn square_form_invariants() {
    let mesh = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
    let k = assemble_gagliardo(&mesh, &FractionalParams::new(0.5, 3.0, 2).unwrap()).unwrap();
    let scale = k.amax();
    assert!((&k - k.transpose()).amax() <= 1e-12 * scale);
    let ones = DVector::from_element(mesh.n_nodes(), 1.0);
    assert!((&k * &ones).amax() <= 1e-10 * scale);
    assert!(SymmetricEigen::new(k).eigenvalues.min() >= -1e-12 * scale);
}

#[test]
fn linear_function_seminorm_on_interval() {
    for s in [0.25, 0.5, 0.75] {
        let params = FractionalParams::new(s, 3.0, 1).unwrap();
        let exact = linear_seminorm_1d(s);
        let mesh = interval(256);
        let u = DVector::from_vec(mesh.interpolate(|x| x[0]));
        let k = assemble_gagliardo(&mesh, &params).unwrap();
        assert!((quad(&k, &u) / exact - 1.0).abs() < 1e-3, "s = {s}");
        let one = DVector::from_element(mesh.n_nodes(), 1.0);
        assert!(quad(&k, &one).abs() < 1e-10);
    }
    assert!((linear_seminorm_1d(0.5) - 0.5).abs() < 1e-15);
    assert!((linear_seminorm_1d(0.25) - 0.5 / (0.75 * 2.5)).abs() < 1e-15);
}

#[test]
fn linear_function_seminorm_on_square() {
    for s in [0.25, 0.5, 0.75] {
        let params = FractionalParams::new(s, 1.5, 2).unwrap();
        let exact = linear_seminorm_square(s);
        let mesh = build_rect_mesh(1.0, 1.0, 5, 5).unwrap();
        let u = DVector::from_vec(mesh.interpolate(|x| x[0]));
        let k = assemble_gagliardo(&mesh, &params).unwrap();
        let rel = (quad(&k, &u) / exact - 1.0).abs();
        assert!(rel < 1e-6, "s = {s}: relative error {rel:e}");
    }
}

#[test]
fn split_refinement_is_stable() {
    let params = FractionalParams::new(0.5, 3.0, 1).unwrap();
    let mesh = interval(64);
    let u = DVector::from_vec(mesh.interpolate(|x| x[0]));
    let base = QuadratureOptions::for_dim(1);
    let finer = QuadratureOptions {
        split_levels: 2 * base.split_levels,
        ..base
    };
    let a = quad(&assemble_gagliardo_with(&mesh, &params, &base).unwrap(), &u);
    let b = quad(
        &assemble_gagliardo_with(&mesh, &params, &finer).unwrap(),
        &u,
    );
    assert!((a / b - 1.0).abs() < 1e-6);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let params = FractionalParams::new(0.5, 3.0, 2).unwrap();
    assert!(matches!(
        assemble_gagliardo(&interval(4), &params),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn mass_form_examples() {
    let mesh = interval(16);
    let m = assemble_mass(&mesh);
    let x = DVector::from_vec(mesh.interpolate(|p| p[0]));
    assert!((quad(&m, &x) - 1.0 / 3.0).abs() < 1e-14);
    let two = build_interval_mesh(0.0, 2.0, 8).unwrap();
    let c = DVector::from_element(two.n_nodes(), -1.5);
    assert!((quad(&assemble_mass(&two), &c) - 4.5).abs() < 1e-13);
}

#[test]
fn lq_norm_examples() {
    let mesh = interval(32);
    for q in [1.0, 1.5, 3.0, 4.0] {
        let one = DiscreteFunction::constant(mesh.clone(), 1.0);
        assert!((lq_norm(&one, q).unwrap() - 1.0).abs() < 1e-14);
        let two = Arc::new(build_interval_mesh(0.0, 2.0, 16).unwrap());
        let c = DiscreteFunction::constant(two, -3.0);
        assert!((lq_norm(&c, q).unwrap() - 3.0 * 2f64.powf(1.0 / q)).abs() < 1e-13);
    }
    let x = DiscreteFunction::from_fn(mesh, |p| p[0]).unwrap();
    assert!((lq_norm(&x, 4.0).unwrap() - 0.2f64.powf(0.25)).abs() < 1e-6);
}

#[test]
fn lq_gradient_examples() {
    let mesh = interval(16);
    let one = DiscreteFunction::constant(mesh.clone(), 1.0);
    let g = lq_gradient(&one, 4.0).unwrap();
    let m = assemble_mass(&mesh);
    let hat_integrals = &m * DVector::from_element(mesh.n_nodes(), 1.0);
    assert!((&g - hat_integrals).amax() < 1e-15);
    assert!((g.sum() - 1.0).abs() < 1e-14);
    let zero = DiscreteFunction::constant(mesh, 0.0);
    assert_eq!(lq_gradient(&zero, 3.0).unwrap().amax(), 0.0);
}

#[test]
fn lq_gradient_matches_finite_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let square = Arc::new(build_rect_mesh(1.0, 1.0, 3, 3).unwrap());
    for mesh in [interval(24), square] {
        let n = mesh.n_nodes();
        for q in [1.5, 3.0, 4.0] {
            for _ in 0..5 {
                let u = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
                let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let uf = DiscreteFunction::new(mesh.clone(), u.clone()).unwrap();
                let g = lq_gradient(&uf, q).unwrap();
                let f = |t: f64| {
                    let w = DiscreteFunction::new(mesh.clone(), &u + &v * t).unwrap();
                    lq_norm(&w, q).unwrap().powf(q) / q
                };
                let t = 1e-5;
                let fd = (f(t) - f(-t)) / (2.0 * t);
                let exact = g.dot(&v);
                assert!(
                    (fd - exact).abs() <= 1e-7 * exact.abs().max(1e-3),
                    "q = {q}"
                );
            }
        }
    }
}

#[test]
fn scaled_mesh_assembly_is_homogeneous() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let square = Arc::new(build_rect_mesh(1.0, 2.0, 3, 2).unwrap());
    for mesh in [interval(20), square] {
        let n = mesh.dim();
        let params = FractionalParams::new(0.4, 3.0, n).unwrap();
        let k = assemble_gagliardo(&mesh, &params).unwrap();
        let u = DVector::from_fn(mesh.n_nodes(), |_, _| rng.gen_range(-1.0..1.0));
        let uf = DiscreteFunction::new(mesh.clone(), u.clone()).unwrap();
        for eps in [0.25, 0.03] {
            let scaled = Arc::new(scale_mesh(&mesh, eps).unwrap());
            let ks = assemble_gagliardo(&scaled, &params).unwrap();
            let expect = eps.powf(n as f64 - 0.8) * quad(&k, &u);
            assert!((quad(&ks, &u) / expect - 1.0).abs() < 1e-10);
            let vf = DiscreteFunction::new(scaled, u.clone()).unwrap();
            for r in [1.5, 4.0] {
                let lhs = lq_norm(&vf, r).unwrap();
                let rhs = eps.powf(n as f64 / r) * lq_norm(&uf, r).unwrap();
                assert!((lhs / rhs - 1.0).abs() < 1e-10);
            }
        }
    }
}
