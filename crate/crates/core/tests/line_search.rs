mod common;

use common::{random_problem, random_vector, rng};
use ndarray::{array, Array1, Array2, ArrayView1};
use rand::Rng;
use sparse_smooth::line_search::{
    backtracking, secant_fd_step, secant_probe, taylor_hessian_step, LineSearchConfig,
};
use sparse_smooth::objectives::{h_gradient, h_hessian, h_value, HessianOperator, ObjectiveSpec};
use sparse_smooth::scalar_kernels::SmoothingKind;
use sparse_smooth::Error;

fn sq(x: ArrayView1<'_, f64>) -> f64 {
    x.dot(&x)
}

#[test]
fn armijo_examples() {
    let cfg = LineSearchConfig::default();
    let x = array![1.0, 0.0];
    let g = array![2.0, 0.0];
    let s = array![-2.0, 0.0];
    let out = backtracking(sq, g.view(), x.view(), s.view(), &cfg).unwrap();
    assert_eq!(out.mu, 0.5);
    assert!(out.accepted);
    assert_eq!(out.shrinks, 1);

    // flat along s
    let out = backtracking(|_| 3.0, Array1::zeros(2).view(), x.view(), array![0.0, 1.0].view(), &cfg).unwrap();
    assert_eq!((out.mu, out.accepted, out.shrinks), (cfg.mu0, true, 0));

    // ascent on an increasing function
    let cfg = LineSearchConfig { max_shrinks: 12, ..cfg };
    let inc = |v: ArrayView1<'_, f64>| v[0];
    let out = backtracking(inc, array![1.0].view(), array![0.0].view(), array![1.0].view(), &cfg).unwrap();
    assert!(!out.accepted);
    assert_eq!(out.shrinks, 12);

    let bad = |_: ArrayView1<'_, f64>| f64::NAN;
    assert!(matches!(
        backtracking(bad, g.view(), x.view(), s.view(), &LineSearchConfig::default()),
        Err(Error::Numerical(_))
    ));
}

#[test]
fn backtracking_never_exceeds_mu0() {
    let mut r = rng(20);
    for _ in 0..100 {
        let cfg = LineSearchConfig {
            mu0: r.gen_range(0.1..5.0),
            rho: r.gen_range(0.1..0.9),
            max_shrinks: r.gen_range(0..30),
            ..LineSearchConfig::default()
        };
        let x = random_vector(4, 3.0, &mut r);
        let s = random_vector(4, 3.0, &mut r);
        let g = x.mapv(|v| 4.0 * v.powi(3));
        let quartic = |v: ArrayView1<'_, f64>| v.iter().map(|t| t.powi(4)).sum::<f64>();
        let out = backtracking(quartic, g.view(), x.view(), s.view(), &cfg).unwrap();
        assert!(out.mu <= cfg.mu0);
        assert!(out.shrinks <= cfg.max_shrinks);
    }
}

#[test]
fn taylor_step_examples() {
    let gram = Array2::eye(3);
    let op = HessianOperator::new(gram.view(), Array1::zeros(3), None);
    let x = array![1.0, 0.0, 0.0];
    let g = x.mapv(|v| 2.0 * v);
    let s = -&g;
    let mu = taylor_hessian_step(g.view(), &op, s.view()).unwrap();
    assert_eq!(mu, 0.5);
    assert_eq!(&x + &(mu * &s), Array1::<f64>::zeros(3));

    let mu = taylor_hessian_step(g.view(), &op, array![0.0, 1.0, 0.0].view()).unwrap();
    assert_eq!(mu, 0.0);

    assert!(matches!(
        taylor_hessian_step(g.view(), &op, Array1::zeros(3).view()),
        Err(Error::DegenerateCurvature(_))
    ));
}

#[test]
fn taylor_step_negative_on_hat_kind() {
    let prob = random_problem(4, 6, 21);
    let sigma = 0.05;
    let spec = ObjectiveSpec::new(1.0, 50.0, sigma, SmoothingKind::ConvPhiHat).unwrap();
    // every |x_k| in (sqrt(2) sigma, 8 sigma): the diagonal is negative and dominates
    let x = array![0.1, -0.12, 0.09, 0.15, -0.2, 0.11];
    let op = h_hessian(&prob, &spec, x.view()).unwrap();
    let g = h_gradient(&prob, &spec, x.view()).unwrap();
    let s = -&g;
    assert!(op.quadratic_form(s.view()) < 0.0);
    assert!(taylor_hessian_step(g.view(), &op, s.view()).unwrap() < 0.0);
}

#[test]
fn exact_on_convex_quadratics() {
    let mut r = rng(22);
    for trial in 0..20 {
        let prob = random_problem(8, 5, 200 + trial);
        let op = HessianOperator::new(prob.gram(), Array1::zeros(5), None);
        let x = random_vector(5, 1.0, &mut r);
        let s = random_vector(5, 1.0, &mut r);
        let grad = |v: ArrayView1<'_, f64>| prob.fit_gradient(v).unwrap();
        let g = grad(x.view());
        let mu = taylor_hessian_step(g.view(), &op, s.view()).unwrap();
        // closed-form minimizer of t -> ||A(x + t s) - b||^2
        let r0 = prob.residual(x.view()).unwrap();
        let as_ = prob.matrix().dot(&s);
        let exact = -r0.dot(&as_) / as_.dot(&as_);
        assert!((mu - exact).abs() <= 1e-12 * exact.abs(), "{mu} vs {exact}");
        for xi in [1e-6, 1e-3, 1.0, 10.0] {
            let sec = secant_fd_step(grad, x.view(), s.view(), xi).unwrap();
            assert!((sec - exact).abs() <= 1e-9 * exact.abs(), "xi {xi}: {sec} vs {exact}");
        }
    }
}

#[test]
fn secant_agrees_with_taylor_on_smooth_surrogate() {
    let mut r = rng(23);
    for trial in 0..20 {
        let prob = random_problem(10, 25, 300 + trial);
        let spec = ObjectiveSpec::new(1.0, 0.3, 0.1, SmoothingKind::ConvPhi).unwrap();
        let x = random_vector(25, 1.0, &mut r);
        let g = h_gradient(&prob, &spec, x.view()).unwrap();
        let s = -&g;
        let op = h_hessian(&prob, &spec, x.view()).unwrap();
        let taylor = taylor_hessian_step(g.view(), &op, s.view()).unwrap();
        let xi = secant_probe(x.view(), 1e-3);
        assert!((xi - 1e-3 * (1.0 + (x.dot(&x)).sqrt() / 5.0)).abs() < 1e-15);
        let sec = secant_fd_step(|v| h_gradient(&prob, &spec, v).unwrap(), x.view(), s.view(), xi).unwrap();
        assert!((sec - taylor).abs() <= 1e-3 * taylor.abs(), "{sec} vs {taylor}");
    }
    let prob = random_problem(3, 3, 24);
    let spec = ObjectiveSpec::new(1.0, 0.3, 0.1, SmoothingKind::ConvPhi).unwrap();
    let x = Array1::ones(3);
    let grad = |v: ArrayView1<'_, f64>| h_gradient(&prob, &spec, v).unwrap();
    assert!(matches!(
        secant_fd_step(grad, x.view(), Array1::zeros(3).view(), 1e-3),
        Err(Error::DegenerateCurvature(_))
    ));
    assert!(matches!(secant_fd_step(grad, x.view(), x.view(), 0.0), Err(Error::Domain(_))));
}

#[test]
fn taylor_step_descends_on_convex_surrogate() {
    let mut r = rng(25);
    let prob = random_problem(15, 20, 26);
    let spec = ObjectiveSpec::new(1.0, 0.2, 0.1, SmoothingKind::ConvPhi).unwrap();
    for _ in 0..100 {
        let x = random_vector(20, 1.0, &mut r);
        let g = h_gradient(&prob, &spec, x.view()).unwrap();
        let s = -&g;
        let op = h_hessian(&prob, &spec, x.view()).unwrap();
        let mu = taylor_hessian_step(g.view(), &op, s.view()).unwrap();
        assert!(mu > 0.0);
        let before = h_value(&prob, &spec, x.view()).unwrap();
        let after = h_value(&prob, &spec, (&x + &(mu * &s)).view()).unwrap();
        assert!(after <= before + 1e-12 * before.abs().max(1.0), "{after} > {before}");
    }
}

#[test]
fn config_validation() {
    assert!(LineSearchConfig::default().validate().is_ok());
    for cfg in [
        LineSearchConfig { rho: 1.0, ..Default::default() },
        LineSearchConfig { c: 0.0, ..Default::default() },
        LineSearchConfig { mu0: -1.0, ..Default::default() },
        LineSearchConfig { xi_scale: 0.0, ..Default::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
