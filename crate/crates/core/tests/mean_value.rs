use proptest::prelude::*;
use proptest::test_runner::Config;
use towlab_core::{
    ball_extrema, fd_normalized_p_laplacian, mv_limit, mv_residual, BallRule, Builtin, GameParams, MvOptions,
    TestFunction,
};

/// Limit of `residual / eps^2` predicted by the operator value.
fn predicted(phi: &Builtin, x: &[f64], p: f64) -> f64 {
    let n = x.len() as f64;
    let op = phi.operator_value(x, p).unwrap();
    if p.is_infinite() {
        0.5 * op
    } else {
        op / (2.0 * (n + p))
    }
}

#[test]
fn quadrature_second_moment_converges_with_level() {
    for n in 1..=3 {
        let exact = 1.0 / (n as f64 + 2.0);
        let mut last = f64::INFINITY;
        for m in [4, 8, 16] {
            let rule = BallRule::new(n, m).unwrap();
            let err = (rule.second_moment(0, 1.0) - exact).abs();
            assert!(err <= last * 1.01 + 1e-15, "n = {n}, m = {m}: {err} after {last}");
            last = err;
        }
        assert!(last < 5e-3 * exact, "n = {n}: {last}");
    }
}

#[test]
fn ball_average_of_an_exponential() {
    // mean of exp(y_1) over the unit interval ball is sinh(1)
    let rule = BallRule::new(1, 32).unwrap();
    let avg = rule.average(|y| y[0].exp(), &[0.0], 1.0);
    assert!((avg - 1f64.sinh()).abs() < 1e-6, "{avg}");
}

#[test]
fn extrema_of_a_linear_function_sit_on_the_sphere() {
    let a = [0.6, -0.8];
    let f = |y: &[f64]| a[0] * y[0] + a[1] * y[1];
    let x = [0.2, 0.1];
    let e = ball_extrema(&f, &x, 0.1, 16).unwrap();
    for i in 0..2 {
        assert!((e.argmax[i] - (x[i] + 0.1 * a[i])).abs() < 1e-6);
        assert!((e.argmin[i] - (x[i] - 0.1 * a[i])).abs() < 1e-6);
    }
    assert!((e.max - f(&x) - 0.1).abs() < 1e-9);
}

#[test]
fn richardson_limits_match_the_operator() {
    let eps = [0.1, 0.05, 0.025, 0.0125];
    for (phi, x, p) in [
        (Builtin::Quadratic, vec![0.4, -0.3], 3.0),
        (Builtin::CoordinateQuadratic, vec![0.5, 0.5], 2.0),
        (Builtin::Radial { p0: 4.0 }, vec![0.8, 0.6], 4.0),
    ] {
        let t = mv_limit(&phi, &x, p, &eps, &MvOptions::default()).unwrap();
        let target = predicted(&phi, &x, p);
        let limit = t.limit.unwrap();
        assert!((limit - target).abs() <= 0.02 * target.abs().max(1e-3), "{}: {limit} vs {target}", phi.name());
    }
}

#[test]
fn non_decreasing_eps_lists_are_rejected() {
    let x = [0.1, 0.1];
    assert!(mv_limit(&Builtin::Linear, &x, 3.0, &[0.1, 0.05], &MvOptions::default()).is_err());
    assert!(mv_limit(&Builtin::Linear, &x, 3.0, &[0.1, 0.1, 0.05], &MvOptions::default()).is_err());
}

proptest! {
    #![proptest_config(Config { cases: 200, failure_persistence: None, ..Config::default() })]

    #[test]
    fn laplacian_case_matches_the_operator(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, eps in 0.02..0.2f64) {
        let x = [x1, x2];
        let params = GameParams::for_mean_value(2, 2.0, eps).unwrap();
        let r = mv_residual(&Builtin::Quadratic, &x, &params, &MvOptions::default()).unwrap() / (eps * eps);
        let target = predicted(&Builtin::Quadratic, &x, 2.0);
        prop_assert!((r - target).abs() < 5e-3 * target, "{} vs {}", r, target);
    }

    #[test]
    fn linear_functions_have_no_residual(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        x1 in -1.0..1.0f64,
        x2 in -1.0..1.0f64,
        p in 2.0..20.0f64,
    ) {
        struct Affine(f64, f64);
        impl TestFunction for Affine {
            fn name(&self) -> String {
                "affine".into()
            }
            fn value(&self, x: &[f64]) -> f64 {
                self.0 * x[0] + self.1 * x[1]
            }
        }
        let params = GameParams::for_mean_value(2, p, 0.05).unwrap();
        let r = mv_residual(&Affine(a, b), &[x1, x2], &params, &MvOptions::default()).unwrap();
        prop_assert!(r.abs() < 1e-10 * (1.0 + a.abs() + b.abs()), "{}", r);
    }

    #[test]
    fn finite_differences_agree_with_closed_forms(
        x1 in 0.3..2.0f64,
        x2 in 0.3..2.0f64,
        p in 2.0..10.0f64,
        which in 0usize..3,
    ) {
        let phi = [Builtin::Quadratic, Builtin::CoordinateQuadratic, Builtin::Radial { p0: 5.0 }][which];
        let x = [x1, x2];
        let f = |y: &[f64]| phi.value(y);
        let fd = fd_normalized_p_laplacian(&f, &x, p, 1e-4).unwrap();
        let exact = phi.operator_value(&x, p).unwrap();
        prop_assert!((fd - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
    }
}
