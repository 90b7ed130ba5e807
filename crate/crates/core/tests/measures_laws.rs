use num_complex::Complex64;
use openkpz::kernels::{cdh_transition_measure, heat_kernel_p};
use openkpz::measures::*;
use openkpz::quad::{integrate_adaptive, integrate_semi_infinite, QuadOptions, TailPolicy};
use proptest::prelude::*;

fn p(a: f64, c: f64, tau: f64) -> Params {
    Params::new(a, c, tau).unwrap()
}

#[test]
fn c_routes_agree() {
    let sp = normalizing_C(p(1.5, 0.7, 1.0), CMethod::Spectral).unwrap();
    let d2 = normalizing_C(p(1.5, 0.7, 1.0), CMethod::Direct2d).unwrap();
    assert!((sp - d2).abs() < 1e-9 * sp, "{sp} vs {d2}");
    assert_eq!(sp, normalizing_C(p(0.7, 1.5, 1.0), CMethod::Spectral).unwrap());
    assert!(matches!(normalizing_C(p(-0.5, 2.0, 1.0), CMethod::Direct2d), Err(openkpz::Error::MethodDomain(_))));
}

#[test]
fn c_continuous_across_poles() {
    for a0 in [0.0, -2.0] {
        let f = |a: f64| normalizing_C(p(a, 3.0, 1.0), CMethod::Spectral).unwrap();
        let right = 2.0 * f(a0 + 1e-4) - f(a0 + 2e-4);
        let left = 2.0 * f(a0 - 1e-4) - f(a0 - 2e-4);
        assert!((left - right).abs() < 1e-6 * right, "a={a0}: {left} vs {right}");
    }
}

#[test]
fn k_relation_and_entrance_mass() {
    let cases = [(1.0, 1.0, 0.0), (-1.0, 2.0, 0.0), (0.5, 1.5, 0.0)];
    for (a, c, s) in cases {
        let pr = p(a, c, 1.0);
        let k = normalizing_K(pr).unwrap();
        let m = entrance_law_p(s, pr).unwrap().laplace(1.0).unwrap().value;
        assert!((k - m).abs() < 1e-9 * k, "({a},{c},{s}): {k} vs {m}");
    }
    // away from s = 0 the transform picks up the shifted constant
    let pr = p(0.5, 1.5, 1.0);
    let m = entrance_law_p(0.3, pr).unwrap().laplace(1.0).unwrap().value / normalizing_K(pr).unwrap();
    let want = normalizing_C(p(0.8, 1.2, 1.0), CMethod::Spectral).unwrap() / normalizing_C(pr, CMethod::Spectral).unwrap();
    assert!((m - want).abs() < 1e-9 * want, "{m} vs {want}");
    assert_eq!(normalizing_K(p(1.0, 1.0, 1.0)).unwrap(), normalizing_C(p(1.0, 1.0, 1.0), CMethod::Spectral).unwrap());
}

#[test]
fn laplace_closed_form() {
    let want = std::f64::consts::PI / 4.0 * (1.225_416_702_465_177_6f64 / 0.906_402_477_055_477)
        .powi(2);
    assert!((laplace_C_closed(0.5, 0.5, 1.0).unwrap() - want).abs() < 1e-13 * want);
    assert_eq!(laplace_C_closed(0.3, 0.9, 2.0).unwrap(), laplace_C_closed(0.9, 0.3, 2.0).unwrap());
    assert!(matches!(laplace_C_closed(1.0, 1.5, 1.0), Err(openkpz::Error::Strip(_))));
}

#[test]
fn h_and_g_mellin() {
    assert!((h_fun(0.0, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-14);
    assert!((g_fun(1.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
    let f = |x: f64| (2.0 * x).exp() * openkpz::specfun::bessel_k_imag(1.0, x.exp()).unwrap();
    let lhs = integrate_adaptive(f, -40.0, 6.5, 1e-13).value;
    let want = h_fun(0.0, 1.0, 2.0).unwrap();
    assert!((lhs - want).abs() < 1e-9, "{lhs} vs {want}");
    let mut prev = f64::INFINITY;
    for k in 0..40 {
        let v = h_fun(0.3, 0.25 * k as f64, 1.2).unwrap();
        assert!(v < prev);
        prev = v;
    }
    assert!(matches!(h_fun(1.0, 1.0, 1.0), Err(openkpz::Error::Order(_))));
}

#[test]
fn h_is_space_time_harmonic() {
    let pr = p(1.0, 1.0, 1.0);
    assert_eq!(H_fun(1.0, 0.7, pr).unwrap(), 0.7f64.exp());
    let f = |y: f64| heat_kernel_p(0.5, 0.0, y, 1e-11).unwrap() * H_fun(0.5, y, pr).unwrap();
    let lhs = integrate_adaptive(f, -30.0, 5.0, 1e-12).value;
    let rhs = H_fun(0.0, 0.0, pr).unwrap();
    assert!((lhs - rhs).abs() < 1e-8 * rhs, "{lhs} vs {rhs}");
}

#[test]
fn phi_forms_and_dual_d0() {
    let pr = p(1.0, 1.0, 1.0);
    let cc = normalizing_C(pr, CMethod::Spectral).unwrap();
    let a = phi_density_with(0.5, 1.0, pr, cc).unwrap();
    let b = phi_closed(0.5, 1.0, pr, cc).unwrap();
    assert!((a - b).abs() < 1e-13 * b);
    for (a, c, s) in [(1.0, 1.0, 0.3), (1.5, 0.7, 0.6), (-0.5, 2.0, 0.6)] {
        let pr = p(a, c, 1.0);
        let cc = normalizing_C(pr, CMethod::Spectral).unwrap();
        let f = |u: f64| if u > 0.0 { (-u * u).exp() * phi_density_with(s, u, pr, cc).unwrap() } else { 0.0 };
        let lhs = integrate_semi_infinite(f, 0.0, 1e-13, TailPolicy::Gaussian(1.0)).unwrap().value;
        let rhs = normalizing_C(p(a + s, c - s, 1.0), CMethod::Spectral).unwrap() / cc;
        assert!((lhs - rhs).abs() < 1e-9 * rhs, "({a},{c},{s}): {lhs} vs {rhs}");
    }
    assert!(matches!(phi_density(1.5, 1.0, pr), Err(openkpz::Error::Range(_))));
    // 2√x 𝔭̃_s(x) = φ_s(√x) with 𝔭̃ the entrance density scaled by 𝔎
    let law = entrance_law_p(0.5, pr).unwrap();
    let x: f64 = 2.3;
    let k = normalizing_K(pr).unwrap();
    let lhs = 2.0 * x.sqrt() * law.density(x) / k;
    let rhs = phi_closed(0.5, x.sqrt(), pr, cc).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * rhs, "{lhs} vs {rhs}");
}

#[test]
fn entrance_law_is_invariant() {
    let pr = p(1.0, 1.0, 1.0);
    let (s, t) = (0.2, 0.5);
    let from = entrance_law_p(s, pr).unwrap();
    let to = entrance_law_p(t, pr).unwrap();
    for y in [0.3, 1.0, 4.0] {
        let f = |v: f64| {
            if v <= 0.0 {
                return 0.0;
            }
            let m = cdh_transition_measure(s, t, v * v, pr.c).unwrap();
            from.density_sqrt(v) * m.density.unwrap().pdf(y)
        };
        let lhs = integrate_semi_infinite(f, 0.0, 1e-14, TailPolicy::Exponential(1.0)).unwrap().value;
        let rhs = to.density(y);
        assert!((lhs - rhs).abs() < 1e-8 * rhs, "y={y}: {lhs} vs {rhs}");
    }
}

#[test]
fn cdh_polynomials_are_orthogonal() {
    let (s, t, x, c): (f64, f64, f64, f64) = (0.0, 0.5, 1.0, 2.0);
    let alpha = 0.5 * (c - t);
    let beta = Complex64::new(0.5 * (t - s), -0.5 * x.sqrt());
    let gamma = beta.conj();
    let m = cdh_transition_measure(s, t, x, c).unwrap().density.unwrap();
    for (n1, n2) in [(1, 2), (1, 3), (2, 3), (0, 1)] {
        let f = |v: f64| {
            let y = v * v;
            let pa = cdh_poly(n1, y / 4.0, alpha, beta, gamma);
            let pb = cdh_poly(n2, y / 4.0, alpha, beta, gamma);
            assert!(pa.favard && pb.favard);
            2.0 * v * m.pdf(y) * pa.value * pb.value
        };
        let r = openkpz::quad::integrate_semi_infinite_with(
            f,
            0.0,
            TailPolicy::Exponential(1.0),
            &QuadOptions::abs(1e-12).panels(8),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-9, "({n1},{n2}): {}", r.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn c_positive_and_finite(a in -3.5f64..3.0, d in 0.05f64..3.0, tau in 0.2f64..2.0) {
        let c = -a + d;
        let v = normalizing_C(Params::new(a, c, tau).unwrap(), CMethod::Spectral).unwrap();
        prop_assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn factorization_matches_closed_form(s in -0.9f64..1.4, u in 0.01f64..20.0) {
        let pr = Params::new(1.0, 1.5, 1.0).unwrap();
        let a = phi_density_with(s, u, pr, 1.7).unwrap();
        let b = phi_closed(s, u, pr, 1.7).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b);
    }
}
