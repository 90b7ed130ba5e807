use openkpz::measures::Params;
use openkpz::verify::*;
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn args(v: Value) -> Map<String, Value> {
    v.as_object().unwrap().clone()
}

#[test]
fn fast_suite_passes() {
    let reports = run_suite(None, Profile::Fast);
    assert!(reports.len() >= 28);
    for r in &reports {
        assert!(r.pass, "{} {:?}: {} vs {} {:?}", r.id, r.args, r.lhs, r.rhs, r.diagnostics);
    }
    let ids: Vec<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    let again = run_suite(None, Profile::Fast);
    assert_eq!(ids, again.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
    assert_eq!(reports, again);
}

#[test]
fn catalog_examples() {
    let r = check_identity("MELLIN_SINGLE", &args(json!({"s": 1.0, "u": 0.0})), Some(1e-7)).unwrap();
    assert!(r.pass && (r.lhs - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
    assert_eq!(r.args["s"], json!(1.0));
    let r = check_identity("P_SYMMETRY", &args(json!({"t": 1.0, "x": 0.3, "y": -0.2})), None).unwrap();
    assert!(r.pass && r.abs_err == 0.0);
    let r = check_identity("DUAL_D0", &args(json!({"a": 1.0, "c": 1.0, "tau": 1.0, "s": 0.3})), Some(1e-5)).unwrap();
    assert!(r.pass);
    // defaults are filled into the report
    let r = check_identity("Q_CHAPKOL", &Map::new(), None).unwrap();
    assert_eq!(r.args.len(), 6);
}

#[test]
fn selection_and_unknown_ids() {
    let r = run_suite(Some(&["P_SYMMETRY".to_string()]), Profile::Fast);
    assert_eq!(r.len(), 1);
    let r = run_suite(Some(&["NO_SUCH".to_string(), "MU_FORMS".to_string()]), Profile::Fast);
    assert!(!r[0].pass && r[0].diagnostics[0].contains("unknown"));
    assert!(r[1].pass);
    assert!(matches!(check_identity("NO_SUCH", &Map::new(), None), Err(openkpz::Error::UnknownIdentity(_))));
}

#[test]
fn perturbed_side_fails() {
    // a small error in one exponent on the Y side must be visible at the catalog tolerance
    let r = check_identity("DUAL_D1", &Map::new(), None).unwrap();
    assert!(r.pass);
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let (y, _) = y_increment_laplace(p, &[0.5, 1.0], &[0.65, 0.2]).unwrap();
    assert!((y - r.lhs).abs() > r.tol * r.lhs, "{y} vs {}", r.lhs);
    let (y, _) = y_increment_laplace(p, &[0.5, 1.0], &[0.6, 0.2]).unwrap();
    assert!((y - r.lhs).abs() <= r.tol * r.lhs);
}

#[test]
fn psi_routes() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    for route in [PsiRoute::CdhQuadrature, PsiRoute::YQuadrature] {
        let v = compute_psi(&[1e-6], &[0.5], p, route).unwrap();
        assert!((v.value - 1.0).abs() < 1e-4, "{route:?}: {}", v.value);
    }
    let q = compute_psi(&[0.4], &[0.5], p, PsiRoute::YQuadrature).unwrap();
    let c = compute_psi(&[0.4], &[0.5], p, PsiRoute::CdhQuadrature).unwrap();
    assert!((q.value - c.value).abs() < 1e-3 * q.value);
    let m = compute_psi(&[0.4], &[0.5], p, PsiRoute::YMontecarlo { n_paths: 100_000, seed: 3 }).unwrap();
    assert!((m.value - q.value).abs() < 3.0 * m.err, "{} ± {} vs {}", m.value, m.err, q.value);
    let neg = Params::new(-0.5, 2.0, 1.0).unwrap();
    assert!(matches!(compute_psi(&[0.6], &[0.5], neg, PsiRoute::CdhQuadrature), Err(openkpz::Error::RouteDomain(_))));
    assert!(compute_psi(&[0.6], &[1.0], neg, PsiRoute::YQuadrature).is_ok());
    // the Y route has no dual-range restriction
    let y = compute_psi(&[0.6], &[0.5], neg, PsiRoute::YQuadrature).unwrap();
    let m = compute_psi(&[0.6], &[0.5], neg, PsiRoute::YMontecarlo { n_paths: 100_000, seed: 5 }).unwrap();
    assert!((m.value - y.value).abs() < 3.0 * m.err, "{} ± {} vs {}", m.value, m.err, y.value);
    assert!(matches!(compute_psi(&[0.3, 0.5], &[0.2, 0.5], p, PsiRoute::YQuadrature), Err(openkpz::Error::Order(_))));
}

#[test]
fn kpz_laplace_mc() {
    let r = check_kpz_laplace_mc(&[0.5], &[1.0], 1.0, 1.0, 200_000, 11).unwrap();
    assert!(r.pass, "{r:?}");
    let z = check_kpz_laplace_mc(&[1e-6], &[1.0], 1.0, 1.0, 10_000, 1).unwrap();
    assert!((z.lhs - 1.0).abs() < 1e-5 && (z.rhs - 1.0).abs() < 1e-5);
    assert!(matches!(check_kpz_laplace_mc(&[0.5], &[1.0], -3.0, 4.0, 100, 1), Err(openkpz::Error::Range(_))));
}

#[test]
fn report_json_round_trip() {
    for r in run_suite(Some(&["MU_FORMS".into(), "CDH_ORTHO".into(), "NO_SUCH".into()]), Profile::Fast) {
        let text = serde_json::to_string(&r).unwrap();
        let back: IdentityReport = serde_json::from_str(&text).unwrap();
        if r.lhs.is_finite() {
            assert_eq!(back, r);
        } else {
            assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mellin_single_holds(s in 0.3f64..3.0, u in 0.0f64..6.0) {
        let r = check_identity("MELLIN_SINGLE", &args(json!({"s": s, "u": u})), None).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn dual_d0_holds(a in -0.8f64..2.0, d in 0.3f64..2.5, f in 0.1f64..0.9) {
        let c = -a + d;
        let s = -a + f * d;
        let r = check_identity("DUAL_D0", &args(json!({"a": a, "c": c, "s": s})), Some(1e-5)).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }
}
