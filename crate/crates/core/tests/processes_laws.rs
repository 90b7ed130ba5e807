use openkpz::kernels::{cdh_transition_density, heat_kernel_p};
use openkpz::measures::{normalizing_C, phi_closed, CMethod, Params};
use openkpz::processes::*;
use openkpz::quad::{integrate_adaptive, integrate_nested, integrate_semi_infinite, Domain, TailPolicy};
use proptest::prelude::*;

fn cfg(seed: u64, n: usize) -> SamplerConfig {
    SamplerConfig {
        grid_points: n,
        ..SamplerConfig::with_seed(seed)
    }
}

/// Counts of `xs` in the bins between consecutive `edges`; values outside go to the end bins.
fn histogram(xs: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; edges.len() - 1];
    for &x in xs {
        let i = edges.partition_point(|&e| e <= x).clamp(1, edges.len() - 1) - 1;
        h[i] += 1.0;
    }
    h
}

/// Bin probabilities of a density, with the outer bins absorbing the tails.
fn bin_masses(f: impl Fn(f64) -> f64 + Copy, edges: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = edges.len() - 1;
    (0..n)
        .map(|i| {
            let a = if i == 0 { lo } else { edges[i] };
            let b = if i == n - 1 { hi } else { edges[i + 1] };
            integrate_adaptive(f, a, b, 1e-10).value
        })
        .collect()
}

#[test]
fn joint_density_normalized_and_pointwise() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let f = |x: &[f64]| y_joint_density(&[0.0, 1.0], x, p).unwrap();
    let r = integrate_nested(f, &[Domain::Finite(-25.0, 5.0), Domain::Finite(-25.0, 5.0)], 1e-8).unwrap();
    assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
    let c = normalizing_C(p, CMethod::Spectral).unwrap();
    let want = heat_kernel_p(1.0, 0.0, 0.0, 1e-12).unwrap() / c;
    let got = y_joint_density(&[0.0, 1.0], &[0.0, 0.0], p).unwrap();
    assert!((got - want).abs() < 1e-10 * want);
}

#[test]
fn joint_density_time_reversal() {
    let p = Params::new(1.5, 0.7, 1.0).unwrap();
    let times = [0.0, 0.3, 1.0];
    let rev = [0.0, 0.7, 1.0];
    for xs in [[0.1, -0.4, 0.5], [-2.0, 0.3, -1.0]] {
        let mut back = xs;
        back.reverse();
        let f = y_joint_density(&times, &xs, p).unwrap();
        let g = y_joint_density(&rev, &back, p.swapped()).unwrap();
        assert!((f - g).abs() < 1e-12 * f, "{f} vs {g}");
    }
    assert!(y_joint_density(&[0.0, 0.5], &[0.0, 0.0], p).is_err());
}

#[test]
fn y_is_deterministic() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let a = sample_Y(&[0.0, 0.5, 1.0], 200, &cfg(5, 512), p).unwrap();
    let b = sample_Y(&[0.0, 0.5, 1.0], 200, &cfg(5, 512), p).unwrap();
    assert_eq!(a, b);
    let c = sample_Y(&[0.0, 0.5, 1.0], 200, &cfg(6, 512), p).unwrap();
    assert_ne!(a, c);
    // a path does not depend on how many others are drawn
    let d = sample_Y(&[0.0, 0.5, 1.0], 50, &cfg(5, 512), p).unwrap();
    assert_eq!(&a[..50], &d[..]);
}

#[test]
fn y_moment_matches_constant_ratio() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let s = 0.3;
    let paths = sample_Y(&[0.0, 1.0], 100_000, &cfg(1, 1024), p).unwrap();
    let xs: Vec<f64> = paths.iter().map(|q| (s * (q.values[1] - q.values[0])).exp()).collect();
    let (m, se) = stats::mean_se(&xs);
    let want = normalizing_C(Params::new(1.0 + s, 1.0 - s, 1.0).unwrap(), CMethod::Spectral).unwrap()
        / normalizing_C(p, CMethod::Spectral).unwrap();
    assert!((m - want).abs() < 3.0 * se, "{m} ± {se} vs {want}");
}

#[test]
fn y_start_marginal_matches_density() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let paths = sample_Y(&[0.0, 1.0], 100_000, &cfg(2, 1024), p).unwrap();
    let y0: Vec<f64> = paths.iter().map(|q| q.values[0]).collect();
    let marg = |x: f64| {
        integrate_adaptive(|y| y_joint_density(&[0.0, 1.0], &[x, y], p).unwrap(), -30.0, 5.0, 1e-11).value
    };
    let edges: Vec<f64> = (0..=24).map(|i| -6.0 + 0.3 * i as f64).collect();
    let expected: Vec<f64> = bin_masses(marg, &edges, -40.0, 4.0).iter().map(|m| m * y0.len() as f64).collect();
    let (_, _, pval) = stats::chi_square(&histogram(&y0, &edges), &expected);
    assert!(pval > 0.01, "p = {pval}");
}

#[test]
fn y_time_reversal_ks() {
    let p = Params::new(1.5, 0.7, 1.0).unwrap();
    let fwd = sample_Y(&[0.0, 2.0 / 3.0], 50_000, &cfg(3, 1024), p).unwrap();
    let bwd = sample_Y(&[0.0, 1.0 / 3.0], 50_000, &cfg(4, 1024), p.swapped()).unwrap();
    let a: Vec<f64> = fwd.iter().map(|q| q.values[1]).collect();
    let b: Vec<f64> = bwd.iter().map(|q| q.values[1]).collect();
    let (_, pval) = stats::ks_two_sample(&a, &b);
    assert!(pval > 0.01, "p = {pval}");
}

#[test]
fn cdh_paths_positive_and_deterministic() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let s = [0.0, 0.3, 0.6];
    let a = sample_T_cdh(&s, 2000, &cfg(9, 512), p).unwrap();
    assert!(a.iter().all(|q| q.values.iter().all(|&v| v > 0.0)));
    assert_eq!(a, sample_T_cdh(&s, 2000, &cfg(9, 512), p).unwrap());
    assert!(matches!(sample_T_cdh(&[0.0, 1.2], 10, &cfg(1, 512), p), Err(openkpz::Error::Range(_))));
}

#[test]
fn cdh_two_steps_match_direct_marginal() {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let (s0, s2) = (0.0, 0.6);
    let paths = sample_T_cdh(&[s0, 0.3, s2], 100_000, &cfg(10, 1024), p).unwrap();
    let z2: Vec<f64> = paths.iter().map(|q| q.values[2]).collect();
    let init = |u: f64| if u > 0.0 { (-u * u).exp() * phi_closed(s0, u, p, 1.0).unwrap() } else { 0.0 };
    let mass = integrate_semi_infinite(init, 0.0, 1e-12, TailPolicy::Gaussian(1.0)).unwrap().value;
    let direct = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let g = |u: f64| if u > 0.0 { init(u) * cdh_transition_density(s0, s2, u, v, p.c).unwrap() } else { 0.0 };
        integrate_semi_infinite(g, 0.0, 1e-12, TailPolicy::Gaussian(1.0)).unwrap().value / mass
    };
    let edges: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
    let expected: Vec<f64> = bin_masses(direct, &edges, 0.0, 30.0).iter().map(|m| m * z2.len() as f64).collect();
    let (_, _, pval) = stats::chi_square(&histogram(&z2, &edges), &expected);
    assert!(pval > 0.01, "p = {pval}");
}

#[test]
fn kpz_profile_basics() {
    let times = [0.0, 0.5, 1.0];
    let paths = sample_H_kpz(&times, 1000, &cfg(12, 512), 1.0, 1.0).unwrap();
    assert!(paths.iter().all(|q| q.values[0] == 0.0));
    let opts = KpzOptions {
        freeze_y: true,
        ..Default::default()
    };
    let b = sample_H_kpz_with(&times, 50_000, &cfg(13, 512), 1.0, 1.0, opts).unwrap();
    let h1: Vec<f64> = b.iter().map(|q| q.values[2]).collect();
    let m = h1.iter().sum::<f64>() / h1.len() as f64;
    let var = h1.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (h1.len() - 1) as f64;
    // the sample variance of a normal has relative standard error √(2/N)
    assert!((var - 0.5).abs() < 4.0 * 0.5 * (2.0 / h1.len() as f64).sqrt(), "var {var}");
    assert!(matches!(sample_H_kpz(&times, 10, &cfg(1, 512), -3.0, 4.0), Err(openkpz::Error::Range(_))));
    let unproven = KpzOptions {
        allow_unproven: true,
        ..Default::default()
    };
    assert!(sample_H_kpz_with(&times, 10, &cfg(1, 512), -2.5, 4.0, unproven).is_ok());
}

#[test]
fn bld_weights() {
    let w = sample_H_bld(&[0.0, 0.5, 1.0], 20_000, &cfg(14, 512), 1.0, 1.0).unwrap();
    assert!(w.paths.iter().all(|q| q.weight > 0.0 && q.weight.is_finite()));
    assert!(w.ess > 0.01 * 20_000.0);
    assert!(w.paths.iter().all(|q| q.values[0] == 0.0));
    assert!(sample_H_bld(&[0.0, 1.0], 100, &cfg(1, 512), 0.0, 0.0).is_err());
    assert_eq!(w.paths, sample_H_bld(&[0.0, 0.5, 1.0], 20_000, &cfg(14, 512), 1.0, 1.0).unwrap().paths);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn joint_density_reversal_invariant(a in 0.2f64..2.0, c in 0.2f64..2.0, t in 0.2f64..0.8, x0 in -2.0f64..1.0, x1 in -2.0f64..1.0, x2 in -2.0f64..1.0) {
        let p = Params::new(a, c, 1.0).unwrap();
        let f = y_joint_density(&[0.0, t, 1.0], &[x0, x1, x2], p).unwrap();
        let g = y_joint_density(&[0.0, 1.0 - t, 1.0], &[x2, x1, x0], p.swapped()).unwrap();
        prop_assert!((f - g).abs() <= 1e-10 * f);
    }

    #[test]
    fn sampled_times_and_weights(seed in 0u64..1000) {
        let p = Params::new(1.0, 1.0, 1.0).unwrap();
        let paths = sample_Y(&[0.0, 0.4, 1.0], 20, &cfg(seed, 256), p).unwrap();
        for (i, q) in paths.iter().enumerate() {
            prop_assert_eq!(q.stream, i as u64);
            prop_assert_eq!(q.weight, 1.0);
            prop_assert!(q.values.iter().all(|v| v.is_finite()));
        }
    }
}
