//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use openkpz::measures::{normalizing_C, CMethod, Params};
use openkpz::processes::{sample_H_bld, sample_H_kpz, sample_Y, stats, SamplerConfig};
use openkpz::quad::{integrate_adaptive, QuadOptions};
use openkpz::specfun::{bessel_k_imag, log_gamma, ComplexScalar};
use openkpz::verify::{check_identity, check_kpz_laplace_mc, panel, Args, Profile};
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::Instant;

/// Collects the individual checks of one criterion.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    count: usize,
}

impl Checks {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        self.count += 1;
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn identity(&mut self, id: &str, args: Value, tol: f64) {
        let args: Args = match args {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        match check_identity(id, &args, Some(tol)) {
            Ok(r) => {
                let what = format!("{id} {} rel {:.2e} abs {:.2e} tol {tol:.0e} {:?}", Value::Object(r.args.clone()), r.rel_err, r.abs_err, r.diagnostics);
                self.expect(r.pass, what);
            }
            Err(e) => self.expect(false, format!("{id}: {e}")),
        }
    }
}

fn cfg(seed: u64, grid: usize) -> SamplerConfig {
    SamplerConfig {
        grid_points: grid,
        ..SamplerConfig::with_seed(seed)
    }
}

/// K₀(x) = −(ln(x/2) + γ) I₀(x) + Σ_k (x²/4)^k H_k / (k!)².
fn k0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut i0, mut rest, mut harm) = (1.0, 1.0, 0.0, 0.0);
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harm += 1.0 / kf;
        i0 += term;
        rest += term * harm;
    }
    -((0.5 * x).ln() + 0.577_215_664_901_532_9) * i0 + rest
}

fn special_functions(c: &mut Checks) {
    for i in 0..20 {
        let u = 0.1 * (500.0f64).powf(i as f64 / 19.0);
        let got = (2.0 * log_gamma(ComplexScalar::new(0.0, u)).unwrap().re).exp();
        let want = PI / (u * (PI * u).sinh());
        c.expect((got - want).abs() <= 1e-12 * want, format!("|Γ(i{u})|² = {got}, want {want}"));
    }
    let got = bessel_k_imag(0.0, 1.0).unwrap();
    let want = k0_series(1.0);
    c.expect((got - want).abs() <= 1e-9 * want, format!("K₀(1) = {got}, series {want}"));
}

fn mellin(c: &mut Checks) {
    for (s, u) in [(1.0, 0.0), (1.5, 1.0), (0.5, 2.0)] {
        c.identity("MELLIN_SINGLE", json!({"s": s, "u": u}), 1e-7);
    }
    c.identity("MELLIN_PRODUCT", json!({"t": 1.0, "u": 1.0, "v": 2.0}), 1e-7);
    let r = check_identity("MELLIN_SINGLE", &Args::new(), None).unwrap();
    c.expect((r.lhs - PI / 2.0).abs() <= 1e-8, format!("MELLIN_SINGLE(1,0) lhs {} vs π/2", r.lhs));
}

fn kernel_laws(c: &mut Checks) {
    c.identity("P_SYMMETRY", json!({}), 0.0);
    for args in panel("P_SUBPROB", Profile::Fast) {
        c.identity("P_SUBPROB", Value::Object(args), 1e-9);
    }
    c.identity("P_CHAPKOL", json!({"s": 0.5, "t": 0.5, "x": 0.0, "y": 0.3}), 1e-6);
    c.identity("P_VIA_THETA", json!({"t": 1.0, "x": 0.0, "y": 0.0}), 1e-6);
    c.identity("P_VIA_THETA", json!({"t": 1.0, "x": 0.5, "y": -0.5}), 1e-6);
}

fn cdh_semigroup(c: &mut Checks) {
    c.identity("Q_NORM", json!({}), 1e-8);
    c.identity("Q_CHAPKOL", json!({}), 1e-6);
    c.identity("ENTRANCE_Q", json!({}), 1e-5);
    c.identity("ENTRANCE_T", json!({}), 1e-5);
    for (n, m) in [(1, 2), (1, 3), (2, 3)] {
        c.identity("CDH_ORTHO", json!({"n": n, "m": m}), 1e-8);
    }
}

fn constants(c: &mut Checks) {
    c.identity("C_PATHS", json!({"a": 1.5, "c": 0.7, "tau": 1.0}), 1e-6);
    c.identity("C_LAPLACE", json!({"a": 0.7, "c": 0.9, "lambda": 1.5}), 1e-4);
    c.identity("K_RELATION", json!({"a": 1.0, "c": 1.0, "tau": 1.0}), 1e-5);
    // linear extrapolation from each side of the removable poles
    for a0 in [0.0, -2.0] {
        let f = |a: f64| normalizing_C(Params::new(a, 3.0, 1.0).unwrap(), CMethod::Spectral).unwrap();
        let h = 1e-4;
        let right = 2.0 * f(a0 + h) - f(a0 + 2.0 * h);
        let left = 2.0 * f(a0 - h) - f(a0 - 2.0 * h);
        c.expect((left - right).abs() <= 1e-3 * right, format!("C across a={a0}: {left} vs {right}"));
    }
}

fn hartman_watson(c: &mut Checks) {
    c.identity("THETA_CONSIST", json!({"r": 1.0, "t": 1.0}), 1e-6);
    for t in [0.5, 1.0, 2.0] {
        c.identity("THETA_MY2", json!({"x": 1.0, "t": t}), 1e-7);
    }
    c.identity("THETA_MY1", json!({"lambda": 1.0, "r": 1.0}), 1e-6);
}

fn dual(c: &mut Checks) {
    for args in panel("DUAL_D0", Profile::Thorough) {
        c.identity("DUAL_D0", Value::Object(args), 1e-4);
    }
    c.identity("DUAL_D1", json!({}), 1e-3);
    c.identity("PSI_DUAL", json!({"a": 1.0, "c": 1.0}), 1e-3);
    c.identity("COND_DUAL", json!({"x": 0.0}), 1e-4);
}

fn monte_carlo(c: &mut Checks) {
    let p = Params::new(1.0, 1.0, 1.0).unwrap();
    let s = 0.3;
    let paths = sample_Y(&[0.0, 1.0], 100_000, &cfg(1, 1024), p).unwrap();
    let xs: Vec<f64> = paths.iter().map(|q| (s * (q.values[1] - q.values[0])).exp()).collect();
    let (m, se) = stats::mean_se(&xs);
    let want = normalizing_C(Params::new(1.0 + s, 1.0 - s, 1.0).unwrap(), CMethod::Spectral).unwrap()
        / normalizing_C(p, CMethod::Spectral).unwrap();
    c.expect((m - want).abs() < 3.0 * se, format!("Y moment {m} ± {se} vs {want}"));

    for (sv, tv, a, cc) in [(vec![0.5], vec![1.0], 1.0, 1.0), (vec![0.6, 0.3], vec![0.5, 1.0], 1.5, 0.5)] {
        match check_kpz_laplace_mc(&sv, &tv, a, cc, 200_000, 7) {
            Ok(r) => c.expect(r.pass, format!("kpz Laplace {sv:?} at ({a},{cc}): {} vs {} {:?}", r.lhs, r.rhs, r.diagnostics)),
            Err(e) => c.expect(false, format!("kpz Laplace {sv:?}: {e}")),
        }
    }

    let times = [0.0, 0.5, 1.0];
    let s = 0.5;
    let kpz = sample_H_kpz(&times, 200_000, &cfg(21, 1024), 1.0, 1.0).unwrap();
    let xs: Vec<f64> = kpz.iter().map(|q| (s * q.values[2]).exp()).collect();
    let (mk, sk) = stats::mean_se(&xs);
    let bld = sample_H_bld(&times, 200_000, &cfg(22, 1024), 1.0, 1.0).unwrap();
    let xs: Vec<f64> = bld.paths.iter().map(|q| (s * q.values[2]).exp()).collect();
    let ws: Vec<f64> = bld.paths.iter().map(|q| q.weight).collect();
    let (mb, sb) = stats::weighted_mean_se(&xs, &ws);
    let comb = (sk * sk + sb * sb).sqrt();
    c.expect((mk - mb).abs() < 3.0 * comb, format!("E e^(H(1)/2): kpz {mk} ± {sk}, bld {mb} ± {sb}"));

    let q = Params::new(1.5, 0.7, 1.0).unwrap();
    let fwd = sample_Y(&[0.0, 2.0 / 3.0], 100_000, &cfg(3, 1024), q).unwrap();
    let bwd = sample_Y(&[0.0, 1.0 / 3.0], 100_000, &cfg(4, 1024), q.swapped()).unwrap();
    let a: Vec<f64> = fwd.iter().map(|x| x.values[1]).collect();
    let b: Vec<f64> = bwd.iter().map(|x| x.values[1]).collect();
    let (d, pval) = stats::ks_two_sample(&a, &b);
    c.expect(pval > 0.01, format!("reversal KS D = {d}, p = {pval}"));
}

fn determinism(c: &mut Checks) {
    let dir = tempfile::tempdir().unwrap();
    let mut files = vec![];
    for i in 0..2 {
        let f = dir.path().join(format!("h{i}.csv"));
        let st = Command::new(env!("CARGO_BIN_EXE_openkpz"))
            .args(["sample", "kpz", "--a", "1", "--c", "1", "--times", "0,0.25,0.5,0.75,1", "--n", "1000", "--seed", "42"])
            .arg("--output")
            .arg(&f)
            .status()
            .unwrap();
        c.expect(st.success(), "sample kpz exit status");
        files.push(std::fs::read(&f).unwrap_or_default());
    }
    c.expect(!files[0].is_empty() && files[0] == files[1], "repeated sample CSV differs");

    let f = |x: f64| (-x * x).exp() * (3.0 * x).cos();
    let r1 = integrate_adaptive(f, -8.0, 8.0, 1e-12);
    let r2 = integrate_adaptive(f, -8.0, 8.0, 1e-12);
    c.expect(
        r1.value.to_bits() == r2.value.to_bits() && r1.err_est.to_bits() == r2.err_est.to_bits() && r1 == r2,
        "repeated QuadResult differs",
    );
    let g = |x: f64| bessel_k_imag(1.5, x.exp()).unwrap();
    let opts = QuadOptions::rel(1e-10, 1e-14);
    let q1 = openkpz::quad::integrate_adaptive_with(g, -10.0, 4.0, &opts);
    let q2 = openkpz::quad::integrate_adaptive_with(g, -10.0, 4.0, &opts);
    c.expect(q1 == q2 && q1.value.to_bits() == q2.value.to_bits(), "repeated QuadResult differs");
    let p = Params::new(1.5, 0.7, 1.0).unwrap();
    let c1 = normalizing_C(p, CMethod::Spectral).unwrap();
    let c2 = normalizing_C(p, CMethod::Spectral).unwrap();
    c.expect(c1.to_bits() == c2.to_bits(), "repeated normalizing_C differs");
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Checks)); 9] = [
        ("special-function floor", special_functions),
        ("Mellin identities", mellin),
        ("kernel laws", kernel_laws),
        ("CDH semigroup", cdh_semigroup),
        ("constants", constants),
        ("Hartman-Watson", hartman_watson),
        ("dual representations", dual),
        ("Monte Carlo and law checks", monte_carlo),
        ("determinism", determinism),
    ];
    let mut all = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut c = Checks::default();
        run(&mut c);
        let secs = start.elapsed().as_secs_f64();
        let ok = c.failed.is_empty();
        all &= ok;
        println!(
            "criterion {} {name}: {} ({}/{} checks, {secs:.1}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            c.count - c.failed.len(),
            c.count
        );
        for f in &c.failed {
            println!("    failed: {f}");
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
