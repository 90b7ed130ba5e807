//! Identity catalog: each entry evaluates both sides of an equality by
//! separate numerical routes and reports the discrepancy.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::kernels::{
    cdh_transition_density, cdh_transition_measure, hartman_watson_theta, heat_kernel_p, heat_kernel_via_theta,
    q_tilde_kernel, CdhDensity, SpectralCache, ThetaMethod,
};
use crate::measures::{
    cdh_poly, entrance_law_p, h_fun, laplace_C_closed, normalizing_C, normalizing_C_quad, normalizing_K,
    phi_density_with, CMethod, Params, H_fun,
};
use crate::processes::{sample_H_kpz, sample_Y, stats, SamplerConfig};
use crate::quad::{
    integrate_adaptive_with, integrate_nested, integrate_semi_infinite,
    integrate_semi_infinite_with, integrate_spectral_with, Domain, Envelope, QuadOptions, TailPolicy,
};
use crate::specfun::{bessel_i, bessel_k_imag, gamma_abs2, gamma_prod_abs2, gamma_real, log_gamma, mu_density, Z_MAX};

/// Every identity in the catalog, in suite order.
pub const CATALOG: [&str; 28] = [
    "MELLIN_SINGLE",
    "MELLIN_PRODUCT",
    "MU_FORMS",
    "P_SYMMETRY",
    "P_SUBPROB",
    "P_CHAPKOL",
    "Q_NORM",
    "Q_CHAPKOL",
    "ENTRANCE_Q",
    "ENTRANCE_T",
    "MACDONALD",
    "THETA_CONSIST",
    "THETA_MY1",
    "THETA_MY2",
    "P_VIA_THETA",
    "C_PATHS",
    "C_LAPLACE",
    "K_RELATION",
    "PARSEVAL",
    "ASSOC_K",
    "ASSOC_K2",
    "INTERTWINE",
    "H_HARMONIC",
    "DUAL_D0",
    "DUAL_D1",
    "PSI_DUAL",
    "COND_DUAL",
    "CDH_ORTHO",
];

/// Argument record of a catalog entry: a JSON object of numbers and number lists.
pub type Args = Map<String, Value>;

/// Outcome of one identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub id: String,
    pub args: Args,
    #[serde(with = "nullable")]
    pub lhs: f64,
    #[serde(with = "nullable")]
    pub rhs: f64,
    #[serde(with = "nullable")]
    pub abs_err: f64,
    #[serde(with = "nullable")]
    pub rel_err: f64,
    #[serde(with = "nullable")]
    pub tol: f64,
    /// absolute scale: pass when abs_err ≤ tol·scale even if rel_err > tol
    #[serde(with = "nullable")]
    pub scale: f64,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

/// Non-finite floats travel as JSON null and come back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl IdentityReport {
    fn new(id: &str, args: Args, lhs: f64, rhs: f64, tol: f64, scale: f64) -> Self {
        let abs_err = (lhs - rhs).abs();
        // against a zero right side the relative error falls back to the absolute one
        let rel_err = if rhs == 0.0 { abs_err } else { abs_err / rhs.abs() };
        let finite = lhs.is_finite() && rhs.is_finite();
        IdentityReport {
            id: id.to_string(),
            args,
            lhs,
            rhs,
            abs_err,
            rel_err,
            tol,
            scale,
            pass: finite && (rel_err <= tol || abs_err <= tol * scale),
            diagnostics: vec![],
        }
    }

    fn failed(id: &str, args: Args, tol: f64, e: &Error) -> Self {
        IdentityReport {
            id: id.to_string(),
            args,
            lhs: f64::NAN,
            rhs: f64::NAN,
            abs_err: f64::NAN,
            rel_err: f64::NAN,
            tol,
            scale: 0.0,
            pass: false,
            diagnostics: vec![format!("{}: {e}", e.kind())],
        }
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.diagnostics.push(s.into());
        self
    }
}

// Readers fill in defaults, so the report carries the resolved arguments.
fn num(args: &mut Args, key: &str, default: f64) -> Result<f64> {
    match args.get(key) {
        None => {
            args.insert(key.to_string(), json!(default));
            Ok(default)
        }
        Some(v) => v.as_f64().ok_or_else(|| Error::domain(format!("argument {key} must be a number"))),
    }
}

fn list(args: &mut Args, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match args.get(key) {
        None => {
            args.insert(key.to_string(), json!(default));
            Ok(default.to_vec())
        }
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::domain(format!("argument {key} must hold numbers"))))
            .collect(),
        Some(v) => v.as_f64().map(|x| vec![x]).ok_or_else(|| Error::domain(format!("argument {key} must be a list"))),
    }
}

fn int(args: &mut Args, key: &str, default: u32) -> Result<u32> {
    let v = num(args, key, default as f64)?;
    if v >= 0.0 && v.fract() == 0.0 && v < 64.0 {
        Ok(v as u32)
    } else {
        Err(Error::domain(format!("argument {key} must be a small nonnegative integer")))
    }
}

fn params(args: &mut Args, a: f64, c: f64, tau: f64) -> Result<Params> {
    let a = num(args, "a", a)?;
    let c = num(args, "c", c)?;
    Params::new(a, c, num(args, "tau", tau)?)
}

/// Default tolerance of an entry.
pub fn default_tol(id: &str) -> f64 {
    match id {
        "MELLIN_SINGLE" | "MELLIN_PRODUCT" | "MU_FORMS" | "MACDONALD" | "THETA_MY2" | "DUAL_D0" => 1e-7,
        "P_SYMMETRY" => 0.0,
        "P_SUBPROB" => 1e-9,
        "Q_NORM" | "CDH_ORTHO" => 1e-8,
        "P_CHAPKOL" | "Q_CHAPKOL" | "THETA_CONSIST" | "THETA_MY1" | "P_VIA_THETA" | "C_PATHS" => 1e-6,
        "DUAL_D1" | "PSI_DUAL" => 1e-3,
        "C_LAPLACE" | "COND_DUAL" => 1e-4,
        _ => 1e-5,
    }
}

/// Evaluates one catalog identity. Unknown ids are an error; numerical and
/// domain failures become a failed report carrying the error in its diagnostics.
pub fn check_identity(id: &str, args: &Args, tol: Option<f64>) -> Result<IdentityReport> {
    if !CATALOG.contains(&id) {
        return Err(Error::UnknownIdentity(id.to_string()));
    }
    let tol = tol.unwrap_or_else(|| default_tol(id));
    Ok(match dispatch(id, args, tol) {
        Ok(r) => r,
        Err(e) => IdentityReport::failed(id, args.clone(), tol, &e),
    })
}

fn dispatch(id: &str, args: &Args, tol: f64) -> Result<IdentityReport> {
    let a = args.clone();
    match id {
        "MELLIN_SINGLE" => mellin_single(a, tol),
        "MELLIN_PRODUCT" => mellin_product(a, tol),
        "MU_FORMS" => mu_forms(a, tol),
        "P_SYMMETRY" => p_symmetry(a, tol),
        "P_SUBPROB" => p_subprob(a, tol),
        "P_CHAPKOL" => p_chapkol(a, tol),
        "Q_NORM" => q_norm(a, tol),
        "Q_CHAPKOL" => q_chapkol(a, tol),
        "ENTRANCE_Q" => entrance_q(a, tol),
        "ENTRANCE_T" => entrance_t(a, tol),
        "MACDONALD" => macdonald(a, tol),
        "THETA_CONSIST" => theta_consist(a, tol),
        "THETA_MY1" => theta_my1(a, tol),
        "THETA_MY2" => theta_my2(a, tol),
        "P_VIA_THETA" => p_via_theta(a, tol),
        "C_PATHS" => c_paths(a, tol),
        "C_LAPLACE" => c_laplace(a, tol),
        "K_RELATION" => k_relation(a, tol),
        "PARSEVAL" => parseval(a, tol),
        "ASSOC_K" => assoc_k(a, tol),
        "ASSOC_K2" => assoc_k2(a, tol),
        "INTERTWINE" => intertwine(a, tol),
        "H_HARMONIC" => h_harmonic(a, tol),
        "DUAL_D0" => dual_d0(a, tol),
        "DUAL_D1" => dual_d1(a, tol),
        "PSI_DUAL" => psi_dual(a, tol),
        "COND_DUAL" => cond_dual(a, tol),
        "CDH_ORTHO" => cdh_ortho(a, tol),
        _ => Err(Error::UnknownIdentity(id.to_string())),
    }
}

fn k(u: f64, x: f64) -> Result<f64> {
    bessel_k_imag(u, x.exp())
}

/// Collects the first error raised inside a quadrature closure.
struct ErrSlot(std::cell::Cell<Option<Error>>);

impl ErrSlot {
    fn new() -> Self {
        ErrSlot(std::cell::Cell::new(None))
    }

    fn take(&self, v: Result<f64>) -> f64 {
        v.unwrap_or_else(|e| {
            self.0.set(Some(e));
            0.0
        })
    }

    fn check(&self) -> Result<()> {
        match self.0.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn mellin_single(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let s = num(&mut args, "s", 1.0)?;
    let u = num(&mut args, "u", 0.0)?;
    if !(s > 0.0) {
        return Err(Error::domain("MELLIN_SINGLE needs s > 0"));
    }
    let slot = ErrSlot::new();
    let lo = -(40.0 / s).min(680.0);
    let r = integrate_adaptive_with(|x| (s * x).exp() * slot.take(k(u, x)), lo, Z_MAX.ln(), &QuadOptions::rel(1e-13, 1e-300).panels(16));
    slot.check()?;
    let lhs = r.require("Mellin integral")?.value;
    let rhs = (2f64).powf(s - 2.0) * gamma_abs2(Complex64::new(0.5 * s, 0.5 * u))?;
    Ok(IdentityReport::new("MELLIN_SINGLE", args, lhs, rhs, tol, 0.0).note(format!("quadrature err {:.1e}", r.err_est)))
}

fn mellin_product(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let t = num(&mut args, "t", 1.0)?;
    let u = num(&mut args, "u", 1.0)?;
    let v = num(&mut args, "v", 2.0)?;
    if !(t > 0.0) {
        return Err(Error::domain("MELLIN_PRODUCT needs t > 0"));
    }
    let slot = ErrSlot::new();
    let lo = -(40.0 / t).min(680.0);
    let r = integrate_adaptive_with(
        |x| (t * x).exp() * slot.take(k(u, x)) * slot.take(k(v, x)),
        lo,
        Z_MAX.ln(),
        &QuadOptions::rel(1e-12, 1e-300).panels(16),
    );
    slot.check()?;
    let lhs = r.require("Mellin product integral")?.value;
    let rhs = (2f64).powf(t - 3.0) / gamma_real(t)?
        * gamma_prod_abs2(&[Complex64::new(0.5 * t, 0.5 * (u + v)), Complex64::new(0.5 * t, 0.5 * (u - v))])?;
    Ok(IdentityReport::new("MELLIN_PRODUCT", args, lhs, rhs, tol, 0.0).note(format!("quadrature err {:.1e}", r.err_est)))
}

fn mu_forms(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let u = num(&mut args, "u", 1.0)?;
    if !(u > 0.0) {
        return Err(Error::domain("MU_FORMS needs u > 0"));
    }
    let lg = log_gamma(Complex64::new(0.0, u))?;
    let lhs = 2.0 / PI * (-2.0 * lg.re).exp();
    let rhs = mu_density(u);
    Ok(IdentityReport::new("MU_FORMS", args, lhs, rhs, tol, 0.0))
}

fn p_symmetry(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let t = num(&mut args, "t", 1.0)?;
    let x = num(&mut args, "x", 0.3)?;
    let y = num(&mut args, "y", -0.2)?;
    let lhs = heat_kernel_p(t, x, y, 1e-10)?;
    let rhs = heat_kernel_p(t, y, x, 1e-10)?;
    Ok(IdentityReport::new("P_SYMMETRY", args, lhs, rhs, tol, 0.0))
}

/// ∫ p_t(x,y) g(y) dy over the range where p_t(x, ·) lives.
fn integrate_against_p<G: FnMut(f64) -> Result<f64>>(t: f64, x: f64, mut g: G, tol: f64) -> Result<(f64, f64)> {
    let lo = x - 12.0 * (2.0 * t).sqrt() - 2.0;
    let hi = x.max(0.0) + 5.0;
    let slot = ErrSlot::new();
    let r = integrate_adaptive_with(
        |y| slot.take(heat_kernel_p(t, x, y, 0.01 * tol).and_then(|p| Ok(p * g(y)?))),
        lo,
        hi.min(Z_MAX.ln()),
        &QuadOptions::rel(tol, 1e-300).panels(8),
    );
    slot.check()?;
    let r = r.require("integral against p_t")?;
    Ok((r.value, r.err_est))
}

fn p_subprob(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let t = num(&mut args, "t", 1.0)?;
    let x = num(&mut args, "x", 0.0)?;
    let (mass, err) = integrate_against_p(t, x, |_| Ok(1.0), 1e-10)?;
    // strict inequality: the margin below one must exceed the quadrature error
    let mut r = IdentityReport::new("P_SUBPROB", args, mass, 1.0, tol, 0.0);
    r.pass = mass.is_finite() && mass > 0.0 && 1.0 - mass > err.max(tol);
    Ok(r.note(format!("strict check lhs < rhs; killed mass {:.3e}, quadrature err {err:.1e}", 1.0 - mass)))
}

fn p_chapkol(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let s = num(&mut args, "s", 0.5)?;
    let t = num(&mut args, "t", 0.5)?;
    let x = num(&mut args, "x", 0.0)?;
    let y = num(&mut args, "y", 0.3)?;
    let (lhs, err) = integrate_against_p(s, x, |z| heat_kernel_p(t, z, y, 1e-11), 1e-10)?;
    let rhs = heat_kernel_p(s + t, x, y, 1e-11)?;
    Ok(IdentityReport::new("P_CHAPKOL", args, lhs, rhs, tol, 0.0).note(format!("quadrature err {err:.1e}")))
}

fn q_norm(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let s = num(&mut args, "s", 0.0)?;
    let t = num(&mut args, "t", 0.5)?;
    let u = num(&mut args, "u", 1.0)?;
    let c = num(&mut args, "c", 1.0)?;
    cdh_transition_density(s, t, u, 1.0, c)?;
    let m = CdhDensity { s, t, x: u * u, c }.mass(1e-12)?.require("q mass")?;
    Ok(IdentityReport::new("Q_NORM", args, m.value, 1.0, tol, 0.0).note(format!("quadrature err {:.1e}", m.err_est)))
}

fn q_chapkol(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let r0 = num(&mut args, "r", 0.0)?;
    let s = num(&mut args, "s", 0.4)?;
    let t = num(&mut args, "t", 0.9)?;
    let u = num(&mut args, "u", 0.7)?;
    let w = num(&mut args, "w", 1.1)?;
    let c = num(&mut args, "c", 1.2)?;
    let rhs = cdh_transition_density(r0, t, u, w, c)?;
    cdh_transition_density(r0, s, u, w, c)?;
    let f = |v: f64| {
        if v <= 0.0 {
            0.0
        } else {
            cdh_transition_density(r0, s, u, v, c).unwrap_or(0.0) * cdh_transition_density(s, t, v, w, c).unwrap_or(0.0)
        }
    };
    let q = integrate_semi_infinite(f, 0.0, 1e-13, TailPolicy::Exponential(1.0))?.require("q composition")?;
    Ok(IdentityReport::new("Q_CHAPKOL", args, q.value, rhs, tol, 0.0).note(format!("quadrature err {:.1e}", q.err_est)))
}

fn entrance_q(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = num(&mut args, "s", 0.2)?;
    let t = num(&mut args, "t", 0.5)?;
    let v = num(&mut args, "v", 1.0)?;
    let rhs = phi_density_with(t, v, p, 1.0)?;
    phi_density_with(s, v, p, 1.0)?;
    cdh_transition_density(s, t, 1.0, v, p.c)?;
    let f = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            phi_density_with(s, u, p, 1.0).unwrap_or(0.0) * cdh_transition_density(s, t, u, v, p.c).unwrap_or(0.0)
        }
    };
    let r = integrate_semi_infinite_with(f, 0.0, TailPolicy::Exponential(1.0), &QuadOptions::rel(1e-11, 1e-300).panels(8))?
        .require("entrance law composition")?;
    Ok(IdentityReport::new("ENTRANCE_Q", args, r.value, rhs, tol, 0.0).note("phi taken with C = 1 on both sides"))
}

fn entrance_t(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = num(&mut args, "s", 0.2)?;
    let t = num(&mut args, "t", 0.5)?;
    let y = num(&mut args, "y", 1.0)?;
    let from = entrance_law_p(s, p)?;
    let to = entrance_law_p(t, p)?;
    if !from.atoms.is_empty() {
        return Err(Error::NotImplemented("ENTRANCE_T with atoms needs the mixed transition branch".into()));
    }
    cdh_transition_measure(s, t, 1.0, p.c)?;
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        from.density_sqrt(v) * CdhDensity { s, t, x: v * v, c: p.c }.pdf(y)
    };
    let r = integrate_semi_infinite_with(f, 0.0, TailPolicy::Exponential(1.0), &QuadOptions::rel(1e-11, 1e-300).panels(8))?
        .require("entrance law transport")?;
    Ok(IdentityReport::new("ENTRANCE_T", args, r.value, to.density(y), tol, 0.0))
}

fn macdonald(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let u = num(&mut args, "u", 1.5)?;
    let x = num(&mut args, "x", 0.2)?;
    let y = num(&mut args, "y", -0.4)?;
    let lhs = k(u, x)? * k(u, y)?;
    let d = (x - y).abs();
    let lo = x + y - 1500f64.ln();
    let hi = (1500f64.ln() - d).min(Z_MAX.ln());
    let slot = ErrSlot::new();
    let r = integrate_adaptive_with(
        |r| {
            let w = -0.5 * ((r + d).exp() + (r - d).exp() + (x + y - r).exp());
            if w < -745.0 {
                0.0
            } else {
                w.exp() * slot.take(k(u, r))
            }
        },
        lo,
        hi,
        &QuadOptions::abs(1e-14).panels(16),
    );
    slot.check()?;
    let rhs = 0.5 * r.require("Macdonald integral")?.value;
    // K_{iu} has zeros, so the scale is the envelope K₀(e^x)K₀(e^y)
    let scale = k(0.0, x)? * k(0.0, y)?;
    Ok(IdentityReport::new("MACDONALD", args, lhs, rhs, tol, scale))
}

fn theta_consist(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let r = num(&mut args, "r", 1.0)?;
    let t = num(&mut args, "t", 1.0)?;
    let lhs = hartman_watson_theta(r, t, ThetaMethod::Spectral)?;
    let rhs = hartman_watson_theta(r, t, ThetaMethod::Oscillatory)?;
    Ok(IdentityReport::new("THETA_CONSIST", args, lhs, rhs, tol, 0.0))
}

fn theta_my1(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let lambda = num(&mut args, "lambda", 1.0)?;
    let r = num(&mut args, "r", 1.0)?;
    if !(lambda > 0.0) {
        return Err(Error::domain("THETA_MY1 needs lambda > 0"));
    }
    let t0 = crate::kernels::THETA_T_MIN;
    let slot = ErrSlot::new();
    let body = integrate_semi_infinite_with(
        |t| (-0.5 * lambda * lambda * t).exp() * slot.take(hartman_watson_theta(r, t, ThetaMethod::Spectral)),
        t0,
        TailPolicy::Exponential(0.5 * lambda * lambda),
        &QuadOptions::rel(1e-10, 1e-300).panels(8),
    )?;
    slot.check()?;
    let body = body.require("MY1 time integral")?;
    // below t0 the density behaves like e^{A − B/t}; fit B and bound the piece
    let t1 = 1.25 * t0;
    let th0 = hartman_watson_theta(r, t0, ThetaMethod::Spectral)?;
    let th1 = hartman_watson_theta(r, t1, ThetaMethod::Spectral)?;
    let b = (th1 / th0).ln() / (1.0 / t0 - 1.0 / t1);
    let head = if b > 0.0 { th0 * t0 * t0 / b } else { th0 * t0 };
    let lhs = body.value + head;
    let rhs = bessel_i(lambda, r)?;
    Ok(IdentityReport::new("THETA_MY1", args, lhs, rhs, tol, 0.0)
        .note(format!("integral over t >= {t0}: {:.12e} (err {:.1e})", body.value, body.err_est))
        .note(format!("fitted small-t piece {head:.2e} added")))
}

fn theta_my2(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let x = num(&mut args, "x", 1.0)?;
    let t = num(&mut args, "t", 1.0)?;
    if !(x >= 1.0) {
        return Err(Error::domain("THETA_MY2 needs x >= 1"));
    }
    let slot = ErrSlot::new();
    // in the variable ln r, dr/r becomes d(ln r)
    let f = |s: f64| {
        let r = s.exp();
        if x * r > 700.0 {
            0.0
        } else {
            (-x * r).exp() * slot.take(hartman_watson_theta(r, t, ThetaMethod::Spectral))
        }
    };
    let res = integrate_adaptive_with(f, -30.0, (700.0 / x).ln(), &QuadOptions::rel(1e-11, 1e-300).panels(12));
    slot.check()?;
    let lhs = res.require("MY2 integral")?.value;
    let ach = x.acosh();
    let rhs = (-ach * ach / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    Ok(IdentityReport::new("THETA_MY2", args, lhs, rhs, tol, 0.0))
}

fn p_via_theta(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let t = num(&mut args, "t", 1.0)?;
    let x = num(&mut args, "x", 0.0)?;
    let y = num(&mut args, "y", 0.0)?;
    let lhs = heat_kernel_via_theta(t, x, y, 1e-9)?;
    let rhs = heat_kernel_p(t, x, y, 1e-11)?;
    Ok(IdentityReport::new("P_VIA_THETA", args, lhs, rhs, tol, 0.0))
}

fn c_paths(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.5, 0.7, 1.0)?;
    let sp = normalizing_C_quad(p, CMethod::Spectral)?;
    let d2 = normalizing_C_quad(p, CMethod::Direct2d)?;
    Ok(IdentityReport::new("C_PATHS", args, d2.value, sp.value, tol, 0.0)
        .note(format!("lhs direct double sum (err {:.1e}), rhs spectral formula (err {:.1e})", d2.err_est, sp.err_est)))
}

/// ∫₀^∞ e^{−λ²τ} C^τ dτ with the τ-integral done inside the spectral formula,
/// where it turns e^{−τu²} into 1/(λ²+u²).
fn laplace_c_spectral(a: f64, c: f64, lambda: f64) -> Result<f64> {
    if !(a > 0.0 && c > 0.0 && a + c < 2.0) {
        return Err(Error::RouteDomain(format!("spectral Laplace route needs a, c > 0 and a + c < 2, got a={a}, c={c}")));
    }
    let w = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let l = 2.0 * crate::specfun::ln_gamma_abs(Complex64::new(0.5 * a, 0.5 * u))
            + 2.0 * crate::specfun::ln_gamma_abs(Complex64::new(0.5 * c, 0.5 * u))
            + crate::kernels::ln_inv_gamma_abs2_imag(u);
        l.exp() / (8.0 * PI) / (lambda * lambda + u * u)
    };
    let opts = QuadOptions::rel(1e-12, 1e-300).panels(8);
    let head = integrate_adaptive_with(w, 0.0, 4.0, &opts).require("Laplace head")?;
    // u = 4e^y up to U; beyond U the weight is A u^{a+c−3}(1 + O(u⁻²))
    let big_u = 1000.0;
    let mid = integrate_adaptive_with(
        |y| {
            let u = 4.0 * y.exp();
            w(u) * u
        },
        0.0,
        (big_u / 4.0f64).ln(),
        &opts,
    )
    .require("Laplace body")?;
    let tail = w(big_u) * big_u / (2.0 - (a + c));
    Ok((2f64).powf(a + c) * (head.value + mid.value + tail))
}

fn c_laplace(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let a = num(&mut args, "a", 0.7)?;
    let c = num(&mut args, "c", 0.9)?;
    let lambda = num(&mut args, "lambda", 1.5)?;
    let lhs = laplace_c_spectral(a, c, lambda)?;
    let rhs = laplace_C_closed(a, c, lambda)?;
    Ok(IdentityReport::new("C_LAPLACE", args, lhs, rhs, tol, 0.0).note("lhs integrates the spectral formula over tau in closed form; tail beyond u = 1000 from its power law"))
}

fn k_relation(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = num(&mut args, "s", 0.0)?;
    let lhs = entrance_law_p(s, p)?.laplace(p.tau)?.value;
    let shifted = Params::new(p.a + s, p.c - s, p.tau)?;
    let rhs = normalizing_K(p)? * normalizing_C(shifted, CMethod::Spectral)? / normalizing_C(p, CMethod::Spectral)?;
    Ok(IdentityReport::new("K_RELATION", args, lhs, rhs, tol, 0.0)
        .note("lhs integrates the entrance law directly; rhs uses the K-to-C prefactor"))
}

/// Grid covering [lo, hi] with step ≤ h that contains x = 0 exactly.
fn grid_through_zero(lo: f64, hi: f64, h: f64) -> (f64, usize, usize) {
    let below = (-lo / h).ceil().max(1.0) as usize;
    let above = (hi / h).ceil().max(1.0) as usize;
    (-(below as f64) * h, below + above + 1, below)
}

fn parseval(mut args: Args, tol: f64) -> Result<IdentityReport> {
    // F(x) = e^x, G(u) = e^{−t u²}
    let t = num(&mut args, "t", 1.0)?;
    if !(t >= 0.05) {
        return Err(Error::domain("PARSEVAL needs t >= 0.05"));
    }
    let h = 0.1f64.min(0.5 * t.sqrt());
    let (lo, n, _) = grid_through_zero(-40.0, 6.4, h);
    let hi = lo + h * (n - 1) as f64;
    let cache = SpectralCache::new(lo, hi, n, t, 1e-13)?;
    let ones = vec![1.0; cache.u_nodes().len()];
    let kinv = cache.synthesize(t, &ones)?;
    let lhs: f64 = cache.h() * cache.xs().iter().zip(&kinv.value).map(|(x, g)| x.exp() * g).sum::<f64>();
    // 𝒦[e^x](u) = 2^{−1}|Γ((1+iu)/2)|² = π/(2 cosh(πu/2))
    let r = integrate_spectral_with(
        |u| 0.5 * PI / (0.5 * PI * u).cosh(),
        t,
        Envelope::Plain { g: 0.5 * PI, p: 0.0 },
        &QuadOptions::rel(1e-13, 1e-300),
    )?
    .require("Parseval spectral side")?;
    Ok(IdentityReport::new("PARSEVAL", args, lhs, r.value, tol, 0.0).note("F(x) = e^x, G(u) = exp(-t u^2)"))
}

fn assoc_k(mut args: Args, tol: f64) -> Result<IdentityReport> {
    // F(y) = e^{y − e^y}, 𝒦F(u) = πu / sinh(πu)
    let delta = num(&mut args, "delta", 0.5)?;
    let x = num(&mut args, "x", 0.3)?;
    let (lhs, _) = integrate_against_p(delta, x, |y| Ok((y - y.exp()).exp()), 1e-10)?;
    let slot = ErrSlot::new();
    let r = integrate_spectral_with(
        |u| PI * u / (PI * u).sinh() * slot.take(k(u, x)),
        delta,
        // πu/sinh(πu)·μ(u) = 2u²/π and |K_{iu}| ≤ K₀
        Envelope::Damped { g: 2.0 / PI * crate::kernels::k0(x.exp()), p: 2.0 },
        &QuadOptions::rel(1e-12, 1e-300),
    )?;
    slot.check()?;
    let rhs = r.require("associativity spectral side")?.value;
    Ok(IdentityReport::new("ASSOC_K", args, lhs, rhs, tol, 0.0).note("F(y) = exp(y - e^y)"))
}

/// 𝒦[e^{δx} 𝒦⁻¹[e^{−t u²}]](u) on a grid through the cache.
fn k_of_shifted_kinv(delta: f64, t: f64, u: f64, step: f64) -> Result<f64> {
    let lo = -(40.0 / delta).min(600.0);
    let hi = 6.4;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let cache = SpectralCache::new(lo, hi, n, t, 1e-13)?;
    let ones = vec![1.0; cache.u_nodes().len()];
    let g = cache.synthesize(t, &ones)?;
    let mut s = 0.0;
    for (x, gv) in cache.xs().iter().zip(&g.value) {
        s += (delta * x).exp() * gv * k(u, *x)?;
    }
    Ok(s * cache.h())
}

fn assoc_k2(mut args: Args, tol: f64) -> Result<IdentityReport> {
    // G(v) = e^{−v²}
    let delta = num(&mut args, "delta", 0.5)?;
    let u = num(&mut args, "u", 1.0)?;
    let lhs = k_of_shifted_kinv(delta, 1.0, u, 0.1)?;
    let r = integrate_semi_infinite_with(
        |v| if v > 0.0 { q_tilde_kernel(delta, u, v).unwrap_or(0.0) * (-v * v).exp() } else { 0.0 },
        0.0,
        TailPolicy::Gaussian(1.0),
        &QuadOptions::rel(1e-12, 1e-300).panels(8),
    )?
    .require("dual kernel side")?;
    Ok(IdentityReport::new("ASSOC_K2", args, lhs, r.value, tol, 0.0).note("G(v) = exp(-v^2)"))
}

fn intertwine(mut args: Args, tol: f64) -> Result<IdentityReport> {
    // test function F = e^{βx}: 𝒦F(v) = 2^{β−2}|Γ((β+iv)/2)|²
    let s = num(&mut args, "s", 0.5)?;
    let t = num(&mut args, "t", 0.5)?;
    let beta = num(&mut args, "beta", 1.0)?;
    let u = num(&mut args, "u", 1.0)?;
    if !(s > 0.0 && beta > 0.0) {
        return Err(Error::domain("INTERTWINE needs s, beta > 0"));
    }
    let kf = |v: f64| h_fun(0.0, v, beta);
    let lo = -(40.0 / s).min(600.0);
    let hi = 6.0;
    let n = ((hi - lo) / 0.1).ceil() as usize + 1;
    let cache = SpectralCache::new(lo, hi, n, t, 1e-13)?;
    let g: Vec<f64> = cache.u_nodes().iter().map(|&v| kf(v)).collect::<Result<_>>()?;
    let ptf = cache.synthesize(t, &g)?;
    let mut lhs = 0.0;
    for (x, pv) in cache.xs().iter().zip(&ptf.value) {
        lhs += (s * x).exp() * pv * k(u, *x)?;
    }
    lhs *= cache.h();
    let r = integrate_semi_infinite_with(
        |v| if v > 0.0 { q_tilde_kernel(s, u, v).unwrap_or(0.0) * (-t * v * v).exp() * kf(v).unwrap_or(0.0) } else { 0.0 },
        0.0,
        TailPolicy::Gaussian(t),
        &QuadOptions::rel(1e-12, 1e-300).panels(8),
    )?
    .require("intertwining dual side")?;
    Ok(IdentityReport::new("INTERTWINE", args, lhs, r.value, tol, 0.0).note(format!("F(x) = exp({beta} x)")))
}

fn h_harmonic(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = num(&mut args, "s", 0.0)?;
    let t = num(&mut args, "t", 0.5)?;
    let x = num(&mut args, "x", 0.0)?;
    if !(s < t && t <= p.tau) {
        return Err(Error::Order("H_HARMONIC needs s < t <= tau".into()));
    }
    let (lhs, _) = integrate_against_p(t - s, x, |y| H_fun(t, y, p), 1e-10)?;
    let rhs = H_fun(s, x, p)?;
    Ok(IdentityReport::new("H_HARMONIC", args, lhs, rhs, tol, 0.0))
}

fn dual_d0(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = num(&mut args, "s", 0.3)?;
    let cc = normalizing_C(p, CMethod::Spectral)?;
    phi_density_with(s, 1.0, p, cc)?;
    let f = |u: f64| if u > 0.0 { (-p.tau * u * u).exp() * phi_density_with(s, u, p, cc).unwrap_or(0.0) } else { 0.0 };
    let r = integrate_semi_infinite_with(f, 0.0, TailPolicy::Gaussian(p.tau), &QuadOptions::rel(1e-12, 1e-300).panels(8))?
        .require("dual side")?;
    let rhs = normalizing_C(Params::new(p.a + s, p.c - s, p.tau)?, CMethod::Spectral)? / cc;
    Ok(IdentityReport::new("DUAL_D0", args, r.value, rhs, tol, 0.0))
}

/// E[exp(Σ σ_k (Y_{T_k} − Y_{T_{k−1}}))] for 0 = T_0 < … < T_m = τ, from the
/// joint density summed on a spectral grid. Returns (value, error estimate).
pub fn y_increment_laplace(params: Params, times: &[f64], sigma: &[f64]) -> Result<(f64, f64)> {
    params.validate()?;
    let m = times.len();
    if m == 0 || sigma.len() != m {
        return Err(Error::Grid("need one exponent per time".into()));
    }
    if (times[m - 1] - params.tau).abs() > 1e-12 {
        return Err(Error::Grid("last time must equal tau".into()));
    }
    let mut prev = 0.0;
    let mut gaps = Vec::with_capacity(m);
    for &t in times {
        if !(t > prev) {
            return Err(Error::Grid("times must be increasing and positive".into()));
        }
        gaps.push(t - prev);
        prev = t;
    }
    let Params { a, c, tau } = params;
    let e0 = c - sigma[0];
    let em = a + sigma[m - 1];
    let mid: Vec<f64> = (1..m).map(|k| sigma[k - 1] - sigma[k]).collect();
    let dmin = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = 0.2f64.min(0.5 * dmin.sqrt());
    let big = e0.abs().max(em.abs()) + mid.iter().map(|x| x.abs()).sum::<f64>();
    // The exponents sum to a + c > 0, so the integrand decays like e^{(a+c)x} when all
    // coordinates go to −∞ together and is Gaussian in their differences; tilts shift
    // the coordinates by at most about 2τ·big.
    let lo = (-34.0 / (a + c) - 8.0 * tau.sqrt() - 2.0 * tau * big).max(-600.0);
    let hi = (60.0 + 8.0 * big).ln().min(Z_MAX.ln());
    let n = ((hi - lo) / h).ceil() as usize + 1;
    let cache = SpectralCache::new(lo, hi, n, dmin, 1e-13)?;
    let xs = cache.xs();
    let mut v: Vec<f64> = xs.iter().map(|x| (e0 * x).exp()).collect();
    let mut err = 0.0;
    for k in 0..m - 1 {
        let r = cache.apply(gaps[k], &v)?;
        err += r.err.iter().zip(&xs).map(|(e, x)| e * (mid[k] * x).exp()).sum::<f64>() * cache.h();
        v = r.value.iter().zip(&xs).map(|(p, x)| p * (mid[k] * x).exp()).collect();
    }
    let w: Vec<f64> = xs.iter().map(|x| (em * x).exp()).collect();
    let (val, e) = cache.bilinear(gaps[m - 1], &v, &w)?;
    let cc = normalizing_C(params, CMethod::Spectral)?;
    let trunc = ((a + c) * lo).exp() / (a + c);
    let total = e + err + trunc;
    // large tilts make the grid vectors grow like e^{|e|·|lo|} and the spectral sums cancel
    if !(val > 0.0 && total <= 1e-6 * val) {
        return Err(Error::no_conv("Y-side grid integral", val / cc, total / cc));
    }
    Ok((val / cc, total / cc))
}

/// (2^{a+c}/16) ∫∫ e^{−u₁²Δ₁ − u₂²Δ₂} |Γ((a+s₂+iu₂)/2, (c−s₁+iu₁)/2)|²
/// |Γ((s₁−s₂+i(u₁∓u₂))/2)|² / (8Γ(s₁−s₂)) μ(du₁)μ(du₂), divided by C.
fn dual_side_d1(p: Params, s1: f64, s2: f64, t1: f64) -> Result<(f64, f64)> {
    let Params { a, c, tau } = p;
    if !(c > s1 && s1 > s2 && s2 > -a && 0.0 < t1 && t1 < tau) {
        return Err(Error::Order("DUAL_D1 needs c > s1 > s2 > -a and 0 < t1 < tau".into()));
    }
    let lg = |x: f64, y: f64| 2.0 * crate::specfun::ln_gamma_abs(Complex64::new(x, y));
    let ds = s1 - s2;
    let gd = gamma_real(ds)?;
    let lnmu = |u: f64| (2.0 / (PI * PI)).ln() + u.ln() + PI * u + (-(-2.0 * PI * u).exp_m1() * 0.5).ln();
    let f = |x: &[f64]| {
        let (u1, u2) = (x[0], x[1]);
        if u1 <= 0.0 || u2 <= 0.0 {
            return 0.0;
        }
        let l = -u1 * u1 * t1 - u2 * u2 * (tau - t1)
            + lg(0.5 * (a + s2), 0.5 * u2)
            + lg(0.5 * (c - s1), 0.5 * u1)
            + lg(0.5 * ds, 0.5 * (u1 - u2))
            + lg(0.5 * ds, 0.5 * (u1 + u2))
            + lnmu(u1)
            + lnmu(u2);
        l.exp()
    };
    let doms = [
        Domain::SemiInfinite(0.0, TailPolicy::Gaussian(t1)),
        Domain::SemiInfinite(0.0, TailPolicy::Gaussian(tau - t1)),
    ];
    let r = integrate_nested(f, &doms, 1e-9)?.require("Yizao double integral")?;
    let pre = (2f64).powf(a + c) / 16.0 / (8.0 * gd);
    let cc = normalizing_C(p, CMethod::Spectral)?;
    Ok((pre * r.value / cc, pre * r.err_est / cc))
}

fn dual_d1(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s1 = num(&mut args, "s1", 0.6)?;
    let s2 = num(&mut args, "s2", 0.2)?;
    let t1 = num(&mut args, "t1", 0.5)?;
    let (lhs, le) = dual_side_d1(p, s1, s2, t1)?;
    let (rhs, re) = y_increment_laplace(p, &[t1, p.tau], &[s1, s2])?;
    Ok(IdentityReport::new("DUAL_D1", args, lhs, rhs, tol, 0.0)
        .note(format!("dual side err {le:.1e}, Y side err {re:.1e}")))
}

/// Evaluation route for ψ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiRoute {
    CdhQuadrature,
    YQuadrature,
    YMontecarlo { n_paths: usize, seed: u64 },
}

/// ψ with its error estimate (a standard error for the Monte Carlo route).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiValue {
    pub value: f64,
    pub err: f64,
}

fn check_psi_args(svec: &[f64], tvec: &[f64]) -> Result<()> {
    if svec.is_empty() || svec.len() != tvec.len() {
        return Err(Error::domain("psi needs matching non-empty s and t lists"));
    }
    if svec.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Order("s must be strictly decreasing".into()));
    }
    if tvec.windows(2).any(|w| !(w[0] < w[1])) || !(tvec[0] > 0.0) || !(tvec[tvec.len() - 1] <= 1.0) {
        return Err(Error::Order("t must be strictly increasing in (0, 1]".into()));
    }
    Ok(())
}

/// ψ^τ(s, t) = (1/𝔎) ∫ E[exp(−τ Σ_{k=1}^{d+1} (t_k − t_{k−1}) 𝕋_{s_k}) | 𝕋_0 = x] 𝔭_0(dx),
/// with s_{d+1} = 0 and t_{d+1} = 1.
pub fn compute_psi(svec: &[f64], tvec: &[f64], params: Params, route: PsiRoute) -> Result<PsiValue> {
    params.validate()?;
    check_psi_args(svec, tvec)?;
    let d = svec.len();
    let Params { a, c, tau } = params;
    let mut dt: Vec<f64> = Vec::with_capacity(d + 1);
    let mut prev = 0.0;
    for &t in tvec {
        dt.push(t - prev);
        prev = t;
    }
    let last = 1.0 - tvec[d - 1];
    match route {
        PsiRoute::CdhQuadrature => {
            if !(c > svec[0] && svec[d - 1] > (-a).max(0.0)) {
                return Err(Error::RouteDomain("cdh route needs c > s_1 > ... > s_d > max(-a, 0)".into()));
            }
            if !(a > 0.0) {
                return Err(Error::RouteDomain("cdh route needs a > 0 so that the entrance law has no atoms".into()));
            }
            if d > 2 {
                return Err(Error::RouteDomain("cdh route supports d <= 2".into()));
            }
            let kk = normalizing_K(params)?;
            // When t_d = 1 the 𝕋_0 term carries no weight, and the entrance law
            // at s_d replaces the first transition.
            let start = if last > 0.0 { 0.0 } else { svec[d - 1] };
            let law = entrance_law_p(start, params)?;
            let skip = usize::from(last == 0.0);
            // coordinates: Z at times start, then s_{d-skip}, …, s_1
            let f = |x: &[f64]| {
                if x.iter().any(|&v| v <= 0.0) {
                    return 0.0;
                }
                let u = x[0];
                let w0 = if skip == 1 { dt[d - 1] } else { last };
                let mut w = law.density_sqrt(u) * (-tau * w0 * u * u).exp();
                let mut from = (start, u);
                for j in 0..d - skip {
                    let kix = d - 1 - skip - j;
                    let v = x[j + 1];
                    w *= cdh_transition_density(from.0, svec[kix], from.1, v, c).unwrap_or(0.0) * (-tau * dt[kix] * v * v).exp();
                    from = (svec[kix], v);
                }
                w
            };
            let w0 = if skip == 1 { dt[d - 1] } else { last };
            let mut doms = vec![Domain::SemiInfinite(0.0, TailPolicy::Gaussian(tau * w0))];
            for j in 0..d - skip {
                doms.push(Domain::SemiInfinite(0.0, TailPolicy::Gaussian(tau * dt[d - 1 - skip - j])));
            }
            let r = integrate_nested(f, &doms, 1e-9)?.require("psi (cdh route)")?;
            Ok(PsiValue {
                value: r.value / kk,
                err: r.err_est / kk,
            })
        }
        PsiRoute::YQuadrature => {
            let (times, sigma) = y_times(svec, tvec, tau);
            let (value, err) = y_increment_laplace(params, &times, &sigma)?;
            Ok(PsiValue { value, err })
        }
        PsiRoute::YMontecarlo { n_paths, seed } => {
            let mut times = vec![0.0];
            times.extend(tvec.iter().map(|t| tau * t));
            let paths = sample_Y(&times, n_paths, &SamplerConfig::with_seed(seed), params)?;
            let xs: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let e: f64 = (0..d).map(|k| svec[k] * (p.values[k + 1] - p.values[k])).sum();
                    e.exp()
                })
                .collect();
            let (value, err) = stats::mean_se(&xs);
            Ok(PsiValue { value, err })
        }
    }
}

/// Y-side times and increment exponents for ψ: a trailing zero exponent
/// closes the path at τ when t_d < 1.
fn y_times(svec: &[f64], tvec: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let mut times: Vec<f64> = tvec.iter().map(|t| tau * t).collect();
    let mut sigma = svec.to_vec();
    if tvec[tvec.len() - 1] < 1.0 {
        times.push(tau);
        sigma.push(0.0);
    } else {
        times[tvec.len() - 1] = tau;
    }
    (times, sigma)
}

fn psi_dual(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s = list(&mut args, "s", &[0.4])?;
    let t = list(&mut args, "t", &[0.5])?;
    let l = compute_psi(&s, &t, p, PsiRoute::CdhQuadrature)?;
    let r = compute_psi(&s, &t, p, PsiRoute::YQuadrature)?;
    Ok(IdentityReport::new("PSI_DUAL", args, l.value, r.value, tol, 0.0)
        .note(format!("cdh route err {:.1e}, Y route err {:.1e}", l.err, r.err)))
}

fn cond_dual(mut args: Args, tol: f64) -> Result<IdentityReport> {
    // n = 1: times 0 < t1 < τ, exponents s0 < s1 < c
    let p = params(&mut args, 1.0, 1.0, 1.0)?;
    let s0 = num(&mut args, "s0", 0.2)?;
    let s1 = num(&mut args, "s1", 0.6)?;
    let t1 = num(&mut args, "t1", 0.5)?;
    let x = num(&mut args, "x", 0.0)?;
    let Params { c, tau, .. } = p;
    if !(s0 < s1 && s1 < c && 0.0 < t1 && t1 < tau) {
        return Err(Error::Order("COND_DUAL needs s0 < s1 < c and 0 < t1 < tau".into()));
    }
    // e^{−s₀x} H₀(x) F(x) = ∫∫ p_{t1}(x,y) e^{(s1−s0)y} p_{τ−t1}(y,z) e^{(c−s1)z}
    let e2 = c - s1;
    let rate = e2.min(s1 - s0).min(e2 + s1 - s0);
    let h = 0.2f64.min(0.5 * t1.min(tau - t1).sqrt());
    let lo_abs = (-34.0 / rate.max(0.05) - 8.0 * tau.sqrt()).max(-600.0).min(x - 1.0);
    let hi_abs = (60.0 + 8.0 * c).ln().max(x + 1.0);
    let (lo, n, ix) = grid_through_zero(lo_abs - x, hi_abs - x, h);
    let cache = SpectralCache::new(x + lo, x + lo + h * (n - 1) as f64, n, t1.min(tau - t1), 1e-13)?;
    let xs = cache.xs();
    let v: Vec<f64> = xs.iter().map(|z| (e2 * z).exp()).collect();
    let w = cache.apply(tau - t1, &v)?;
    let v2: Vec<f64> = w.value.iter().zip(&xs).map(|(p, y)| p * ((s1 - s0) * y).exp()).collect();
    let out = cache.apply(t1, &v2)?;
    let lhs = out.value[ix];
    // 𝒦⁻¹[e^{−t1 u²} h_{s0}(u) G(u)](x), G(u) = ∫ q_{s0,s1}(u,v) e^{−(τ−t1)v²} dv
    let kx = |u: f64| bessel_k_imag(u, x.exp()).unwrap_or(f64::NAN);
    let f = |z: &[f64]| {
        let (u, v) = (z[0], z[1]);
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        (-t1 * u * u - (tau - t1) * v * v).exp()
            * h_fun(s0, u, c).unwrap_or(0.0)
            * mu_density(u)
            * kx(u)
            * cdh_transition_density(s0, s1, u, v, c).unwrap_or(0.0)
    };
    let doms = [
        Domain::SemiInfinite(0.0, TailPolicy::Gaussian(t1)),
        Domain::SemiInfinite(0.0, TailPolicy::Gaussian(tau - t1)),
    ];
    let r = integrate_nested(f, &doms, 1e-10)?.require("conditional dual side")?;
    Ok(IdentityReport::new("COND_DUAL", args, lhs, r.value, tol, 0.0)
        .note(format!("grid err {:.1e}, dual side err {:.1e}", out.err[ix], r.err_est)))
}

fn cdh_ortho(mut args: Args, tol: f64) -> Result<IdentityReport> {
    let n1 = int(&mut args, "n", 1)?;
    let n2 = int(&mut args, "m", 2)?;
    let s = num(&mut args, "s", 0.0)?;
    let t = num(&mut args, "t", 0.5)?;
    let x = num(&mut args, "x", 1.0)?;
    let c = num(&mut args, "c", 2.0)?;
    let m = cdh_transition_measure(s, t, x, c)?;
    let dens = m.density.ok_or_else(|| Error::NotImplemented("orthogonality check needs an absolutely continuous measure".into()))?;
    let alpha = 0.5 * (c - t);
    let beta = Complex64::new(0.5 * (t - s), -0.5 * x.sqrt());
    let gamma = beta.conj();
    let favard = std::cell::Cell::new(true);
    let inner = |i: u32, j: u32| -> Result<f64> {
        let f = |v: f64| {
            let y = v * v;
            let pa = cdh_poly(i, y / 4.0, alpha, beta, gamma);
            let pb = cdh_poly(j, y / 4.0, alpha, beta, gamma);
            favard.set(favard.get() && pa.favard && pb.favard);
            2.0 * v * dens.pdf(y) * pa.value * pb.value
        };
        Ok(integrate_semi_infinite_with(f, 0.0, TailPolicy::Exponential(1.0), &QuadOptions::rel(1e-11, 1e-12).panels(8))?
            .require("orthogonality integral")?
            .value)
    };
    let cross = inner(n1, n2)?;
    let norm = (inner(n1, n1)? * inner(n2, n2)?).sqrt();
    if !favard.get() {
        return Err(Error::domain("Favard condition fails for these parameters"));
    }
    // normalized inner product against zero
    Ok(IdentityReport::new("CDH_ORTHO", args, cross / norm, 0.0, tol, 1.0).note(format!("norm {norm:.6e}")))
}

/// Monte Carlo check of the open KPZ Laplace transform against the dual side.
pub fn check_kpz_laplace_mc(svec: &[f64], tvec: &[f64], a: f64, c: f64, n_paths: usize, seed: u64) -> Result<IdentityReport> {
    check_psi_args(svec, tvec)?;
    let d = svec.len();
    if (tvec[d - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::Range("the last time must be 1".into()));
    }
    if !(a + c > 0.0 && a.min(c) > -2.0) {
        return Err(Error::Range(format!("need a + c > 0 and min(a, c) > -2, got a={a}, c={c}")));
    }
    if !(svec[d - 1] > 0.0) {
        return Err(Error::Range("s must be decreasing positive reals".into()));
    }
    let params = Params::new(a, c, 0.25)?;
    // The representation H = B − Y_{·/4} + Y_0 turns the left side into Brownian factors times
    // a Y-side expectation, which the Y route evaluates for any exponents. The dual route needs
    // the range c > s_1 > … > s_d > max(−a, 0).
    let route = if a > 0.0 && d <= 2 && svec[0] < c { PsiRoute::CdhQuadrature } else { PsiRoute::YQuadrature };
    let psi = compute_psi(svec, tvec, params, route)?;
    let mut prev = 0.0;
    let mut gauss = 0.0;
    for k in 0..d {
        gauss += (tvec[k] - prev) * svec[k] * svec[k];
        prev = tvec[k];
    }
    let rhs = (0.25 * gauss).exp() * psi.value;
    let mut times = vec![0.0];
    times.extend_from_slice(tvec);
    let paths = sample_H_kpz(&times, n_paths, &SamplerConfig::with_seed(seed), a, c)?;
    let xs: Vec<f64> = paths
        .iter()
        .map(|p| {
            let e: f64 = (0..d).map(|k| (svec[k] - svec.get(k + 1).copied().unwrap_or(0.0)) * p.values[k + 1]).sum();
            (-e).exp()
        })
        .collect();
    let (lhs, se) = stats::mean_se(&xs);
    let sigma = (se * se + (0.25 * gauss).exp().powi(2) * psi.err * psi.err).sqrt();
    let mut args = Map::new();
    args.insert("s".into(), json!(svec));
    args.insert("t".into(), json!(tvec));
    args.insert("a".into(), json!(a));
    args.insert("c".into(), json!(c));
    args.insert("n_paths".into(), json!(n_paths));
    args.insert("seed".into(), json!(seed));
    // the 3σ band expressed as a relative tolerance
    let tol = 3.0 * sigma / rhs.abs();
    Ok(IdentityReport::new("KPZ_LAPLACE_MC", args, lhs, rhs, tol, rhs.abs())
        .note(format!("pass within 3 combined standard errors; sigma {sigma:.3e}, psi route {route:?}")))
}

/// Suite profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Fast,
    Thorough,
}

fn obj(v: Value) -> Args {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// Argument panel of an entry: one instance for `Fast`, several for `Thorough`.
pub fn panel(id: &str, profile: Profile) -> Vec<Args> {
    let mut v: Vec<Value> = vec![json!({})];
    if id == "P_SUBPROB" {
        v = [(0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (1.0, -3.0), (1.0, 1.0), (0.1, -1.0)]
            .iter()
            .map(|(t, x)| json!({"t": t, "x": x}))
            .collect();
    }
    if profile == Profile::Thorough {
        let more: Vec<Value> = match id {
            "MELLIN_SINGLE" => vec![json!({"s": 1.5, "u": 1.0}), json!({"s": 0.5, "u": 2.0})],
            "MELLIN_PRODUCT" => vec![json!({"t": 0.5, "u": 0.3, "v": 1.7}), json!({"t": 2.0, "u": 3.0, "v": 0.5})],
            "MU_FORMS" => vec![json!({"u": 0.1}), json!({"u": 10.0}), json!({"u": 50.0})],
            "P_SYMMETRY" => vec![json!({"t": 0.1, "x": -3.0, "y": 1.0}), json!({"t": 2.0, "x": 2.0, "y": -1.5})],
            "P_CHAPKOL" => vec![json!({"s": 0.3, "t": 0.7, "x": -1.0, "y": 0.5}), json!({"s": 1.0, "t": 0.2, "x": 0.5, "y": 0.5})],
            "Q_NORM" => vec![json!({"s": -0.4, "t": 0.2, "u": 0.1, "c": 0.5}), json!({"s": 0.1, "t": 1.5, "u": 3.0, "c": 2.5})],
            "Q_CHAPKOL" => vec![json!({"u": 2.0, "w": 0.3}), json!({"r": -0.5, "s": 0.5, "t": 1.5, "c": 2.0})],
            "ENTRANCE_Q" => vec![json!({"a": 1.5, "c": 0.7, "s": -1.0, "t": 0.3, "v": 2.0}), json!({"a": -0.5, "c": 2.0, "s": 0.6, "t": 1.2, "v": 0.5})],
            "ENTRANCE_T" => vec![json!({"y": 0.3}), json!({"y": 4.0})],
            "MACDONALD" => vec![json!({"u": 0.0, "x": -1.0, "y": 0.5}), json!({"u": 4.0, "x": 0.0, "y": 0.0})],
            "THETA_CONSIST" => vec![json!({"r": 0.5, "t": 0.5}), json!({"r": 2.0, "t": 3.0})],
            "THETA_MY1" => vec![json!({"lambda": 2.0, "r": 0.5}), json!({"lambda": 1.5, "r": 0.7})],
            "THETA_MY2" => vec![json!({"x": 1.0, "t": 0.5}), json!({"x": 1.0, "t": 2.0}), json!({"x": 2.0, "t": 1.0})],
            "P_VIA_THETA" => vec![json!({"t": 1.0, "x": 0.5, "y": -0.5}), json!({"t": 0.3, "x": -2.0, "y": 1.0})],
            "C_PATHS" => vec![json!({"a": 1.0, "c": 1.0, "tau": 0.5}), json!({"a": 0.3, "c": 2.0, "tau": 2.0})],
            "C_LAPLACE" => vec![json!({"a": 0.5, "c": 0.5, "lambda": 1.0}), json!({"a": 1.2, "c": 0.4, "lambda": 0.5})],
            "K_RELATION" => vec![json!({"a": -1.0, "c": 2.0}), json!({"a": 0.5, "c": 1.5, "s": 0.3})],
            "ASSOC_K" => vec![json!({"delta": 1.0, "x": -1.0}), json!({"delta": 0.2, "x": 1.0})],
            "PARSEVAL" => vec![json!({"t": 0.5}), json!({"t": 2.0})],
            "ASSOC_K2" => vec![json!({"delta": 1.0, "u": 2.0}), json!({"delta": 0.3, "u": 0.2})],
            "INTERTWINE" => vec![json!({"s": 1.0, "t": 1.0, "beta": 0.5, "u": 2.0}), json!({"s": 0.3, "t": 0.3, "beta": 1.5, "u": 0.5})],
            "H_HARMONIC" => vec![json!({"a": -0.5, "c": 2.0, "s": 0.2, "t": 0.7, "x": -1.0}), json!({"a": 1.5, "c": 0.7, "tau": 2.0, "s": 0.5, "t": 1.5, "x": 1.0})],
            "DUAL_D0" => {
                let mut out = vec![];
                for (a, c) in [(1.0, 1.0), (1.5, 0.7), (-0.5, 2.0)] {
                    for s in [0.1, 0.3, 0.6] {
                        if s > -a && s < c && !(a == 1.0 && c == 1.0 && s == 0.3) {
                            out.push(json!({"a": a, "c": c, "s": s}));
                        }
                    }
                }
                out
            }
            "DUAL_D1" => vec![json!({"a": 1.5, "c": 0.7, "s1": 0.5, "s2": -0.5, "t1": 0.3}), json!({"a": -0.5, "c": 2.0, "s1": 1.0, "s2": 0.8, "t1": 0.7})],
            "PSI_DUAL" => vec![json!({"a": 1.0, "c": 1.0, "tau": 0.25, "s": [0.5], "t": [1.0]}), json!({"a": 0.5, "c": 1.5, "tau": 0.25, "s": [0.6, 0.3], "t": [0.5, 1.0]})],
            "COND_DUAL" => vec![json!({"s0": -0.5, "s1": 0.3, "t1": 0.3, "x": 0.0}), json!({"a": 0.5, "c": 1.5, "s0": 0.0, "s1": 1.0, "t1": 0.6, "x": 0.5})],
            "CDH_ORTHO" => vec![json!({"n": 1, "m": 3}), json!({"n": 2, "m": 3})],
            _ => vec![],
        };
        v.extend(more);
    }
    v.into_iter().map(obj).collect()
}

/// Runs the selected identities (all when `selection` is `None`) on their
/// default panels. Reports come back in catalog order, then unknown ids.
pub fn run_suite(selection: Option<&[String]>, profile: Profile) -> Vec<IdentityReport> {
    let ids: Vec<String> = match selection {
        None => CATALOG.iter().map(|s| s.to_string()).collect(),
        Some(sel) => sel.to_vec(),
    };
    let jobs: Vec<(String, Args)> = ids
        .iter()
        .flat_map(|id| {
            if CATALOG.contains(&id.as_str()) {
                panel(id, profile).into_iter().map(|a| (id.clone(), a)).collect::<Vec<_>>()
            } else {
                vec![(id.clone(), Map::new())]
            }
        })
        .collect();
    jobs.par_iter()
        .map(|(id, args)| match check_identity(id, args, None) {
            Ok(r) => r,
            Err(e) => IdentityReport::failed(id, args.clone(), f64::NAN, &e),
        })
        .collect()
}
