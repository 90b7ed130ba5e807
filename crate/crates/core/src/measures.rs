//! Normalizing constants, weight functions and entrance laws.

#![allow(non_snake_case)]

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ln_inv_gamma_abs2_imag, SpectralCache, T_MIN};
use crate::quad::{integrate_adaptive_with, integrate_semi_infinite_with, QuadOptions, QuadResult, TailPolicy};
use crate::specfun::{gamma_real, k_imag, ln_gamma_abs, ln_gamma_real, pochhammer, rgamma_real, Z_MAX};

fn lg2(sigma: f64, y: f64) -> f64 {
    2.0 * ln_gamma_abs(Complex64::new(sigma, y))
}

/// Boundary parameters a, c and the time horizon τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub c: f64,
    pub tau: f64,
}

impl Params {
    pub fn new(a: f64, c: f64, tau: f64) -> Result<Self> {
        let p = Params { a, c, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.c.is_finite()) || !(self.a + self.c > 0.0) {
            return Err(Error::domain(format!("need a + c > 0, got a={}, c={}", self.a, self.c)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::domain(format!("need tau > 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// S = 2 + (c − 2)·1{0 < c < 2}.
    pub fn S(&self) -> f64 {
        if self.c > 0.0 && self.c < 2.0 {
            self.c
        } else {
            2.0
        }
    }

    /// The same parameters with a and c exchanged.
    pub fn swapped(&self) -> Params {
        Params {
            a: self.c,
            c: self.a,
            tau: self.tau,
        }
    }
}

/// Evaluation route for C^τ_{a,c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMethod {
    Spectral,
    Direct2d,
}

/// Integral part 𝔠 of the spectral formula, with diagnostics.
pub fn frak_c(a: f64, c: f64, tau: f64) -> Result<QuadResult> {
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        (lg2(0.5 * a, 0.5 * u) + lg2(0.5 * c, 0.5 * u) + ln_inv_gamma_abs2_imag(u) - tau * u * u).exp() / (8.0 * PI)
    };
    // the integrand varies on the scale of the distance of a or c to the nearest pole
    let near = |x: f64| {
        if x <= 0.0 {
            (x - 2.0 * (x / 2.0).round()).abs().max(1e-9)
        } else {
            1.0
        }
    };
    let scale = near(a).min(near(c));
    let mut opts = QuadOptions::rel(1e-13, 1e-300);
    opts.max_panels = 20_000;
    let head = integrate_adaptive_with(f, 0.0, scale.min(1.0), &opts.panels(4));
    let body = integrate_semi_infinite_with(f, scale.min(1.0), TailPolicy::Gaussian(tau), &opts.panels(8))?;
    QuadResult {
        value: head.value + body.value,
        err_est: head.err_est + body.err_est,
        evals: head.evals + body.evals,
        converged: head.converged && body.converged,
    }
    .require("C integral part")
}

/// Residue sum 𝔇_{a,c}; zero when a ≥ 0.
pub fn frak_d(a: f64, c: f64, tau: f64) -> Result<f64> {
    if a >= 0.0 {
        return Ok(0.0);
    }
    // 1/(aΓ(−a)) = −1/Γ(1−a) stays finite through a = 0, −2, −4, ...
    let pre = -0.5 * gamma_real(0.5 * (c + a))? * gamma_real(0.5 * (c - a))? * rgamma_real(1.0 - a);
    let mut sum = 0.0;
    let mut k = 0u32;
    while a + 2.0 * (k as f64) < 0.0 {
        let m = a + 2.0 * k as f64;
        let (lf, _) = ln_gamma_real(k as f64 + 1.0)?;
        sum += (tau * m * m).exp() * m * pochhammer(a, k) * pochhammer(0.5 * (a + c), k)
            / (lf.exp() * pochhammer(1.0 + 0.5 * (a - c), k));
        k += 1;
    }
    Ok(pre * sum)
}

/// C^τ_{a,c} with an error estimate.
pub fn normalizing_C_quad(params: Params, method: CMethod) -> Result<QuadResult> {
    params.validate()?;
    let Params { a, c, tau } = params;
    match method {
        CMethod::Spectral => {
            let (a, c) = if a <= c { (a, c) } else { (c, a) };
            let scale = ((a + c) * LN_2).exp();
            let mut r = frak_c(a, c, tau)?;
            let d = frak_d(a, c, tau)?.max(frak_d(c, a, tau)?);
            r.value = scale * (r.value + d);
            r.err_est *= scale;
            Ok(r)
        }
        CMethod::Direct2d => {
            if !(a > 0.0 && c > 0.0) {
                return Err(Error::MethodDomain(format!("direct2d needs a, c > 0, got a={a}, c={c}")));
            }
            if tau < T_MIN {
                return Err(Error::domain(format!("tau = {tau} below the kernel floor")));
            }
            direct2d(a, c, tau)
        }
    }
}

/// ∫∫ e^{ax+cy} p_τ(x,y) dx dy as a double trapezoid sum over a uniform x-grid.
/// The integrand is analytic in a strip and decays exponentially at both ends,
/// so the sum converges geometrically in the step.
fn direct2d(a: f64, c: f64, tau: f64) -> Result<QuadResult> {
    let hi = (60.0 + 8.0 * (a + c)).ln().min(Z_MAX.ln());
    let lo = (-34.0 / a.min(c) - 8.0 * tau.sqrt()).max(-600.0);
    let nx = ((hi - lo) / 0.2).ceil() as usize + 1;
    let cache = SpectralCache::new(lo, hi, nx, tau, 1e-13)?;
    let xs = cache.xs();
    let va: Vec<f64> = xs.iter().map(|x| (a * x).exp()).collect();
    let vc: Vec<f64> = xs.iter().map(|x| (c * x).exp()).collect();
    let (value, err) = cache.bilinear(tau, &va, &vc)?;
    let trunc = (a * lo).exp() / a + (c * lo).exp() / c;
    QuadResult {
        value,
        err_est: err + trunc,
        evals: nx * cache.u_nodes().len(),
        converged: true,
    }
    .require("C by direct summation")
}

/// Normalizing constant C^τ_{a,c}.
pub fn normalizing_C(params: Params, method: CMethod) -> Result<f64> {
    normalizing_C_quad(params, method).map(|r| r.value)
}

/// Prefactor (a+c)(a+c+2)/2^{a+c+1} relating 𝔎 to C.
pub fn k_prefactor(a: f64, c: f64) -> f64 {
    (a + c) * (a + c + 2.0) / (2f64).powf(a + c + 1.0)
}

/// 𝔎^τ_{a,c}.
pub fn normalizing_K(params: Params) -> Result<f64> {
    Ok(k_prefactor(params.a, params.c) * normalizing_C(params, CMethod::Spectral)?)
}

/// Closed form of ∫₀^∞ e^{−λ²τ} C^τ_{a,c} dτ for 0 < a + c < 2.
pub fn laplace_C_closed(a: f64, c: f64, lambda: f64) -> Result<f64> {
    let s = a + c;
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::Strip(s));
    }
    if !(lambda > (-a).max(-c)) {
        return Err(Error::domain(format!("lambda = {lambda} must exceed max(-a, -c)")));
    }
    let (l1, s1) = ln_gamma_real(0.5 * (a + lambda))?;
    let (l2, s2) = ln_gamma_real(0.5 * (c + lambda))?;
    let r3 = rgamma_real(0.5 * (lambda + 2.0 - a));
    let r4 = rgamma_real(0.5 * (lambda + 2.0 - c));
    Ok((s * LN_2).exp() * PI / (8.0 * (0.5 * PI * s).sin()) * s1 * s2 * (l1 + l2).exp() * r3 * r4)
}

/// h_s(u) = 2^{c−s−2}|Γ((c−s+iu)/2)|².
pub fn h_fun(s: f64, u: f64, c: f64) -> Result<f64> {
    if !(s < c) {
        return Err(Error::Order(format!("h_s needs s < c, got s={s}, c={c}")));
    }
    Ok(((c - s - 2.0) * LN_2 + lg2(0.5 * (c - s), 0.5 * u)).exp())
}

/// g_s(u) = 2^{a+s−2}|Γ((a+s+iu)/2)|².
pub fn g_fun(s: f64, u: f64, a: f64) -> Result<f64> {
    if !(a + s > 0.0) {
        return Err(Error::Order(format!("g_s needs a + s > 0, got s={s}, a={a}")));
    }
    Ok(((a + s - 2.0) * LN_2 + lg2(0.5 * (a + s), 0.5 * u)).exp())
}

/// Space-time harmonic function H_t(x) = ∫ p_{τ−t}(x,y) e^{cy} dy, with diagnostics.
pub fn H_fun_quad(t: f64, x: f64, params: Params) -> Result<QuadResult> {
    params.validate()?;
    let Params { c, tau, .. } = params;
    if !(0.0..=tau).contains(&t) {
        return Err(Error::domain(format!("H_t needs t in [0, tau], got {t}")));
    }
    if t == tau {
        return Ok(QuadResult {
            value: (c * x).exp(),
            err_est: 0.0,
            evals: 0,
            converged: true,
        });
    }
    if !(c > 0.0) {
        return Err(Error::domain(format!("spectral H_t needs c > 0, got {c}")));
    }
    let dt = tau - t;
    if dt < T_MIN {
        return Err(Error::domain(format!("tau - t = {dt} below the kernel floor")));
    }
    let z = x.exp();
    if !(z <= Z_MAX && z > 0.0) {
        return Err(Error::domain(format!("e^x out of range for x = {x}")));
    }
    let pre = (c - 2.0) * LN_2;
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let w = (pre + lg2(0.5 * c, 0.5 * u) - dt * u * u).exp() * crate::specfun::mu_density(u);
        w * k_imag(u, z)
    };
    let scale = (pre + lg2(0.5 * c, 0.0)).exp() * (1.0 + (c * x).exp());
    let opts = QuadOptions::rel(1e-11, 1e-13 * scale).panels(x.abs().ceil() as usize + 4);
    integrate_semi_infinite_with(f, 0.0, TailPolicy::Gaussian(dt), &opts)?.require("H_t")
}

/// H_t(x); equals e^{cx} at t = τ.
pub fn H_fun(t: f64, x: f64, params: Params) -> Result<f64> {
    H_fun_quad(t, x, params).map(|r| r.value)
}

fn check_range(s: f64, params: &Params) -> Result<()> {
    if !(-params.a < s && s < params.c) {
        return Err(Error::Range(format!("s = {s} outside (-a, c) = ({}, {})", -params.a, params.c)));
    }
    Ok(())
}

/// φ_s(u) = h_s(u) g_s(u) μ(u) / C^τ_{a,c}, given C.
pub fn phi_density_with(s: f64, u: f64, params: Params, C: f64) -> Result<f64> {
    check_range(s, &params)?;
    Ok(h_fun(s, u, params.c)? * g_fun(s, u, params.a)? * crate::specfun::mu_density(u) / C)
}

/// Entrance density φ_s(u) of the dual process.
pub fn phi_density(s: f64, u: f64, params: Params) -> Result<f64> {
    phi_density_with(s, u, params, normalizing_C(params, CMethod::Spectral)?)
}

/// Closed form 2^{a+c}/(8πC) |Γ((a+s+iu)/2) Γ((c−s+iu)/2)|² / |Γ(iu)|².
pub fn phi_closed(s: f64, u: f64, params: Params, C: f64) -> Result<f64> {
    check_range(s, &params)?;
    let Params { a, c, .. } = params;
    let l = (a + c) * LN_2 + lg2(0.5 * (a + s), 0.5 * u) + lg2(0.5 * (c - s), 0.5 * u) + ln_inv_gamma_abs2_imag(u);
    Ok(l.exp() / (8.0 * PI * C))
}

/// Entrance law 𝔭_s of the continuous dual Hahn process: a density on (0,∞)
/// plus atoms at negative locations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntranceLaw {
    pub s: f64,
    pub params: Params,
    pub atoms: Vec<(f64, f64)>,
}

impl EntranceLaw {
    /// Density of the absolutely continuous part at x.
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let Params { a, c, .. } = self.params;
        let v = x.sqrt();
        let l = lg2(0.5 * (self.s + a), 0.5 * v) + lg2(0.5 * (c - self.s), 0.5 * v) + ln_inv_gamma_abs2_imag(v);
        (a + c) * (a + c + 2.0) / (16.0 * PI) * l.exp() / (2.0 * v)
    }

    /// Same density in the variable v = √x, i.e. 2v·density(v²).
    pub fn density_sqrt(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            2.0 * v * self.density(v * v)
        }
    }

    /// ∫ e^{−λx} 𝔭_s(dx), atoms included.
    pub fn laplace(&self, lambda: f64) -> Result<QuadResult> {
        if !(lambda > 0.0) {
            return Err(Error::domain(format!("laplace needs lambda > 0, got {lambda}")));
        }
        let f = |v: f64| (-lambda * v * v).exp() * self.density_sqrt(v);
        let mut r = integrate_semi_infinite_with(f, 0.0, TailPolicy::Gaussian(lambda), &QuadOptions::rel(1e-12, 1e-300).panels(8))?
            .require("entrance law transform")?;
        r.value += self.atoms.iter().map(|&(x, m)| (-lambda * x).exp() * m).sum::<f64>();
        Ok(r)
    }
}

/// Entrance law 𝔭_s for s ≤ c.
pub fn entrance_law_p(s: f64, params: Params) -> Result<EntranceLaw> {
    params.validate()?;
    let Params { a, c, .. } = params;
    if !(s <= c) {
        return Err(Error::Order(format!("entrance law needs s <= c, got s={s}, c={c}")));
    }
    let b = a + s;
    let mut atoms = Vec::new();
    if b < 0.0 {
        let pre = (a + c) * (a + c + 2.0) / 4.0 * gamma_real(0.5 * (c - a - 2.0 * s))? * gamma_real(0.5 * (a + c))?
            * rgamma_real(-b);
        let mut j = 0u32;
        while 2.0 * (j as f64) + b < 0.0 {
            let jf = j as f64;
            let (lf, _) = ln_gamma_real(jf + 1.0)?;
            let m = pre * (b + 2.0 * jf) * pochhammer(b, j) * pochhammer(0.5 * (a + c), j)
                / (b * lf.exp() * pochhammer(1.0 + 0.5 * (2.0 * s + a - c), j));
            atoms.push((-(b + 2.0 * jf).powi(2), m));
            j += 1;
        }
    }
    Ok(EntranceLaw { s, params, atoms })
}

/// Value of a monic continuous dual Hahn polynomial and whether the Favard
/// condition holds up to degree n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdhPolyValue {
    pub value: f64,
    pub favard: bool,
}

/// p_n(x) from the three-term recurrence with p₋₁ = 0, p₀ = 1.
pub fn cdh_poly(n: u32, x: f64, alpha: f64, beta: Complex64, gamma: Complex64) -> CdhPolyValue {
    let a_k = |k: f64| (k + alpha + beta) * (k + alpha + gamma);
    let c_k = |k: f64| k * (k - 1.0 + beta + gamma);
    let (mut prev, mut cur) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    let mut favard = true;
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let kf = k as f64;
        let b = a_k(kf) + c_k(kf) - alpha * alpha;
        let next = (x - b) * cur - if k > 0 { a_k(kf - 1.0) * c_k(kf) * prev } else { Complex64::new(0.0, 0.0) };
        prev = cur;
        cur = next;
        prod *= a_k(kf) * c_k(kf + 1.0);
        if !(prod.re >= -1e-12 * prod.norm()) {
            favard = false;
        }
    }
    CdhPolyValue {
        value: cur.re,
        favard,
    }
}
