//! Integral kernels: the Yakubovich heat kernel p_t, the Hartman–Watson
//! density θ, the dual kernel q̃_t and the continuous dual Hahn transitions.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{
    gk15_rule, integrate_adaptive_with, integrate_semi_infinite_with, integrate_spectral_with, Envelope, QuadOptions,
    QuadResult, TailPolicy,
};
use crate::specfun::{k_imag, ln_gamma_abs, ln_gamma_real, KOrder, U_MAX, Z_MAX, Z_MIN};

/// Smallest time accepted by the heat kernel.
pub const T_MIN: f64 = 0.01;

/// Smallest time accepted by the spectral Hartman–Watson density.
pub const THETA_T_MIN: f64 = 0.2;

const LN_4PI: f64 = 2.531_024_246_969_291;

/// ln|Γ(σ + iy)|².
fn lg2(sigma: f64, y: f64) -> f64 {
    2.0 * ln_gamma_abs(Complex64::new(sigma, y))
}

/// ln(1/|Γ(iv)|²) = ln(v sinh(πv)/π).
pub(crate) fn ln_inv_gamma_abs2_imag(v: f64) -> f64 {
    let v = v.abs();
    v.ln() + PI * v + (-(-2.0 * PI * v).exp_m1() * 0.5).ln() - PI.ln()
}

pub(crate) fn k0(z: f64) -> f64 {
    k_imag(0.0, z)
}

/// Bound G with |K_{iu}(e^x) K_{iu}(e^y)| μ(u) ≤ G (1+u).
fn kk_envelope(x: f64, y: f64) -> f64 {
    3.0 * k0(x.exp() / 61.0) * k0(y.exp() / 61.0)
}

fn check_x(x: f64) -> Result<()> {
    let z = x.exp();
    if x.is_finite() && (Z_MIN..=Z_MAX).contains(&z) {
        Ok(())
    } else {
        Err(Error::domain(format!("e^x outside [{Z_MIN:e}, {Z_MAX}] for x = {x}")))
    }
}

fn check_t(t: f64) -> Result<()> {
    if t >= T_MIN && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("time {t} below the kernel floor {T_MIN}")))
    }
}

/// p_t(x,y) with its quadrature diagnostics; `tol` is relative.
pub fn heat_kernel_p_quad(t: f64, x: f64, y: f64, tol: f64) -> Result<QuadResult> {
    check_t(t)?;
    check_x(x)?;
    check_x(y)?;
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let g = kk_envelope(x, y);
    let opts = QuadOptions::rel(tol, (tol * 1e-8).max(1e-14) * g);
    let (zx, zy) = (x.exp(), y.exp());
    integrate_spectral_with(
        |u| {
            let k = KOrder::new(u);
            k.eval(zx) * k.eval(zy)
        },
        t,
        Envelope::Damped { g, p: 1.0 },
        &opts.panels((x.abs() + y.abs()).ceil() as usize + 4),
    )?
    .require("heat kernel")
}

/// Yakubovich heat kernel p_t(x,y) = ∫ e^{−tu²} K_{iu}(e^x) K_{iu}(e^y) μ(du).
pub fn heat_kernel_p(t: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    heat_kernel_p_quad(t, x, y, tol).map(|r| r.value)
}

/// Representation used by [`hartman_watson_theta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    Spectral,
    Oscillatory,
}

/// Unnormalized Hartman–Watson density θ(r, t).
pub fn hartman_watson_theta(r: f64, t: f64, method: ThetaMethod) -> Result<f64> {
    match method {
        ThetaMethod::Spectral => theta_spectral(r, t, 1e-12),
        ThetaMethod::Oscillatory => theta_oscillatory(r, t),
    }
}

/// θ(r,t) = ½ ∫ e^{−tu²/2} K_{iu}(r) μ(du), to relative accuracy `tol` above
/// the cancellation floor set by the largest integrand value.
pub(crate) fn theta_spectral(r: f64, t: f64, tol: f64) -> Result<f64> {
    if !(Z_MIN..=Z_MAX).contains(&r) {
        return Err(Error::domain(format!("theta: r = {r} outside the Bessel domain")));
    }
    if !(t >= THETA_T_MIN) {
        return Err(Error::domain(format!("theta: spectral form needs t >= {THETA_T_MIN}, got {t}")));
    }
    let env = Envelope::Plain { g: k0(r), p: 0.0 };
    let probe = env.cutoff(0.5 * t, 1e-16);
    if probe > U_MAX {
        return Err(Error::domain(format!("theta: t = {t} needs orders beyond {U_MAX}")));
    }
    let f = |u: f64| (-0.5 * t * u * u).exp() * crate::specfun::mu_density(u) * k_imag(u, r).abs();
    let peak = (1..=64).map(|i| f(probe * i as f64 / 64.0)).fold(0.0, f64::max);
    // K is accurate to about 1e-12 of its envelope, which bounds the attainable accuracy
    let floor = 1e-13 * probe * peak.max(1e-300);
    let panels = r.ln().abs().ceil() as usize + 4;
    let res = integrate_spectral_with(|u| k_imag(u, r), 0.5 * t, env, &QuadOptions::rel(tol.max(1e-11), floor).panels(panels))?;
    Ok(0.5 * res.require("theta (spectral)")?.value)
}

/// θ(r,t) from the classical oscillatory integral; restricted to t ∈ [0.2, 10].
pub(crate) fn theta_oscillatory(r: f64, t: f64) -> Result<f64> {
    if !(0.2..=10.0).contains(&t) || !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("oscillatory theta needs t in [0.2, 10], r > 0; got r={r}, t={t}")));
    }
    let expo = |y: f64| -y * y / (2.0 * t) - r * y.cosh() + y.sinh().ln();
    // the integrand is negligible once the exponent drops 60 below its peak
    let peak = (1..=400).map(|k| expo(k as f64 * 0.025)).fold(f64::MIN, f64::max);
    let mut y_max = 1.0;
    while expo(y_max) > peak - 60.0 {
        y_max *= 1.2;
    }
    let opts = QuadOptions {
        // roundoff floor; relative accuracy degrades like e^{π²/(2t)} for small t
        abs_tol: 1e-13 * peak.exp() * y_max,
        rel_tol: 1e-13,
        max_panels: 100_000,
        initial_panels: (y_max / t).ceil() as usize * 4,
    };
    let res = integrate_adaptive_with(|y| (expo(y)).exp() * (PI * y / t).sin(), 0.0, y_max, &opts);
    let res = res.require("theta (oscillatory)")?;
    let pre = r * (PI * PI / (2.0 * t)).exp() / (2.0 * PI.powi(3) * t).sqrt();
    Ok(pre * res.value)
}

/// p_t(x,y) = ∫ exp(−½(e^{r+x−y}+e^{r+y−x}+e^{x+y−r})) θ(e^r, 2t) dr.
pub fn heat_kernel_via_theta(t: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if !(2.0 * t >= THETA_T_MIN) {
        return Err(Error::domain(format!("theta route needs t >= {}, got {t}", 0.5 * THETA_T_MIN)));
    }
    check_x(x)?;
    check_x(y)?;
    let d = (x - y).abs();
    let lo = x + y - 150f64.ln();
    let hi = 150f64.ln() - d;
    if lo >= hi {
        return Ok(0.0);
    }
    let err: std::cell::Cell<Option<Error>> = std::cell::Cell::new(None);
    let f = |r: f64| {
        let w = -0.5 * ((r + d).exp() + (r - d).exp() + (x + y - r).exp());
        if w < -745.0 {
            return 0.0;
        }
        match theta_spectral(r.exp(), 2.0 * t, 0.1 * tol) {
            Ok(th) => w.exp() * th,
            Err(e) => {
                err.set(Some(e));
                0.0
            }
        }
    };
    let res = integrate_adaptive_with(f, lo, hi, &QuadOptions::rel(tol, 1e-300).panels(6));
    if let Some(e) = err.take() {
        return Err(e);
    }
    Ok(res.require("heat kernel via theta")?.value)
}

/// Dual kernel q̃_t(u,v) = 2^t |Γ((t+i(u+v))/2, (t+i(u−v))/2)|² / (4π Γ(t) |Γ(iv)|²).
pub fn q_tilde_kernel(t: f64, u: f64, v: f64) -> Result<f64> {
    if !(t > 0.0 && u >= 0.0 && v > 0.0) {
        return Err(Error::domain(format!("q_tilde({t}, {u}, {v})")));
    }
    let (lgt, _) = ln_gamma_real(t)?;
    let l = t * LN_2 + lg2(0.5 * t, 0.5 * (u + v)) + lg2(0.5 * t, 0.5 * (u - v)) - LN_4PI - lgt
        + ln_inv_gamma_abs2_imag(v);
    Ok(l.exp())
}

/// ln q_{s,t}(u,v) without argument checks.
pub(crate) fn ln_q(s: f64, t: f64, u: f64, v: f64, c: f64) -> f64 {
    let d = t - s;
    let (lgd, _) = ln_gamma_real(d).unwrap_or((f64::INFINITY, 1.0));
    lg2(0.5 * (c - t), 0.5 * v) + lg2(0.5 * d, 0.5 * (u + v)) + lg2(0.5 * d, 0.5 * (u - v))
        - LN_4PI
        - lgd
        - lg2(0.5 * (c - s), 0.5 * u)
        + ln_inv_gamma_abs2_imag(v)
}

fn check_order(s: f64, t: f64, c: f64, strict_c: bool) -> Result<()> {
    if !(s < t) {
        return Err(Error::Order(format!("need s < t, got s={s}, t={t}")));
    }
    if strict_c && !(t < c) || !strict_c && !(t <= c) {
        return Err(Error::Order(format!("need t < c, got t={t}, c={c}")));
    }
    Ok(())
}

/// Continuous dual Hahn transition density q_{s,t}(u,v) in the Z = √𝕋 coordinate.
pub fn cdh_transition_density(s: f64, t: f64, u: f64, v: f64, c: f64) -> Result<f64> {
    check_order(s, t, c, true)?;
    if !(u >= 0.0 && v > 0.0) {
        return Err(Error::domain(format!("cdh density needs u >= 0, v > 0; got u={u}, v={v}")));
    }
    Ok(ln_q(s, t, u, v, c).exp())
}

/// Density of 𝔭_{s,t}(x, dy) on y > 0 for x > 0.
#[allow(non_snake_case)]
pub fn cdh_transition_density_T(s: f64, t: f64, x: f64, y: f64, c: f64) -> Result<f64> {
    check_order(s, t, c, false)?;
    if !(x > 0.0) {
        return Err(Error::domain(format!("absolutely continuous branch needs x > 0, got {x}")));
    }
    if !(y > 0.0) {
        return Ok(0.0);
    }
    let v = y.sqrt();
    Ok(ln_q(s, t, x.sqrt(), v, c).exp() / (2.0 * v))
}

/// Absolutely continuous part of a transition measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdhDensity {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub c: f64,
}

impl CdhDensity {
    /// Density at y (zero for y ≤ 0).
    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let v = y.sqrt();
        ln_q(self.s, self.t, self.x.sqrt(), v, self.c).exp() / (2.0 * v)
    }

    /// ∫ pdf, computed in the v = √y coordinate.
    pub fn mass(&self, tol: f64) -> Result<QuadResult> {
        let u = self.x.sqrt();
        integrate_semi_infinite_with(
            |v| if v > 0.0 { ln_q(self.s, self.t, u, v, self.c).exp() } else { 0.0 },
            0.0,
            TailPolicy::Exponential(1.0),
            &QuadOptions::abs(tol).panels(8),
        )
    }
}

/// 𝔭_{s,t}(x, ·) as a density part plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMeasure {
    pub density: Option<CdhDensity>,
    pub atoms: Vec<(f64, f64)>,
}

/// Transition measure of the continuous dual Hahn process from x at time s to time t.
pub fn cdh_transition_measure(s: f64, t: f64, x: f64, c: f64) -> Result<TransitionMeasure> {
    check_order(s, t, c, false)?;
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite location {x}")));
    }
    if x >= 0.0 {
        Ok(TransitionMeasure {
            density: Some(CdhDensity { s, t, x, c }),
            atoms: vec![],
        })
    } else if x < -(c - s).powi(2) {
        Ok(TransitionMeasure {
            density: None,
            atoms: vec![(-(c - t).powi(2), 1.0)],
        })
    } else {
        Err(Error::NotImplemented(format!(
            "transition from x = {x} in [-(c-s)^2, 0) needs a mixed orthogonality measure"
        )))
    }
}

/// K_{iu}(e^x) tabulated on a uniform x-grid and on Gauss–Kronrod nodes in u,
/// for fast application of p_t and of the transforms 𝒦 and 𝒦⁻¹ on the grid.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    x0: f64,
    h: f64,
    nx: usize,
    u: Vec<f64>,
    wk: Vec<f64>,
    wg: Vec<f64>,
    k: Vec<f64>,
    t_min: f64,
}

/// Grid values with a per-point error estimate.
#[derive(Debug, Clone)]
pub struct GridValues {
    pub value: Vec<f64>,
    pub err: Vec<f64>,
}

impl SpectralCache {
    /// Tabulates x ∈ [x_lo, x_hi] with `nx` points and orders up to the cutoff
    /// needed for times t ≥ t_min at absolute accuracy `tol`.
    pub fn new(x_lo: f64, x_hi: f64, nx: usize, t_min: f64, tol: f64) -> Result<Self> {
        check_x(x_lo)?;
        check_x(x_hi)?;
        check_t(t_min)?;
        if !(x_lo < x_hi) || nx < 2 {
            return Err(Error::Grid(format!("bad x-grid [{x_lo}, {x_hi}] with {nx} points")));
        }
        let g = kk_envelope(x_lo, x_lo);
        let u_max = Envelope::Damped { g, p: 1.0 }.cutoff(t_min, 0.5 * tol);
        if u_max > U_MAX {
            return Err(Error::domain(format!("t_min = {t_min} needs orders beyond {U_MAX}")));
        }
        let omega = 2.0 * (x_lo.abs().max(x_hi.abs()) + LN_2 + (1.0 + u_max).ln()) + 1.0;
        let width = (4.0 / omega).min(1.0);
        let panels = (u_max / width).ceil() as usize;
        let mut u = Vec::with_capacity(15 * panels);
        let mut wk = Vec::with_capacity(15 * panels);
        let mut wg = Vec::with_capacity(15 * panels);
        for p in 0..panels {
            let a = u_max * p as f64 / panels as f64;
            let b = u_max * (p + 1) as f64 / panels as f64;
            let (x, k, g) = gk15_rule(a, b);
            for i in 0..15 {
                let m = crate::specfun::mu_density(x[i]);
                u.push(x[i]);
                wk.push(k[i] * m);
                wg.push(g[i] * m);
            }
        }
        let h = (x_hi - x_lo) / (nx - 1) as f64;
        let orders: Vec<KOrder> = u.iter().map(|&v| KOrder::new(v)).collect();
        let nu = u.len();
        let mut k = vec![0.0; nx * nu];
        k.par_chunks_mut(nu).enumerate().for_each(|(i, row)| {
            let z = (x_lo + h * i as f64).exp();
            for (r, o) in row.iter_mut().zip(&orders) {
                *r = o.eval(z);
            }
        });
        Ok(SpectralCache {
            x0: x_lo,
            h,
            nx,
            u,
            wk,
            wg,
            k,
            t_min,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn u_nodes(&self) -> &[f64] {
        &self.u
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.h * i as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Grid version of 𝒦: g(u_j) = h Σ_i K_{iu_j}(e^{x_i}) v_i.
    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nx);
        let nu = self.u.len();
        let mut g = vec![0.0; nu];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.k[i * nu..(i + 1) * nu];
            for (gj, kij) in g.iter_mut().zip(row) {
                *gj += kij * vi;
            }
        }
        g.iter_mut().for_each(|x| *x *= self.h);
        g
    }

    /// ∫ e^{−tu²} K_{iu}(e^{x_i}) g(u) μ(du) on the grid, with the Kronrod–Gauss
    /// difference as error estimate.
    pub fn synthesize(&self, t: f64, g: &[f64]) -> Result<GridValues> {
        if t < self.t_min {
            return Err(Error::domain(format!("t = {t} below the cache floor {}", self.t_min)));
        }
        let nu = self.u.len();
        assert_eq!(g.len(), nu);
        let ck: Vec<f64> = (0..nu).map(|j| (-t * self.u[j] * self.u[j]).exp() * self.wk[j] * g[j]).collect();
        let cg: Vec<f64> = (0..nu).map(|j| (-t * self.u[j] * self.u[j]).exp() * self.wg[j] * g[j]).collect();
        let (value, err) = (0..self.nx)
            .into_par_iter()
            .map(|i| {
                let row = &self.k[i * nu..(i + 1) * nu];
                let (mut a, mut b) = (0.0, 0.0);
                for j in 0..nu {
                    a += row[j] * ck[j];
                    b += row[j] * cg[j];
                }
                (a, (a - b).abs())
            })
            .unzip();
        Ok(GridValues { value, err })
    }

    /// (P_t v)(x_i) = Σ_k p_t(x_i, x_k) v_k h.
    pub fn apply(&self, t: f64, v: &[f64]) -> Result<GridValues> {
        self.synthesize(t, &self.transform(v))
    }

    /// Double trapezoid sum h² Σ_{i,k} v_i p_t(x_i, x_k) w_k with a Kronrod–Gauss error estimate.
    pub fn bilinear(&self, t: f64, v: &[f64], w: &[f64]) -> Result<(f64, f64)> {
        if t < self.t_min {
            return Err(Error::domain(format!("t = {t} below the cache floor {}", self.t_min)));
        }
        let (gv, gw) = (self.transform(v), self.transform(w));
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..self.u.len() {
            let e = (-t * self.u[j] * self.u[j]).exp() * gv[j] * gw[j];
            a += e * self.wk[j];
            b += e * self.wg[j];
        }
        Ok((a, (a - b).abs()))
    }

    /// Matrix p_t(x_i, x_k), row-major.
    pub fn kernel_matrix(&self, t: f64) -> Result<Vec<f64>> {
        if t < self.t_min {
            return Err(Error::domain(format!("t = {t} below the cache floor {}", self.t_min)));
        }
        let nu = self.u.len();
        let w: Vec<f64> = (0..nu).map(|j| (-t * self.u[j] * self.u[j]).exp() * self.wk[j]).collect();
        let n = self.nx;
        let mut m = vec![0.0; n * n];
        // upper triangle, then mirror
        m.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            let ri = &self.k[i * nu..(i + 1) * nu];
            let wi: Vec<f64> = ri.iter().zip(&w).map(|(a, b)| a * b).collect();
            for (kk, o) in out.iter_mut().enumerate().skip(i) {
                *o = dot(&wi, &self.k[kk * nu..(kk + 1) * nu]);
            }
        });
        for i in 0..n {
            for kk in 0..i {
                m[i * n + kk] = m[kk * n + i];
            }
        }
        Ok(m)
    }

    /// Pointwise p_t(x_i, x_k) from the cache.
    pub fn kernel(&self, t: f64, i: usize, k: usize) -> f64 {
        let nu = self.u.len();
        let ri = &self.k[i * nu..(i + 1) * nu];
        let rk = &self.k[k * nu..(k + 1) * nu];
        (0..nu)
            .map(|j| (-t * self.u[j] * self.u[j]).exp() * self.wk[j] * ri[j] * rk[j])
            .sum()
    }
}

/// Dot product with a fixed eight-lane summation order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}
