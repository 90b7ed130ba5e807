//! Scalar special functions: complex log-gamma, gamma moduli, Pochhammer
//! symbols, the Bessel functions K_{iu} and I_λ, and the spectral weight μ.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexScalar = Complex64;

/// Smallest argument accepted by [`bessel_k_imag`].
pub const Z_MIN: f64 = 1e-300;
/// Largest argument accepted by [`bessel_k_imag`]; beyond it K underflows.
pub const Z_MAX: f64 = 700.0;
/// Largest order accepted by [`bessel_k_imag`].
pub const U_MAX: f64 = 60.0;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const POLE_DIST: f64 = 1e-12;

// B_{2k} / (2k (2k-1)), k = 1..8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

fn check_finite(z: Complex64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("non-finite argument {z}")))
    }
}

fn check_pole(z: Complex64) -> Result<()> {
    let n = z.re.round();
    if n <= 0.0 && (z.re - n).hypot(z.im) < POLE_DIST {
        Err(Error::Pole { re: z.re, im: z.im })
    } else {
        Ok(())
    }
}

fn stirling(z: Complex64) -> Complex64 {
    let r = z.inv();
    let r2 = r * r;
    let mut series = Complex64::new(STIRLING[7], 0.0);
    for &c in STIRLING[..7].iter().rev() {
        series = series * r2 + c;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series * r
}

/// Principal branch of log Γ(z), no argument checks.
pub(crate) fn ln_gamma_c(z: Complex64) -> Complex64 {
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.re < 0.5 || w.norm_sqr() < 100.0 {
        shift += w.ln();
        w += 1.0;
    }
    stirling(w) - shift
}

/// sin(πx) with exact reduction of the argument.
fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let s = (PI * (x - n)).sin();
    if (n as i64).rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

/// ln|sin(πz)|.
fn ln_abs_sin_pi(z: Complex64) -> f64 {
    let a = PI * z.im.abs();
    let s = sin_pi(z.re);
    let e = (-2.0 * a).exp();
    let d = -(-2.0 * a).exp_m1();
    a - LN_2 + 0.5 * (d * d + 4.0 * e * s * s).ln()
}

/// ln|Γ(z)| without argument checks.
pub(crate) fn ln_gamma_abs(z: Complex64) -> f64 {
    if z.re < 0.5 {
        return LN_PI - ln_abs_sin_pi(z) - ln_gamma_abs(Complex64::new(1.0 - z.re, -z.im));
    }
    let y2 = z.im * z.im;
    let mut x = z.re;
    let mut prod = 1.0;
    while x * x + y2 < 100.0 {
        prod *= x * x + y2;
        x += 1.0;
    }
    stirling(Complex64::new(x, z.im)).re - 0.5 * prod.ln()
}

/// Principal branch of log Γ(z).
pub fn log_gamma(z: ComplexScalar) -> Result<ComplexScalar> {
    check_finite(z)?;
    check_pole(z)?;
    Ok(ln_gamma_c(z))
}

/// |Γ(z)|²; on the imaginary axis the exact form π/(u sinh πu) is used.
pub fn gamma_abs2(z: ComplexScalar) -> Result<f64> {
    check_finite(z)?;
    check_pole(z)?;
    if z.re == 0.0 {
        return Ok(gamma_abs2_imag(z.im));
    }
    Ok((2.0 * ln_gamma_abs(z)).exp())
}

/// |Γ(iu)|² = π / (u sinh πu).
pub fn gamma_abs2_imag(u: f64) -> f64 {
    let u = u.abs();
    PI / (u * (PI * u).sinh())
}

/// ln ∏|Γ(z_j)|².
pub fn ln_gamma_prod_abs2(zs: &[ComplexScalar]) -> Result<f64> {
    let mut acc = 0.0;
    for &z in zs {
        check_finite(z)?;
        check_pole(z)?;
        acc += 2.0 * ln_gamma_abs(z);
    }
    Ok(acc)
}

/// ∏|Γ(z_j)|², accumulated in log space.
pub fn gamma_prod_abs2(zs: &[ComplexScalar]) -> Result<f64> {
    ln_gamma_prod_abs2(zs).map(f64::exp)
}

/// (ln|Γ(x)|, sign Γ(x)) for real x.
pub fn ln_gamma_real(x: f64) -> Result<(f64, f64)> {
    let z = Complex64::new(x, 0.0);
    check_finite(z)?;
    check_pole(z)?;
    let sign = if x > 0.0 || (x.floor() as i64).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    Ok((ln_gamma_abs(z), sign))
}

/// Γ(x) for real x.
pub fn gamma_real(x: f64) -> Result<f64> {
    let (l, s) = ln_gamma_real(x)?;
    Ok(s * l.exp())
}

/// 1/Γ(x) for real x, zero at the poles.
pub fn rgamma_real(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    let z = Complex64::new(x, 0.0);
    let sign = if x > 0.0 || (x.floor() as i64).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    sign * (-ln_gamma_abs(z)).exp()
}

/// Rising factorial (a)_n = a (a+1) ... (a+n-1).
pub fn pochhammer(a: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |p, k| p * (a + k as f64))
}

/// Spectral weight μ(du)/du = (2/π²) u sinh(πu).
pub fn mu_density(u: f64) -> f64 {
    2.0 / (PI * PI) * u * (PI * u).sinh()
}

/// Modified Bessel function of the first kind I_λ(r) by its ascending series.
pub fn bessel_i(lambda: f64, r: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda <= 50.0) || !(r > 0.0 && r <= 100.0) {
        return Err(Error::domain(format!("bessel_i({lambda}, {r})")));
    }
    let q = 0.25 * r * r;
    let mut term = (lambda * (0.5 * r).ln() - ln_gamma_abs(Complex64::new(lambda + 1.0, 0.0))).exp();
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + lambda));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    Ok(sum)
}

/// K_{iu}(z) = ∫₀^∞ e^{−z cosh w} cos(uw) dw for z ∈ [Z_MIN, Z_MAX], |u| ≤ U_MAX.
///
/// Accuracy is relative to the envelope of the function, so it stays relative
/// even where K_{iu} is exponentially small, and absolute near its zeros.
pub fn bessel_k_imag(u: f64, z: f64) -> Result<f64> {
    if !(u.is_finite() && z.is_finite()) || !(Z_MIN..=Z_MAX).contains(&z) || u.abs() > U_MAX {
        return Err(Error::domain(format!("bessel_k_imag(u={u}, z={z})")));
    }
    Ok(k_imag(u.abs(), z))
}

/// K_{iu}(z) for u ≥ 0; returns 0 above `Z_MAX` where the value underflows.
pub(crate) fn k_imag(u: f64, z: f64) -> f64 {
    KOrder::new(u).eval(z)
}

/// Smallest order for which the ascending series is used.
const SERIES_U_MIN: f64 = 1e-3;

/// K_{iu}(·) at a fixed order, with the order-dependent constants hoisted so
/// that sweeping z is cheap.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KOrder {
    u: f64,
    // |Γ(1+iu)|/u and arg Γ(1+iu)
    amp: f64,
    arg: f64,
}

impl KOrder {
    pub(crate) fn new(u: f64) -> Self {
        let u = u.abs();
        let (amp, arg) = if u >= SERIES_U_MIN {
            let lg = ln_gamma_c(Complex64::new(1.0, u));
            (lg.re.exp() / u, lg.im)
        } else {
            (0.0, 0.0)
        };
        KOrder { u, amp, arg }
    }

    pub(crate) fn eval(&self, z: f64) -> f64 {
        if z > Z_MAX {
            0.0
        } else if z <= 2.0 && self.u >= SERIES_U_MIN {
            self.series(z)
        } else {
            k_contour(self.u, z)
        }
    }

    /// K_{iu}(z) = Re[Γ(iu) (z/2)^{−iu} ₀F₁(; 1−iu; z²/4)], with Γ(iu) = −iΓ(1+iu)/u.
    fn series(&self, z: f64) -> f64 {
        let u = self.u;
        let q = 0.25 * z * z;
        let b = Complex64::new(1.0, -u);
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        let mut k = 0.0;
        while q > 0.0 {
            term = term * q / ((k + 1.0) * (b + k));
            sum += term;
            k += 1.0;
            if term.norm_sqr() < 1e-36 * sum.norm_sqr() {
                break;
            }
        }
        let ph = self.arg - u * (0.5 * z).ln();
        // Re[−i·amp·e^{i·ph}·sum]
        let (s, c) = ph.sin_cos();
        self.amp * (s * sum.re + c * sum.im)
    }
}

/// Trapezoid rule on the shifted contour w + iθ, where
/// K_{iu}(z) = Re ∫₀^∞ exp(−z cosh(w+iθ) + iu(w+iθ)) dw.
/// θ sits at the saddle point (or just below π/2) so the integrand carries no
/// cancellation beyond a bounded factor.
fn k_contour(u: f64, z: f64) -> f64 {
    let theta = if u > 0.0 {
        (u / z).min(1.0).asin().min((FRAC_PI_2 - 6.0 / u).max(0.0))
    } else {
        0.0
    };
    let (st, ct) = theta.sin_cos();
    let a = z * ct;
    let b = z * st;
    let w_max = (1.0 + 42.0 / a).acosh();
    let (ln_a, ln_b) = (a.ln(), b.ln());
    let node = |w: f64| -> (f64, f64) {
        if w > 40.0 {
            // cosh and sinh agree with e^w/2 to double precision here
            let mag = (-(ln_a + w - LN_2).exp()).exp();
            let ph = if b > 0.0 { (ln_b + w - LN_2).exp() } else { 0.0 };
            return (mag * (u * w - ph).cos(), mag);
        }
        let em1 = w.exp_m1();
        let e = 1.0 + em1;
        let cm1 = em1 * em1 / (2.0 * e);
        let sh = em1 * (em1 + 2.0) / (2.0 * e);
        let mag = (-a * cm1).exp();
        (mag * (u * w - b * sh).cos(), mag)
    };
    let mut h = (w_max / 8.0).min(0.5);
    let mut n = (w_max / h).ceil() as usize;
    let (mut re, mut ab) = (0.5, 0.5);
    for k in 1..=n {
        let (r, m) = node(k as f64 * h);
        re += r;
        ab += m;
    }
    let mut t_old = h * re;
    let h_cap = 1.0 / (1.0 + u);
    for it in 0..20 {
        for k in (1..2 * n).step_by(2) {
            let (r, m) = node(k as f64 * h * 0.5);
            re += r;
            ab += m;
        }
        h *= 0.5;
        n *= 2;
        let t_new = h * re;
        let scale = h * ab;
        let done = (t_new - t_old).abs() <= 1e-9 * scale;
        t_old = t_new;
        if done && it >= 1 && h <= h_cap {
            break;
        }
    }
    (-a - u * theta).exp() * t_old
}
