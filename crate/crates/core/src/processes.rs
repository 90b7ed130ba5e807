//! Monte Carlo samplers for Y, the continuous dual Hahn process, and the open
//! KPZ stationary profile.
#![allow(non_snake_case)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{heat_kernel_p, ln_q, SpectralCache, T_MIN};
use crate::measures::{h_fun, normalizing_C, phi_closed, CMethod, Params, H_fun};
use crate::quad::{integrate_semi_infinite, TailPolicy};

/// How the state-space window of a sampler is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    Auto,
    Fixed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub grid_points: usize,
    pub tail_mass_tol: f64,
    pub range_policy: RangePolicy,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            grid_points: 2048,
            tail_mass_tol: 1e-8,
            range_policy: RangePolicy::Auto,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points < 64 {
            return Err(Error::Grid(format!("grid_points = {} is below 64", self.grid_points)));
        }
        if !(self.tail_mass_tol > 0.0 && self.tail_mass_tol < 1.0) {
            return Err(Error::domain(format!("tail_mass_tol = {} not in (0, 1)", self.tail_mass_tol)));
        }
        Ok(())
    }
}

/// One sampled trajectory at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub weight: f64,
    pub seed: u64,
    pub stream: u64,
}

// random-stream components
const C_Y: u64 = 0;
const C_B: u64 = 1;
const C_BLD: u64 = 2;
const C_BLD_B: u64 = 3;
const C_CDH: u64 = 4;

/// Generator for (seed, path, step, component); independent of scheduling.
fn rng_for(seed: u64, path: u64, step: u64, component: u64) -> ChaCha8Rng {
    let mut key = seed ^ component.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    key ^= key >> 31;
    let mut r = ChaCha8Rng::seed_from_u64(key);
    r.set_stream(path);
    r
}

fn check_times(times: &[f64], lo: f64, hi: f64, what: &str) -> Result<()> {
    if times.is_empty() {
        return Err(Error::domain(format!("{what}: no times given")));
    }
    for w in times.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::domain(format!("{what}: times must be strictly increasing")));
        }
    }
    if !(times[0] >= lo && times[times.len() - 1] <= hi) {
        return Err(Error::domain(format!("{what}: times must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Piecewise-linear density on a uniform grid, inverted through its
/// piecewise-quadratic CDF.
#[derive(Debug, Clone)]
struct PwLinear {
    x0: f64,
    h: f64,
    dens: Vec<f64>,
    cum: Vec<f64>,
}

impl PwLinear {
    fn new(x0: f64, h: f64, dens: Vec<f64>) -> Result<Self> {
        let dens: Vec<f64> = dens.into_iter().map(|d| if d.is_finite() { d.max(0.0) } else { 0.0 }).collect();
        let cum = cumulative(&dens, h);
        if !(cum[cum.len() - 1] > 0.0) {
            return Err(Error::Grid("tabulated density has no mass".into()));
        }
        Ok(PwLinear { x0, h, dens, cum })
    }

    fn sample(&self, u: f64) -> f64 {
        sample_row(self.x0, self.h, &self.dens, &self.cum, u)
    }
}

/// cum[k] = mass of cells 0..k (cell k spans [x_k, x_{k+1}]); cum[0] = 0.
fn cumulative(dens: &[f64], h: f64) -> Vec<f64> {
    let mut cum = Vec::with_capacity(dens.len());
    let mut s = 0.0;
    cum.push(0.0);
    for w in dens.windows(2) {
        s += 0.5 * h * (w[0] + w[1]);
        cum.push(s);
    }
    debug_assert!(cum.windows(2).all(|w| w[0] <= w[1]));
    cum
}

fn sample_row(x0: f64, h: f64, dens: &[f64], cum: &[f64], u: f64) -> f64 {
    let total = cum[cum.len() - 1];
    let r = u * total;
    // first k with cum[k+1] > r
    let k = cum.partition_point(|&c| c <= r).clamp(1, cum.len() - 1) - 1;
    let (d0, d1) = (dens[k], dens[k + 1]);
    let rem = (r - cum[k]).max(0.0);
    let disc = (d0 * d0 + 2.0 * (d1 - d0) * rem / h).max(0.0);
    let den = d0 + disc.sqrt();
    let s = if den > 0.0 { (2.0 * rem / den).min(h) } else { 0.5 * h };
    x0 + h * k as f64 + s
}

/// Transition rows on a grid: row i is the (unnormalized) density of the next
/// state given the current state at grid point i.
struct RowTable {
    x0: f64,
    h: f64,
    n: usize,
    dens: Vec<f64>,
    cum: Vec<f64>,
}

impl RowTable {
    fn new(x0: f64, h: f64, n: usize, mut dens: Vec<f64>) -> Result<Self> {
        dens.iter_mut().for_each(|d| *d = if d.is_finite() { d.max(0.0) } else { 0.0 });
        let mut cum = vec![0.0; n * n];
        cum.par_chunks_mut(n).zip(dens.par_chunks(n)).for_each(|(c, d)| {
            let v = cumulative(d, h);
            c.copy_from_slice(&v);
        });
        for i in 0..n {
            if !(cum[i * n + n - 1] > 0.0) {
                return Err(Error::Grid(format!("transition row {i} has no mass")));
            }
        }
        Ok(RowTable { x0, h, n, dens, cum })
    }

    /// Next state from a continuous current state, mixing the two nearest rows.
    fn sample<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let p = ((x - self.x0) / self.h).clamp(0.0, (self.n - 1) as f64);
        let i = (p.floor() as usize).min(self.n - 2);
        let frac = p - i as f64;
        let row = if rng.random::<f64>() < frac { i + 1 } else { i };
        let u: f64 = rng.random();
        let r = row * self.n..(row + 1) * self.n;
        sample_row(self.x0, self.h, &self.dens[r.clone()], &self.cum[r], u)
    }
}

/// Joint density of (Y_{t_0}, ..., Y_{t_{d+1}}) with t_0 = 0 and t_{d+1} = τ.
pub fn y_joint_density(times: &[f64], xs: &[f64], params: Params) -> Result<f64> {
    params.validate()?;
    if times.len() != xs.len() || times.len() < 2 {
        return Err(Error::Grid(format!("need matching times and points, at least two; got {} and {}", times.len(), xs.len())));
    }
    check_times(times, 0.0, params.tau, "y_joint_density")?;
    if times[0] != 0.0 || times[times.len() - 1] != params.tau {
        return Err(Error::Grid("times must start at 0 and end at tau".into()));
    }
    let n = xs.len();
    let mut f = (params.c * xs[0] + params.a * xs[n - 1]).exp() / normalizing_C(params, CMethod::Spectral)?;
    for k in 1..n {
        f *= heat_kernel_p(times[k] - times[k - 1], xs[k - 1], xs[k], 1e-10)?;
    }
    Ok(f)
}

/// X-process layout shared by the Y sampler.
struct XPlan {
    /// parameters (a', c') of the forward process X, with c' > 0
    a: f64,
    c: f64,
    tau: f64,
    /// X times in increasing order, starting at 0
    xt: Vec<f64>,
    /// for each requested Y time, the index into `xt`
    y_index: Vec<usize>,
}

fn plan_x(times: &[f64], params: Params) -> XPlan {
    let Params { a, c, tau } = params;
    // Y^{(a,c)}_t = X^{(a,c)}_{τ−t}; when c ≤ 0 use Y^{(a,c)}_t = X^{(c,a)}_t instead
    let (xa, xc, reversed) = if c > 0.0 { (a, c, true) } else { (c, a, false) };
    let map = |t: f64| if reversed { tau - t } else { t };
    let mut xt: Vec<f64> = times.iter().map(|&t| map(t)).collect();
    xt.push(0.0);
    xt.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xt.dedup_by(|p, q| (*p - *q).abs() < 1e-12);
    let y_index = times
        .iter()
        .map(|&t| {
            let v = map(t);
            xt.iter().position(|&w| (w - v).abs() < 1e-12).unwrap()
        })
        .collect();
    XPlan {
        a: xa,
        c: xc,
        tau,
        xt,
        y_index,
    }
}

/// Window [lo, hi] carrying all but `tol` of the initial law e^{a'x}H_0(x)/C of X.
fn auto_range(plan: &XPlan, tol: f64) -> Result<(f64, f64)> {
    let p = Params::new(plan.a, plan.c, plan.tau)?;
    let cc = normalizing_C(p, CMethod::Spectral)?;
    let d = |x: f64| -> Result<f64> { Ok((plan.a * x).exp() * H_fun(0.0, x, p)?) };
    let rate = plan.a + plan.c;
    let mut lo = (tol.ln() - 2.0) / rate - 4.0 * plan.tau.sqrt();
    while d(lo)? / rate > 0.1 * tol * cc {
        lo -= 2.0;
        if lo < -600.0 {
            return Err(Error::Range("auto range: lower tail does not decay".into()));
        }
    }
    let mut hi = (40.0 + 2.0 * plan.a.max(plan.c).max(0.0)).ln();
    while d(hi)? * (-hi).exp() > 0.1 * tol * cc {
        hi += 0.25;
        if hi > 6.5 {
            return Err(Error::Range("auto range: upper tail does not decay".into()));
        }
    }
    Ok((lo, hi))
}

/// Samples paths of Y at `times` ⊂ [0, τ] through the Doob transform X and time reversal.
pub fn sample_Y(times: &[f64], n_paths: usize, config: &SamplerConfig, params: Params) -> Result<Vec<PathSample>> {
    sample_y_component(times, n_paths, config, params, C_Y)
}

fn sample_y_component(
    times: &[f64],
    n_paths: usize,
    config: &SamplerConfig,
    params: Params,
    component: u64,
) -> Result<Vec<PathSample>> {
    params.validate()?;
    config.validate()?;
    check_times(times, 0.0, params.tau, "sample_Y")?;
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be positive"));
    }
    let plan = plan_x(times, params);
    let xt = &plan.xt;
    let gaps: Vec<f64> = xt.windows(2).map(|w| w[1] - w[0]).collect();
    let mut t_min = plan.tau;
    for &g in &gaps {
        t_min = t_min.min(g);
    }
    for &u in xt {
        if u < plan.tau {
            t_min = t_min.min(plan.tau - u);
        }
    }
    if t_min < T_MIN {
        return Err(Error::domain(format!("time gaps of {t_min} are below the kernel floor {T_MIN}")));
    }
    let (lo, hi) = match config.range_policy {
        RangePolicy::Fixed(lo, hi) => (lo, hi),
        RangePolicy::Auto => auto_range(&plan, config.tail_mass_tol)?,
    };
    let nx = config.grid_points;
    let h = (hi - lo) / (nx - 1) as f64;
    if let Some(&dmin) = gaps.iter().min_by(|p, q| p.partial_cmp(q).unwrap()) {
        if h > (2.0 * dmin).sqrt() / 4.0 {
            return Err(Error::Grid(format!(
                "grid step {h:.4} too coarse for time step {dmin}; need at most {:.4}",
                (2.0 * dmin).sqrt() / 4.0
            )));
        }
    }
    let cache = SpectralCache::new(lo, hi, nx, t_min, 1e-12)?;
    let xs = cache.xs();
    let h0: Vec<f64> = cache.u_nodes().iter().map(|&u| h_fun(0.0, u, plan.c)).collect::<Result<_>>()?;
    let H = |u: f64| -> Result<Vec<f64>> {
        if u >= plan.tau {
            Ok(xs.iter().map(|x| (plan.c * x).exp()).collect())
        } else {
            Ok(cache.synthesize(plan.tau - u, &h0)?.value)
        }
    };
    let init: Vec<f64> = H(0.0)?.iter().zip(&xs).map(|(v, x)| v * (plan.a * x).exp()).collect();
    let init = PwLinear::new(lo, h, init)?;

    let mut state: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng_for(config.seed, p as u64, 0, component);
            let mut v = Vec::with_capacity(xt.len());
            v.push(init.sample(r.random()));
            v
        })
        .collect();
    for k in 1..xt.len() {
        let m = cache.kernel_matrix(xt[k] - xt[k - 1])?;
        let target = H(xt[k])?;
        let mut dens = m;
        dens.par_chunks_mut(nx).for_each(|row| {
            for (d, w) in row.iter_mut().zip(&target) {
                *d *= w;
            }
        });
        let table = RowTable::new(lo, h, nx, dens)?;
        state.par_iter_mut().enumerate().for_each(|(p, v)| {
            let mut r = rng_for(config.seed, p as u64, k as u64, component);
            let x = table.sample(v[k - 1], &mut r);
            v.push(x);
        });
    }
    Ok(state
        .into_iter()
        .enumerate()
        .map(|(p, v)| PathSample {
            times: times.to_vec(),
            values: plan.y_index.iter().map(|&i| v[i]).collect(),
            weight: 1.0,
            seed: config.seed,
            stream: p as u64,
        })
        .collect())
}

/// Samples Z = √𝕋 of the continuous dual Hahn process at `s_times` ⊂ (−a, c).
/// The initial law at s_0 is e^{−τu²} φ_{s_0}(u) du normalized to mass one,
/// the weighting under which the dual identities are stated.
pub fn sample_T_cdh(s_times: &[f64], n_paths: usize, config: &SamplerConfig, params: Params) -> Result<Vec<PathSample>> {
    params.validate()?;
    config.validate()?;
    let Params { a, c, tau } = params;
    check_times(s_times, f64::NEG_INFINITY, f64::INFINITY, "sample_T_cdh")?;
    if !(s_times[0] > -a && s_times[s_times.len() - 1] < c) {
        return Err(Error::Range(format!("s-times must lie in (-a, c) = ({}, {c})", -a)));
    }
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be positive"));
    }
    let tol = config.tail_mass_tol;
    let span = s_times[s_times.len() - 1] - s_times[0];
    let u0 = (-tol.ln() / tau).sqrt();
    let (lo, hi) = match config.range_policy {
        RangePolicy::Fixed(lo, hi) => (lo.max(0.0), hi),
        RangePolicy::Auto => {
            let mut hi = u0 + 8.0 + 20.0 * span;
            // a path starting at the edge of the initial law must stay inside
            for w in s_times.windows(2) {
                loop {
                    let tail = integrate_semi_infinite(
                        |v| ln_q(w[0], w[1], u0, v, c).exp(),
                        hi,
                        0.1 * tol,
                        TailPolicy::Exponential(1.0),
                    )?
                    .value;
                    if tail < tol {
                        break;
                    }
                    hi += 4.0;
                    if hi > 400.0 {
                        return Err(Error::Range("auto range: transition tail does not decay".into()));
                    }
                }
            }
            (0.0, hi)
        }
    };
    let n = config.grid_points;
    let h = (hi - lo) / (n - 1) as f64;
    if let Some(dmin) = s_times.windows(2).map(|w| w[1] - w[0]).min_by(|p, q| p.partial_cmp(q).unwrap()) {
        if h > 0.5 * dmin {
            return Err(Error::Grid(format!("grid step {h:.4} too coarse for s-step {dmin}")));
        }
    }
    let us: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let s0 = s_times[0];
    let init: Vec<f64> = us
        .iter()
        .map(|&u| if u > 0.0 { (-tau * u * u).exp() * phi_closed(s0, u, params, 1.0).unwrap_or(0.0) } else { 0.0 })
        .collect();
    let init = PwLinear::new(lo, h, init)?;
    let mut state: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng_for(config.seed, p as u64, 0, C_CDH);
            vec![init.sample(r.random())]
        })
        .collect();
    for k in 1..s_times.len() {
        let (s, t) = (s_times[k - 1], s_times[k]);
        let mut dens = vec![0.0; n * n];
        dens.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, d) in row.iter_mut().enumerate() {
                *d = if us[j] > 0.0 { ln_q(s, t, us[i], us[j], c).exp() } else { 0.0 };
            }
        });
        let table = RowTable::new(lo, h, n, dens)?;
        state.par_iter_mut().enumerate().for_each(|(p, v)| {
            let mut r = rng_for(config.seed, p as u64, k as u64, C_CDH);
            let x = table.sample(v[k - 1], &mut r);
            v.push(x);
        });
    }
    Ok(state
        .into_iter()
        .enumerate()
        .map(|(p, values)| PathSample {
            times: s_times.to_vec(),
            values,
            weight: 1.0,
            seed: config.seed,
            stream: p as u64,
        })
        .collect())
}

/// Options for [`sample_H_kpz_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KpzOptions {
    /// Allow min(a, c) ≤ −2, where the representation is only conjectured.
    pub allow_unproven: bool,
    /// Diagnostic: drop the Y part and return only the Brownian component.
    pub freeze_y: bool,
}

/// Open KPZ stationary profile H(t) = B_{t/2} − Y_{t/4} + Y_0 on [0, 1].
pub fn sample_H_kpz(times: &[f64], n_paths: usize, config: &SamplerConfig, a: f64, c: f64) -> Result<Vec<PathSample>> {
    sample_H_kpz_with(times, n_paths, config, a, c, KpzOptions::default())
}

pub fn sample_H_kpz_with(
    times: &[f64],
    n_paths: usize,
    config: &SamplerConfig,
    a: f64,
    c: f64,
    opts: KpzOptions,
) -> Result<Vec<PathSample>> {
    let params = Params::new(a, c, 0.25)?;
    if !opts.allow_unproven && !(a.min(c) > -2.0) {
        return Err(Error::Range(format!("min(a, c) = {} is outside the proven range (> -2)", a.min(c))));
    }
    check_times(times, 0.0, 1.0, "sample_H_kpz")?;
    if times[0] != 0.0 {
        return Err(Error::domain("sample_H_kpz: times must include 0"));
    }
    let y = if opts.freeze_y {
        None
    } else {
        let yt: Vec<f64> = times.iter().map(|t| 0.25 * t).collect();
        Some(sample_y_component(&yt, n_paths, config, params, C_Y)?)
    };
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng_for(config.seed, p as u64, 0, C_B);
            let mut b = 0.0;
            let mut values = Vec::with_capacity(times.len());
            for k in 0..times.len() {
                if k > 0 {
                    let z: f64 = r.sample(StandardNormal);
                    b += z * (0.5 * (times[k] - times[k - 1])).sqrt();
                }
                let yv = y.as_ref().map_or(0.0, |y| y[p].values[0] - y[p].values[k]);
                values.push(if k == 0 { 0.0 } else { b + yv });
            }
            PathSample {
                times: times.to_vec(),
                values,
                weight: 1.0,
                seed: config.seed,
                stream: p as u64,
            }
        })
        .collect())
}

/// Weighted paths from the importance sampler with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedPaths {
    pub paths: Vec<PathSample>,
    /// effective sample size (Σw)²/Σw²
    pub ess: f64,
    /// largest relative change of ∫e^{−2β} between the full and the half-resolution grid
    pub richardson: f64,
}

/// Number of uniform Brownian steps on [0, 1].
pub const BLD_STEPS: usize = 512;

/// H = B'_{t/2} + X with X reweighted from scaled Brownian motion by
/// e^{−aβ₁}(∫₀¹e^{−2β_t}dt)^{−(a+c)/2}, self-normalized.
pub fn sample_H_bld(times: &[f64], n_paths: usize, config: &SamplerConfig, a: f64, c: f64) -> Result<WeightedPaths> {
    if !(a > 0.0 && c > 0.0) {
        return Err(Error::domain(format!("importance sampler needs a, c > 0, got a={a}, c={c}")));
    }
    check_times(times, 0.0, 1.0, "sample_H_bld")?;
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be positive"));
    }
    let mut grid: Vec<f64> = (0..=BLD_STEPS).map(|k| k as f64 / BLD_STEPS as f64).collect();
    grid.extend_from_slice(times);
    grid.sort_by(|p, q| p.partial_cmp(q).unwrap());
    grid.dedup_by(|p, q| (*p - *q).abs() < 1e-14);
    let idx: Vec<usize> = times.iter().map(|&t| grid.iter().position(|&g| (g - t).abs() < 1e-14).unwrap()).collect();
    let coarse: Vec<usize> = (0..=BLD_STEPS / 2)
        .map(|k| grid.iter().position(|&g| (g - 2.0 * k as f64 / BLD_STEPS as f64).abs() < 1e-14).unwrap())
        .collect();
    let kappa = 0.5 * (a + c);
    let raw: Vec<(Vec<f64>, f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng_for(config.seed, p as u64, 0, C_BLD);
            let mut beta = Vec::with_capacity(grid.len());
            beta.push(0.0);
            for w in grid.windows(2) {
                let z: f64 = r.sample(StandardNormal);
                let last = beta[beta.len() - 1];
                beta.push(last + z * (0.5 * (w[1] - w[0])).sqrt());
            }
            let trap = |ix: &mut dyn Iterator<Item = usize>| {
                let pts: Vec<usize> = ix.collect();
                pts.windows(2)
                    .map(|w| 0.5 * (grid[w[1]] - grid[w[0]]) * ((-2.0 * beta[w[0]]).exp() + (-2.0 * beta[w[1]]).exp()))
                    .sum::<f64>()
            };
            let fine = trap(&mut (0..grid.len()));
            let half = trap(&mut coarse.iter().copied());
            let lw = -a * beta[beta.len() - 1] - kappa * fine.ln();
            let mut rb = rng_for(config.seed, p as u64, 0, C_BLD_B);
            let mut b = 0.0;
            let mut values = Vec::with_capacity(times.len());
            for (k, &i) in idx.iter().enumerate() {
                if k > 0 {
                    let z: f64 = rb.sample(StandardNormal);
                    b += z * (0.5 * (times[k] - times[k - 1])).sqrt();
                } else if times[0] > 0.0 {
                    let z: f64 = rb.sample(StandardNormal);
                    b += z * (0.5 * times[0]).sqrt();
                }
                values.push(b + beta[i]);
            }
            (values, lw, ((fine - half) / fine).abs())
        })
        .collect();
    let max_lw = raw.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = raw.iter().map(|r| (r.1 - max_lw).exp()).collect();
    let (s1, s2) = (w.iter().sum::<f64>(), w.iter().map(|x| x * x).sum::<f64>());
    let ess = s1 * s1 / s2;
    if ess < 0.01 * n_paths as f64 {
        return Err(Error::DegenerateWeights { ess, n: n_paths });
    }
    let scale = n_paths as f64 / s1;
    let richardson = raw.iter().map(|r| r.2).fold(0.0, f64::max);
    let paths = raw
        .into_iter()
        .zip(w)
        .enumerate()
        .map(|(p, ((values, _, _), wi))| PathSample {
            times: times.to_vec(),
            values,
            weight: wi * scale,
            seed: config.seed,
            stream: p as u64,
        })
        .collect();
    Ok(WeightedPaths { paths, ess, richardson })
}

/// Small statistics helpers for the law checks.
pub mod stats {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Mean and standard error of a sample.
    pub fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    /// Self-normalized weighted mean with the delta-method standard error.
    pub fn weighted_mean_se(xs: &[f64], ws: &[f64]) -> (f64, f64) {
        let sw: f64 = ws.iter().sum();
        let m = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
        let v = xs.iter().zip(ws).map(|(x, w)| (w * (x - m)).powi(2)).sum::<f64>() / (sw * sw);
        (m, v.sqrt())
    }

    /// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
    pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (n, m) = (a.len(), b.len());
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < n && j < m {
            let x = a[i].min(b[j]);
            while i < n && a[i] <= x {
                i += 1;
            }
            while j < m && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
        }
        let ne = (n * m) as f64 / (n + m) as f64;
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        (d, kolmogorov_q(lambda))
    }

    /// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
    fn kolmogorov_q(lambda: f64) -> f64 {
        if lambda < 0.2 {
            return 1.0;
        }
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }

    /// Pearson χ² of observed counts against expected counts, with its p-value.
    /// Bins with expected count below 5 are merged into their neighbour.
    pub fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, usize, f64) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let (mut ao, mut ae) = (0.0, 0.0);
        for (x, y) in observed.iter().zip(expected) {
            ao += x;
            ae += y;
            if ae >= 5.0 {
                o.push(ao);
                e.push(ae);
                ao = 0.0;
                ae = 0.0;
            }
        }
        if let (Some(lo), Some(le)) = (o.last_mut(), e.last_mut()) {
            *lo += ao;
            *le += ae;
        }
        let stat: f64 = o.iter().zip(&e).map(|(x, y)| (x - y).powi(2) / y).sum();
        let dof = o.len().saturating_sub(1).max(1);
        let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
        (stat, dof, p)
    }
}
