//! `openkpz`: evaluate kernels and constants, run the identity suite, export sampled paths.
//!
//! Exit codes: 0 success, 1 failed identity, 2 domain or usage error, 3 non-convergence.
//! Errors go to stderr as one JSON line; data goes to stdout or `--output`.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use openkpz::kernels::{
    cdh_transition_density, hartman_watson_theta, heat_kernel_p_quad, ThetaMethod,
};
use openkpz::measures::{
    entrance_law_p, laplace_C_closed, normalizing_C, normalizing_C_quad, normalizing_K, phi_density, CMethod, Params,
};
use openkpz::processes::{
    sample_H_bld, sample_H_kpz_with, sample_T_cdh, sample_Y, KpzOptions, PathSample, SamplerConfig,
};
use openkpz::verify::{compute_psi, run_suite, IdentityReport, Profile, PsiRoute, CATALOG};
use serde_json::{json, Value};

use config::{parse_list, FileConfig};

/// A failed run: exit code plus a one-line message.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage".into(),
            message: message.into(),
        }
    }
}

impl From<openkpz::Error> for Failure {
    fn from(e: openkpz::Error) -> Self {
        let code = if matches!(e, openkpz::Error::NonConvergence { .. }) { 3 } else { 2 };
        Failure {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "openkpz", version, about = "Open KPZ stationary measures: kernels, constants, identities and samplers")]
struct Cli {
    /// File of `key=value` lines supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evaluate a kernel, constant or law at one point.
    Eval(EvalArgs),
    /// Run the identity suite.
    Verify(VerifyArgs),
    /// Sample paths and write them in long CSV or JSON.
    Sample(SampleArgs),
    /// Time a fixed set of evaluations.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Target {
    KernelP,
    Theta,
    QDensity,
    #[value(name = "C")]
    C,
    #[value(name = "K")]
    K,
    #[value(name = "laplace-C")]
    LaplaceC,
    Phi,
    Entrance,
    Psi,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Process {
    Y,
    Cdh,
    Kpz,
    KpzBld,
}

/// Parameter flags shared by `eval` and `sample`.
#[derive(Args, Debug, Default)]
struct ParamArgs {
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    target: Target,
    #[command(flatten)]
    params: ParamArgs,
    /// Time, or a comma list of times for psi.
    #[arg(long, allow_negative_numbers = true)]
    t: Option<String>,
    /// Dual time, or a comma list of exponents for psi.
    #[arg(long, allow_negative_numbers = true)]
    s: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// spectral | direct2d for C; spectral | oscillatory for theta.
    #[arg(long)]
    method: Option<String>,
    /// cdh_quadrature | y_quadrature | y_montecarlo for psi.
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run the whole catalog (the default when no ids are given).
    #[arg(long)]
    all: bool,
    /// Comma-separated identity ids.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    /// fast | thorough
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    process: Process,
    #[command(flatten)]
    params: ParamArgs,
    /// Comma list of sampling times (dual times for cdh).
    #[arg(long, allow_negative_numbers = true)]
    times: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    tail_mass_tol: Option<f64>,
    /// Allow min(a, c) ≤ −2 for kpz, where the representation is conjectural.
    #[arg(long)]
    allow_unproven: bool,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Paths for the sampler timings.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(&Failure::usage(first));
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => fail(&f),
    }
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("{}", json!({"error": f.kind, "message": f.message, "exit_code": f.code}));
    ExitCode::from(f.code)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.cmd {
        Cmd::Eval(a) => cmd_eval(a, &file),
        Cmd::Verify(a) => cmd_verify(a, &file),
        Cmd::Sample(a) => cmd_sample(a, &file),
        Cmd::Bench(a) => cmd_bench(a, &file),
    }
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure {
        code: 2,
        kind: "io".into(),
        message: e.to_string(),
    };
    match output {
        Some(p) => std::fs::write(p, text).map_err(io),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io)?;
            out.flush().map_err(io)
        }
    }
}

fn params(p: &ParamArgs, file: &FileConfig) -> Result<Params, Failure> {
    let a = file.require(p.a, "a")?;
    let c = file.require(p.c, "c")?;
    let tau = file.get(p.tau, "tau", 1.0)?;
    Ok(Params::new(a, c, tau)?)
}

fn scalar(list: Option<String>, key: &str, file: &FileConfig) -> Result<f64, Failure> {
    let s: String = file.require(list, key)?;
    match parse_list(&s, key)?.as_slice() {
        [x] => Ok(*x),
        _ => Err(Failure::usage(format!("--{key} takes one number here"))),
    }
}

fn cmd_eval(e: EvalArgs, file: &FileConfig) -> Result<u8, Failure> {
    let tol = file.get(e.tol, "tol", 1e-10)?;
    let format = file.get_format(e.format)?;
    let (value, err, extra): (f64, Option<f64>, Value) = match e.target {
        Target::KernelP => {
            let t = scalar(e.t, "t", file)?;
            let x = file.require(e.x, "x")?;
            let y = file.require(e.y, "y")?;
            let r = heat_kernel_p_quad(t, x, y, tol)?.require("heat kernel")?;
            (r.value, Some(r.err_est), json!({"t": t, "x": x, "y": y}))
        }
        Target::Theta => {
            let r = file.require(e.r, "r")?;
            let t = scalar(e.t, "t", file)?;
            let method = match file.get(e.method, "method", "spectral".to_string())?.as_str() {
                "spectral" => ThetaMethod::Spectral,
                "oscillatory" => ThetaMethod::Oscillatory,
                m => return Err(Failure::usage(format!("unknown theta method {m}"))),
            };
            (hartman_watson_theta(r, t, method)?, None, json!({"r": r, "t": t}))
        }
        Target::QDensity => {
            let s = scalar(e.s, "s", file)?;
            let t = scalar(e.t, "t", file)?;
            let u = file.require(e.u, "u")?;
            let v = file.require(e.v, "v")?;
            let c = file.require(e.params.c, "c")?;
            (cdh_transition_density(s, t, u, v, c)?, None, json!({"s": s, "t": t, "u": u, "v": v, "c": c}))
        }
        Target::C => {
            let p = params(&e.params, file)?;
            let method = match file.get(e.method, "method", "spectral".to_string())?.as_str() {
                "spectral" => CMethod::Spectral,
                "direct2d" => CMethod::Direct2d,
                m => return Err(Failure::usage(format!("unknown C method {m}"))),
            };
            let r = normalizing_C_quad(p, method)?;
            (r.value, Some(r.err_est), json!(p))
        }
        Target::K => {
            let p = params(&e.params, file)?;
            (normalizing_K(p)?, None, json!(p))
        }
        Target::LaplaceC => {
            let a = file.require(e.params.a, "a")?;
            let c = file.require(e.params.c, "c")?;
            let l = file.require(e.lambda, "lambda")?;
            (laplace_C_closed(a, c, l)?, None, json!({"a": a, "c": c, "lambda": l}))
        }
        Target::Phi => {
            let p = params(&e.params, file)?;
            let s = scalar(e.s, "s", file)?;
            let u = file.require(e.u, "u")?;
            (phi_density(s, u, p)?, None, json!({"params": p, "s": s, "u": u}))
        }
        Target::Entrance => {
            let p = params(&e.params, file)?;
            let s = scalar(e.s, "s", file)?;
            let x = file.require(e.x, "x")?;
            let law = entrance_law_p(s, p)?;
            (law.density(x), None, json!({"params": p, "s": s, "x": x, "atoms": law.atoms}))
        }
        Target::Psi => {
            let p = params(&e.params, file)?;
            let s = parse_list(&file.require(e.s, "s")?, "s")?;
            let t = parse_list(&file.require(e.t, "t")?, "t")?;
            let route = match file.get(e.route, "route", "y_quadrature".to_string())?.as_str() {
                "cdh_quadrature" => PsiRoute::CdhQuadrature,
                "y_quadrature" => PsiRoute::YQuadrature,
                "y_montecarlo" => PsiRoute::YMontecarlo {
                    n_paths: file.get(e.n, "n", 100_000)?,
                    seed: file.get(e.seed, "seed", 0)?,
                },
                r => return Err(Failure::usage(format!("unknown psi route {r}"))),
            };
            let v = compute_psi(&s, &t, p, route)?;
            (v.value, Some(v.err), json!({"params": p, "s": s, "t": t, "route": route}))
        }
    };
    let name = e.target.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let text = match format {
        Format::Json => format!("{}\n", json!({"target": name, "value": value, "err": err, "args": extra})),
        Format::Csv => format!(
            "target,value,err\n{name},{value:.16e},{}\n",
            err.map(|e| format!("{e:.16e}")).unwrap_or_default()
        ),
    };
    emit(None, &text)?;
    Ok(0)
}

impl FileConfig {
    fn get_format(&self, flag: Option<Format>) -> Result<Format, Failure> {
        self.get_format_or(flag, Format::Json)
    }

    fn get_format_or(&self, flag: Option<Format>, default: Format) -> Result<Format, Failure> {
        if let Some(f) = flag {
            return Ok(f);
        }
        match self.pick::<String>(None, "format")?.as_deref() {
            None => Ok(default),
            Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            Some(f) => Err(Failure::usage(format!("unknown format {f}"))),
        }
    }
}

fn report_json(r: &IdentityReport) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

fn cmd_verify(v: VerifyArgs, file: &FileConfig) -> Result<u8, Failure> {
    if v.all && !v.ids.is_empty() {
        return Err(Failure::usage("--all and --ids are exclusive"));
    }
    let ids: Vec<String> = if v.ids.is_empty() {
        match file.pick::<String>(None, "ids")? {
            Some(s) if !v.all => s.split(',').map(|x| x.trim().to_string()).collect(),
            _ => CATALOG.iter().map(|s| s.to_string()).collect(),
        }
    } else {
        v.ids.clone()
    };
    if let Some(bad) = ids.iter().find(|i| !CATALOG.contains(&i.as_str())) {
        return Err(Failure {
            code: 2,
            kind: "unknown_identity".into(),
            message: format!("unknown identity {bad}"),
        });
    }
    let profile = match file.get(v.profile, "profile", "fast".to_string())?.as_str() {
        "fast" => Profile::Fast,
        "thorough" => Profile::Thorough,
        p => return Err(Failure::usage(format!("unknown profile {p}"))),
    };
    let format = file.get_format(v.format)?;
    let output = file.pick(v.output, "output")?;
    let reports = run_suite(Some(&ids), profile);
    let passed = reports.iter().filter(|r| r.pass).count();
    let text = match format {
        Format::Json => {
            let suite: Vec<Value> = reports.iter().map(report_json).collect();
            let doc = json!({"suite": suite, "summary": {"total": reports.len(), "passed": passed}});
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap_or_default())
        }
        Format::Csv => {
            let mut s = String::from("id,pass,lhs,rhs,abs_err,rel_err,tol\n");
            for r in &reports {
                s.push_str(&format!(
                    "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    r.id, r.pass, r.lhs, r.rhs, r.abs_err, r.rel_err, r.tol
                ));
            }
            s
        }
    };
    emit(output.as_ref(), &text)?;
    if passed == reports.len() {
        Ok(0)
    } else {
        let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.id.as_str()).collect();
        eprintln!("{}", json!({"error": "identity_failure", "failed": failed, "exit_code": 1}));
        Ok(1)
    }
}

fn write_paths_csv(paths: &[PathSample]) -> String {
    let mut s = String::with_capacity(64 * paths.len() * paths.first().map_or(1, |p| p.times.len()) + 32);
    s.push_str("path_id,time,value,weight\n");
    for (i, p) in paths.iter().enumerate() {
        for (t, v) in p.times.iter().zip(&p.values) {
            s.push_str(&format!("{i},{t:.16e},{v:.16e},{:.16e}\n", p.weight));
        }
    }
    s
}

fn cmd_sample(a: SampleArgs, file: &FileConfig) -> Result<u8, Failure> {
    let times = parse_list(&file.require(a.times, "times")?, "times")?;
    let n = file.get(a.n, "n", 1000)?;
    let config = SamplerConfig {
        grid_points: file.get(a.grid_points, "grid-points", 2048)?,
        tail_mass_tol: file.get(a.tail_mass_tol, "tail-mass-tol", 1e-8)?,
        seed: file.get(a.seed, "seed", 0)?,
        ..Default::default()
    };
    let format = file.get_format_or(a.format, Format::Csv)?;
    let output = file.pick(a.output, "output")?;
    let allow_unproven = a.allow_unproven || file.get(None, "allow-unproven", false)?;
    let mut meta = json!({});
    let paths = match a.process {
        Process::Y => sample_Y(&times, n, &config, params(&a.params, file)?)?,
        Process::Cdh => sample_T_cdh(&times, n, &config, params(&a.params, file)?)?,
        Process::Kpz => {
            let ac = file.require(a.params.a, "a")?;
            let cc = file.require(a.params.c, "c")?;
            let opts = KpzOptions {
                allow_unproven,
                ..Default::default()
            };
            sample_H_kpz_with(&times, n, &config, ac, cc, opts)?
        }
        Process::KpzBld => {
            let w = sample_H_bld(&times, n, &config, file.require(a.params.a, "a")?, file.require(a.params.c, "c")?)?;
            meta = json!({"ess": w.ess, "richardson": w.richardson});
            w.paths
        }
    };
    let text = match format {
        Format::Csv => write_paths_csv(&paths),
        Format::Json => format!("{}\n", json!({"meta": meta, "paths": paths})),
    };
    emit(output.as_ref(), &text)?;
    Ok(0)
}

fn cmd_bench(b: BenchArgs, file: &FileConfig) -> Result<u8, Failure> {
    let n = file.get(b.n, "n", 10_000)?;
    let p = Params::new(1.0, 1.0, 1.0)?;
    let mut rows = Vec::new();
    let mut time = |name: &str, f: &mut dyn FnMut() -> Result<f64, Failure>| -> Result<(), Failure> {
        let t0 = Instant::now();
        let v = f()?;
        rows.push(json!({"name": name, "seconds": t0.elapsed().as_secs_f64(), "value": v}));
        Ok(())
    };
    time("kernel_p", &mut || Ok(heat_kernel_p_quad(1.0, 0.0, 0.0, 1e-10)?.value))?;
    time("theta", &mut || Ok(hartman_watson_theta(1.0, 1.0, ThetaMethod::Spectral)?))?;
    time("C_spectral", &mut || Ok(normalizing_C(p, CMethod::Spectral)?))?;
    time("C_direct2d", &mut || Ok(normalizing_C(p, CMethod::Direct2d)?))?;
    time("psi_cdh", &mut || Ok(compute_psi(&[0.4], &[0.5], p, PsiRoute::CdhQuadrature)?.value))?;
    time("verify_fast", &mut || Ok(run_suite(None, Profile::Fast).iter().filter(|r| r.pass).count() as f64))?;
    time("sample_y", &mut || Ok(sample_Y(&[0.0, 0.5, 1.0], n, &SamplerConfig::with_seed(1), p)?.len() as f64))?;
    time("sample_kpz", &mut || {
        Ok(sample_H_kpz_with(&[0.0, 0.5, 1.0], n, &SamplerConfig::with_seed(1), 1.0, 1.0, KpzOptions::default())?.len() as f64)
    })?;
    let output = file.pick(b.output, "output")?;
    emit(output.as_ref(), &format!("{}\n", serde_json::to_string_pretty(&json!({"bench": rows})).unwrap_or_default()))?;
    Ok(0)
}
