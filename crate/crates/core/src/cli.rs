//! Command-line front end: `design`, `eval`, `sweep`, `convergence`, `lemma1`.
//!
//! Every command writes a `manifest.txt` next to its outputs. Passing that file back
//! with `--config` replays the run; flags given on the command line override values
//! from the file.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::coherence::{coherence_report, Dictionary, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::experiments::{
    convergence_csv, evaluate_projection, records_csv, rho_psnr, run_convergence, validate_grid,
    Axis, ExperimentParams, ExperimentRecord, SweepPlan, XiChoice, PSNR_BITS,
};
use crate::manifest::{RunManifest, DERIVED_PREFIX, RESERVED_KEYS};
use crate::matrix_io::{fmt_f64, read_matrix, write_matrix};
use crate::objective::SreMatrix;
use crate::solver::{
    design_lh, design_lh_etf, design_mt, design_mt_etf, design_randn, random_projection, Method,
    SolverConfig,
};
use crate::synth::{gen_dictionary, gen_signals, gen_sparse_codes, lemma1_check, LEMMA1_CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
    }
}

const MAX_GRID_POINTS: f64 = 1e6;

/// Parses `a:step:b` (inclusive) or a comma list into a strictly increasing grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |tok: &str| {
        tok.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::invalid(format!("bad grid token `{tok}`")))
    };
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("range must look like a:step:b, got `{text}`")));
        }
        let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) {
            return Err(Error::invalid(format!("bad grid token `{}`: step must be positive", parts[1])));
        }
        if b < a {
            return Err(Error::invalid(format!("bad grid token `{}`: end is below start", parts[2])));
        }
        let n = ((b - a) / step).round();
        if n > MAX_GRID_POINTS {
            return Err(Error::invalid(format!("grid `{text}` has too many points")));
        }
        if (a + n * step - b).abs() > 1e-9 * step.max(b.abs()) {
            return Err(Error::invalid(format!(
                "bad grid token `{}`: step does not divide {a}..{b}",
                parts[1]
            )));
        }
        // Snap to 13 significant digits so 0:0.1:1 yields 0.3, not 0.30000000000000004.
        (0..=n as usize)
            .map(|i| format!("{:.12e}", a + i as f64 * step).parse().expect("formatted float"))
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    validate_grid(&values)?;
    Ok(values)
}

/// Grid flag value; keeps the original text for the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    text: String,
    pub values: Vec<f64>,
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let values = if s == "none" { Vec::new() } else { parse_grid(s)? };
        Ok(Grid {
            text: s.to_string(),
            values,
        })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// `A,B` integer pair such as `--synth N,L` or `--random M,N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair(pub usize, pub usize);

impl FromStr for Pair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("expected two positive integers `A,B`, got `{s}`"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || b == 0 {
            return Err(bad());
        }
        Ok(Pair(a, b))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

/// Comma-separated list flag.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let items = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad list item `{tok}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            return Err(Error::invalid("empty list"));
        }
        Ok(List(items))
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "robust-cs", version, about = "Robust compressive-sensing projection design and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Design a projection matrix.
    Design(DesignArgs),
    /// Evaluate a projection matrix on synthetic signals.
    Eval(EvalArgs),
    /// Sweep λ, SNR, M, K or L.
    Sweep(SweepArgs),
    /// Objective traces of the G = I design for several λ.
    Convergence(ConvergenceArgs),
    /// Monte-Carlo check of the projected-noise energy law.
    Lemma1(Lemma1Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design(_) => "design",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Convergence(_) => "convergence",
            Command::Lemma1(_) => "lemma1",
        }
    }
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// key=value file with default flag values (e.g. an earlier manifest).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dictionary CSV (N×L).
    #[arg(long, conflicts_with = "synth")]
    pub dict: Option<PathBuf>,
    /// Generate an N×L Gaussian dictionary instead.
    #[arg(long)]
    pub synth: Option<Pair>,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value = "mt")]
    pub method: Method,
    #[arg(long, default_value = "0.1")]
    pub lambda: f64,
    /// `welch` or a number in [0, 1).
    #[arg(long, default_value = "welch")]
    pub xi: XiChoice,
    /// Outer iterations of the relaxed-ETF designs.
    #[arg(long, default_value = "50")]
    pub iter: usize,
    #[arg(long, default_value = "1")]
    pub seed: u64,
    /// SRE matrix CSV (N×P), required by lh and lh-etf.
    #[arg(long)]
    pub sre: Option<PathBuf>,
    #[arg(long, default_value = "500")]
    pub max_cg_iter: usize,
    #[arg(long, default_value = "1e-6")]
    pub grad_tol: f64,
    #[arg(long, default_value = "0.2")]
    pub mu_bar: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    /// Method tag written into the records.
    #[arg(long, default_value = "mt")]
    pub method: Method,
    #[arg(long, default_value = "15")]
    pub snr: f64,
    /// Signals per split.
    #[arg(long, default_value = "1000")]
    pub p: usize,
    #[arg(long, default_value = "4")]
    pub k: usize,
    #[arg(long, alias = "seed", default_value = "1")]
    pub seeds: List<u64>,
    #[arg(long, default_value = "0.2")]
    pub mu_bar: f64,
    /// Output directory; records go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub axis: Axis,
    /// `a:step:b` or a comma list.
    #[arg(long)]
    pub grid: Grid,
    /// Defaults to mt,mt-etf for λ sweeps and all five methods otherwise.
    #[arg(long)]
    pub methods: Option<List<Method>>,
    #[arg(long, alias = "seed", default_value = "1")]
    pub seeds: List<u64>,
    #[arg(long, default_value = "20")]
    pub m: usize,
    #[arg(long, default_value = "60")]
    pub n: usize,
    #[arg(long, default_value = "80")]
    pub l: usize,
    #[arg(long, default_value = "4")]
    pub k: usize,
    #[arg(long, default_value = "1000")]
    pub p: usize,
    #[arg(long, default_value = "15")]
    pub snr: f64,
    #[arg(long, default_value = "0.1")]
    pub lambda: f64,
    /// λ candidates (grid syntax, or `none`). Defaults to 0.1:0.1:1 for SNR sweeps.
    #[arg(long)]
    pub lambda_search: Option<Grid>,
    #[arg(long, default_value = "welch")]
    pub xi: XiChoice,
    #[arg(long, default_value = "50")]
    pub iter: usize,
    #[arg(long, default_value = "0.2")]
    pub mu_bar: f64,
    #[arg(long, default_value = "500")]
    pub max_cg_iter: usize,
    #[arg(long, default_value = "1e-6")]
    pub grad_tol: f64,
    /// Record design wall time (outputs then differ between runs).
    #[arg(long, num_args = 0..=1, default_value = "false", default_missing_value = "true")]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "20")]
    pub m: usize,
    #[arg(long, default_value = "60")]
    pub n: usize,
    #[arg(long, default_value = "100")]
    pub l: usize,
    #[arg(long, default_value = "0.1,0.5,1")]
    pub lambdas: Grid,
    #[arg(long, default_value = "1")]
    pub seed: u64,
    #[arg(long, default_value = "500")]
    pub max_cg_iter: usize,
    #[arg(long, default_value = "1e-6")]
    pub grad_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct Lemma1Args {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Projection matrix CSV.
    #[arg(long, conflicts_with = "random")]
    pub phi: Option<PathBuf>,
    /// Draw an M×N Gaussian projection instead.
    #[arg(long)]
    pub random: Option<Pair>,
    #[arg(long, default_value = "1")]
    pub sigma: f64,
    #[arg(long, default_value = "100000")]
    pub p: usize,
    #[arg(long, default_value = "1")]
    pub seed: u64,
    /// Also write lemma1.txt, lemma1.csv and the manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn manifest(command: &str, params: Vec<(&str, Option<String>)>) -> Result<RunManifest> {
    let mut m = RunManifest::new(command);
    for (k, v) in params {
        if let Some(v) = v {
            m.set(k, v)?;
        }
    }
    Ok(m)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn solver_config(max_cg_iter: usize, grad_tol: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        max_cg_iterations: max_cg_iter,
        grad_tol,
        rng_seed: seed,
        ..SolverConfig::default()
    }
}

fn cmd_design(a: &DesignArgs) -> Result<i32> {
    let psi = match (&a.dict, a.synth) {
        (Some(p), None) => Dictionary::new(read_matrix(p)?)?,
        (None, Some(Pair(n, l))) => gen_dictionary(n, l, a.seed)?,
        _ => return Err(Error::invalid("exactly one of --dict or --synth is required")),
    };
    let (n, l) = (psi.signal_dim(), psi.atoms());
    if a.m == 0 || a.m > n {
        return Err(Error::invalid(format!("--m must lie in 1..={n}, got {}", a.m)));
    }
    let sre = match (a.method.needs_sre(), &a.sre) {
        (true, Some(p)) => Some(SreMatrix::new(read_matrix(p)?)?),
        (true, None) => return Err(Error::invalid(format!("--sre is required for method {}", a.method))),
        (false, _) => None,
    };
    let cfg = solver_config(a.max_cg_iter, a.grad_tol, a.seed);
    let phi0 = random_projection(a.m, n, a.seed)?;
    let xi = a.xi.resolve(a.m, l);
    let result = match a.method {
        Method::Randn => design_randn(&phi0, &cfg),
        Method::Mt => design_mt(&psi, a.lambda, &phi0, &cfg)?,
        Method::MtEtf => design_mt_etf(&psi, a.lambda, a.xi.resolve(a.m, l)?, a.iter, &phi0, &cfg)?,
        Method::Lh => design_lh(&psi, a.lambda, sre.as_ref().expect("checked"), &phi0, &cfg)?,
        Method::LhEtf => {
            design_lh_etf(&psi, a.lambda, sre.as_ref().expect("checked"), a.xi.resolve(a.m, l)?, a.iter, &phi0, &cfg)?
        }
    };

    create_dir(&a.out)?;
    result.write_to_dir(&a.out)?;
    if a.synth.is_some() {
        write_matrix(a.out.join("psi.csv"), psi.matrix())?;
    }
    let report = coherence_report(&result.phi, &psi, a.mu_bar)?;
    let summary = format!(
        "mu={}\nmu_av={}\nn_av={}\nwelch={}\ngram_distortion={}\nphi_energy={}\nconverged={}\n",
        fmt_f64(report.mu),
        fmt_f64(report.mu_av),
        report.n_av,
        fmt_f64(report.welch),
        fmt_f64(report.gram_distortion),
        fmt_f64(report.phi_energy),
        result.converged
    );
    write_text(&a.out.join("report.txt"), &summary)?;

    let mut m = manifest(
        "design",
        vec![
            ("dict", a.dict.as_deref().map(path)),
            ("synth", opt(&a.synth)),
            ("m", Some(a.m.to_string())),
            ("method", Some(a.method.to_string())),
            ("lambda", Some(fmt_f64(a.lambda))),
            ("xi", Some(a.xi.to_string())),
            ("iter", Some(a.iter.to_string())),
            ("seed", Some(a.seed.to_string())),
            ("sre", a.sre.as_deref().map(path)),
            ("max-cg-iter", Some(a.max_cg_iter.to_string())),
            ("grad-tol", Some(fmt_f64(a.grad_tol))),
            ("mu-bar", Some(fmt_f64(a.mu_bar))),
            ("out", Some(path(&a.out))),
        ],
    )?;
    if let Ok(xi) = xi {
        m.set_derived("xi_value", fmt_f64(xi))?;
    }
    m.set_derived("converged", result.converged)?;
    m.set_derived("final_objective", fmt_f64(result.final_objective()))?;
    m.write(a.out.join("manifest.txt"))?;

    if result.converged {
        Ok(EXIT_OK)
    } else {
        log::warn!("design did not reach the gradient tolerance; artifacts written with converged=false");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let phi = ProjectionMatrix::new(read_matrix(&a.phi)?)?;
    let psi = Dictionary::new(read_matrix(&a.dict)?)?;
    if phi.signal_dim() != psi.signal_dim() {
        return Err(Error::invalid(format!(
            "Φ is {}×{} but Ψ has {} rows",
            phi.measurements(),
            phi.signal_dim(),
            psi.signal_dim()
        )));
    }
    let mut records = Vec::new();
    for &seed in &a.seeds.0 {
        let theta = gen_sparse_codes(psi.atoms(), a.k, 2 * a.p, seed)?;
        let ds = gen_signals(&psi, &theta, a.snr, seed)?;
        let ev = evaluate_projection(&phi, &psi, &ds, a.k, a.mu_bar)?;
        records.push(ExperimentRecord {
            method: a.method,
            param_name: "snr".to_string(),
            param_value: a.snr,
            seed,
            rho_mse: ev.rho_mse,
            rho_psnr: rho_psnr(ev.rho_mse, PSNR_BITS),
            mu: ev.mu,
            mu_av: ev.mu_av,
            phi_energy: ev.phi_energy,
            proj_noise_energy: ev.proj_noise_energy,
            wall_time_ms: 0.0,
            lambda: f64::NAN,
            converged: true,
        });
    }
    let csv = records_csv(&records);
    match &a.out {
        None => print!("{csv}"),
        Some(out) => {
            create_dir(out)?;
            write_text(&out.join("records.csv"), &csv)?;
            let m = manifest(
                "eval",
                vec![
                    ("phi", Some(path(&a.phi))),
                    ("dict", Some(path(&a.dict))),
                    ("method", Some(a.method.to_string())),
                    ("snr", Some(fmt_f64(a.snr))),
                    ("p", Some(a.p.to_string())),
                    ("k", Some(a.k.to_string())),
                    ("seeds", Some(a.seeds.to_string())),
                    ("mu-bar", Some(fmt_f64(a.mu_bar))),
                    ("out", Some(path(out))),
                ],
            )?;
            m.write(out.join("manifest.txt"))?;
        }
    }
    Ok(EXIT_OK)
}

/// Default λ candidates for SNR sweeps: the interval (0, 1] in steps of 0.1.
pub const DEFAULT_LAMBDA_SEARCH: &str = "0.1:0.1:1";

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let lambda_search = match (&a.lambda_search, a.axis) {
        (Some(g), _) => g.clone(),
        (None, Axis::Snr) => DEFAULT_LAMBDA_SEARCH.parse()?,
        (None, _) => "none".parse()?,
    };
    let methods = match &a.methods {
        Some(list) => list.clone(),
        None if a.axis == Axis::Lambda => List(vec![Method::Mt, Method::MtEtf]),
        None => List(Method::ALL.to_vec()),
    };
    let params = ExperimentParams {
        m: a.m,
        n: a.n,
        l: a.l,
        k: a.k,
        p: a.p,
        snr_db: a.snr,
        lambda: a.lambda,
        lambda_search: lambda_search.values.clone(),
        xi: a.xi,
        outer_iters: a.iter,
        mu_bar: a.mu_bar,
        solver: solver_config(a.max_cg_iter, a.grad_tol, 0),
        record_timing: a.timing,
    };
    let plan = SweepPlan {
        axis: a.axis,
        grid: a.grid.values.clone(),
        params,
        methods: methods.0.clone(),
        seeds: a.seeds.0.clone(),
    };
    let records = plan.run()?;
    let unconverged = records.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} of {} designs stopped before the gradient tolerance", records.len());
    }

    create_dir(&a.out)?;
    write_text(&a.out.join("records.csv"), &records_csv(&records))?;
    let mut m = manifest(
        "sweep",
        vec![
            ("axis", Some(a.axis.to_string())),
            ("grid", Some(a.grid.to_string())),
            ("methods", Some(methods.to_string())),
            ("seeds", Some(a.seeds.to_string())),
            ("m", Some(a.m.to_string())),
            ("n", Some(a.n.to_string())),
            ("l", Some(a.l.to_string())),
            ("k", Some(a.k.to_string())),
            ("p", Some(a.p.to_string())),
            ("snr", Some(fmt_f64(a.snr))),
            ("lambda", Some(fmt_f64(a.lambda))),
            ("lambda-search", Some(lambda_search.to_string())),
            ("xi", Some(a.xi.to_string())),
            ("iter", Some(a.iter.to_string())),
            ("mu-bar", Some(fmt_f64(a.mu_bar))),
            ("max-cg-iter", Some(a.max_cg_iter.to_string())),
            ("grad-tol", Some(fmt_f64(a.grad_tol))),
            ("timing", Some(a.timing.to_string())),
            ("out", Some(path(&a.out))),
        ],
    )?;
    m.set_derived("records", records.len())?;
    m.set_derived("unconverged", unconverged)?;
    m.write(a.out.join("manifest.txt"))?;
    Ok(EXIT_OK)
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<i32> {
    let params = ExperimentParams {
        m: a.m,
        n: a.n,
        l: a.l,
        solver: solver_config(a.max_cg_iter, a.grad_tol, a.seed),
        ..ExperimentParams::default()
    };
    if !(1 <= a.m && a.m <= a.n && a.n <= a.l) {
        return Err(Error::invalid(format!("need 1 ≤ M ≤ N ≤ L, got M={}, N={}, L={}", a.m, a.n, a.l)));
    }
    let traces = run_convergence(&params, &a.lambdas.values, a.seed)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("convergence.csv"), &convergence_csv(&traces))?;
    let all_converged = traces.iter().all(|t| t.converged);
    let mut m = manifest(
        "convergence",
        vec![
            ("m", Some(a.m.to_string())),
            ("n", Some(a.n.to_string())),
            ("l", Some(a.l.to_string())),
            ("lambdas", Some(a.lambdas.to_string())),
            ("seed", Some(a.seed.to_string())),
            ("max-cg-iter", Some(a.max_cg_iter.to_string())),
            ("grad-tol", Some(fmt_f64(a.grad_tol))),
            ("out", Some(path(&a.out))),
        ],
    )?;
    m.set_derived("converged", all_converged)?;
    m.write(a.out.join("manifest.txt"))?;
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_lemma1(a: &Lemma1Args) -> Result<i32> {
    let phi = match (&a.phi, a.random) {
        (Some(p), None) => ProjectionMatrix::new(read_matrix(p)?)?,
        (None, Some(Pair(m, n))) => random_projection(m, n, a.seed)?,
        _ => return Err(Error::invalid("exactly one of --phi or --random is required")),
    };
    let report = lemma1_check(&phi, a.sigma, a.p, a.seed)?;
    let text = report.to_key_value();
    print!("{text}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_text(&out.join("lemma1.txt"), &text)?;
        write_text(&out.join("lemma1.csv"), &format!("{LEMMA1_CSV_HEADER}\n{}\n", report.csv_row()))?;
        if a.random.is_some() {
            write_matrix(out.join("phi.csv"), phi.matrix())?;
        }
        let m = manifest(
            "lemma1",
            vec![
                ("phi", a.phi.as_deref().map(path)),
                ("random", opt(&a.random)),
                ("sigma", Some(fmt_f64(a.sigma))),
                ("p", Some(a.p.to_string())),
                ("seed", Some(a.seed.to_string())),
                ("out", Some(path(out))),
            ],
        )?;
        m.write(out.join("manifest.txt"))?;
    }
    Ok(EXIT_OK)
}

const SUBCOMMANDS: [&str; 5] = ["design", "eval", "sweep", "convergence", "lemma1"];

/// Finds `--config` after the subcommand and splices the file's entries in as flags
/// ahead of the user's own, so later (user) flags win.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(sub_pos) = args.iter().skip(1).position(|a| SUBCOMMANDS.iter().any(|s| a == *s)) else {
        return Ok(args);
    };
    let sub_pos = sub_pos + 1;
    let rest = &args[sub_pos + 1..];
    let mut config = None;
    for (i, a) in rest.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = rest.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        }
    }
    let Some(config) = config else {
        return Ok(args);
    };
    let manifest = RunManifest::read(&config)?;
    let sub = args[sub_pos].to_string_lossy().into_owned();
    if !manifest.command.is_empty() && manifest.command != sub {
        return Err(Error::invalid(format!(
            "{} was written by `{}`, not `{sub}`",
            config.display(),
            manifest.command
        )));
    }
    let mut out: Vec<OsString> = args[..=sub_pos].to_vec();
    for (k, v) in manifest.replay_params() {
        if k == "config" || RESERVED_KEYS.contains(&k) || k.starts_with(DERIVED_PREFIX) {
            continue;
        }
        out.push(format!("--{k}={v}").into());
    }
    out.extend_from_slice(rest);
    Ok(out)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cmd = Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true));
    let cli = match cmd
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let rendered = e.render().to_string();
                    eprintln!("{}", rendered.lines().next().unwrap_or("usage error"));
                    EXIT_USAGE
                }
            };
        }
    };
    let name = cli.command.name();
    let outcome = match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Lemma1(a) => cmd_lemma1(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {name}: {e}");
            exit_code(&e)
        }
    }
}
