//! Error metrics and the synthetic experiment harnesses: convergence traces, λ sweeps,
//! SNR sweeps and sweeps over `M`, `K`, `L`.
//!
//! A sweep is a grid of points × methods × seeds. Each (point, seed) pair is an
//! independent work item; results are reassembled in (point, method, seed) order so
//! the CSV does not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::coherence::{coherence_report, welch_bound, Dictionary, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::matrix_io::fmt_f64;
use crate::parallel;
use crate::recovery::{batch_recover, codes_matrix};
use crate::solver::{
    design_lh, design_lh_etf, design_mt, design_mt_etf, design_randn, random_projection,
    DesignResult, Method, SolverConfig,
};
use crate::synth::{gen_dictionary, gen_signals, gen_sparse_codes, SyntheticDataset};

pub const RECORD_HEADER: &str = "method,param_name,param_value,seed,rho_mse,rho_psnr,mu,mu_av,phi_energy,proj_noise_energy,wall_time_ms";
pub const CONVERGENCE_HEADER: &str = "lambda,iteration,f";

/// `(1/(N·P)) Σ ‖x̂_k − x_k‖²`
pub fn rho_mse(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("cannot average over an empty matrix"));
    }
    Ok((x_hat - x).norm_squared() / x.len() as f64)
}

/// `10·log10((2^r − 1)² / mse)` in dB. Returns `+∞` for `mse ≤ 0`.
pub fn rho_psnr(mse: f64, r: u32) -> f64 {
    if !(mse > 0.0) {
        return f64::INFINITY;
    }
    let peak = (2f64.powi(r as i32) - 1.0).powi(2);
    10.0 * (peak / mse).log10()
}

pub const PSNR_BITS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Lambda,
    Snr,
    M,
    K,
    L,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Snr => "snr",
            Axis::M => "m",
            Axis::K => "k",
            Axis::L => "l",
        }
    }

    pub fn is_dimension(self) -> bool {
        matches!(self, Axis::M | Axis::K | Axis::L)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Axis::Lambda, Axis::Snr, Axis::M, Axis::K, Axis::L]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown axis `{s}` (expected lambda|snr|m|k|l)")))
    }
}

/// `ξ` for the relaxed-ETF designs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XiChoice {
    Welch,
    Value(f64),
}

impl XiChoice {
    pub fn resolve(self, m: usize, l: usize) -> Result<f64> {
        match self {
            XiChoice::Welch => welch_bound(m, l),
            XiChoice::Value(v) => Ok(v),
        }
    }
}

impl fmt::Display for XiChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiChoice::Welch => f.write_str("welch"),
            XiChoice::Value(v) => f.write_str(&fmt_f64(*v)),
        }
    }
}

impl FromStr for XiChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "welch" {
            return Ok(XiChoice::Welch);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("ξ must be `welch` or a number, got `{s}`")))?;
        if !(0.0..1.0).contains(&v) {
            return Err(Error::invalid(format!("ξ must lie in [0, 1), got {v}")));
        }
        Ok(XiChoice::Value(v))
    }
}

/// Fixed parameters of one experiment point.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentParams {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub k: usize,
    /// Signals per split (training and testing each hold `P`).
    pub p: usize,
    pub snr_db: f64,
    /// λ used when `lambda_search` is empty.
    pub lambda: f64,
    /// Candidate λ values; each design keeps the one with the lowest `ρ_mse`.
    /// For SRE-based designs the candidates are divided by `σ̂²P`, with
    /// `σ̂² = ‖E‖²_F/(N·P)`, so both penalties weigh the same noise energy.
    pub lambda_search: Vec<f64>,
    pub xi: XiChoice,
    pub outer_iters: usize,
    pub mu_bar: f64,
    pub solver: SolverConfig,
    /// Off by default so reruns give identical bytes; when off `wall_time_ms` is 0.
    pub record_timing: bool,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            m: 20,
            n: 60,
            l: 80,
            k: 4,
            p: 1000,
            snr_db: 15.0,
            lambda: 0.1,
            lambda_search: Vec::new(),
            xi: XiChoice::Welch,
            outer_iters: 50,
            mu_bar: 0.2,
            solver: SolverConfig::default(),
            record_timing: false,
        }
    }
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        let (m, n, l, k) = (self.m, self.n, self.l, self.k);
        if !(1 <= k && k <= m && m <= n && n <= l) {
            return Err(Error::invalid(format!(
                "need 1 ≤ K ≤ M ≤ N ≤ L, got K={k}, M={m}, N={n}, L={l}"
            )));
        }
        if self.p == 0 {
            return Err(Error::invalid("P must be ≥ 1"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("SNR must be finite or +inf, got {}", self.snr_db)));
        }
        let lambdas = std::iter::once(&self.lambda).chain(&self.lambda_search);
        for &lam in lambdas {
            if !(lam >= 0.0) || !lam.is_finite() {
                return Err(Error::invalid(format!("λ must be finite and ≥ 0, got {lam}")));
            }
        }
        if self.outer_iters == 0 {
            return Err(Error::invalid("Iter must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.mu_bar) {
            return Err(Error::invalid(format!("μ̄ must lie in [0, 1), got {}", self.mu_bar)));
        }
        self.xi.resolve(m, l)?;
        self.solver.validate()
    }

    /// Copy with the swept parameter set to `value`.
    pub fn at(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut p = self.clone();
        match axis {
            Axis::Lambda => {
                p.lambda = value;
                p.lambda_search.clear();
            }
            Axis::Snr => p.snr_db = value,
            Axis::M | Axis::K | Axis::L => {
                if value < 1.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
                    return Err(Error::invalid(format!("{axis} must be a positive integer, got {value}")));
                }
                let v = value as usize;
                match axis {
                    Axis::M => p.m = v,
                    Axis::K => p.k = v,
                    _ => p.l = v,
                }
            }
        }
        Ok(p)
    }
}

/// One row of a sweep result.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub method: Method,
    pub param_name: String,
    pub param_value: f64,
    pub seed: u64,
    pub rho_mse: f64,
    pub rho_psnr: f64,
    pub mu: f64,
    pub mu_av: f64,
    pub phi_energy: f64,
    /// `‖ΦE_test‖²_F`
    pub proj_noise_energy: f64,
    pub wall_time_ms: f64,
    /// λ actually used (after any search and rescaling). Not part of the CSV.
    pub lambda: f64,
    pub converged: bool,
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.param_name,
            fmt_f64(self.param_value),
            self.seed,
            fmt_f64(self.rho_mse),
            fmt_f64(self.rho_psnr),
            fmt_f64(self.mu),
            fmt_f64(self.mu_av),
            fmt_f64(self.phi_energy),
            fmt_f64(self.proj_noise_energy),
            fmt_f64(self.wall_time_ms)
        )
    }
}

pub fn records_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Grid × methods × seeds over one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub params: ExperimentParams,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.grid)?;
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods to run"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds to run"));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Vec<ExperimentRecord>> {
        self.validate()?;
        match self.axis {
            Axis::Lambda => run_lambda_sweep(&self.params, &self.grid, &self.methods, &self.seeds),
            Axis::Snr => run_snr_sweep(&self.params, &self.grid, &self.methods, &self.seeds),
            axis => run_dimension_sweeps(&self.params, axis, &self.grid, &self.methods, &self.seeds),
        }
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    if let Some(v) = grid.iter().find(|v| v.is_nan()) {
        return Err(Error::invalid(format!("grid contains {v}")));
    }
    if let Some(w) = grid.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Data and starting point shared by all methods at one (point, seed).
pub struct Instance {
    pub psi: Dictionary,
    pub dataset: SyntheticDataset,
    pub phi0: ProjectionMatrix,
}

impl Instance {
    /// `noise_seed` lets sweeps draw fresh noise per point while keeping Ψ, Θ and Φ0
    /// tied to `seed`.
    pub fn generate(params: &ExperimentParams, seed: u64, noise_seed: u64) -> Result<Self> {
        let psi = gen_dictionary(params.n, params.l, seed)?;
        let theta = gen_sparse_codes(params.l, params.k, 2 * params.p, seed)?;
        let dataset = gen_signals(&psi, &theta, params.snr_db, noise_seed)?;
        let phi0 = random_projection(params.m, params.n, seed)?;
        Ok(Instance { psi, dataset, phi0 })
    }
}

/// Recovery and coherence metrics of one projection on the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rho_mse: f64,
    pub mu: f64,
    pub mu_av: f64,
    pub phi_energy: f64,
    pub proj_noise_energy: f64,
}

/// Measures the test signals with `Φ`, recovers with OMP on `ΦΨ` and reconstructs
/// with `Ψ`. The error is taken against the noisy test signals.
pub fn evaluate_projection(
    phi: &ProjectionMatrix,
    psi: &Dictionary,
    dataset: &SyntheticDataset,
    k: usize,
    mu_bar: f64,
) -> Result<Evaluation> {
    if phi.signal_dim() != psi.signal_dim() {
        return Err(Error::invalid(format!(
            "Φ has {} columns but Ψ has {} rows",
            phi.signal_dim(),
            psi.signal_dim()
        )));
    }
    if dataset.x.nrows() != psi.signal_dim() {
        return Err(Error::invalid("dataset dimension does not match Ψ"));
    }
    let d = phi.matrix() * psi.matrix();
    let x_test = dataset.test_signals();
    let y = phi.matrix() * &x_test;
    let codes = batch_recover(&d, &y, k)?;
    let x_hat = psi.matrix() * codes_matrix(&codes, psi.atoms());
    let report = coherence_report(phi, psi, mu_bar)?;
    let proj_noise_energy = (phi.matrix() * dataset.test_noise()).norm_squared();
    Ok(Evaluation {
        rho_mse: rho_mse(&x_test, &x_hat)?,
        mu: report.mu,
        mu_av: report.mu_av,
        phi_energy: report.phi_energy,
        proj_noise_energy,
    })
}

/// Runs one design method on `inst` with a given λ.
pub fn run_design(
    method: Method,
    params: &ExperimentParams,
    inst: &Instance,
    lambda: f64,
) -> Result<DesignResult> {
    let cfg = &params.solver;
    let xi = || params.xi.resolve(params.m, params.l);
    match method {
        Method::Randn => Ok(design_randn(&inst.phi0, cfg)),
        Method::Mt => design_mt(&inst.psi, lambda, &inst.phi0, cfg),
        Method::MtEtf => design_mt_etf(&inst.psi, lambda, xi()?, params.outer_iters, &inst.phi0, cfg),
        Method::Lh => design_lh(&inst.psi, lambda, &inst.dataset.train_sre(), &inst.phi0, cfg),
        Method::LhEtf => design_lh_etf(
            &inst.psi,
            lambda,
            &inst.dataset.train_sre(),
            xi()?,
            params.outer_iters,
            &inst.phi0,
            cfg,
        ),
    }
}

/// λ candidates for `method`, in the penalty's own units.
pub fn lambda_candidates(method: Method, params: &ExperimentParams, dataset: &SyntheticDataset) -> Vec<f64> {
    if method == Method::Randn {
        return vec![0.0];
    }
    if params.lambda_search.is_empty() {
        return vec![params.lambda];
    }
    let scale = if method.needs_sre() {
        let sre = dataset.train_sre();
        let energy = sre.matrix().norm_squared();
        // ‖ΦE‖² ≈ σ²P‖Φ‖², so dividing by σ̂²P = ‖E‖²/N matches the energy penalty.
        if energy > 0.0 {
            sre.signal_dim() as f64 / energy
        } else {
            1.0
        }
    } else {
        1.0
    };
    params.lambda_search.iter().map(|l| l * scale).collect()
}

/// Designs with every λ candidate and keeps the lowest `ρ_mse` (first wins on ties).
fn best_design(
    method: Method,
    params: &ExperimentParams,
    inst: &Instance,
) -> Result<(f64, DesignResult, Evaluation, f64)> {
    let mut best: Option<(f64, DesignResult, Evaluation, f64)> = None;
    for lambda in lambda_candidates(method, params, &inst.dataset) {
        let start = params.record_timing.then(Instant::now);
        let design = run_design(method, params, inst, lambda)?;
        let ms = start.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3);
        let eval = evaluate_projection(&design.phi, &inst.psi, &inst.dataset, params.k, params.mu_bar)?;
        if best.as_ref().map_or(true, |b| eval.rho_mse < b.2.rho_mse) {
            best = Some((lambda, design, eval, ms));
        }
    }
    Ok(best.expect("at least one λ candidate"))
}

/// All methods at one point for one seed, in `methods` order.
pub fn evaluate_point(
    params: &ExperimentParams,
    methods: &[Method],
    param_name: &str,
    param_value: f64,
    seed: u64,
    noise_seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    params.validate()?;
    let inst = Instance::generate(params, seed, noise_seed)?;
    methods
        .iter()
        .map(|&method| {
            let (lambda, design, eval, ms) = best_design(method, params, &inst)?;
            if !design.converged {
                log::warn!("{method} at {param_name}={param_value} seed={seed} did not converge");
            }
            Ok(ExperimentRecord {
                method,
                param_name: param_name.to_string(),
                param_value,
                seed,
                rho_mse: eval.rho_mse,
                rho_psnr: rho_psnr(eval.rho_mse, PSNR_BITS),
                mu: eval.mu,
                mu_av: eval.mu_av,
                phi_energy: eval.phi_energy,
                proj_noise_energy: eval.proj_noise_energy,
                wall_time_ms: ms,
                lambda,
                converged: design.converged,
            })
        })
        .collect()
}

/// SplitMix64 finalizer, used to derive per-point noise seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn point_noise_seed(axis: Axis, value: f64, seed: u64) -> u64 {
    match axis {
        // λ does not touch the data: every λ sees the same noisy signals.
        Axis::Lambda => seed,
        _ => mix(seed ^ mix(value.to_bits() ^ axis as u64)),
    }
}

fn run_sweep(
    base: &ExperimentParams,
    axis: Axis,
    grid: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    validate_grid(grid)?;
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one method and one seed"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &value in grid {
        let params = base.at(axis, value)?;
        match params.validate() {
            Ok(()) => points.push((value, params)),
            Err(e) if axis.is_dimension() => {
                log::warn!("skipping {axis}={value}: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    let items: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..seeds.len()).map(move |s| (p, s)))
        .collect();
    let results = parallel::map(&items, |&(p, s)| {
        let (value, params) = &points[p];
        let seed = seeds[s];
        evaluate_point(params, methods, axis.as_str(), *value, seed, point_noise_seed(axis, *value, seed))
    });

    // Reassemble in (point, method, seed) order.
    let mut by_item = Vec::with_capacity(items.len());
    for r in results {
        by_item.push(r?);
    }
    let mut out = Vec::with_capacity(by_item.len() * methods.len());
    for p in 0..points.len() {
        for m in 0..methods.len() {
            for s in 0..seeds.len() {
                out.push(by_item[p * seeds.len() + s][m].clone());
            }
        }
    }
    Ok(out)
}

/// For each λ: design, recover the test split, record `ρ_mse`.
pub fn run_lambda_sweep(
    params: &ExperimentParams,
    lambda_grid: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    run_sweep(params, Axis::Lambda, lambda_grid, methods, seeds)
}

/// For each SNR a fresh dataset per seed, then every method.
pub fn run_snr_sweep(
    params: &ExperimentParams,
    snr_grid: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    run_sweep(params, Axis::Snr, snr_grid, methods, seeds)
}

/// Sweeps `M`, `K` or `L`; points violating `K ≤ M ≤ N ≤ L` are skipped with a warning.
pub fn run_dimension_sweeps(
    params: &ExperimentParams,
    axis: Axis,
    grid: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<Vec<ExperimentRecord>> {
    if !axis.is_dimension() {
        return Err(Error::invalid(format!("`{axis}` is not a dimension axis")));
    }
    run_sweep(params, axis, grid, methods, seeds)
}

/// CG trace of the `G = I_L` design for one λ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTrace {
    pub lambda: f64,
    /// `f` before the first step and after each CG iteration.
    pub values: Vec<f64>,
    pub converged: bool,
}

/// One trace per λ, all from the same `Ψ` and `Φ0`.
pub fn run_convergence(params: &ExperimentParams, lambdas: &[f64], seed: u64) -> Result<Vec<ConvergenceTrace>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("no λ values"));
    }
    params.solver.validate()?;
    let psi = gen_dictionary(params.n, params.l, seed)?;
    let phi0 = random_projection(params.m, params.n, seed)?;
    let traces = parallel::map(lambdas, |&lambda| -> Result<ConvergenceTrace> {
        let design = design_mt(&psi, lambda, &phi0, &params.solver)?;
        Ok(ConvergenceTrace {
            lambda,
            values: design.trace.iter().map(|r| r.f).collect(),
            converged: design.converged,
        })
    });
    traces.into_iter().collect()
}

pub fn convergence_csv(traces: &[ConvergenceTrace]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for t in traces {
        for (i, f) in t.values.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", fmt_f64(t.lambda), i, fmt_f64(*f)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal_matrix, stream_rng, Stream};

    fn small() -> ExperimentParams {
        ExperimentParams {
            m: 6,
            n: 12,
            l: 16,
            k: 2,
            p: 60,
            outer_iters: 2,
            solver: SolverConfig {
                max_cg_iterations: 60,
                ..SolverConfig::default()
            },
            ..ExperimentParams::default()
        }
    }

    #[test]
    fn mse_basics() {
        let x = standard_normal_matrix(&mut stream_rng(1, Stream::Instance, 0), 5, 7);
        assert_eq!(rho_mse(&x, &x).unwrap(), 0.0);
        let shifted = x.map(|v| v + 1.0);
        assert!((rho_mse(&x, &shifted).unwrap() - 1.0).abs() < 1e-12);
        let y = standard_normal_matrix(&mut stream_rng(2, Stream::Instance, 0), 5, 7);
        let mut oracle = 0.0;
        for i in 0..5 {
            for j in 0..7 {
                oracle += (x[(i, j)] - y[(i, j)]).powi(2);
            }
        }
        assert!((rho_mse(&x, &y).unwrap() - oracle / 35.0).abs() < 1e-12);
        assert!(rho_mse(&x, &DMatrix::zeros(5, 6)).is_err());
    }

    #[test]
    fn psnr_formula() {
        assert!(rho_psnr(255.0 * 255.0, 8).abs() < 1e-12);
        assert!((rho_psnr(1.0, 8) - 10.0 * 65025f64.log10()).abs() < 1e-12);
        assert!((rho_psnr(1.0, 8) - 48.131).abs() < 1e-3);
        assert!((rho_psnr(0.5, 8) - rho_psnr(1.0, 8) - 3.0103).abs() < 1e-4);
        assert_eq!(rho_psnr(0.0, 8), f64::INFINITY);
        assert_eq!(rho_psnr(-1.0, 8), f64::INFINITY);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[1.0, 1.0]).is_err());
        assert!(validate_grid(&[2.0, 1.0]).is_err());
        assert!(validate_grid(&[f64::NAN]).is_err());
        assert!(validate_grid(&[0.0, 0.5, 2.0]).is_ok());
    }

    #[test]
    fn xi_parsing() {
        assert_eq!("welch".parse::<XiChoice>().unwrap(), XiChoice::Welch);
        assert_eq!("0.3".parse::<XiChoice>().unwrap(), XiChoice::Value(0.3));
        assert!("1.5".parse::<XiChoice>().is_err());
        assert!("abc".parse::<XiChoice>().is_err());
        let w = XiChoice::Welch.resolve(20, 80).unwrap();
        assert!((w - (60.0f64 / (20.0 * 79.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(ExperimentParams::default().validate().is_ok());
        let p = ExperimentParams::default();
        assert!(p.at(Axis::M, 70.0).unwrap().validate().is_err());
        assert!(p.at(Axis::K, 0.0).is_err());
        assert!(p.at(Axis::L, 2.5).is_err());
        assert!(p.at(Axis::Lambda, -0.1).unwrap().validate().is_err());
        assert_eq!(p.at(Axis::Snr, 45.0).unwrap().snr_db, 45.0);
    }

    #[test]
    fn records_are_self_consistent() {
        let recs = run_snr_sweep(&small(), &[10.0, 30.0], &Method::ALL, &[1, 2]).unwrap();
        assert_eq!(recs.len(), 2 * 5 * 2);
        for r in &recs {
            assert!(r.rho_mse >= 0.0);
            let expect = 10.0 * (255f64.powi(2) / r.rho_mse).log10();
            assert!((r.rho_psnr - expect).abs() <= 1e-9 * expect.abs().max(1.0));
            assert_eq!(r.wall_time_ms, 0.0);
        }
        // (point, method, seed) order
        let keys: Vec<_> = recs.iter().map(|r| (r.param_value.to_bits(), r.method, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by_key(|k| (f64::from_bits(k.0) as i64, k.1, k.2));
        assert_eq!(keys, sorted);
    }

    #[test]
    fn lambda_zero_is_unregularized_design() {
        let params = small();
        let recs = run_lambda_sweep(&params, &[0.0, 0.5], &[Method::Mt], &[3]).unwrap();
        assert_eq!(recs.len(), 2);
        let inst = Instance::generate(&params, 3, 3).unwrap();
        let plain = design_mt(&inst.psi, 0.0, &inst.phi0, &params.solver).unwrap();
        let eval = evaluate_projection(&plain.phi, &inst.psi, &inst.dataset, params.k, params.mu_bar).unwrap();
        assert_eq!(recs[0].rho_mse, eval.rho_mse);
        assert_eq!(recs[0].phi_energy, plain.phi.energy());
    }

    #[test]
    fn lambda_points_share_data_snr_points_do_not() {
        assert_eq!(point_noise_seed(Axis::Lambda, 0.1, 9), point_noise_seed(Axis::Lambda, 0.7, 9));
        assert_ne!(point_noise_seed(Axis::Snr, 5.0, 9), point_noise_seed(Axis::Snr, 15.0, 9));
        assert_ne!(point_noise_seed(Axis::Snr, 5.0, 9), point_noise_seed(Axis::Snr, 5.0, 10));
    }

    #[test]
    fn sre_lambda_is_rescaled() {
        let mut params = small();
        params.lambda_search = vec![0.5, 1.0];
        let inst = Instance::generate(&params, 4, 4).unwrap();
        let mt = lambda_candidates(Method::Mt, &params, &inst.dataset);
        let lh = lambda_candidates(Method::Lh, &params, &inst.dataset);
        assert_eq!(mt, vec![0.5, 1.0]);
        let e = inst.dataset.train_sre();
        let sigma2_p = e.matrix().norm_squared() / params.n as f64;
        assert!((lh[0] * sigma2_p - 0.5).abs() < 1e-12);
        assert_eq!(lambda_candidates(Method::Randn, &params, &inst.dataset), vec![0.0]);
    }

    #[test]
    fn dimension_sweep_skips_infeasible_points() {
        let recs = run_dimension_sweeps(&small(), Axis::M, &[1.0, 4.0, 13.0], &[Method::Randn], &[1]).unwrap();
        // M=1 < K=2 and M=13 > N=12 are skipped
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].param_value, 4.0);
        assert!(run_dimension_sweeps(&small(), Axis::Snr, &[1.0], &[Method::Randn], &[1]).is_err());
    }

    #[test]
    fn single_point_sweep_matches_direct_evaluation() {
        let params = small();
        let recs = run_dimension_sweeps(&params, Axis::K, &[2.0], &[Method::Mt], &[5]).unwrap();
        let direct = evaluate_point(&params, &[Method::Mt], "k", 2.0, 5, point_noise_seed(Axis::K, 2.0, 5)).unwrap();
        assert_eq!(recs, direct);
    }

    #[test]
    fn sweep_csv_is_deterministic() {
        let params = small();
        let a = records_csv(&run_snr_sweep(&params, &[20.0], &[Method::Mt, Method::Randn], &[1, 2]).unwrap());
        let b = records_csv(&run_snr_sweep(&params, &[20.0], &[Method::Mt, Method::Randn], &[1, 2]).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with(RECORD_HEADER));
        assert_eq!(a.lines().count(), 1 + 4);
    }

    #[test]
    fn convergence_traces_are_monotone() {
        let params = small();
        let traces = run_convergence(&params, &[0.1, 1.0], 2).unwrap();
        for t in &traces {
            assert!(t.values.windows(2).all(|w| w[1] <= w[0]));
        }
        // The regularizer only adds to f.
        assert!(traces[1].values.last() > traces[0].values.last());
        let csv = convergence_csv(&traces);
        assert!(csv.starts_with("lambda,iteration,f\n"));
    }

    #[test]
    fn evaluation_rejects_mismatched_phi() {
        let params = small();
        let inst = Instance::generate(&params, 1, 1).unwrap();
        let phi = random_projection(3, 5, 1).unwrap();
        assert!(evaluate_projection(&phi, &inst.psi, &inst.dataset, 2, 0.2).is_err());
    }
}
