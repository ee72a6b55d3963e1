//! Sensing-matrix design: nonlinear CG, relaxed-ETF projection and the
//! alternating scheme built on them.
//!
//! The CG solver is Polak–Ribière+ (`β = max(0, β_PR)`) with periodic restarts
//! and a backtracking Armijo line search. Along any direction the objective is
//! a quartic polynomial in the step, so the first trial step is the first local
//! minimizer of that quartic; Armijo backtracking then guards it like any other
//! trial. When backtracking fails the solver retries along `−∇f` once, then
//! stops and reports `converged = false`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::coherence::{Dictionary, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::matrix_io::{fmt_f64, write_matrix};
use crate::objective::{ObjectiveSpec, SreMatrix};
use crate::rng::{standard_normal_matrix, stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Randn,
    Mt,
    MtEtf,
    Lh,
    LhEtf,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Randn, Method::Mt, Method::MtEtf, Method::Lh, Method::LhEtf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Randn => "randn",
            Method::Mt => "mt",
            Method::MtEtf => "mt-etf",
            Method::Lh => "lh",
            Method::LhEtf => "lh-etf",
        }
    }

    /// Methods that need an SRE matrix.
    pub fn needs_sre(self) -> bool {
        matches!(self, Method::Lh | Method::LhEtf)
    }

    pub fn uses_etf(self) -> bool {
        matches!(self, Method::MtEtf | Method::LhEtf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}` (expected randn|mt|mt-etf|lh|lh-etf)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchConfig {
    /// Trial step when the quartic minimizer is unavailable.
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant `c₁`.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_cg_iterations: usize,
    /// Stop once `‖∇f‖_F / max(1, ‖Φ‖_F)` falls to this.
    pub grad_tol: f64,
    pub line_search: LineSearchConfig,
    /// `None` restarts every `M·N` iterations.
    pub cg_restart_period: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_cg_iterations: 500,
            grad_tol: 1e-6,
            line_search: LineSearchConfig::default(),
            cg_restart_period: None,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let positive = [self.grad_tol, ls.initial_step, ls.shrink, ls.sufficient_decrease];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("solver tolerances and step parameters must be positive"));
        }
        if ls.shrink >= 1.0 || ls.sufficient_decrease >= 1.0 {
            return Err(Error::invalid("line-search shrink and Armijo constant must be < 1"));
        }
        if self.max_cg_iterations == 0 || ls.max_backtracks == 0 || self.cg_restart_period == Some(0) {
            return Err(Error::invalid("iteration caps must be ≥ 1"));
        }
        Ok(())
    }
}

/// One row of the optimization trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub cg_iter: usize,
    pub f: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignResult {
    pub phi: ProjectionMatrix,
    pub trace: Vec<TraceRow>,
    pub method: Method,
    pub config: SolverConfig,
    pub converged: bool,
}

pub const TRACE_HEADER: &str = "outer_iter,cg_iter,f,grad_norm";

impl DesignResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.outer_iter,
                r.cg_iter,
                fmt_f64(r.f),
                fmt_f64(r.grad_norm)
            ));
        }
        out
    }

    /// Writes `phi.csv` and `trace.csv` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(dir.join("phi.csv"), self.phi.matrix())?;
        let trace = dir.join("trace.csv");
        fs::write(&trace, self.trace_csv()).map_err(|e| Error::io(&trace, e))
    }

    /// Trace rows of one CG solve.
    pub fn solve_trace(&self, outer_iter: usize) -> impl Iterator<Item = &TraceRow> {
        self.trace.iter().filter(move |r| r.outer_iter == outer_iter)
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.f)
    }
}

/// Symmetric target Gram in `H_ξ`: unit diagonal, `|G(i,j)| ≤ ξ` off the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedEtfTarget {
    pub data: DMatrix<f64>,
    pub xi: f64,
}

impl RelaxedEtfTarget {
    pub fn is_member(&self) -> bool {
        let g = &self.data;
        let n = g.nrows();
        if g.ncols() != n {
            return false;
        }
        (0..n).all(|i| {
            g[(i, i)] == 1.0
                && (0..n).all(|j| {
                    i == j || (g[(i, j)] == g[(j, i)] && g[(i, j)].abs() <= self.xi + 1e-12)
                })
        })
    }
}

/// Projects a square matrix onto `H_ξ`: unit diagonal, off-diagonals clipped to `±ξ`,
/// then symmetrized as `(G + Gᵀ)/2`.
pub fn project_to_h_xi(g_tilde: &DMatrix<f64>, xi: f64) -> Result<RelaxedEtfTarget> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::invalid(format!("ξ must lie in [0, 1), got {xi}")));
    }
    let n = g_tilde.nrows();
    if g_tilde.ncols() != n {
        return Err(Error::invalid(format!(
            "target Gram must be square, got {}×{}",
            n,
            g_tilde.ncols()
        )));
    }
    // |g| > ξ ≥ 0 implies g ≠ 0, so signum never sees zero in the clipping branch.
    let clip = |v: f64| if v.abs() <= xi { v } else { xi * v.signum() };
    let mut data = DMatrix::zeros(n, n);
    for i in 0..n {
        data[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (clip(g_tilde[(i, j)]) + clip(g_tilde[(j, i)]));
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
    }
    Ok(RelaxedEtfTarget { data, xi })
}

/// `M × N` matrix of i.i.d. standard normals from the projection stream of `seed`.
pub fn random_projection(m: usize, n: usize, seed: u64) -> Result<ProjectionMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("random projection needs M, N ≥ 1"));
    }
    let mut rng = stream_rng(seed, Stream::Projection, 0);
    ProjectionMatrix::new(standard_normal_matrix(&mut rng, m, n))
}

/// Coefficients `[c0, c1, c2, c3, c4]` of `α ↦ f(Φ + αD)`.
fn line_quartic(spec: &ObjectiveSpec, phi: &DMatrix<f64>, dir: &DMatrix<f64>) -> [f64; 5] {
    let psi = spec.psi();
    let d = phi * psi;
    let v = dir * psi;
    let mut s0 = d.tr_mul(&d);
    s0 -= spec.target();
    let dv = d.tr_mul(&v);
    let s1 = &dv + dv.transpose();
    let s2 = v.tr_mul(&v);
    let (p0, p1, p2) = spec.penalty_line(phi, dir);
    let lam = spec.lambda();
    [
        s0.norm_squared() + lam * p0,
        2.0 * s0.dot(&s1) + lam * 2.0 * p1,
        s1.norm_squared() + 2.0 * s0.dot(&s2) + lam * p2,
        2.0 * s1.dot(&s2),
        s2.norm_squared(),
    ]
}

/// First positive stationary point of the quartic whose slope at 0 is negative.
fn first_quartic_minimizer(c: &[f64; 5]) -> Option<f64> {
    let slope = |a: f64| c[1] + a * (2.0 * c[2] + a * (3.0 * c[3] + a * 4.0 * c[4]));
    if !(slope(0.0) < 0.0) {
        return None;
    }
    let mut hi = 1e-12;
    let mut tries = 0;
    while slope(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return None;
        }
    }
    let mut lo = if tries == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    (a > 0.0 && a.is_finite()).then_some(a)
}

enum LineSearch {
    Accepted { phi: DMatrix<f64>, f: f64 },
    Failed,
}

fn armijo(
    spec: &ObjectiveSpec,
    phi: &DMatrix<f64>,
    f0: f64,
    slope: f64,
    dir: &DMatrix<f64>,
    first_trial: f64,
    ls: &LineSearchConfig,
) -> LineSearch {
    let mut step = first_trial;
    for _ in 0..=ls.max_backtracks {
        let cand = phi + dir * step;
        let f = spec.value_unchecked(&cand);
        if f.is_finite() && f <= f0 + ls.sufficient_decrease * step * slope && f <= f0 {
            return LineSearch::Accepted { phi: cand, f };
        }
        step *= ls.shrink;
    }
    LineSearch::Failed
}

fn relative_grad(grad: &DMatrix<f64>, phi: &DMatrix<f64>) -> f64 {
    grad.norm() / phi.norm().max(1.0)
}

/// One CG solve; appends trace rows tagged `outer_iter`. Returns the final iterate and
/// whether the gradient tolerance was met.
fn cg_solve(
    spec: &ObjectiveSpec,
    phi0: &DMatrix<f64>,
    cfg: &SolverConfig,
    outer_iter: usize,
    trace: &mut Vec<TraceRow>,
) -> (DMatrix<f64>, bool) {
    let ls = &cfg.line_search;
    let restart = cfg
        .cg_restart_period
        .unwrap_or(phi0.nrows() * phi0.ncols())
        .max(1);

    let mut phi = phi0.clone();
    let mut f = spec.value_unchecked(&phi);
    let mut grad = spec.gradient_unchecked(&phi);
    trace.push(TraceRow {
        outer_iter,
        cg_iter: 0,
        f,
        grad_norm: grad.norm(),
    });
    if relative_grad(&grad, &phi) <= cfg.grad_tol {
        return (phi, true);
    }

    let mut dir = -&grad;
    let mut since_restart = 0;
    for it in 1..=cfg.max_cg_iterations {
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = -&grad;
            slope = -grad.norm_squared();
            since_restart = 0;
        }

        let trial = |d: &DMatrix<f64>| {
            first_quartic_minimizer(&line_quartic(spec, &phi, d))
                .unwrap_or(ls.initial_step / d.norm().max(1.0))
        };
        let mut outcome = armijo(spec, &phi, f, slope, &dir, trial(&dir), ls);
        if matches!(outcome, LineSearch::Failed) && since_restart > 0 {
            log::debug!("line search failed at CG iteration {it}; retrying along -∇f");
            dir = -&grad;
            slope = -grad.norm_squared();
            since_restart = 0;
            outcome = armijo(spec, &phi, f, slope, &dir, trial(&dir), ls);
        }
        let (next_phi, next_f) = match outcome {
            LineSearch::Accepted { phi, f } => (phi, f),
            LineSearch::Failed => {
                log::debug!("steepest-descent step failed at CG iteration {it}; stopping");
                return (phi, false);
            }
        };

        let next_grad = spec.gradient_unchecked(&next_phi);
        phi = next_phi;
        f = next_f;
        trace.push(TraceRow {
            outer_iter,
            cg_iter: it,
            f,
            grad_norm: next_grad.norm(),
        });
        if relative_grad(&next_grad, &phi) <= cfg.grad_tol {
            return (phi, true);
        }

        since_restart += 1;
        let beta = if since_restart >= restart {
            since_restart = 0;
            0.0
        } else {
            let y = &next_grad - &grad;
            (next_grad.dot(&y) / grad.norm_squared()).max(0.0)
        };
        dir = &dir * beta - &next_grad;
        grad = next_grad;
    }
    (phi, false)
}

fn check_phi0(spec: &ObjectiveSpec, phi0: &ProjectionMatrix) -> Result<()> {
    if phi0.signal_dim() != spec.signal_dim() {
        return Err(Error::invalid(format!(
            "Φ0 has {} columns but Ψ has {} rows",
            phi0.signal_dim(),
            spec.signal_dim()
        )));
    }
    Ok(())
}

/// Minimizes `spec` from `phi0` with PR+ conjugate gradients.
pub fn cg_minimize(
    spec: &ObjectiveSpec,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    cg_minimize_tagged(spec, phi0, cfg, if spec.is_baseline() { Method::Lh } else { Method::Mt })
}

fn cg_minimize_tagged(
    spec: &ObjectiveSpec,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
    method: Method,
) -> Result<DesignResult> {
    cfg.validate()?;
    check_phi0(spec, phi0)?;
    let mut trace = Vec::new();
    let (phi, converged) = cg_solve(spec, phi0.matrix(), cfg, 1, &mut trace);
    Ok(DesignResult {
        phi: ProjectionMatrix::new(phi)?,
        trace,
        method,
        config: *cfg,
        converged,
    })
}

/// Alternates `G_k = P_{H_ξ}(ΨᵀΦ_{k−1}ᵀΦ_{k−1}Ψ)` with a CG solve of `f(·, G_k)` warm-started
/// at `Φ_{k−1}`. The penalty (energy or SRE) comes from `base`; its target is ignored.
fn alternate(
    base: &ObjectiveSpec,
    xi: f64,
    outer_iters: usize,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
    method: Method,
) -> Result<DesignResult> {
    if outer_iters == 0 {
        return Err(Error::invalid("alternating design needs at least one outer iteration"));
    }
    cfg.validate()?;
    check_phi0(base, phi0)?;
    let mut trace = Vec::new();
    let mut phi = phi0.matrix().clone();
    let mut converged = false;
    for k in 1..=outer_iters {
        let d = &phi * base.psi();
        let target = project_to_h_xi(&d.tr_mul(&d), xi)?;
        let spec = base.with_target(target.data)?;
        let (next, conv) = cg_solve(&spec, &phi, cfg, k, &mut trace);
        phi = next;
        converged = conv;
    }
    Ok(DesignResult {
        phi: ProjectionMatrix::new(phi)?,
        trace,
        method,
        config: *cfg,
        converged,
    })
}

/// Proposed relaxed-ETF design (energy penalty, `G ∈ H_ξ`).
pub fn alternating_design(
    psi: &Dictionary,
    lambda: f64,
    xi: f64,
    outer_iters: usize,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    let base = ObjectiveSpec::proposed_identity(psi, lambda)?;
    alternate(&base, xi, outer_iters, phi0, cfg, Method::MtEtf)
}

/// Same as [`alternating_design`]; named after its method tag.
pub fn design_mt_etf(
    psi: &Dictionary,
    lambda: f64,
    xi: f64,
    outer_iters: usize,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    alternating_design(psi, lambda, xi, outer_iters, phi0, cfg)
}

/// Proposed design with `G = I_L`.
pub fn design_mt(
    psi: &Dictionary,
    lambda: f64,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    let spec = ObjectiveSpec::proposed_identity(psi, lambda)?;
    cg_minimize_tagged(&spec, phi0, cfg, Method::Mt)
}

/// SRE-dependent baseline with `G = I_L`.
pub fn design_lh(
    psi: &Dictionary,
    lambda: f64,
    sre: &SreMatrix,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    let l = psi.atoms();
    let spec = ObjectiveSpec::baseline(psi, DMatrix::identity(l, l), lambda, sre)?;
    cg_minimize_tagged(&spec, phi0, cfg, Method::Lh)
}

/// SRE-dependent baseline with `G ∈ H_ξ`.
pub fn design_lh_etf(
    psi: &Dictionary,
    lambda: f64,
    sre: &SreMatrix,
    xi: f64,
    outer_iters: usize,
    phi0: &ProjectionMatrix,
    cfg: &SolverConfig,
) -> Result<DesignResult> {
    let l = psi.atoms();
    let base = ObjectiveSpec::baseline(psi, DMatrix::identity(l, l), lambda, sre)?;
    alternate(&base, xi, outer_iters, phi0, cfg, Method::LhEtf)
}

/// The random baseline wrapped as a design result (no optimization, empty trace).
pub fn design_randn(phi0: &ProjectionMatrix, cfg: &SolverConfig) -> DesignResult {
    DesignResult {
        phi: phi0.clone(),
        trace: Vec::new(),
        method: Method::Randn,
        config: *cfg,
        converged: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::mutual_coherence;
    use crate::objective::objective_value;
    use proptest::prelude::*;

    fn randn(rows: usize, cols: usize, seed: u64, idx: u64) -> DMatrix<f64> {
        standard_normal_matrix(&mut stream_rng(seed, Stream::Instance, idx), rows, cols)
    }

    fn unit_dict(n: usize, l: usize, seed: u64) -> Dictionary {
        let mut d = randn(n, l, seed, 100);
        for mut c in d.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        Dictionary::new(d).unwrap()
    }

    fn assert_monotone(res: &DesignResult) {
        let outers: std::collections::BTreeSet<_> = res.trace.iter().map(|r| r.outer_iter).collect();
        for k in outers {
            let fs: Vec<f64> = res.solve_trace(k).map(|r| r.f).collect();
            for w in fs.windows(2) {
                assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn quartic_coefficients_match_direct_evaluation() {
        let psi = unit_dict(6, 9, 1);
        let e = SreMatrix::new(randn(6, 12, 1, 1)).unwrap();
        let g = project_to_h_xi(&randn(9, 9, 1, 2), 0.3).unwrap().data;
        let phi = randn(3, 6, 1, 3);
        let dir = randn(3, 6, 1, 4);
        for spec in [
            ObjectiveSpec::proposed(&psi, g.clone(), 0.4).unwrap(),
            ObjectiveSpec::baseline(&psi, g.clone(), 0.4, &e).unwrap(),
        ] {
            let c = line_quartic(&spec, &phi, &dir);
            for a in [0.0, 0.3, -1.1, 2.5] {
                let poly = c[0] + a * (c[1] + a * (c[2] + a * (c[3] + a * c[4])));
                let direct = spec.value_unchecked(&(&phi + &dir * a));
                assert!((poly - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{poly} vs {direct}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let g = DMatrix::from_row_slice(2, 2, &[0.9, 0.7, 0.7, 0.9]);
        let p = project_to_h_xi(&g, 0.5).unwrap();
        assert_eq!(p.data, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));

        let inside = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -0.1, 0.2, 1.0, 0.3, -0.1, 0.3, 1.0]);
        assert_eq!(project_to_h_xi(&inside, 0.3).unwrap().data, inside);

        let any = randn(5, 5, 2, 0);
        assert_eq!(project_to_h_xi(&any, 0.0).unwrap().data, DMatrix::identity(5, 5));

        assert!(project_to_h_xi(&any, 1.0).is_err());
        assert!(project_to_h_xi(&any, -0.1).is_err());
        assert!(project_to_h_xi(&randn(2, 3, 2, 1), 0.5).is_err());
    }

    #[test]
    fn square_identity_problem_reaches_zero() {
        let psi = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
        let phi0 = ProjectionMatrix::new(randn(4, 4, 3, 0) * 0.5).unwrap();
        let res = design_mt(&psi, 0.0, &phi0, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.final_objective() < 1e-10, "{}", res.final_objective());
        let ptp = res.phi.matrix().tr_mul(res.phi.matrix());
        assert!((ptp - DMatrix::identity(4, 4)).amax() < 1e-5);
        assert_monotone(&res);
    }

    #[test]
    fn zero_start_is_stationary() {
        let psi = unit_dict(6, 8, 4);
        let phi0 = ProjectionMatrix::new(DMatrix::zeros(3, 6)).unwrap();
        let cfg = SolverConfig::default();
        let etf = alternating_design(&psi, 0.1, 0.4, 1, &phi0, &cfg).unwrap();
        let mt = design_mt(&psi, 0.1, &phi0, &cfg).unwrap();
        assert_eq!(etf.phi, mt.phi);
        assert_eq!(etf.final_objective(), 8.0);
    }

    #[test]
    fn xi_zero_matches_mt_bitwise() {
        let psi = unit_dict(8, 12, 5);
        let phi0 = random_projection(4, 8, 5).unwrap();
        let cfg = SolverConfig::default();
        let etf = alternating_design(&psi, 0.3, 0.0, 1, &phi0, &cfg).unwrap();
        let mt = design_mt(&psi, 0.3, &phi0, &cfg).unwrap();
        assert_eq!(etf.phi, mt.phi);
        assert_eq!(etf.trace, mt.trace);
    }

    #[test]
    fn alternating_lowers_coherence() {
        let psi = unit_dict(60, 80, 6);
        let phi0 = random_projection(20, 60, 6).unwrap();
        let cfg = SolverConfig::default();
        let xi = crate::coherence::welch_bound(20, 80).unwrap();
        let res = alternating_design(&psi, 0.1, xi, 5, &phi0, &cfg).unwrap();
        let before = mutual_coherence(&(phi0.matrix() * psi.matrix())).unwrap();
        let after = mutual_coherence(&(res.phi.matrix() * psi.matrix())).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert_monotone(&res);
    }

    #[test]
    fn energy_penalty_shrinks_phi() {
        let psi = unit_dict(30, 50, 7);
        let phi0 = random_projection(10, 30, 7).unwrap();
        let cfg = SolverConfig::default();
        let plain = design_mt(&psi, 0.0, &phi0, &cfg).unwrap();
        let reg = design_mt(&psi, 0.5, &phi0, &cfg).unwrap();
        assert!(reg.phi.energy() < plain.phi.energy());
    }

    #[test]
    fn sign_flipped_start_gives_same_objective() {
        let psi = unit_dict(12, 20, 8);
        let phi0 = random_projection(5, 12, 8).unwrap();
        let neg = ProjectionMatrix::new(-phi0.matrix()).unwrap();
        let cfg = SolverConfig::default();
        let a = design_mt(&psi, 0.2, &phi0, &cfg).unwrap();
        let b = design_mt(&psi, 0.2, &neg, &cfg).unwrap();
        assert!((a.final_objective() - b.final_objective()).abs() <= 1e-4);
    }

    #[test]
    fn zero_sre_matches_unregularized_design() {
        let psi = unit_dict(10, 16, 9);
        let phi0 = random_projection(4, 10, 9).unwrap();
        let cfg = SolverConfig::default();
        let zero = SreMatrix::new(DMatrix::zeros(10, 7)).unwrap();
        let lh = design_lh(&psi, 0.8, &zero, &phi0, &cfg).unwrap();
        let mt = design_mt(&psi, 0.0, &phi0, &cfg).unwrap();
        let fl: Vec<f64> = lh.trace.iter().map(|r| r.f).collect();
        let fm: Vec<f64> = mt.trace.iter().map(|r| r.f).collect();
        assert_eq!(fl, fm);

        let lh_etf = design_lh_etf(&psi, 0.8, &zero, 0.3, 2, &phi0, &cfg).unwrap();
        let mt_etf = alternating_design(&psi, 0.0, 0.3, 2, &phi0, &cfg).unwrap();
        assert_eq!(lh_etf.phi, mt_etf.phi);
    }

    #[test]
    fn gaussian_sre_tracks_scaled_energy_design() {
        // At finite P the two penalties agree: λ‖ΦE‖² ≈ λσ²P‖Φ‖².
        let (n, l, m, p) = (12, 20, 5, 10_000);
        let sigma = 0.05;
        let psi = unit_dict(n, l, 10);
        let e = SreMatrix::new(randn(n, p, 10, 7) * sigma).unwrap();
        let phi0 = random_projection(m, n, 10).unwrap();
        let cfg = SolverConfig::default();
        let lambda = 0.02;
        let lh = design_lh(&psi, lambda, &e, &phi0, &cfg).unwrap();
        let mt = design_mt(&psi, lambda * sigma * sigma * p as f64, &phi0, &cfg).unwrap();
        let rel = (lh.final_objective() - mt.final_objective()).abs() / mt.final_objective();
        assert!(rel <= 0.02, "relative gap {rel}");
    }

    #[test]
    fn random_projection_reproducible() {
        let a = random_projection(3, 4, 11).unwrap();
        let b = random_projection(3, 4, 11).unwrap();
        let c = random_projection(3, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(random_projection(0, 4, 1).is_err());
    }

    #[test]
    fn random_projection_moments() {
        let phi = random_projection(1000, 1000, 13).unwrap();
        let n = 1e6;
        let mean = phi.matrix().sum() / n;
        let var = phi.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.grad_tol = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.max_cg_iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.line_search.shrink = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn design_is_deterministic() {
        let psi = unit_dict(15, 25, 14);
        let phi0 = random_projection(6, 15, 14).unwrap();
        let cfg = SolverConfig::default();
        let a = alternating_design(&psi, 0.2, 0.35, 3, &phi0, &cfg).unwrap();
        let b = alternating_design(&psi, 0.2, 0.35, 3, &phi0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn converged_runs_are_stationary() {
        let psi = unit_dict(10, 14, 15);
        let phi0 = random_projection(4, 10, 15).unwrap();
        let cfg = SolverConfig::default();
        let res = design_mt(&psi, 0.3, &phi0, &cfg).unwrap();
        assert!(res.converged);
        let spec = ObjectiveSpec::proposed_identity(&psi, 0.3).unwrap();
        let g = crate::objective::objective_gradient(&res.phi, &spec).unwrap();
        assert!(g.norm() / res.phi.matrix().norm().max(1.0) <= cfg.grad_tol);
        assert_eq!(objective_value(&res.phi, &spec).unwrap(), res.final_objective());
    }

    #[test]
    fn trace_csv_header() {
        let psi = unit_dict(5, 6, 16);
        let phi0 = random_projection(2, 5, 16).unwrap();
        let res = design_mt(&psi, 0.1, &phi0, &SolverConfig::default()).unwrap();
        let csv = res.trace_csv();
        assert!(csv.starts_with("outer_iter,cg_iter,f,grad_norm\n1,0,"));
        assert_eq!(csv.lines().count(), res.trace.len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn projection_idempotent_and_member(seed in any::<u64>(), n in 1usize..9, xi in 0.0f64..0.999) {
            let raw = randn(n, n, seed, 0);
            let sym = (&raw + raw.transpose()) * 0.5;
            for input in [raw, sym] {
                let once = project_to_h_xi(&input, xi).unwrap();
                prop_assert!(once.is_member());
                let twice = project_to_h_xi(&once.data, xi).unwrap();
                prop_assert_eq!(&once.data, &twice.data);
            }
        }
    }
}
