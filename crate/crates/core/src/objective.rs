//! Design objectives and their gradients.
//!
//! Proposed (SRE-free) mode:
//!
//! ```text
//! f(Φ) = ‖G − ΨᵀΦᵀΦΨ‖²_F + λ‖Φ‖²_F
//! ∇f   = 2λΦ − 4ΦΨGΨᵀ + 4(ΦΨΨᵀΦᵀ)ΦΨΨᵀ
//! ```
//!
//! Baseline mode replaces the penalty with `λ‖ΦE‖²_F`, whose gradient is
//! `2λΦEEᵀ`. `EEᵀ` is formed once when the spec is built. Only matrix
//! products are used; nothing is inverted.

use nalgebra::DMatrix;

use crate::coherence::{Dictionary, ProjectionMatrix};
use crate::error::{Error, Result};

/// Sparse-representation error matrix `E = X − ΨΘ` (N×P).
#[derive(Clone, Debug, PartialEq)]
pub struct SreMatrix(DMatrix<f64>);

impl SreMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("SRE matrix contains non-finite entries"));
        }
        Ok(SreMatrix(data))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn sample_count(&self) -> usize {
        self.0.ncols()
    }

    pub fn signal_dim(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Penalty {
    /// `‖Φ‖²_F`
    Energy,
    /// `‖ΦE‖²_F`, stored as `EEᵀ`.
    Sre { eet: DMatrix<f64> },
}

/// An immutable objective instance. Products that do not depend on `Φ` are cached.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    psi: DMatrix<f64>,
    target: DMatrix<f64>,
    lambda: f64,
    penalty: Penalty,
    /// `ΨΨᵀ`
    psi_psit: DMatrix<f64>,
    /// `Ψ·sym(G)·Ψᵀ`
    psi_g_psit: DMatrix<f64>,
}

impl ObjectiveSpec {
    /// SRE-free objective with target Gram `target` (L×L).
    pub fn proposed(psi: &Dictionary, target: DMatrix<f64>, lambda: f64) -> Result<Self> {
        Self::build(psi, target, lambda, Penalty::Energy)
    }

    /// SRE-free objective with `G = I_L`.
    pub fn proposed_identity(psi: &Dictionary, lambda: f64) -> Result<Self> {
        let l = psi.atoms();
        Self::proposed(psi, DMatrix::identity(l, l), lambda)
    }

    /// SRE-dependent baseline objective `‖G − ΨᵀΦᵀΦΨ‖²_F + λ‖ΦE‖²_F`.
    pub fn baseline(
        psi: &Dictionary,
        target: DMatrix<f64>,
        lambda: f64,
        sre: &SreMatrix,
    ) -> Result<Self> {
        if sre.signal_dim() != psi.signal_dim() {
            return Err(Error::invalid(format!(
                "SRE matrix has {} rows but Ψ has {}",
                sre.signal_dim(),
                psi.signal_dim()
            )));
        }
        let e = sre.matrix();
        let eet = e * e.transpose();
        Self::build(psi, target, lambda, Penalty::Sre { eet })
    }

    fn build(psi: &Dictionary, target: DMatrix<f64>, lambda: f64, penalty: Penalty) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("λ must be a finite value ≥ 0, got {lambda}")));
        }
        let l = psi.atoms();
        if target.nrows() != l || target.ncols() != l {
            return Err(Error::invalid(format!(
                "target Gram is {}×{} but Ψ has {l} atoms",
                target.nrows(),
                target.ncols()
            )));
        }
        if !target.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("target Gram contains non-finite entries"));
        }
        let psi = psi.matrix().clone();
        let psi_psit = &psi * psi.transpose();
        let psi_g_psit = Self::psi_g_psit(&psi, &target);
        Ok(ObjectiveSpec {
            psi,
            target,
            lambda,
            penalty,
            psi_psit,
            psi_g_psit,
        })
    }

    fn psi_g_psit(psi: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
        let sym = (target + target.transpose()) * 0.5;
        psi * sym * psi.transpose()
    }

    /// Same spec with a new target Gram; the `EEᵀ` / `ΨΨᵀ` caches are reused.
    pub fn with_target(&self, target: DMatrix<f64>) -> Result<Self> {
        let l = self.atoms();
        if target.nrows() != l || target.ncols() != l {
            return Err(Error::invalid(format!(
                "target Gram is {}×{} but Ψ has {l} atoms",
                target.nrows(),
                target.ncols()
            )));
        }
        let psi_g_psit = Self::psi_g_psit(&self.psi, &target);
        Ok(ObjectiveSpec {
            target,
            psi_g_psit,
            ..self.clone()
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn signal_dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.psi.ncols()
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self.penalty, Penalty::Sre { .. })
    }

    fn check(&self, phi: &DMatrix<f64>) -> Result<()> {
        if phi.ncols() != self.signal_dim() {
            return Err(Error::invalid(format!(
                "Φ has {} columns but Ψ has {} rows",
                phi.ncols(),
                self.signal_dim()
            )));
        }
        Ok(())
    }

    /// Gram-match term `‖G − (ΦΨ)ᵀ(ΦΨ)‖²_F`, evaluated directly.
    pub(crate) fn gram_term(&self, phi: &DMatrix<f64>) -> f64 {
        let d = phi * &self.psi;
        let mut r = d.tr_mul(&d);
        r -= &self.target;
        r.norm_squared()
    }

    /// Unweighted penalty (`‖Φ‖²_F` or `‖ΦE‖²_F`).
    pub(crate) fn penalty_term(&self, phi: &DMatrix<f64>) -> f64 {
        match &self.penalty {
            Penalty::Energy => phi.norm_squared(),
            Penalty::Sre { eet } => (phi * eet).component_mul(phi).sum(),
        }
    }

    /// `(p0, p1, p2)` with `penalty(Φ + αV) = p0 + 2α·p1 + α²·p2`.
    pub(crate) fn penalty_line(&self, phi: &DMatrix<f64>, dir: &DMatrix<f64>) -> (f64, f64, f64) {
        match &self.penalty {
            Penalty::Energy => (phi.norm_squared(), phi.dot(dir), dir.norm_squared()),
            Penalty::Sre { eet } => {
                let pw = phi * eet;
                let dw = dir * eet;
                (pw.dot(phi), pw.dot(dir), dw.dot(dir))
            }
        }
    }

    pub(crate) fn value_unchecked(&self, phi: &DMatrix<f64>) -> f64 {
        self.gram_term(phi) + self.lambda * self.penalty_term(phi)
    }

    pub(crate) fn gradient_unchecked(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let phi_b = phi * &self.psi_psit; // ΦΨΨᵀ
        let inner = &phi_b * phi.transpose(); // ΦΨΨᵀΦᵀ (M×M)
        let mut grad = (&inner * &phi_b) * 4.0;
        grad -= (phi * &self.psi_g_psit) * 4.0;
        match &self.penalty {
            Penalty::Energy => grad += phi * (2.0 * self.lambda),
            Penalty::Sre { eet } => grad += (phi * eet) * (2.0 * self.lambda),
        }
        grad
    }
}

pub fn objective_value(phi: &ProjectionMatrix, spec: &ObjectiveSpec) -> Result<f64> {
    spec.check(phi.matrix())?;
    Ok(spec.value_unchecked(phi.matrix()))
}

pub fn objective_gradient(phi: &ProjectionMatrix, spec: &ObjectiveSpec) -> Result<DMatrix<f64>> {
    spec.check(phi.matrix())?;
    Ok(spec.gradient_unchecked(phi.matrix()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1)` over all entries.
    pub max_relative_deviation: f64,
    /// `(row, col)` of the worst entry.
    pub worst_entry: (usize, usize),
    pub passed: bool,
}

fn compare_gradients(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>, tol: f64) -> GradientCheckReport {
    let mut worst = 0.0;
    let mut worst_entry = (0, 0);
    for i in 0..analytic.nrows() {
        for j in 0..analytic.ncols() {
            let (a, n) = (analytic[(i, j)], numeric[(i, j)]);
            let dev = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
            if dev > worst || dev.is_nan() {
                worst = dev;
                worst_entry = (i, j);
            }
        }
    }
    GradientCheckReport {
        max_relative_deviation: worst,
        worst_entry,
        passed: worst <= tol,
    }
}

/// Central-difference gradient of `f` at `phi`, entry by entry.
pub fn central_difference<F>(phi: &DMatrix<f64>, step: f64, f: F) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let mut probe = phi.clone();
    let mut out = DMatrix::zeros(phi.nrows(), phi.ncols());
    for j in 0..phi.ncols() {
        for i in 0..phi.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + step;
            let up = f(&probe);
            probe[(i, j)] = orig - step;
            let down = f(&probe);
            probe[(i, j)] = orig;
            out[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    out
}

/// Compares [`objective_gradient`] with central differences of [`objective_value`].
pub fn gradient_check(
    phi: &ProjectionMatrix,
    spec: &ObjectiveSpec,
    step: f64,
    tol: f64,
) -> Result<GradientCheckReport> {
    let analytic = objective_gradient(phi, spec)?;
    Ok(check_against(&analytic, phi, spec, step, tol))
}

/// Checks an externally supplied gradient; used to confirm the checker catches faults.
pub fn check_against(
    analytic: &DMatrix<f64>,
    phi: &ProjectionMatrix,
    spec: &ObjectiveSpec,
    step: f64,
    tol: f64,
) -> GradientCheckReport {
    let numeric = central_difference(phi.matrix(), step, |p| spec.value_unchecked(p));
    compare_gradients(analytic, &numeric, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal_matrix, stream_rng, Stream};
    use crate::tolerance::GRADIENT_CHECK_STEP;
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

    fn unit_phi(m: usize, n: usize, seed: u64) -> ProjectionMatrix {
        ProjectionMatrix::new(randn(m, n, seed, 200) / (n as f64).sqrt()).unwrap()
    }

    /// Term-by-term sum of squares with explicit loops.
    fn brute_objective(phi: &DMatrix<f64>, psi: &DMatrix<f64>, g: &DMatrix<f64>, lambda: f64, e: Option<&DMatrix<f64>>) -> f64 {
        let (m, n, l) = (phi.nrows(), phi.ncols(), psi.ncols());
        let mut d = vec![vec![0.0; l]; m];
        for r in 0..m {
            for c in 0..l {
                for k in 0..n {
                    d[r][c] += phi[(r, k)] * psi[(k, c)];
                }
            }
        }
        let mut total = 0.0;
        for i in 0..l {
            for j in 0..l {
                let mut dot = 0.0;
                for r in 0..m {
                    dot += d[r][i] * d[r][j];
                }
                total += (g[(i, j)] - dot).powi(2);
            }
        }
        let mut pen = 0.0;
        match e {
            None => {
                for v in phi.iter() {
                    pen += v * v;
                }
            }
            Some(e) => {
                for r in 0..m {
                    for c in 0..e.ncols() {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += phi[(r, k)] * e[(k, c)];
                        }
                        pen += acc * acc;
                    }
                }
            }
        }
        total + lambda * pen
    }

    #[test]
    fn zero_phi_gives_l() {
        let psi = unit_dict(5, 7, 1);
        let spec = ObjectiveSpec::proposed_identity(&psi, 0.3).unwrap();
        let phi = ProjectionMatrix::new(DMatrix::zeros(3, 5)).unwrap();
        assert_eq!(objective_value(&phi, &spec).unwrap(), 7.0);
        assert_eq!(objective_gradient(&phi, &spec).unwrap(), DMatrix::zeros(3, 5));
    }

    #[test]
    fn perfect_gram_match_is_zero() {
        // Ψ orthonormal square, Φ with ΦᵀΦ = I, G = ΨᵀΨ.
        let q = randn(4, 4, 2, 0).qr().q();
        let psi = Dictionary::new(q.clone()).unwrap();
        let spec = ObjectiveSpec::proposed(&psi, q.tr_mul(&q), 0.0).unwrap();
        let phi = ProjectionMatrix::new(DMatrix::identity(4, 4)).unwrap();
        assert!(objective_value(&phi, &spec).unwrap() < 1e-28);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let psi = unit_dict(5, 6, 3);
        let phi = ProjectionMatrix::new(randn(3, 5, 3, 1)).unwrap();
        let g = randn(6, 6, 3, 2);
        let g = (&g + g.transpose()) * 0.5;
        let spec = ObjectiveSpec::proposed(&psi, g.clone(), 0.7).unwrap();
        let v = objective_value(&phi, &spec).unwrap();
        let oracle = brute_objective(phi.matrix(), psi.matrix(), &g, 0.7, None);
        assert!((v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));

        let e = randn(5, 9, 3, 3);
        let spec = ObjectiveSpec::baseline(&psi, g.clone(), 0.7, &SreMatrix::new(e.clone()).unwrap()).unwrap();
        let v = objective_value(&phi, &spec).unwrap();
        let oracle = brute_objective(phi.matrix(), psi.matrix(), &g, 0.7, Some(&e));
        assert!((v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn stationary_when_gram_matches_target() {
        let psi = unit_dict(6, 9, 4);
        let phi = ProjectionMatrix::new(randn(3, 6, 4, 1)).unwrap();
        let d = phi.matrix() * psi.matrix();
        let spec = ObjectiveSpec::proposed(&psi, d.tr_mul(&d), 0.0).unwrap();
        let grad = objective_gradient(&phi, &spec).unwrap();
        let scale = phi.matrix().norm().powi(3) * psi.matrix().norm().powi(4);
        assert!(grad.amax() <= 1e-12 * scale, "{}", grad.amax());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let psi = unit_dict(8, 10, 5);
        let phi = unit_phi(4, 8, 5);
        let g = DMatrix::identity(10, 10);
        let spec = ObjectiveSpec::proposed(&psi, g, 0.4).unwrap();
        let r = gradient_check(&phi, &spec, GRADIENT_CHECK_STEP, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn baseline_gradient_matches_finite_differences() {
        let psi = unit_dict(8, 10, 6);
        let phi = unit_phi(4, 8, 6);
        let e = SreMatrix::new(randn(8, 50, 6, 3) * 0.1).unwrap();
        let spec = ObjectiveSpec::baseline(&psi, DMatrix::identity(10, 10), 0.5, &e).unwrap();
        let r = gradient_check(&phi, &spec, GRADIENT_CHECK_STEP, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn checker_catches_corrupted_gradient() {
        let psi = unit_dict(8, 10, 7);
        let phi = unit_phi(4, 8, 7);
        let spec = ObjectiveSpec::proposed_identity(&psi, 0.2).unwrap();
        let mut grad = objective_gradient(&phi, &spec).unwrap();
        grad[(2, 5)] += 1e-2;
        let r = check_against(&grad, &phi, &spec, GRADIENT_CHECK_STEP, 1e-5);
        assert!(!r.passed);
        assert_eq!(r.worst_entry, (2, 5));
    }

    #[test]
    fn dimension_errors() {
        let psi = unit_dict(5, 7, 8);
        assert!(ObjectiveSpec::proposed(&psi, DMatrix::identity(6, 6), 0.1).is_err());
        assert!(ObjectiveSpec::proposed_identity(&psi, -1.0).is_err());
        let bad_e = SreMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        assert!(ObjectiveSpec::baseline(&psi, DMatrix::identity(7, 7), 0.1, &bad_e).is_err());
        let spec = ObjectiveSpec::proposed_identity(&psi, 0.1).unwrap();
        let phi = ProjectionMatrix::new(DMatrix::zeros(2, 4)).unwrap();
        assert!(objective_value(&phi, &spec).is_err());
        assert!(objective_gradient(&phi, &spec).is_err());
    }

    #[test]
    fn isotropic_sre_matches_scaled_energy_penalty() {
        // EEᵀ = σ²P·I_N  ⇒  λ_b‖ΦE‖² = λ_b σ²P ‖Φ‖².
        let n = 6;
        let (sigma, p) = (0.5f64, 8usize);
        let q = randn(p, p, 9, 0).qr().q();
        // Rows of E are orthogonal with squared norm σ²P.
        let e = q.rows(0, n).into_owned() * (sigma * (p as f64).sqrt());
        let psi = unit_dict(n, 9, 9);
        let phi = ProjectionMatrix::new(randn(3, n, 9, 1)).unwrap();
        let lambda_b = 0.3;
        let base = ObjectiveSpec::baseline(&psi, DMatrix::identity(9, 9), lambda_b, &SreMatrix::new(e).unwrap()).unwrap();
        let prop = ObjectiveSpec::proposed_identity(&psi, lambda_b * sigma * sigma * p as f64).unwrap();
        let a = objective_value(&phi, &base).unwrap();
        let b = objective_value(&phi, &prop).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn single_error_vector_penalty() {
        let psi = unit_dict(5, 7, 10);
        let e = randn(5, 1, 10, 1);
        let phi = ProjectionMatrix::new(randn(2, 5, 10, 2)).unwrap();
        let spec = ObjectiveSpec::baseline(&psi, DMatrix::identity(7, 7), 1.0, &SreMatrix::new(e.clone()).unwrap()).unwrap();
        let direct = (phi.matrix() * &e).norm_squared();
        assert!((spec.penalty_term(phi.matrix()) - direct).abs() <= 1e-12 * direct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn directional_derivative_consistency(seed in any::<u64>()) {
            let psi = unit_dict(6, 8, seed);
            let phi = unit_phi(3, 6, seed);
            let v = randn(3, 6, seed, 300);
            let v = &v / v.norm();
            let spec = ObjectiveSpec::proposed_identity(&psi, 0.25).unwrap();
            let grad = objective_gradient(&phi, &spec).unwrap();
            let exact = grad.dot(&v);
            let fd = |h: f64| {
                let up = spec.value_unchecked(&(phi.matrix() + &v * h));
                let dn = spec.value_unchecked(&(phi.matrix() - &v * h));
                (up - dn) / (2.0 * h)
            };
            let e1 = (fd(1e-3) - exact).abs();
            let e2 = (fd(5e-4) - exact).abs();
            // O(h²): halving h cuts the error by about 4.
            prop_assert!(e1 < 1e-4 * exact.abs().max(1.0));
            prop_assert!(e2 <= e1 / 3.0 || e1 < 1e-9);
        }

        #[test]
        fn objective_is_nonnegative(seed in any::<u64>(), lambda in 0.0f64..3.0) {
            let psi = unit_dict(5, 7, seed);
            let phi = ProjectionMatrix::new(randn(3, 5, seed, 5)).unwrap();
            let spec = ObjectiveSpec::proposed_identity(&psi, lambda).unwrap();
            prop_assert!(objective_value(&phi, &spec).unwrap() >= 0.0);
        }

        #[test]
        fn energy_penalty_orthogonally_invariant(seed in any::<u64>()) {
            let q = randn(6, 6, seed, 7).qr().q();
            let phi = randn(3, 6, seed, 8);
            let rotated = &phi * q;
            prop_assert!((phi.norm_squared() - rotated.norm_squared()).abs() < 1e-10 * phi.norm_squared());
        }
    }
}
