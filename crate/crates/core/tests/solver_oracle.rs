//! Tiny instances checked against an independent multi-restart steepest-descent oracle.

use nalgebra::DMatrix;
use robust_cs::rng::{standard_normal_matrix, stream_rng, Stream};
use robust_cs::{
    design_lh_etf, design_mt, project_to_h_xi, random_projection, welch_bound, Dictionary,
    ProjectionMatrix, SolverConfig, SreMatrix,
};

const M: usize = 2;
const N: usize = 3;
const L: usize = 4;

fn dictionary(seed: u64) -> Dictionary {
    let mut d = standard_normal_matrix(&mut stream_rng(seed, Stream::Instance, 1), N, L);
    for mut c in d.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    Dictionary::new(d).unwrap()
}

/// `f(Φ) = Σ_ij (G − ΨᵀΦᵀΦΨ)_ij² + λ·pen(Φ)` with `pen = ‖Φ‖²` or `‖ΦE‖²`, written out
/// as plain loops.
struct Problem {
    psi: DMatrix<f64>,
    g: DMatrix<f64>,
    lambda: f64,
    e: Option<DMatrix<f64>>,
}

impl Problem {
    fn value(&self, phi: &DMatrix<f64>) -> f64 {
        let d = phi * &self.psi;
        let mut fit = 0.0;
        for i in 0..L {
            for j in 0..L {
                let mut gij = 0.0;
                for r in 0..M {
                    gij += d[(r, i)] * d[(r, j)];
                }
                fit += (self.g[(i, j)] - gij).powi(2);
            }
        }
        let pen = match &self.e {
            None => phi.iter().map(|v| v * v).sum::<f64>(),
            Some(e) => (phi * e).iter().map(|v| v * v).sum::<f64>(),
        };
        fit + self.lambda * pen
    }

    /// Gradient by differentiating the loops above by hand.
    fn gradient(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let d = phi * &self.psi;
        let r = &self.g - d.transpose() * &d;
        // ∂/∂D of Σ (G − DᵀD)² is −2D(R + Rᵀ)
        let dd = -(&d * (&r + r.transpose())) * 2.0;
        let mut grad = dd * self.psi.transpose();
        match &self.e {
            None => grad += phi * (2.0 * self.lambda),
            Some(e) => grad += phi * e * e.transpose() * (2.0 * self.lambda),
        }
        grad
    }

    /// Steepest descent with exact-decrease backtracking until the gradient vanishes.
    fn descend(&self, mut phi: DMatrix<f64>) -> f64 {
        let mut f = self.value(&phi);
        let mut step = 1.0;
        let mut checkpoint = f;
        for it in 1..=200_000 {
            let g = self.gradient(&phi);
            let gn2 = g.norm_squared();
            if gn2 < 1e-18 {
                break;
            }
            if it % 500 == 0 {
                // stalled on a flat valley floor
                if checkpoint - f < 1e-14 {
                    break;
                }
                checkpoint = f;
            }
            step *= 2.0;
            loop {
                let trial = &phi - &g * step;
                let ft = self.value(&trial);
                if ft <= f - 1e-4 * step * gn2 {
                    phi = trial;
                    f = ft;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    return f;
                }
            }
        }
        f
    }

    fn multi_restart_minimum(&self, restarts: u64, seed: u64) -> f64 {
        (0..restarts)
            .map(|r| {
                let phi0 = standard_normal_matrix(&mut stream_rng(seed, Stream::Instance, 1000 + r), M, N);
                self.descend(phi0)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[test]
fn oracle_gradient_agrees_with_its_value() {
    let p = Problem {
        psi: dictionary(1).into_inner(),
        g: DMatrix::identity(L, L),
        lambda: 0.3,
        e: None,
    };
    let phi = standard_normal_matrix(&mut stream_rng(1, Stream::Instance, 9), M, N);
    let g = p.gradient(&phi);
    let h = 1e-6;
    for i in 0..M {
        for j in 0..N {
            let mut up = phi.clone();
            up[(i, j)] += h;
            let mut dn = phi.clone();
            dn[(i, j)] -= h;
            let fd = (p.value(&up) - p.value(&dn)) / (2.0 * h);
            assert!((fd - g[(i, j)]).abs() < 1e-6 * g[(i, j)].abs().max(1.0));
        }
    }
}

#[test]
fn mt_design_reaches_the_multi_restart_minimum() {
    for seed in [1u64, 2, 3] {
        for lambda in [0.0, 0.1, 1.0] {
            let psi = dictionary(seed);
            let phi0 = random_projection(M, N, seed).unwrap();
            let result = design_mt(&psi, lambda, &phi0, &SolverConfig::default()).unwrap();
            let oracle = Problem {
                psi: psi.matrix().clone(),
                g: DMatrix::identity(L, L),
                lambda,
                e: None,
            };
            let best = oracle.multi_restart_minimum(20, seed);
            let f = oracle.value(result.phi.matrix());
            assert!((f - result.final_objective()).abs() < 1e-12 * f.max(1.0));
            assert!((f - best).abs() <= 1e-6, "seed {seed} λ {lambda}: design {f} vs oracle {best}");
        }
    }
}

#[test]
fn lh_etf_last_solve_reaches_the_multi_restart_minimum() {
    let cfg = SolverConfig::default();
    for seed in [4u64, 5] {
        let psi = dictionary(seed);
        let e = SreMatrix::new(standard_normal_matrix(&mut stream_rng(seed, Stream::Instance, 7), N, 30) * 0.1).unwrap();
        let phi0 = random_projection(M, N, seed).unwrap();
        let xi = welch_bound(M, L).unwrap();
        let lambda = 0.5;
        let iters = 4;
        let full = design_lh_etf(&psi, lambda, &e, xi, iters, &phi0, &cfg).unwrap();
        // The design is deterministic, so stopping one outer iteration early gives Φ_{Iter−1}
        // and with it the target of the last solve.
        let prev = design_lh_etf(&psi, lambda, &e, xi, iters - 1, &phi0, &cfg).unwrap();
        let d = prev.phi.matrix() * psi.matrix();
        let g = project_to_h_xi(&(d.transpose() * &d), xi).unwrap().data;
        let oracle = Problem {
            psi: psi.matrix().clone(),
            g,
            lambda,
            e: Some(e.matrix().clone()),
        };
        let best = oracle.multi_restart_minimum(20, seed);
        let f = oracle.value(full.phi.matrix());
        assert!((f - best).abs() <= 1e-5, "seed {seed}: design {f} vs oracle {best}");
    }
}

#[test]
fn square_identity_problem_is_solved_exactly() {
    let psi = Dictionary::new(DMatrix::identity(4, 4)).unwrap();
    let phi0 = ProjectionMatrix::new(standard_normal_matrix(&mut stream_rng(3, Stream::Instance, 0), 4, 4)).unwrap();
    let r = design_mt(&psi, 0.0, &phi0, &SolverConfig::default()).unwrap();
    let ptp = r.phi.matrix().transpose() * r.phi.matrix();
    assert!((ptp - DMatrix::<f64>::identity(4, 4)).amax() < 1e-6);
    assert!(r.final_objective() < 1e-10);
}
