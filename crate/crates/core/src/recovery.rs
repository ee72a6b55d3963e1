//! Orthogonal matching pursuit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::coherence::Dictionary;
use crate::error::{Error, Result};
use crate::matrix_io::fmt_f64;
use crate::parallel;
use crate::tolerance::{DEGENERATE_COLUMN_NORM, OMP_RANK_RTOL, OMP_RESIDUAL_FLOOR};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub values: DVector<f64>,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    pub residual_norm: f64,
    /// The selected sub-dictionary was numerically rank deficient; `values` is then the
    /// minimum-norm least-squares fit.
    pub rank_deficient: bool,
}

/// OMP against a fixed dictionary; column norms are computed once.
#[derive(Clone, Debug)]
pub struct OmpSolver<'a> {
    dict: &'a DMatrix<f64>,
    /// `1/‖d_j‖`, or 0 for zero columns (never selected).
    inv_norms: Vec<f64>,
}

impl<'a> OmpSolver<'a> {
    pub fn new(dict: &'a DMatrix<f64>) -> Result<Self> {
        let inv_norms: Vec<f64> = dict
            .column_iter()
            .map(|c| {
                let n = c.norm();
                if n < DEGENERATE_COLUMN_NORM {
                    0.0
                } else {
                    1.0 / n
                }
            })
            .collect();
        if inv_norms.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("OMP dictionary has only zero columns"));
        }
        Ok(OmpSolver { dict, inv_norms })
    }

    fn check_k(&self, k: usize) -> Result<()> {
        let (m, l) = self.dict.shape();
        if k == 0 || k > m.min(l) {
            return Err(Error::invalid(format!(
                "sparsity K={k} must lie in [1, min(M, L)] = [1, {}]",
                m.min(l)
            )));
        }
        Ok(())
    }

    pub fn solve(&self, y: &DVector<f64>, k: usize) -> Result<SparseCode> {
        self.check_k(k)?;
        if y.len() != self.dict.nrows() {
            return Err(Error::invalid(format!(
                "measurement has length {} but the dictionary has {} rows",
                y.len(),
                self.dict.nrows()
            )));
        }
        Ok(self.solve_unchecked(y, k))
    }

    fn solve_unchecked(&self, y: &DVector<f64>, k: usize) -> SparseCode {
        let l = self.dict.ncols();
        let floor = OMP_RESIDUAL_FLOOR * y.norm().max(1.0);
        let mut support: Vec<usize> = Vec::with_capacity(k);
        let mut selected = vec![false; l];
        let mut residual = y.clone();
        let mut coef = DVector::zeros(0);
        let mut rank_deficient = false;

        while support.len() < k && residual.norm() > floor {
            let corr = self.dict.tr_mul(&residual);
            let mut best = None;
            let mut best_val = -1.0;
            for j in 0..l {
                if selected[j] || self.inv_norms[j] == 0.0 {
                    continue;
                }
                let c = corr[j].abs() * self.inv_norms[j];
                // Strict comparison keeps the lowest index on ties.
                if c > best_val {
                    best_val = c;
                    best = Some(j);
                }
            }
            let Some(j) = best else { break };
            selected[j] = true;
            support.push(j);

            let sub = self.dict.select_columns(&support);
            let svd = sub.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let eps = OMP_RANK_RTOL * smax;
            rank_deficient = svd.singular_values.iter().any(|&s| s <= eps);
            coef = svd
                .solve(y, eps)
                .expect("SVD was computed with both U and Vᵀ");
            residual = y - &sub * &coef;
        }

        let mut values = DVector::zeros(l);
        for (&j, &c) in support.iter().zip(coef.iter()) {
            values[j] = c;
        }
        SparseCode {
            residual_norm: residual.norm(),
            values,
            support,
            rank_deficient,
        }
    }
}

/// Greedy `K`-atom approximation of `y` in `D`.
pub fn omp(d: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<SparseCode> {
    OmpSolver::new(d)?.solve(y, k)
}

/// `x = Ψθ`
pub fn reconstruct(psi: &Dictionary, code: &SparseCode) -> Result<DVector<f64>> {
    if code.values.len() != psi.atoms() {
        return Err(Error::invalid(format!(
            "code has length {} but Ψ has {} atoms",
            code.values.len(),
            psi.atoms()
        )));
    }
    Ok(psi.matrix() * &code.values)
}

/// Runs [`omp`] on every column of `y`, preserving column order.
pub fn batch_recover(d: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> Result<Vec<SparseCode>> {
    let solver = OmpSolver::new(d)?;
    solver.check_k(k)?;
    if y.nrows() != d.nrows() {
        return Err(Error::invalid(format!(
            "measurements have {} rows but the dictionary has {}",
            y.nrows(),
            d.nrows()
        )));
    }
    let cols: Vec<DVector<f64>> = y.column_iter().map(|c| c.into_owned()).collect();
    Ok(parallel::map(&cols, |col| solver.solve_unchecked(col, k)))
}

/// Stacks recovered codes as the columns of an `L × P` matrix.
pub fn codes_matrix(codes: &[SparseCode], atoms: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(atoms, codes.len());
    for (p, c) in codes.iter().enumerate() {
        out.set_column(p, &c.values);
    }
    out
}

pub const CODES_HEADER: &str = "signal_index,atom_index,value";

/// `signal_index,atom_index,value` rows for every nonzero, in selection order.
pub fn codes_csv(codes: &[SparseCode]) -> String {
    let mut out = String::from(CODES_HEADER);
    out.push('\n');
    for (p, c) in codes.iter().enumerate() {
        for &j in &c.support {
            let _ = writeln!(out, "{p},{j},{}", fmt_f64(c.values[j]));
        }
    }
    out
}
