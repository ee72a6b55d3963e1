//! Matrix model of a CS system and its coherence statistics.
//!
//! All coherence quantities are computed on the column-normalized equivalent
//! dictionary `D̄ = D·S` where `S` scales every column to unit length. Columns
//! whose norm is below [`DEGENERATE_COLUMN_NORM`] are reported as degenerate and
//! left out of every statistic.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerance::{
    COHERENCE_SLACK, DEGENERATE_COLUMN_NORM, GRAM_SYMMETRY, SPARSITY_BOUND_SNAP,
};

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// An `N × L` dictionary whose columns are atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary(DMatrix<f64>);

impl Dictionary {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("dictionary must have at least one row and column"));
        }
        check_finite(&data, "dictionary")?;
        Ok(Dictionary(data))
    }

    pub fn signal_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// An `M × N` sensing matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix(DMatrix<f64>);

impl ProjectionMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("projection matrix must be non-empty"));
        }
        check_finite(&data, "projection matrix")?;
        Ok(ProjectionMatrix(data))
    }

    pub fn measurements(&self) -> usize {
        self.0.nrows()
    }

    pub fn signal_dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `‖Φ‖²_F`
    pub fn energy(&self) -> f64 {
        self.0.norm_squared()
    }
}

fn fingerprint(m: &DMatrix<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    m.nrows().hash(&mut h);
    m.ncols().hash(&mut h);
    for v in m.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// `D = ΦΨ`, tagged with fingerprints of the two factors.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentDictionary {
    data: DMatrix<f64>,
    provenance: (u64, u64),
}

impl EquivalentDictionary {
    pub fn new(phi: &ProjectionMatrix, psi: &Dictionary) -> Result<Self> {
        if phi.signal_dim() != psi.signal_dim() {
            return Err(Error::invalid(format!(
                "Φ is {}×{} but Ψ has {} rows",
                phi.measurements(),
                phi.signal_dim(),
                psi.signal_dim()
            )));
        }
        Ok(EquivalentDictionary {
            data: phi.matrix() * psi.matrix(),
            provenance: (fingerprint(phi.matrix()), fingerprint(psi.matrix())),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// True when `(phi, psi)` are the factors this was built from.
    pub fn derived_from(&self, phi: &ProjectionMatrix, psi: &Dictionary) -> bool {
        self.provenance == (fingerprint(phi.matrix()), fingerprint(psi.matrix()))
    }
}

/// Result of [`normalize_columns`].
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnNormalization {
    pub normalized: DMatrix<f64>,
    /// Original Euclidean norm of every column.
    pub scales: Vec<f64>,
    /// Indices of columns with norm below the degeneracy threshold, zeroed in `normalized`.
    pub degenerate: Vec<usize>,
}

pub fn normalize_columns(d: &DMatrix<f64>) -> ColumnNormalization {
    let mut normalized = d.clone();
    let mut scales = Vec::with_capacity(d.ncols());
    let mut degenerate = Vec::new();
    for (j, mut col) in normalized.column_iter_mut().enumerate() {
        let norm = col.norm();
        scales.push(norm);
        if norm < DEGENERATE_COLUMN_NORM {
            degenerate.push(j);
            col.fill(0.0);
        } else {
            col /= norm;
        }
    }
    ColumnNormalization {
        normalized,
        scales,
        degenerate,
    }
}

/// Gram matrix `D̄ᵀD̄` of the column-normalized matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub data: DMatrix<f64>,
    pub normalized: bool,
    pub degenerate: Vec<usize>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.data.amax().max(1.0);
        let n = self.dim();
        (0..n).all(|i| {
            (0..i).all(|j| (self.data[(i, j)] - self.data[(j, i)]).abs() <= GRAM_SYMMETRY * scale)
        })
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.dim())
            .filter(|i| !self.degenerate.contains(i))
            .all(|i| (self.data[(i, i)] - 1.0).abs() <= GRAM_SYMMETRY)
    }

    /// Absolute off-diagonal entries `(i, j)`, `i ≠ j`, over non-degenerate columns.
    fn off_diagonal_abs(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.dim();
        let live: Vec<usize> = (0..n).filter(|i| !self.degenerate.contains(i)).collect();
        let live2 = live.clone();
        live.into_iter().flat_map(move |i| {
            live2
                .clone()
                .into_iter()
                .filter(move |&j| j != i)
                .map(move |j| self.data[(i, j)].abs())
        })
    }
}

pub fn gram(d: &DMatrix<f64>) -> GramMatrix {
    let ColumnNormalization {
        normalized,
        degenerate,
        ..
    } = normalize_columns(d);
    let mut data = normalized.tr_mul(&normalized);
    // Exact symmetry: copy the lower triangle over the upper.
    let n = data.nrows();
    for i in 0..n {
        for j in 0..i {
            data[(j, i)] = data[(i, j)];
        }
    }
    GramMatrix {
        data,
        normalized: true,
        degenerate,
    }
}

fn live_columns(g: &GramMatrix) -> usize {
    g.dim() - g.degenerate.len()
}

/// Largest absolute off-diagonal entry of the normalized Gram matrix, clamped to `[0, 1]`.
pub fn mutual_coherence(d: &DMatrix<f64>) -> Result<f64> {
    let g = gram(d);
    mutual_coherence_of(&g)
}

fn mutual_coherence_of(g: &GramMatrix) -> Result<f64> {
    if live_columns(g) < 2 {
        return Err(Error::invalid(
            "mutual coherence needs at least two non-degenerate columns",
        ));
    }
    // Normalized inner products can overshoot 1 by a few ulps.
    let mu = g.off_diagonal_abs().fold(0.0, f64::max);
    Ok(mu.clamp(0.0, 1.0))
}

/// Mean of the off-diagonal `|Ḡ(i,j)| ≥ mu_bar`, together with how many entries qualified.
///
/// Ordered pairs are counted, so both `(i, j)` and `(j, i)` contribute. Returns
/// `(0, 0)` when nothing qualifies.
pub fn average_mutual_coherence(d: &DMatrix<f64>, mu_bar: f64) -> Result<(f64, usize)> {
    average_mutual_coherence_of(&gram(d), mu_bar)
}

fn average_mutual_coherence_of(g: &GramMatrix, mu_bar: f64) -> Result<(f64, usize)> {
    if !(0.0..1.0).contains(&mu_bar) {
        return Err(Error::invalid(format!("mu_bar must lie in [0, 1), got {mu_bar}")));
    }
    let (sum, count) = g
        .off_diagonal_abs()
        .filter(|&v| v >= mu_bar)
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        Ok((0.0, 0))
    } else {
        Ok((sum / count as f64, count))
    }
}

/// `√((L − M) / (M (L − 1)))`, the lower bound on the coherence of `L` unit vectors in `ℝ^M`.
pub fn welch_bound(m: usize, l: usize) -> Result<f64> {
    if m == 0 || l < 2 || m > l {
        return Err(Error::invalid(format!(
            "Welch bound needs 1 ≤ M ≤ L and L ≥ 2, got M={m}, L={l}"
        )));
    }
    let (m, l) = (m as f64, l as f64);
    Ok(((l - m) / (m * (l - 1.0))).sqrt())
}

/// Largest `K` with `K < (1 + 1/μ) / 2`.
pub fn recoverable_sparsity(mu: f64) -> Result<usize> {
    if !(mu > 0.0) || !mu.is_finite() || mu > 1.0 + COHERENCE_SLACK {
        return Err(Error::invalid(format!(
            "recoverable sparsity needs 0 < μ ≤ 1, got {mu}"
        )));
    }
    let bound = 0.5 * (1.0 + 1.0 / mu.min(1.0));
    let nearest = bound.round();
    let k = if (bound - nearest).abs() <= SPARSITY_BOUND_SNAP * bound.max(1.0) {
        nearest - 1.0
    } else {
        bound.ceil() - 1.0
    };
    Ok(k.max(0.0) as usize)
}

/// `Y = ΦX`.
pub fn measure(phi: &ProjectionMatrix, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if phi.signal_dim() != x.nrows() {
        return Err(Error::invalid(format!(
            "Φ has {} columns but X has {} rows",
            phi.signal_dim(),
            x.nrows()
        )));
    }
    Ok(phi.matrix() * x)
}

/// The coherence columns of a design report.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    pub mu_av: f64,
    pub mu_bar_threshold: f64,
    pub welch: f64,
    pub n_av: usize,
    /// `‖I_L − Ḡ‖²_F` on the normalized Gram matrix.
    pub gram_distortion: f64,
    /// `‖Φ‖²_F`
    pub phi_energy: f64,
}

pub fn coherence_report(
    phi: &ProjectionMatrix,
    psi: &Dictionary,
    mu_bar: f64,
) -> Result<CoherenceReport> {
    let d = EquivalentDictionary::new(phi, psi)?;
    let g = gram(d.matrix());
    let mu = mutual_coherence_of(&g)?;
    let (mu_av, n_av) = average_mutual_coherence_of(&g, mu_bar)?;
    let m = phi.measurements();
    let l = psi.atoms();
    let welch = if m <= l { welch_bound(m, l)? } else { 0.0 };
    let gram_distortion = (DMatrix::identity(l, l) - &g.data).norm_squared();
    Ok(CoherenceReport {
        mu,
        mu_av,
        mu_bar_threshold: mu_bar,
        welch,
        n_av,
        gram_distortion,
        phi_energy: phi.energy(),
    })
}
