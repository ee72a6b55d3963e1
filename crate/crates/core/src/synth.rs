//! Synthetic dictionaries, sparse codes and noisy signals, plus a Monte-Carlo
//! check of the projected-noise law `E‖ΦE‖²_F = Pσ²‖Φ‖²_F`.
//!
//! Every generator is a pure function of its parameters and seed. Each purpose
//! (dictionary, codes, noise, Monte-Carlo draws) has its own stream.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use crate::coherence::{normalize_columns, Dictionary, ProjectionMatrix};
use crate::error::{Error, Result};
use crate::matrix_io::{fmt_f64, write_matrix};
use crate::objective::SreMatrix;
use crate::rng::{standard_normal_matrix, stream_rng, Stream};

/// `N × L` Gaussian dictionary with unit-norm columns.
pub fn gen_dictionary(n: usize, l: usize, seed: u64) -> Result<Dictionary> {
    if n == 0 || l == 0 {
        return Err(Error::invalid("dictionary needs N, L ≥ 1"));
    }
    let raw = standard_normal_matrix(&mut stream_rng(seed, Stream::Dictionary, 0), n, l);
    Dictionary::new(normalize_columns(&raw).normalized)
}

/// `L × count` matrix whose columns each carry exactly `K` standard-normal entries at
/// uniformly drawn positions.
pub fn gen_sparse_codes(l: usize, k: usize, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k == 0 || k > l {
        return Err(Error::invalid(format!("sparsity must satisfy 1 ≤ K ≤ L, got K={k}, L={l}")));
    }
    let mut rng = stream_rng(seed, Stream::Codes, 0);
    let mut theta = DMatrix::zeros(l, count);
    for c in 0..count {
        let support = sample(&mut rng, l, k);
        for j in support.iter() {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            // A draw of exactly 0.0 would shrink the support.
            while v == 0.0 {
                v = StandardNormal.sample(&mut rng);
            }
            theta[(j, c)] = v;
        }
    }
    Ok(theta)
}

/// Training/testing signals `X = ΨΘ + Δ`. The first half of the columns is the
/// training split (its noise is the SRE matrix), the second half is test-only.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub psi: Dictionary,
    pub theta: DMatrix<f64>,
    pub x0: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub sigma: f64,
    pub target_snr_db: f64,
    /// `10·log10(‖X0‖²_F / ‖Δ‖²_F)`, `+∞` when noiseless.
    pub snr_db: f64,
    pub seed: u64,
}

impl SyntheticDataset {
    /// Signals per split.
    pub fn p(&self) -> usize {
        self.x.ncols() / 2
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.p()
    }

    pub fn test_range(&self) -> Range<usize> {
        self.p()..2 * self.p()
    }

    /// `E = Δ(:, 1:P)`, the only part of the noise visible to SRE-based designs.
    pub fn train_sre(&self) -> SreMatrix {
        SreMatrix::new(self.delta.columns_range(self.train_range()).into_owned())
            .expect("noise is finite")
    }

    pub fn test_signals(&self) -> DMatrix<f64> {
        self.x.columns_range(self.test_range()).into_owned()
    }

    pub fn test_clean(&self) -> DMatrix<f64> {
        self.x0.columns_range(self.test_range()).into_owned()
    }

    pub fn test_noise(&self) -> DMatrix<f64> {
        self.delta.columns_range(self.test_range()).into_owned()
    }

    pub fn test_codes(&self) -> DMatrix<f64> {
        self.theta.columns_range(self.test_range()).into_owned()
    }

    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.psi.signal_dim());
        let _ = writeln!(s, "l={}", self.psi.atoms());
        let _ = writeln!(s, "p={}", self.p());
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "sigma={}", fmt_f64(self.sigma));
        let _ = writeln!(s, "target_snr_db={}", fmt_f64(self.target_snr_db));
        let _ = writeln!(s, "achieved_snr_db={}", fmt_f64(self.snr_db));
        s
    }

    /// Writes `psi.csv`, `theta.csv`, `x0.csv`, `delta.csv` and `manifest.txt`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_matrix(dir.join("psi.csv"), self.psi.matrix())?;
        write_matrix(dir.join("theta.csv"), &self.theta)?;
        write_matrix(dir.join("x0.csv"), &self.x0)?;
        write_matrix(dir.join("delta.csv"), &self.delta)?;
        let manifest = dir.join("manifest.txt");
        fs::write(&manifest, self.manifest()).map_err(|e| Error::io(&manifest, e))
    }
}

/// Adds white Gaussian noise with `σ² = ‖X0‖²_F·10^(−snr/10) / (N·2P)`, so the
/// expected dataset SNR equals `snr_db`. `snr_db = +∞` gives noiseless signals.
pub fn gen_signals(
    psi: &Dictionary,
    theta: &DMatrix<f64>,
    snr_db: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if theta.nrows() != psi.atoms() {
        return Err(Error::invalid(format!(
            "codes have {} rows but Ψ has {} atoms",
            theta.nrows(),
            psi.atoms()
        )));
    }
    if theta.ncols() < 2 || theta.ncols() % 2 != 0 {
        return Err(Error::invalid(format!(
            "need an even number (≥ 2) of signals for the train/test split, got {}",
            theta.ncols()
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let x0 = psi.matrix() * theta;
    let energy = x0.norm_squared();
    if energy == 0.0 {
        return Err(Error::invalid("clean signals have zero energy; SNR is undefined"));
    }
    let (n, cols) = x0.shape();
    let sigma = if snr_db == f64::INFINITY {
        0.0
    } else {
        (energy * 10f64.powf(-snr_db / 10.0) / (n * cols) as f64).sqrt()
    };
    let delta = if sigma == 0.0 {
        DMatrix::zeros(n, cols)
    } else {
        standard_normal_matrix(&mut stream_rng(seed, Stream::Noise, 0), n, cols) * sigma
    };
    let noise = delta.norm_squared();
    let achieved = if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (energy / noise).log10()
    };
    let x = &x0 + &delta;
    Ok(SyntheticDataset {
        psi: psi.clone(),
        theta: theta.clone(),
        x0,
        delta,
        x,
        sigma,
        target_snr_db: snr_db,
        snr_db: achieved,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    pub p: usize,
    pub sigma: f64,
    /// `‖ΦE‖²_F / P`
    pub mean_estimate: f64,
    /// `σ²‖Φ‖²_F`
    pub predicted_mean: f64,
    /// Sample variance of `‖Φe_k‖²`.
    pub variance_estimate: f64,
    /// `2σ⁴‖ΦΦᵀ‖²_F`
    pub predicted_variance: f64,
    /// `√P (mean_estimate − predicted_mean) / √predicted_variance`
    pub z_score: f64,
}

pub const LEMMA1_CSV_HEADER: &str =
    "p,sigma,mean_estimate,predicted_mean,variance_estimate,predicted_variance,z_score";

impl Lemma1Report {
    pub fn relative_mean_error(&self) -> f64 {
        (self.mean_estimate - self.predicted_mean).abs() / self.predicted_mean
    }

    pub fn variance_ratio(&self) -> f64 {
        self.variance_estimate / self.predicted_variance
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p={}", self.p);
        let _ = writeln!(s, "sigma={}", fmt_f64(self.sigma));
        let _ = writeln!(s, "mean_estimate={}", fmt_f64(self.mean_estimate));
        let _ = writeln!(s, "predicted_mean={}", fmt_f64(self.predicted_mean));
        let _ = writeln!(s, "relative_mean_error={}", fmt_f64(self.relative_mean_error()));
        let _ = writeln!(s, "variance_estimate={}", fmt_f64(self.variance_estimate));
        let _ = writeln!(s, "predicted_variance={}", fmt_f64(self.predicted_variance));
        let _ = writeln!(s, "variance_ratio={}", fmt_f64(self.variance_ratio()));
        let _ = writeln!(s, "z_score={}", fmt_f64(self.z_score));
        s
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.p,
            fmt_f64(self.sigma),
            fmt_f64(self.mean_estimate),
            fmt_f64(self.predicted_mean),
            fmt_f64(self.variance_estimate),
            fmt_f64(self.predicted_variance),
            fmt_f64(self.z_score)
        )
    }
}

const LEMMA1_CHUNK: usize = 4096;

/// Draws `P` vectors `e_k ~ N(0, σ²I_N)` and compares `‖ΦE‖²_F` with its predicted
/// mean and variance.
pub fn lemma1_check(phi: &ProjectionMatrix, sigma: f64, p: usize, seed: u64) -> Result<Lemma1Report> {
    if p < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got P={p}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("σ must be positive, got {sigma}")));
    }
    let phi_m = phi.matrix();
    let n = phi.signal_dim();
    let mut rng = stream_rng(seed, Stream::Lemma1, 0);

    // Welford over the per-sample energies ‖Φe_k‖².
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut done = 0;
    while done < p {
        let b = LEMMA1_CHUNK.min(p - done);
        let e = standard_normal_matrix(&mut rng, n, b) * sigma;
        let projected = phi_m * e;
        for col in projected.column_iter() {
            let v = col.norm_squared();
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
        done += b;
    }
    let variance_estimate = m2 / (count - 1) as f64;
    let s2 = sigma * sigma;
    let predicted_mean = s2 * phi.energy();
    let ppt = phi_m * phi_m.transpose();
    let predicted_variance = 2.0 * s2 * s2 * ppt.norm_squared();
    let z_score = (p as f64).sqrt() * (mean - predicted_mean) / predicted_variance.sqrt();
    Ok(Lemma1Report {
        p,
        sigma,
        mean_estimate: mean,
        predicted_mean,
        variance_estimate,
        predicted_variance,
        z_score,
    })
}
