//! Robust projection-matrix design for compressive sensing.
//!
//! A sensing matrix `Φ` (M×N) is designed for a fixed dictionary `Ψ` (N×L) by
//! minimizing the distortion of the Gram matrix of the equivalent dictionary
//! `D = ΦΨ` plus a Frobenius-norm energy penalty on `Φ`:
//!
//! ```text
//! f(Φ, G) = ‖G − Ψᵀ Φᵀ Φ Ψ‖²_F + λ ‖Φ‖²_F
//! ```
//!
//! The penalty stands in for the projected sparse-representation error
//! `‖ΦE‖²_F`, so no training data is needed. The SRE-dependent designs
//! (`λ‖ΦE‖²_F`) are available as baselines.
//!
//! Module map:
//!
//! * [`coherence`]: Gram matrices, mutual / average coherence, Welch bound.
//! * [`objective`]: design objectives, analytic gradients, gradient checker.
//! * [`solver`]: Polak–Ribière+ CG, relaxed-ETF projection, alternating design.
//! * [`recovery`]: orthogonal matching pursuit.
//! * [`synth`]: synthetic dictionaries, codes, signals and the Monte-Carlo
//!   check of the `‖ΦE‖²_F ≈ Pσ²‖Φ‖²_F` law.
//! * [`experiments`]: error metrics and sweep harnesses emitting CSV records.
//! * [`cli`]: the `robust-cs` command-line front end.

pub mod cli;
pub mod coherence;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod matrix_io;
pub mod objective;
pub mod parallel;
pub mod recovery;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod tolerance;

pub use coherence::{
    average_mutual_coherence, coherence_report, gram, measure, mutual_coherence,
    normalize_columns, recoverable_sparsity, welch_bound, CoherenceReport, Dictionary,
    EquivalentDictionary, GramMatrix, ProjectionMatrix,
};
pub use error::{Error, Result};
pub use recovery::{batch_recover, omp, reconstruct, SparseCode};
pub use objective::{
    gradient_check, objective_gradient, objective_value, GradientCheckReport, ObjectiveSpec,
    SreMatrix,
};

pub use solver::{
    alternating_design, cg_minimize, design_lh, design_lh_etf, design_mt, design_mt_etf,
    project_to_h_xi, random_projection, DesignResult, LineSearchConfig, Method,
    RelaxedEtfTarget, SolverConfig, TraceRow,
};

pub use nalgebra::{DMatrix, DVector};
