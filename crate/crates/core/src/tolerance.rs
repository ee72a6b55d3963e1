//! Numerical tolerances shared across the crate.

/// Columns with Euclidean norm below this are treated as degenerate (dead atoms).
pub const DEGENERATE_COLUMN_NORM: f64 = 1e-12;

/// Relative tolerance for Gram symmetry and unit-diagonal checks.
pub const GRAM_SYMMETRY: f64 = 1e-12;

/// Slack allowed above 1 for a coherence value before it is treated as an error.
pub const COHERENCE_SLACK: f64 = 1e-12;

/// Half-open interval snapping for `K < (1 + 1/μ)/2`: a bound within this distance
/// of an integer is treated as that integer (the inequality is strict).
pub const SPARSITY_BOUND_SNAP: f64 = 1e-12;

/// OMP stops early once the residual norm falls below this, relative to `max(1, ‖y‖)`.
pub const OMP_RESIDUAL_FLOOR: f64 = 1e-12;

/// Singular values below this fraction of the largest mark a rank-deficient OMP support.
pub const OMP_RANK_RTOL: f64 = 1e-12;

/// Default step for central-difference gradient checks.
pub const GRADIENT_CHECK_STEP: f64 = 1e-6;
