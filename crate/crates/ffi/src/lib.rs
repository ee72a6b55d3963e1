//! C ABI over `robust-cs`.
//!
//! Matrices and designs are opaque heap handles owned by the caller and released with
//! their `_free` function. Every call returns an [`RcsStatus`]; on failure the message is
//! available from [`rcs_last_error_message`] on the same thread. Dense data crosses the
//! boundary in row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use robust_cs::matrix_io::{read_matrix, write_matrix};
use robust_cs::{
    average_mutual_coherence, design_lh, design_mt, design_mt_etf, mutual_coherence, omp,
    random_projection, welch_bound, DMatrix, DVector, DesignResult, Dictionary, Error,
    ProjectionMatrix, SolverConfig, SreMatrix,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcsStatus {
    Ok = 0,
    InvalidInput = 1,
    Io = 2,
    Parse = 3,
    /// The design finished without meeting the gradient tolerance. The output handle is
    /// still written and usable.
    NotConverged = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Dense `f64` matrix.
pub struct RcsMatrix(DMatrix<f64>);

/// A finished projection design.
pub struct RcsDesign(DesignResult);

/// The solver settings exposed over the ABI; everything else keeps its default.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RcsSolverConfig {
    pub max_cg_iterations: usize,
    pub grad_tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(RcsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_) => RcsStatus::InvalidInput,
            Error::Io { .. } => RcsStatus::Io,
            Error::Parse { .. } => RcsStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RcsStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(f: F) -> RcsStatus
where
    F: FnOnce() -> Result<RcsStatus, Failure>,
{
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => (s, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(payload) => {
            let m = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (RcsStatus::Panic, format!("panic: {m}"))
        }
    };
    set_last_error(&msg);
    status
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_scalar<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(RcsStatus::InvalidInput, "path is not valid UTF-8".into()))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RcsStatus::InvalidInput, msg.into())
}

/// Message of the last failed call on this thread, or an empty string. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rcs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rcs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// matrices

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut RcsMatrix,
) -> RcsStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let m = if len == 0 {
            DMatrix::zeros(rows, cols)
        } else {
            DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(data, len))
        };
        put(out, RcsMatrix(m))?;
        Ok(RcsStatus::Ok)
    })
}

/// # Safety
/// `m` must come from this library and not be freed already. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_free(m: *mut RcsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Rows of `m`, 0 if `m` is null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_rows(m: *const RcsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.nrows())
}

/// Columns of `m`, 0 if `m` is null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_cols(m: *const RcsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.ncols())
}

/// Copies the entries in row-major order into `buf`, which must hold `len ≥ rows * cols`.
///
/// # Safety
/// `m` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_copy(m: *const RcsMatrix, buf: *mut f64, len: usize) -> RcsStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.0;
        let need = m.len();
        if len < need {
            return Err(invalid(format!("buffer holds {len} values, matrix has {need}")));
        }
        if need == 0 {
            return Ok(RcsStatus::Ok);
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        let cols = m.ncols();
        for (i, row) in m.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * cols + j] = *v;
            }
        }
        Ok(RcsStatus::Ok)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_read_csv(path: *const c_char, out: *mut *mut RcsMatrix) -> RcsStatus {
    guard(|| {
        let m = read_matrix(path_arg(path)?)?;
        put(out, RcsMatrix(m))?;
        Ok(RcsStatus::Ok)
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rcs_matrix_write_csv(m: *const RcsMatrix, path: *const c_char) -> RcsStatus {
    guard(|| {
        write_matrix(path_arg(path)?, &deref(m, "matrix")?.0)?;
        Ok(RcsStatus::Ok)
    })
}

// coherence

/// Mutual coherence of the columns of `d`.
///
/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_mutual_coherence(d: *const RcsMatrix, out: *mut f64) -> RcsStatus {
    guard(|| {
        write_scalar(out, mutual_coherence(&deref(d, "matrix")?.0)?)?;
        Ok(RcsStatus::Ok)
    })
}

/// Mean magnitude of the normalized Gram off-diagonals at or above `mu_bar`, and how many
/// there were.
///
/// # Safety
/// `d` must be a live handle; `out_value` and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_average_mutual_coherence(
    d: *const RcsMatrix,
    mu_bar: f64,
    out_value: *mut f64,
    out_count: *mut usize,
) -> RcsStatus {
    guard(|| {
        let (v, n) = average_mutual_coherence(&deref(d, "matrix")?.0, mu_bar)?;
        write_scalar(out_value, v)?;
        write_scalar(out_count, n)?;
        Ok(RcsStatus::Ok)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_welch_bound(m: usize, l: usize, out: *mut f64) -> RcsStatus {
    guard(|| {
        write_scalar(out, welch_bound(m, l)?)?;
        Ok(RcsStatus::Ok)
    })
}

// generators

/// Gaussian `n × l` dictionary with unit-norm columns.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_gen_dictionary(n: usize, l: usize, seed: u64, out: *mut *mut RcsMatrix) -> RcsStatus {
    guard(|| {
        let d = robust_cs::synth::gen_dictionary(n, l, seed)?;
        put(out, RcsMatrix(d.into_inner()))?;
        Ok(RcsStatus::Ok)
    })
}

/// Gaussian `m × n` projection, the usual starting point of a design.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_random_projection(m: usize, n: usize, seed: u64, out: *mut *mut RcsMatrix) -> RcsStatus {
    guard(|| {
        put(out, RcsMatrix(random_projection(m, n, seed)?.into_inner()))?;
        Ok(RcsStatus::Ok)
    })
}

// designs

#[no_mangle]
pub extern "C" fn rcs_solver_config_default() -> RcsSolverConfig {
    let d = SolverConfig::default();
    RcsSolverConfig {
        max_cg_iterations: d.max_cg_iterations,
        grad_tol: d.grad_tol,
    }
}

unsafe fn solver_config(cfg: *const RcsSolverConfig) -> SolverConfig {
    let mut out = SolverConfig::default();
    if let Some(c) = cfg.as_ref() {
        out.max_cg_iterations = c.max_cg_iterations;
        out.grad_tol = c.grad_tol;
    }
    out
}

unsafe fn finish_design(result: DesignResult, out: *mut *mut RcsDesign) -> Result<RcsStatus, Failure> {
    let converged = result.converged;
    put(out, RcsDesign(result))?;
    if converged {
        Ok(RcsStatus::Ok)
    } else {
        Err(Failure(
            RcsStatus::NotConverged,
            "design stopped at the iteration cap before reaching the gradient tolerance".into(),
        ))
    }
}

unsafe fn design_inputs(
    psi: *const RcsMatrix,
    phi0: *const RcsMatrix,
) -> Result<(Dictionary, ProjectionMatrix), Failure> {
    let psi = Dictionary::new(deref(psi, "dictionary")?.0.clone())?;
    let phi0 = ProjectionMatrix::new(deref(phi0, "initial projection")?.0.clone())?;
    Ok((psi, phi0))
}

/// Minimizes `‖I − ΨᵀΦᵀΦΨ‖² + λ‖Φ‖²` from `phi0`. `cfg` may be null for defaults.
///
/// # Safety
/// Handles must be live, `cfg` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_mt(
    psi: *const RcsMatrix,
    lambda: f64,
    phi0: *const RcsMatrix,
    cfg: *const RcsSolverConfig,
    out: *mut *mut RcsDesign,
) -> RcsStatus {
    guard(|| {
        let (psi, phi0) = design_inputs(psi, phi0)?;
        finish_design(design_mt(&psi, lambda, &phi0, &solver_config(cfg))?, out)
    })
}

/// Alternates Gram projections onto the `ξ`-relaxed ETF set with the regularized fit.
///
/// # Safety
/// Handles must be live, `cfg` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_mt_etf(
    psi: *const RcsMatrix,
    lambda: f64,
    xi: f64,
    outer_iters: usize,
    phi0: *const RcsMatrix,
    cfg: *const RcsSolverConfig,
    out: *mut *mut RcsDesign,
) -> RcsStatus {
    guard(|| {
        let (psi, phi0) = design_inputs(psi, phi0)?;
        let r = design_mt_etf(&psi, lambda, xi, outer_iters, &phi0, &solver_config(cfg))?;
        finish_design(r, out)
    })
}

/// Baseline design penalizing `λ‖ΦE‖²` for a sparse-representation-error matrix `E`.
///
/// # Safety
/// Handles must be live, `cfg` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_lh(
    psi: *const RcsMatrix,
    lambda: f64,
    sre: *const RcsMatrix,
    phi0: *const RcsMatrix,
    cfg: *const RcsSolverConfig,
    out: *mut *mut RcsDesign,
) -> RcsStatus {
    guard(|| {
        let (psi, phi0) = design_inputs(psi, phi0)?;
        let sre = SreMatrix::new(deref(sre, "SRE matrix")?.0.clone())?;
        finish_design(design_lh(&psi, lambda, &sre, &phi0, &solver_config(cfg))?, out)
    })
}

/// Copies the designed projection into a new matrix handle.
///
/// # Safety
/// `design` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_phi(design: *const RcsDesign, out: *mut *mut RcsMatrix) -> RcsStatus {
    guard(|| {
        let d = deref(design, "design")?;
        put(out, RcsMatrix(d.0.phi.matrix().clone()))?;
        Ok(RcsStatus::Ok)
    })
}

/// 1 if the design met its gradient tolerance, 0 otherwise or for null.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_converged(design: *const RcsDesign) -> i32 {
    design.as_ref().map_or(0, |d| i32::from(d.0.converged))
}

/// Objective value after the last iteration; NaN for null or an empty trace.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_final_objective(design: *const RcsDesign) -> f64 {
    design.as_ref().map_or(f64::NAN, |d| d.0.final_objective())
}

/// # Safety
/// `design` must come from this library and not be freed already. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rcs_design_free(design: *mut RcsDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

// recovery

/// OMP with at most `k` atoms of `d` for the measurement `y` (length `rows(d)`). Writes the
/// dense coefficient vector, `cols(d)` values, into `coeffs`.
///
/// # Safety
/// `d` must be a live handle, `y` readable for `y_len` doubles, `coeffs` writable for
/// `coeffs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rcs_omp(
    d: *const RcsMatrix,
    y: *const f64,
    y_len: usize,
    k: usize,
    coeffs: *mut f64,
    coeffs_len: usize,
) -> RcsStatus {
    guard(|| {
        let d = &deref(d, "dictionary")?.0;
        if y.is_null() {
            return Err(null("y"));
        }
        if coeffs.is_null() {
            return Err(null("coeffs"));
        }
        if coeffs_len < d.ncols() {
            return Err(invalid(format!("coeffs holds {coeffs_len} values, dictionary has {} atoms", d.ncols())));
        }
        let yv = DVector::from_column_slice(std::slice::from_raw_parts(y, y_len));
        let code = omp(d, &yv, k)?;
        std::slice::from_raw_parts_mut(coeffs, d.ncols()).copy_from_slice(code.values.as_slice());
        Ok(RcsStatus::Ok)
    })
}
