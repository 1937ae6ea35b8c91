//! C ABI for the structural regularization estimators and the Monte Carlo
//! harness.
//!
//! Every function returns an [`SreStatus`]. On failure the message is kept
//! per thread and read with [`sre_last_error_message`]. Matrices are dense
//! and row-major. Reports are opaque handles released with
//! [`sre_report_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};
use sre::apps::auction::{equilibrium_bid, ValueDist};
use sre::apps::{CurvePoint, EstimatorKind, EvalDomain};
use sre::harness::{emit_outputs, metrics, run_monte_carlo, MonteCarloReport, RunConfig};
use sre::{PenaltySpec, SreError};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Singular = 5,
    WeakInstrument = 6,
    Simulation = 7,
    Config = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
    /// Anything else the core library reports; see the message.
    Other = 11,
}

/// Private value law for [`sre_equilibrium_bid`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SreValueDist {
    Uniform = 0,
    /// Beta with the integer shapes passed alongside.
    Beta = 1,
}

/// One row of a report's summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SreAggregate {
    /// 0 statistical, 1 structural, 2 sre, 3 sre-crossfit.
    pub estimator: u32,
    /// 0 in-domain, 1 out-of-domain.
    pub domain: u32,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub trials: u64,
}

/// Opaque Monte Carlo report.
pub struct SreReport {
    inner: MonteCarloReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SreError) -> SreStatus {
    match e.root() {
        SreError::EmptyDataset | SreError::InvalidArgument(_) => SreStatus::InvalidArgument,
        SreError::DimensionMismatch { .. } => SreStatus::DimensionMismatch,
        SreError::NonFinite(_) | SreError::NonFiniteObjective(_) => SreStatus::NonFinite,
        SreError::SingularDesign
        | SreError::RankDeficientProjection
        | SreError::SingularBracket
        | SreError::NotPositiveSemiDefinite => SreStatus::Singular,
        SreError::WeakInstrument { .. } => SreStatus::WeakInstrument,
        SreError::Simulation(_) | SreError::InsufficientTransitions(_) => SreStatus::Simulation,
        SreError::Config(_) => SreStatus::Config,
        SreError::Io(_) => SreStatus::Io,
        _ => SreStatus::Other,
    }
}

struct Failure(SreStatus, String);

impl From<SreError> for Failure {
    fn from(e: SreError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SreStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic, and returns the status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SreStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SreStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable values.
unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `rows * cols` readable values.
unsafe fn matrix(ptr: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(SreStatus::InvalidArgument, format!("{what} is too large")))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice(ptr, len, what)?))
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn string<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(SreStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sre_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sre_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ridge toward a target: minimizes `‖y − Xθ‖² + λ Σ w_j (θ_j − θ^M_j)²`.
/// `x` is `n × p`; `theta_m`, `weights` and `out_theta` have length `p`.
///
/// # Safety
/// Every pointer must reference the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn sre_ridge(
    n: usize,
    p: usize,
    x: *const f64,
    y: *const f64,
    theta_m: *const f64,
    weights: *const f64,
    lambda: f64,
    out_theta: *mut f64,
) -> SreStatus {
    guard(|| {
        let x = matrix(x, n, p, "x")?;
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let tm = slice(theta_m, p, "theta_m")?;
        let penalty = PenaltySpec::new(vec![lambda], slice(weights, p, "weights")?.to_vec())?;
        let theta = sre::sre_ridge(&x, &y, tm, &penalty, lambda)?;
        slice_mut(out_theta, p, "out_theta")?.copy_from_slice(&theta);
        Ok(())
    })
}

/// Penalized linear GMM with moments `Z'(y − Xθ)` and weight `W`: `x` is
/// `n × p`, `z` is `n × l`, `w` is `l × l`.
///
/// # Safety
/// Every pointer must reference the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn sre_gmm(
    n: usize,
    p: usize,
    l: usize,
    x: *const f64,
    z: *const f64,
    y: *const f64,
    w: *const f64,
    theta_m: *const f64,
    weights: *const f64,
    lambda: f64,
    out_theta: *mut f64,
) -> SreStatus {
    guard(|| {
        let x = matrix(x, n, p, "x")?;
        let z = matrix(z, n, l, "z")?;
        let w = matrix(w, l, l, "w")?;
        let y = DVector::from_column_slice(slice(y, n, "y")?);
        let tm = slice(theta_m, p, "theta_m")?;
        let penalty = PenaltySpec::new(vec![lambda], slice(weights, p, "weights")?.to_vec())?;
        let theta = sre::sre_gmm(&x, &z, &y, &w, tm, &penalty, lambda)?;
        slice_mut(out_theta, p, "out_theta")?.copy_from_slice(&theta);
        Ok(())
    })
}

/// Symmetric equilibrium bid of a first-price auction with `n` bidders at
/// value `v`. `beta_a`, `beta_b` are ignored for the uniform law.
///
/// # Safety
/// `out_bid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sre_equilibrium_bid(
    v: f64,
    n: u32,
    dist: SreValueDist,
    beta_a: u32,
    beta_b: u32,
    out_bid: *mut f64,
) -> SreStatus {
    guard(|| {
        let law = match dist {
            SreValueDist::Uniform => ValueDist::Uniform,
            SreValueDist::Beta => ValueDist::Beta { a: beta_a, b: beta_b },
        };
        let bid = equilibrium_bid(v, n, &law)?;
        if out_bid.is_null() {
            return Err(null("out_bid"));
        }
        *out_bid = bid;
        Ok(())
    })
}

/// Bias, variance and MSE of `trials` prediction curves over `points`
/// evaluation points. `predictions` is `trials × points`; `truth` has
/// length `points`.
///
/// # Safety
/// Every pointer must reference the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn sre_metrics(
    trials: usize,
    points: usize,
    truth: *const f64,
    predictions: *const f64,
    out_bias: *mut f64,
    out_variance: *mut f64,
    out_mse: *mut f64,
) -> SreStatus {
    guard(|| {
        if trials == 0 || points == 0 {
            return Err(Failure(
                SreStatus::InvalidArgument,
                "metrics need at least one trial and one point".into(),
            ));
        }
        let truth = slice(truth, points, "truth")?;
        let pred = matrix(predictions, trials, points, "predictions")?;
        let curves: Vec<CurvePoint> = (0..trials)
            .flat_map(|r| {
                let pred = &pred;
                (0..points).map(move |i| CurvePoint {
                    trial: r as u64,
                    estimator: EstimatorKind::Sre,
                    domain: EvalDomain::In,
                    x: i as f64,
                    truth: truth[i],
                    prediction: pred[(r, i)],
                })
            })
            .collect();
        let agg = &metrics(&curves)?[0];
        for (out, v, what) in [
            (out_bias, agg.bias, "out_bias"),
            (out_variance, agg.variance, "out_variance"),
            (out_mse, agg.mse, "out_mse"),
        ] {
            if out.is_null() {
                return Err(null(what));
            }
            *out = v;
        }
        Ok(())
    })
}

/// Runs the Monte Carlo experiment described by a TOML config. On success
/// `*out_report` owns a new report.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn sre_run(config_toml: *const c_char, out_report: *mut *mut SreReport) -> SreStatus {
    guard(|| {
        if out_report.is_null() {
            return Err(null("out_report"));
        }
        *out_report = ptr::null_mut();
        let cfg = RunConfig::from_toml(string(config_toml, "config_toml")?)?;
        let inner = run_monte_carlo(&cfg)?;
        *out_report = Box::into_raw(Box::new(SreReport { inner }));
        Ok(())
    })
}

/// Number of summary rows in a report.
///
/// # Safety
/// `report` must come from [`sre_run`] and `out_count` be writable.
#[no_mangle]
pub unsafe extern "C" fn sre_report_aggregate_count(report: *const SreReport, out_count: *mut usize) -> SreStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if out_count.is_null() {
            return Err(null("out_count"));
        }
        *out_count = report.inner.aggregates.len();
        Ok(())
    })
}

/// Summary row `index` of a report.
///
/// # Safety
/// `report` must come from [`sre_run`] and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sre_report_aggregate(
    report: *const SreReport,
    index: usize,
    out: *mut SreAggregate,
) -> SreStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let a = report.inner.aggregates.get(index).ok_or_else(|| {
            Failure(
                SreStatus::InvalidArgument,
                format!("aggregate index {index} out of range"),
            )
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = SreAggregate {
            estimator: EstimatorKind::ALL
                .iter()
                .position(|k| *k == a.estimator)
                .expect("known estimator") as u32,
            domain: match a.domain {
                EvalDomain::In => 0,
                EvalDomain::Out => 1,
            },
            bias: a.bias,
            variance: a.variance,
            mse: a.mse,
            trials: a.trials,
        };
        Ok(())
    })
}

/// Writes summary.csv, curves.csv, config.snapshot and report.json into
/// `out_dir`.
///
/// # Safety
/// `report` must come from [`sre_run`]; `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sre_report_write(report: *const SreReport, out_dir: *const c_char) -> SreStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        emit_outputs(&report.inner, Path::new(string(out_dir, "out_dir")?))?;
        Ok(())
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from [`sre_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sre_report_free(report: *mut SreReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
