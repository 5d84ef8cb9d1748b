//! C ABI for the censored single-index regression library.
//!
//! Datasets and fit results are opaque handles created and released through
//! paired `_new`/`_free` calls. Every fallible function returns a
//! [`CensimStatus`]; the message behind the most recent non-OK status on the
//! calling thread is available from [`censim_last_error`].

use std::cell::RefCell;
use std::ffi::CString;
use std::os::raw::c_char;
use std::slice;

use censim::error::Error;
use censim::estimate::{fit, FitConfig, FitResult, Method};
use censim::smooth::BandwidthRule;
use censim::survival::{km_fit, KmTarget, Observation};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensimStatus {
    Ok = 0,
    /// A pointer argument was null or a scalar argument out of range.
    InvalidArgument = 1,
    /// The input data failed validation.
    DataError = 2,
    /// Estimation failed (empty criterion, singular information, ...).
    FitError = 3,
    /// The provided buffer is too small; query the required length first.
    BufferTooSmall = 4,
}

/// Opaque censored dataset handle.
pub struct CensimDataset {
    observations: Vec<Observation>,
}

/// Opaque fit-result handle.
pub struct CensimFit {
    result: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> CensimStatus {
    match err {
        Error::Dataset { .. } | Error::Io(_) | Error::InvalidInput(_) | Error::EmptySample => {
            CensimStatus::DataError
        }
        _ => CensimStatus::FitError,
    }
}

fn fail(status: CensimStatus, message: &str) -> CensimStatus {
    set_error(message);
    status
}

/// Message for the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn censim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a dataset from parallel arrays: `times[i]`, `events[i]` (0 or 1)
/// and the row-major `n` × `dim` covariate matrix.
///
/// # Safety
/// `times` and `events` must point to `n` readable elements, `covariates` to
/// `n * dim` readable elements, and `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn censim_dataset_new(
    times: *const f64,
    events: *const u8,
    covariates: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut CensimDataset,
) -> CensimStatus {
    if out.is_null() {
        return fail(CensimStatus::InvalidArgument, "out pointer is null");
    }
    if times.is_null() || events.is_null() || covariates.is_null() {
        return fail(CensimStatus::InvalidArgument, "input pointer is null");
    }
    if n == 0 || dim == 0 {
        return fail(CensimStatus::InvalidArgument, "n and dim must be positive");
    }
    let times = slice::from_raw_parts(times, n);
    let events = slice::from_raw_parts(events, n);
    let covariates = slice::from_raw_parts(covariates, n * dim);

    let mut observations = Vec::with_capacity(n);
    for i in 0..n {
        if !times[i].is_finite() {
            return fail(CensimStatus::DataError, "non-finite time");
        }
        if events[i] > 1 {
            return fail(CensimStatus::DataError, "event indicator must be 0 or 1");
        }
        let row = covariates[i * dim..(i + 1) * dim].to_vec();
        if row.iter().any(|v| !v.is_finite()) {
            return fail(CensimStatus::DataError, "non-finite covariate");
        }
        observations.push(Observation::new(times[i], events[i] == 1, row));
    }
    *out = Box::into_raw(Box::new(CensimDataset { observations }));
    CensimStatus::Ok
}

/// Releases a dataset handle; a null pointer is a no-op.
///
/// # Safety
/// `dataset` must be null or a pointer returned by `censim_dataset_new` that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn censim_dataset_free(dataset: *mut CensimDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of observations in the dataset; zero for a null handle.
///
/// # Safety
/// `dataset` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn censim_dataset_len(dataset: *const CensimDataset) -> usize {
    if dataset.is_null() {
        0
    } else {
        (*dataset).observations.len()
    }
}

/// Fits the index direction. `method` is 0 for weighted least squares, 1 for
/// synthetic data.
///
/// # Safety
/// `dataset` must be a live dataset handle and `out` a valid writable
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn censim_fit(
    dataset: *const CensimDataset,
    method: i32,
    bandwidth_constant: f64,
    trim_fraction: f64,
    seed: u64,
    out: *mut *mut CensimFit,
) -> CensimStatus {
    if dataset.is_null() || out.is_null() {
        return fail(CensimStatus::InvalidArgument, "null pointer argument");
    }
    let method = match method {
        0 => Method::Wls,
        1 => Method::Sd,
        other => {
            return fail(
                CensimStatus::InvalidArgument,
                &format!("unknown method code {other}"),
            )
        }
    };
    let config = FitConfig {
        bandwidth: BandwidthRule::new(bandwidth_constant),
        trim_fraction,
        seed,
        ..FitConfig::default()
    };
    match fit(&(*dataset).observations, method, &config) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(CensimFit { result }));
            CensimStatus::Ok
        }
        Err(err) => fail(status_of(&err), &err.to_string()),
    }
}

/// Releases a fit handle; a null pointer is a no-op.
///
/// # Safety
/// `fit` must be null or a pointer returned by `censim_fit` that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_free(fit: *mut CensimFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Dimension d of the fitted direction (including the pinned coordinate).
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_dim(fit: *const CensimFit) -> usize {
    if fit.is_null() {
        0
    } else {
        (*fit).result.theta_hat.dim()
    }
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> CensimStatus {
    if buf.is_null() {
        return fail(CensimStatus::InvalidArgument, "buffer pointer is null");
    }
    if len < values.len() {
        return fail(
            CensimStatus::BufferTooSmall,
            &format!("need {} elements, got {len}", values.len()),
        );
    }
    slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
    CensimStatus::Ok
}

/// Copies the fitted direction (first coordinate always one) into `buf`.
///
/// # Safety
/// `fit` must be a live fit handle and `buf` writable for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_theta(
    fit: *const CensimFit,
    buf: *mut f64,
    len: usize,
) -> CensimStatus {
    if fit.is_null() {
        return fail(CensimStatus::InvalidArgument, "fit handle is null");
    }
    copy_out((*fit).result.theta_hat.as_slice(), buf, len)
}

/// Copies the d-1 Wald standard errors of the free coordinates into `buf`.
///
/// # Safety
/// `fit` must be a live fit handle and `buf` writable for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_standard_errors(
    fit: *const CensimFit,
    buf: *mut f64,
    len: usize,
) -> CensimStatus {
    if fit.is_null() {
        return fail(CensimStatus::InvalidArgument, "fit handle is null");
    }
    copy_out(&(*fit).result.standard_errors(), buf, len)
}

/// Criterion value at the fitted direction; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_criterion(fit: *const CensimFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.criterion_value
    }
}

/// Whether the simplex search met its tolerances.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_converged(fit: *const CensimFit) -> bool {
    !fit.is_null() && (*fit).result.converged
}

/// Fraction of censored observations in the fitted sample; NaN for null.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_censoring_fraction(fit: *const CensimFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.censoring_fraction
    }
}

/// Fraction of observations removed by trimming; NaN for null.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_trimmed_fraction(fit: *const CensimFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.trimmed_fraction()
    }
}

/// Bandwidth used at the fitted direction; NaN for null.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn censim_fit_bandwidth(fit: *const CensimFit) -> f64 {
    if fit.is_null() {
        f64::NAN
    } else {
        (*fit).result.bandwidth
    }
}

/// Product-limit curve for the event (`target` = 0) or censoring
/// (`target` = 1) distribution. Jump times and cumulative values are written
/// to `times_out`/`cdf_out` when `capacity` suffices; `written` always
/// receives the number of jumps. Call with `capacity` = 0 and null buffers to
/// query the length.
///
/// # Safety
/// `dataset` must be a live dataset handle, `written` a valid writable
/// pointer, and the buffers writable for `capacity` elements when non-null.
#[no_mangle]
pub unsafe extern "C" fn censim_km(
    dataset: *const CensimDataset,
    target: i32,
    times_out: *mut f64,
    cdf_out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> CensimStatus {
    if dataset.is_null() || written.is_null() {
        return fail(CensimStatus::InvalidArgument, "null pointer argument");
    }
    let target = match target {
        0 => KmTarget::Event,
        1 => KmTarget::Censoring,
        other => {
            return fail(
                CensimStatus::InvalidArgument,
                &format!("unknown target code {other}"),
            )
        }
    };
    let curve = match km_fit(&(*dataset).observations, target) {
        Ok(curve) => curve,
        Err(err) => return fail(status_of(&err), &err.to_string()),
    };
    let jumps: Vec<(f64, f64)> = curve.jumps().collect();
    *written = jumps.len();
    if capacity == 0 {
        return CensimStatus::Ok;
    }
    if times_out.is_null() || cdf_out.is_null() {
        return fail(CensimStatus::InvalidArgument, "output buffer is null");
    }
    if capacity < jumps.len() {
        return fail(
            CensimStatus::BufferTooSmall,
            &format!("need {} elements, got {capacity}", jumps.len()),
        );
    }
    let times = slice::from_raw_parts_mut(times_out, jumps.len());
    let cdf = slice::from_raw_parts_mut(cdf_out, jumps.len());
    let mut cum = 0.0;
    for (slot, (t, mass)) in jumps.iter().enumerate() {
        cum += mass;
        times[slot] = *t;
        cdf[slot] = cum;
    }
    CensimStatus::Ok
}
