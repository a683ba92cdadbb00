//! C interface to chaosmodel surrogate models.
//!
//! Models are opaque `CmModel` handles created by `cm_model_load` or
//! `cm_model_fit` and released with `cm_model_free`. Every fallible call
//! returns a `CmStatus`; the message of the last failure on the calling
//! thread is available from `cm_last_error`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use chaosmodel::surrogate::{fit_surrogate, generate, load_model, save_model, SurrogateOptions};
use chaosmodel::{Error, SurrogateModel, TimeSeries};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Invariant = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Opaque surrogate model handle.
pub struct CmModel {
    inner: SurrogateModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> CmStatus {
    match e {
        Error::Io { .. } => CmStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::NonFinite { .. } => CmStatus::Parse,
        Error::Invariant { .. } => CmStatus::Invariant,
        Error::Config(_) | Error::Index(_) | Error::Degenerate(_) => CmStatus::InvalidArgument,
        Error::Conditioning { .. } | Error::Fit(_) | Error::Integration { .. } => CmStatus::Numerical,
        _ => CmStatus::Internal,
    }
}

fn fail(status: CmStatus, msg: impl Into<String>) -> CmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CmStatus) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == CmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(CmStatus::Internal, "panic inside chaosmodel"),
    }
}

fn lift<T>(r: chaosmodel::Result<T>) -> Result<T, CmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, CmStatus> {
    if p.is_null() {
        return Err(fail(CmStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CmStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn model_ref<'a>(m: *const CmModel) -> Result<&'a SurrogateModel, CmStatus> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(CmStatus::NullPointer, "model handle is null"))
}

fn into_status(r: Result<(), CmStatus>) -> CmStatus {
    r.err().unwrap_or(CmStatus::Ok)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_model_load(path: *const c_char, out: *mut *mut CmModel) -> CmStatus {
    guard(|| {
        into_status((|| {
            if out.is_null() {
                return Err(fail(CmStatus::NullPointer, "out is null"));
            }
            let model = lift(load_model(path_arg(path)?))?;
            *out = Box::into_raw(Box::new(CmModel { inner: model }));
            Ok(())
        })())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_model_save(model: *const CmModel, path: *const c_char) -> CmStatus {
    guard(|| into_status((|| lift(save_model(model_ref(model)?, path_arg(path)?)))()))
}

/// Fits a surrogate to `n_samples × n_channels` row-major data sampled every
/// `dt`, with the default PSD-matching options.
///
/// # Safety
/// `data` must point to `n_samples * n_channels` doubles and `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_model_fit(
    data: *const f64,
    n_samples: size_t,
    n_channels: size_t,
    dt: f64,
    degree: u32,
    seed: u64,
    out: *mut *mut CmModel,
) -> CmStatus {
    guard(|| {
        into_status((|| {
            if data.is_null() || out.is_null() {
                return Err(fail(CmStatus::NullPointer, "data or out is null"));
            }
            if n_samples == 0 || n_channels == 0 {
                return Err(fail(CmStatus::InvalidArgument, "empty data"));
            }
            let flat = std::slice::from_raw_parts(data, n_samples * n_channels);
            let channels = (0..n_channels)
                .map(|c| (0..n_samples).map(|m| flat[m * n_channels + c]).collect())
                .collect();
            let ts = lift(TimeSeries::from_channels(channels, dt))?;
            let model = lift(fit_surrogate(&ts, &SurrogateOptions::new(degree as usize, seed)))?;
            *out = Box::into_raw(Box::new(CmModel { inner: model }));
            Ok(())
        })())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_model_free(model: *mut CmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of channels; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_model_dim(model: *const CmModel) -> size_t {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Sampling interval; NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_model_dt(model: *const CmModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.inner.dt)
}

/// Oscillator `index` (map order) as `(k, β, D)`.
///
/// # Safety
/// `model` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cm_model_oscillator(
    model: *const CmModel,
    index: size_t,
    k: *mut f64,
    beta: *mut f64,
    d: *mut f64,
) -> CmStatus {
    guard(|| {
        into_status((|| {
            let m = model_ref(model)?;
            if k.is_null() || beta.is_null() || d.is_null() {
                return Err(fail(CmStatus::NullPointer, "output pointer is null"));
            }
            let p = m
                .oscillators
                .get(index)
                .ok_or_else(|| fail(CmStatus::InvalidArgument, format!("oscillator {index} of {}", m.dim())))?;
            *k = p.k();
            *beta = p.beta();
            *d = p.d();
            Ok(())
        })())
    })
}

/// Samples produced by `cm_model_generate` for `duration`.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_model_generate_len(model: *const CmModel, duration: f64) -> size_t {
    match model.as_ref() {
        Some(m) if duration >= m.inner.dt => (duration / m.inner.dt + 1e-9).floor() as size_t + 1,
        _ => 0,
    }
}

/// Writes a surrogate trajectory as row-major `len × dim` doubles into
/// `buf` (capacity in doubles), storing the sample count in `out_len` and
/// the number of clamped inversions in `clamped`.
///
/// # Safety
/// `model` must be a live handle, `buf` must hold `capacity` doubles and
/// the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm_model_generate(
    model: *const CmModel,
    duration: f64,
    seed: u64,
    buf: *mut f64,
    capacity: size_t,
    out_len: *mut size_t,
    clamped: *mut size_t,
) -> CmStatus {
    guard(|| {
        into_status((|| {
            let m = model_ref(model)?;
            if buf.is_null() || out_len.is_null() || clamped.is_null() {
                return Err(fail(CmStatus::NullPointer, "output pointer is null"));
            }
            let need = cm_model_generate_len(model, duration) * m.dim();
            if capacity < need {
                *out_len = need / m.dim().max(1);
                return Err(fail(CmStatus::BufferTooSmall, format!("need {need} doubles, got {capacity}")));
            }
            let ts = lift(generate(m, duration, seed))?;
            let dim = ts.n_channels();
            let out = std::slice::from_raw_parts_mut(buf, ts.len() * dim);
            for c in 0..dim {
                for (t, v) in ts.channel(c).iter().enumerate() {
                    out[t * dim + c] = *v;
                }
            }
            *out_len = ts.len();
            *clamped = ts.metadata.get("clamped_samples").and_then(|s| s.parse().ok()).unwrap_or(0);
            Ok(())
        })())
    })
}

/// `q = T(y)` for one sample; `y` in channel order, `q` in map order.
///
/// # Safety
/// `y` and `q` must each hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_model_forward(model: *const CmModel, y: *const f64, q: *mut f64) -> CmStatus {
    guard(|| {
        into_status((|| {
            let m = model_ref(model)?;
            if y.is_null() || q.is_null() {
                return Err(fail(CmStatus::NullPointer, "vector pointer is null"));
            }
            let n = m.dim();
            let r = m.map.forward(std::slice::from_raw_parts(y, n));
            ptr::copy_nonoverlapping(r.as_ptr(), q, n);
            Ok(())
        })())
    })
}

/// `y = T⁻¹(q)` for one sample; `clamped` is set when a coordinate left the
/// verified monotone domain.
///
/// # Safety
/// `q` and `y` must each hold `dim` doubles; `clamped` may be null.
#[no_mangle]
pub unsafe extern "C" fn cm_model_inverse(model: *const CmModel, q: *const f64, y: *mut f64, clamped: *mut bool) -> CmStatus {
    guard(|| {
        into_status((|| {
            let m = model_ref(model)?;
            if q.is_null() || y.is_null() {
                return Err(fail(CmStatus::NullPointer, "vector pointer is null"));
            }
            let n = m.dim();
            let r = m.map.inverse(std::slice::from_raw_parts(q, n));
            ptr::copy_nonoverlapping(r.y.as_ptr(), y, n);
            if !clamped.is_null() {
                *clamped = r.clamped;
            }
            Ok(())
        })())
    })
}
