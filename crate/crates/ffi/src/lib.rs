//! C ABI over `fgvc-core`.
//!
//! Every fallible function returns an [`FgvcStatus`]; on failure a message is
//! available from [`fgvc_last_error`] on the same thread. Profiles and models
//! are opaque handles released with their `_free` function. Panics never
//! cross the boundary: they are reported as `FGVC_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fgvc_core::domain::{self, transport, DomainProfile};
use fgvc_core::model::{checkpoint, predict_two_pass, ModelParams};
use fgvc_core::{Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgvcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Unbalanced = 5,
    Shape = 6,
    Internal = 7,
}

/// A loaded domain profile.
pub struct FgvcProfile {
    inner: DomainProfile,
}

/// A loaded model checkpoint.
pub struct FgvcModel {
    params: ModelParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FgvcStatus {
    match e {
        Error::Io(_) | Error::IoAt { .. } => FgvcStatus::Io,
        Error::Format { .. } => FgvcStatus::Format,
        Error::Unbalanced { .. } => FgvcStatus::Unbalanced,
        Error::InvalidShape(_) | Error::InvalidDim(_) => FgvcStatus::Shape,
        _ => FgvcStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (FgvcStatus, String)>) -> FgvcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgvcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FgvcStatus::Internal
        }
    }
}

fn core_err(e: Error) -> (FgvcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FgvcStatus, String) {
    (FgvcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (FgvcStatus, String) {
    (FgvcStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (FgvcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (FgvcStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Message of the last failed call on this thread ("" if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fgvc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn fgvc_status_message(status: FgvcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        FgvcStatus::Ok => c"ok",
        FgvcStatus::NullPointer => c"null pointer argument",
        FgvcStatus::InvalidArgument => c"invalid argument",
        FgvcStatus::Io => c"i/o error",
        FgvcStatus::Format => c"malformed file",
        FgvcStatus::Unbalanced => c"unbalanced transport marginals",
        FgvcStatus::Shape => c"shape mismatch",
        FgvcStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Exact transportation problem: minimises `sum f_ij d_ij` subject to row sums
/// `supply[0..m]` and column sums `demand[0..n]`, with `dist` row-major
/// `m x n`. Writes the total cost, and the flow matrix when `flow_out` is
/// non-null (room for `m * n` values).
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fgvc_transport(
    supply: *const f64,
    m: usize,
    demand: *const f64,
    n: usize,
    dist: *const f64,
    flow_out: *mut f64,
    cost_out: *mut f64,
) -> FgvcStatus {
    guard(|| {
        if cost_out.is_null() {
            return Err(null("cost_out"));
        }
        let s = slice(supply, m, "supply")?;
        let d = slice(demand, n, "demand")?;
        let c = slice(dist, m.checked_mul(n).ok_or_else(|| invalid("m * n overflows"))?, "dist")?;
        let t = transport::solve(s, d, c).map_err(core_err)?;
        if !flow_out.is_null() {
            ptr::copy_nonoverlapping(t.flow.as_ptr(), flow_out, t.flow.len());
        }
        *cost_out = t.total_cost;
        Ok(())
    })
}

/// `exp(-gamma * cost)`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fgvc_similarity(cost: f64, gamma: f64, out: *mut f64) -> FgvcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = domain::similarity(cost, gamma).map_err(core_err)?;
        Ok(())
    })
}

/// The default `gamma` of [`fgvc_similarity`].
#[no_mangle]
pub extern "C" fn fgvc_default_gamma() -> f64 {
    domain::DEFAULT_GAMMA
}

/// Loads a profile directory written by `fgvc profile`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_load(dir: *const c_char, out: *mut *mut FgvcProfile) -> FgvcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let inner = domain::io::load(&path_arg(dir)?).map_err(core_err)?;
        *out = Box::into_raw(Box::new(FgvcProfile { inner }));
        Ok(())
    })
}

/// Builds a profile from `n_classes x dim` row-major centroids and per-class
/// weights (normalized to sum to one).
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_from_arrays(
    centroids: *const f64,
    n_classes: usize,
    dim: usize,
    weights: *const f64,
    out: *mut *mut FgvcProfile,
) -> FgvcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let len = n_classes.checked_mul(dim).ok_or_else(|| invalid("n_classes * dim overflows"))?;
        let c = slice(centroids, len, "centroids")?.to_vec();
        let w = slice(weights, n_classes, "weights")?;
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("weights must have a positive finite sum"));
        }
        let w = w.iter().map(|v| v / total).collect();
        let names = (0..n_classes).map(|i| format!("class_{i}")).collect();
        let t = Tensor::new(vec![n_classes, dim], c).map_err(core_err)?;
        let inner = DomainProfile::new("profile", t, w, names).map_err(core_err)?;
        *out = Box::into_raw(Box::new(FgvcProfile { inner }));
        Ok(())
    })
}

/// # Safety
/// `profile` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_free(profile: *mut FgvcProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_num_classes(profile: *const FgvcProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.num_classes())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_feature_dim(profile: *const FgvcProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.feature_dim())
}

/// Earth Mover's Distance between two profiles.
///
/// # Safety
/// Handles must be live; `cost_out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fgvc_profile_emd(
    source: *const FgvcProfile,
    target: *const FgvcProfile,
    cost_out: *mut f64,
) -> FgvcStatus {
    guard(|| {
        let s = source.as_ref().ok_or_else(|| null("source"))?;
        let t = target.as_ref().ok_or_else(|| null("target"))?;
        if cost_out.is_null() {
            return Err(null("cost_out"));
        }
        *cost_out = domain::emd(&s.inner, &t.inner).map_err(core_err)?.cost;
        Ok(())
    })
}

/// Loads a checkpoint directory written by `fgvc train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fgvc_model_load(dir: *const c_char, out: *mut *mut FgvcModel) -> FgvcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (params, _) = checkpoint::load(&path_arg(dir)?).map_err(core_err)?;
        *out = Box::into_raw(Box::new(FgvcModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fgvc_model_free(model: *mut FgvcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input side length and number of classes.
///
/// # Safety
/// `model` must be live; outputs valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn fgvc_model_info(
    model: *const FgvcModel,
    resolution_out: *mut usize,
    classes_out: *mut usize,
) -> FgvcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if resolution_out.is_null() || classes_out.is_null() {
            return Err(null("output"));
        }
        *resolution_out = m.params.config.resolution;
        *classes_out = m.params.config.classes;
        Ok(())
    })
}

/// Two-pass prediction on one `S x S x 3` channels-last image with values in
/// `[0, 1]`. Writes the averaged class probabilities (`probs_len` must equal
/// the class count) and the arg-max class.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fgvc_predict_two_pass(
    model: *const FgvcModel,
    image: *const f64,
    image_len: usize,
    theta: f64,
    probs_out: *mut f64,
    probs_len: usize,
    class_out: *mut usize,
) -> FgvcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let cfg = m.params.config;
        let s = cfg.resolution;
        if image_len != s * s * 3 {
            return Err((
                FgvcStatus::Shape,
                format!("image has {image_len} values, model expects {s}x{s}x3"),
            ));
        }
        if probs_len != cfg.classes {
            return Err((
                FgvcStatus::Shape,
                format!("probs_len is {probs_len}, model has {} classes", cfg.classes),
            ));
        }
        if probs_out.is_null() || class_out.is_null() {
            return Err(null("output"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta must lie in (0, 1)"));
        }
        let img = Tensor::new(vec![s, s, 3], slice(image, image_len, "image")?.to_vec()).map_err(core_err)?;
        let out = predict_two_pass(&m.params, &img, theta).map_err(core_err)?;
        let p = out.p.data();
        ptr::copy_nonoverlapping(p.as_ptr(), probs_out, p.len());
        *class_out = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        Ok(())
    })
}
