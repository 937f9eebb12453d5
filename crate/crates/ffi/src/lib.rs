//! C ABI over the `subexp` laboratory.
//!
//! Models are opaque handles created by `subexp_model_new`/`subexp_model_default` and
//! released with `subexp_model_free`. Every call returns a [`SubexpStatus`]; on failure
//! `subexp_last_error_message` describes the most recent error on the calling thread.
//! Points are passed as `b^scale * mantissa + offset` in the model's base.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use subexp::convolve::conv_local_mass;
use subexp::gallery::{run_report, GallerySpec};
use subexp::measures::{local_mass, normalizer_m, MixtureDistribution, WindowSpec};
use subexp::probes::ProbeContext;
use subexp::scaled::Term;
use subexp::{phi_log_value, profile_value, Error, ModelParams, QuadratureSpec, ScaledSum};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubexpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    QuadratureFailed = 3,
    Precondition = 4,
    /// The bracket is not a single value; the `lo`/`hi` outputs still hold it.
    Bracketed = 5,
    Internal = 6,
}

/// `b^scale * mantissa + offset`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubexpPoint {
    pub scale: i64,
    pub mantissa: f64,
    pub offset: f64,
}

/// Model constants and the measure built from them.
pub struct SubexpModel {
    ctx: ProbeContext,
    mu: MixtureDistribution,
    normalizer: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SubexpStatus {
    match e {
        Error::Parameter(_) | Error::Contract(_) | Error::Unsupported(_) => SubexpStatus::InvalidArgument,
        Error::Quadrature(_) => SubexpStatus::QuadratureFailed,
        Error::DivergentMoment { .. } | Error::Precondition(_) => SubexpStatus::Precondition,
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<SubexpStatus, Error>) -> SubexpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SubexpStatus::Internal
        }
    }
}

fn null(what: &str) -> SubexpStatus {
    set_error(&format!("null pointer: {what}"));
    SubexpStatus::NullPointer
}

fn build(params: ModelParams, quad: QuadratureSpec) -> Result<SubexpModel, Error> {
    let ctx = ProbeContext::new(params, quad)?;
    let mu = ctx.mu()?;
    let normalizer = normalizer_m(&params, &ctx.quad)?;
    Ok(SubexpModel { ctx, mu, normalizer })
}

fn point(model: &SubexpModel, p: SubexpPoint) -> Result<ScaledSum, Error> {
    ScaledSum::from_parts(
        model.ctx.params.b,
        vec![Term {
            sign: 1,
            scale: p.scale,
            mantissa: p.mantissa,
        }],
        p.offset,
    )
}

fn store(out: *mut *mut SubexpModel, m: SubexpModel) {
    // SAFETY: callers check `out` for null before building the model.
    unsafe { *out = Box::into_raw(Box::new(m)) };
}

/// Creates a model from the seven construction constants; `rel_tol <= 0` selects the default tolerance.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn subexp_model_new(
    b: f64,
    x0: f64,
    delta: f64,
    alpha: f64,
    beta: f64,
    x1: f64,
    x2: f64,
    rel_tol: f64,
    out: *mut *mut SubexpModel,
) -> SubexpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let params = ModelParams {
            b,
            x0,
            delta,
            alpha,
            beta,
            x1,
            x2,
        };
        let quad = if rel_tol > 0.0 {
            QuadratureSpec::with_rel_tol(rel_tol)
        } else {
            QuadratureSpec::default()
        };
        store(out, build(params, quad)?);
        Ok(SubexpStatus::Ok)
    })
}

/// Creates a model with the default constants `b = 4, x0 = 2, delta = 1/4, alpha = 1, beta = 2, x1 = 1/2, x2 = 3/2`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn subexp_model_default(out: *mut *mut SubexpModel) -> SubexpStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        store(out, build(ModelParams::default(), QuadratureSpec::default())?);
        Ok(SubexpStatus::Ok)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subexp_model_free(model: *mut SubexpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

macro_rules! with_model {
    ($model:expr, $out:expr) => {{
        if $out.is_null() {
            return null("out");
        }
        match $model.as_ref() {
            Some(m) => m,
            None => return null("model"),
        }
    }};
}

/// The normalizing constant `M` of `phi`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subexp_normalizer(model: *const SubexpModel, out: *mut f64) -> SubexpStatus {
    let m = with_model!(model, out);
    *out = m.normalizer;
    SubexpStatus::Ok
}

/// `h(ln x)` at a point `x >= 1`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subexp_profile_value(
    model: *const SubexpModel,
    x: SubexpPoint,
    out: *mut f64,
) -> SubexpStatus {
    let m = with_model!(model, out);
    guard(|| {
        let v = profile_value(&m.ctx.params.profile(), &point(m, x)?)?;
        *out = v;
        Ok(SubexpStatus::Ok)
    })
}

/// `ln phi(x)` (unnormalized), `-inf` below 1.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subexp_phi_log_value(
    model: *const SubexpModel,
    x: SubexpPoint,
    out: *mut f64,
) -> SubexpStatus {
    let m = with_model!(model, out);
    guard(|| {
        let v = phi_log_value(&m.ctx.params, &point(m, x)?);
        *out = v;
        Ok(SubexpStatus::Ok)
    })
}

/// `ln mu((x, x + c])`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subexp_mu_log_local_mass(
    model: *const SubexpModel,
    x: SubexpPoint,
    c: f64,
    out: *mut f64,
) -> SubexpStatus {
    let m = with_model!(model, out);
    guard(|| {
        let v = local_mass(&m.mu, &point(m, x)?, WindowSpec::new(c)?, &m.ctx.quad)?;
        *out = v;
        Ok(SubexpStatus::Ok)
    })
}

/// Bracket of `ln[(mu*mu)((x, x + c]) / mu((x, x + c])]`; equal ends unless `Bracketed` is returned.
///
/// # Safety
/// `model` must be a live handle; `lo` and `hi` writable.
#[no_mangle]
pub unsafe extern "C" fn subexp_conv_log_ratio(
    model: *const SubexpModel,
    x: SubexpPoint,
    c: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> SubexpStatus {
    if hi.is_null() {
        return null("hi");
    }
    let m = with_model!(model, lo);
    guard(|| {
        let x = point(m, x)?;
        let w = WindowSpec::new(c)?;
        let num = conv_local_mass(&m.mu, &m.mu, &x, w, &m.ctx.quad, &m.ctx.plan)?;
        let den = local_mass(&m.mu, &x, w, &m.ctx.quad)?;
        *lo = num.lo - den;
        *hi = num.hi - den;
        Ok(if num.is_exact() {
            SubexpStatus::Ok
        } else {
            SubexpStatus::Bracketed
        })
    })
}

/// Runs a named report (`thm11`, `thm12`, `lem32`, `prop11`, `tilt`) with the model's
/// constants and `k_max` atoms, writing a JSON document to `*out`.
///
/// # Safety
/// `model` must be a live handle, `name` a nul-terminated string and `out` writable.
/// The string must be released with `subexp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn subexp_gallery_report_json(
    model: *const SubexpModel,
    name: *const c_char,
    k_max: u32,
    out: *mut *mut c_char,
) -> SubexpStatus {
    if name.is_null() {
        return null("name");
    }
    let m = with_model!(model, out);
    let name = match CStr::from_ptr(name).to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => {
            set_error("report name is not UTF-8");
            return SubexpStatus::InvalidArgument;
        }
    };
    guard(|| {
        let spec = GallerySpec {
            params: m.ctx.params,
            k_max,
            quad: m.ctx.quad.clone(),
            ..GallerySpec::default()
        };
        let report = run_report(&spec, &name)?;
        let json = serde_json::to_string(&report).map_err(|e| Error::Contract(e.to_string()))?;
        *out = CString::new(json).expect("JSON has no nul bytes").into_raw();
        Ok(SubexpStatus::Ok)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subexp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread; empty if none. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn subexp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
