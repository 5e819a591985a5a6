//! C ABI over the slowed-down solenoid model.
//!
//! Every entry point returns an [`SlStatus`]; on failure a message is kept
//! per thread and can be read back with [`sl_last_error`]. Models are opaque
//! handles created by `sl_model_new*` and released by [`sl_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use solenoid_core::chart::{to_chart, ChartPoint};
use solenoid_core::config::Config;
use solenoid_core::ergostat::visit_orbit;
use solenoid_core::flowlab::axis_escape_time;
use solenoid_core::slowdown::SlowDownMap;
use solenoid_core::solenoid::{apply_f, TorusMap, TorusPoint};
use solenoid_core::Error;

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Config = 3,
    OutOfDomain = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Closed-form constants of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlConstants {
    pub gamma: f64,
    pub beta: f64,
    pub chi: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub s1: f64,
    pub s2: f64,
    pub q1_const: f64,
    pub q2_const: f64,
}

/// Opaque model handle.
pub struct SlModel {
    map: SlowDownMap,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SlStatus {
    match e {
        Error::InvalidParams(_) | Error::NonMonotoneBlend { .. } => SlStatus::InvalidParams,
        Error::Config(_) => SlStatus::Config,
        Error::OutsideTorus { .. }
        | Error::OutOfDomain { .. }
        | Error::DomainError(_)
        | Error::Precondition(_) => SlStatus::OutOfDomain,
        _ => SlStatus::Numerical,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard<F: FnOnce() -> Result<(), SlStatus>>(f: F) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SlStatus::Panic
        }
    }
}

fn fail(e: Error) -> SlStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

unsafe fn model<'a>(m: *const SlModel) -> Result<&'a SlModel, SlStatus> {
    // SAFETY: non-null handles come from sl_model_new* and are live until freed.
    unsafe { m.as_ref() }.ok_or_else(|| {
        set_error("null model handle");
        SlStatus::NullPointer
    })
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), SlStatus> {
    if p.is_null() {
        set_error(format!("null {what}"));
        return Err(SlStatus::NullPointer);
    }
    Ok(())
}

unsafe fn read_point(q: *const f64) -> Result<TorusPoint, SlStatus> {
    non_null(q, "point")?;
    // SAFETY: the caller passes three readable doubles.
    let v = unsafe { std::slice::from_raw_parts(q, 3) };
    TorusPoint::new(v[0], v[1], v[2]).map_err(fail)
}

unsafe fn write_point(p: &TorusPoint, out: *mut f64) -> Result<(), SlStatus> {
    non_null(out, "output")?;
    // SAFETY: the caller passes three writable doubles.
    let o = unsafe { std::slice::from_raw_parts_mut(out, 3) };
    o.copy_from_slice(&[p.t(), p.x(), p.y()]);
    Ok(())
}

fn build(cfg: &Config) -> Result<SlModel, SlStatus> {
    cfg.validate().map_err(fail)?;
    let map = SlowDownMap::new(cfg.solenoid, cfg.slowdown, cfg.integrator).map_err(fail)?;
    Ok(SlModel { map })
}

/// Creates a model with the baseline parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn sl_model_new_default(out: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        non_null(out, "output handle")?;
        let m = build(&Config::default())?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(m)) };
        Ok(())
    })
}

/// Creates a model from configuration text (`key = value` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer to
/// writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn sl_model_new(text: *const c_char, out: *mut *mut SlModel) -> SlStatus {
    guard(|| {
        non_null(text, "config text")?;
        non_null(out, "output handle")?;
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let s = unsafe { CStr::from_ptr(text) }.to_str().map_err(|_| {
            set_error("config text is not UTF-8");
            SlStatus::Config
        })?;
        let cfg = Config::parse(s).map_err(fail)?;
        let m = build(&cfg)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(m)) };
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `m` must be null or a handle from `sl_model_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_model_free(m: *mut SlModel) {
    if !m.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Writes the derived constants of the model.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_constants(m: *const SlModel, out: *mut SlConstants) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        non_null(out, "output")?;
        let c = m.map.constants;
        // SAFETY: checked non-null above.
        unsafe {
            *out = SlConstants {
                gamma: c.gamma,
                beta: c.beta,
                chi: c.chi,
                gamma1: c.gamma1,
                gamma2: c.gamma2,
                s1: c.s1,
                s2: c.s2,
                q1_const: c.q1_const,
                q2_const: c.q2_const,
            }
        };
        Ok(())
    })
}

/// Slow-down profile value `psi(r)`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_psi(m: *const SlModel, r: f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        non_null(out, "output")?;
        if r.is_nan() || r < 0.0 {
            set_error(format!("radius {r} is negative"));
            return Err(SlStatus::OutOfDomain);
        }
        // SAFETY: checked non-null above.
        unsafe { *out = m.map.flow.psi.psi(r) };
        Ok(())
    })
}

/// One step of the slow-down map on `q = (t, x, y)`.
///
/// # Safety
/// `m` must be a live handle, `q` three readable and `out` three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_apply_g(m: *const SlModel, q: *const f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        let p = unsafe { read_point(q) }?;
        let r = m.map.apply(&p).map_err(fail)?;
        unsafe { write_point(&r, out) }
    })
}

/// One step of the unperturbed solenoid map.
///
/// # Safety
/// As for [`sl_apply_g`].
#[no_mangle]
pub unsafe extern "C" fn sl_apply_f(m: *const SlModel, q: *const f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        let p = unsafe { read_point(q) }?;
        unsafe { write_point(&apply_f(&p, &m.map.solenoid), out) }
    })
}

/// Chart coordinates `(u, v, w)` of `q`.
///
/// # Safety
/// As for [`sl_apply_g`].
#[no_mangle]
pub unsafe extern "C" fn sl_to_chart(m: *const SlModel, q: *const f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        let p = unsafe { read_point(q) }?;
        let z = to_chart(&p, &m.map.chart).map_err(fail)?;
        non_null(out, "output")?;
        // SAFETY: the caller passes three writable doubles.
        let o = unsafe { std::slice::from_raw_parts_mut(out, 3) };
        o.copy_from_slice(&z.to_array());
        Ok(())
    })
}

/// Time-one map of the slowed flow on chart coordinates `z = (u, v, w)`.
///
/// # Safety
/// `m` must be a live handle, `z` three readable and `out` three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_time_one_map(
    m: *const SlModel,
    z: *const f64,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        non_null(z, "point")?;
        non_null(out, "output")?;
        // SAFETY: the caller passes three readable doubles.
        let v = unsafe { std::slice::from_raw_parts(z, 3) };
        let r = m
            .map
            .time_one_map(&ChartPoint::new(v[0], v[1], v[2]))
            .map_err(fail)?;
        // SAFETY: the caller passes three writable doubles.
        let o = unsafe { std::slice::from_raw_parts_mut(out, 3) };
        o.copy_from_slice(&r.to_array());
        Ok(())
    })
}

/// Time for the unstable-axis trajectory from `u0` to reach `r_exit <= r0`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_axis_escape_time(
    m: *const SlModel,
    u0: f64,
    r_exit: f64,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        non_null(out, "output")?;
        let d = &m.map.slowdown;
        let t = axis_escape_time(u0, r_exit, d.alpha_slow, m.map.constants.gamma, d.r0)
            .map_err(fail)?;
        // SAFETY: checked non-null above.
        unsafe { *out = t };
        Ok(())
    })
}

/// Writes `length` orbit points of `g` as `(t, x, y)` triples into `out`,
/// which holds `capacity` doubles.
///
/// # Safety
/// `m` must be a live handle and `out` must hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_orbit(
    m: *const SlModel,
    seed: u64,
    burn_in: u64,
    length: u64,
    out: *mut f64,
    capacity: usize,
) -> SlStatus {
    guard(|| {
        let m = unsafe { model(m) }?;
        non_null(out, "output")?;
        let need = usize::try_from(length).ok().and_then(|l| l.checked_mul(3));
        if need.is_none_or(|n| n > capacity) {
            set_error(format!(
                "orbit of {length} points needs {} doubles",
                length.saturating_mul(3)
            ));
            return Err(SlStatus::BufferTooSmall);
        }
        // SAFETY: capacity >= 3 * length writable doubles.
        let o = unsafe { std::slice::from_raw_parts_mut(out, capacity) };
        visit_orbit(&m.map, seed, burn_in, length, |i, q| {
            let k = 3 * i as usize;
            o[k..k + 3].copy_from_slice(&[q.t(), q.x(), q.y()]);
        })
        .map_err(fail)
    })
}

/// Copies the calling thread's last error message (NUL-terminated, possibly
/// truncated) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            // SAFETY: buf holds len bytes and n < len.
            unsafe {
                ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
