//! C ABI for the guarded label-only access layer.
//!
//! The surface is a single opaque handle created from artifact files
//! produced by the `idpguard` CLI (network JSON + bounds JSON). Every
//! function returns an [`IdpGuardStatus`] code; the most recent error
//! message is retrievable per thread via [`idpguard_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use idpguard::access::AccessGuard;
use idpguard::artifacts;

/// Status codes returned by every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdpGuardStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A path argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An artifact could not be loaded or validated.
    ArtifactError = 3,
    /// The query was malformed (wrong input dimension).
    QueryError = 4,
    /// An unexpected internal failure; see `idpguard_last_error`.
    InternalError = 5,
}

/// Opaque guard handle.
pub struct IdpGuard {
    inner: AccessGuard,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = cstring);
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full message length
/// including the NUL terminator, so callers can size a retry buffer.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// required length is returned).
#[no_mangle]
pub unsafe extern "C" fn idpguard_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            // Guarantee termination even when truncating.
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Version of the underlying crate as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn idpguard_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, IdpGuardStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(IdpGuardStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path argument is not valid UTF-8");
            Err(IdpGuardStatus::InvalidUtf8)
        }
    }
}

/// Open a guard from artifact files.
///
/// `network_path` is a network JSON, `bounds_path` a bounds JSON produced
/// by `idpguard bound`. On success writes a handle to `out_guard`; free it
/// with [`idpguard_guard_free`].
///
/// # Safety
/// `network_path` and `bounds_path` must be NUL-terminated strings and
/// `out_guard` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn idpguard_guard_open(
    network_path: *const c_char,
    bounds_path: *const c_char,
    epsilon: f64,
    seed: u64,
    memo_capacity: usize,
    out_guard: *mut *mut IdpGuard,
) -> IdpGuardStatus {
    if out_guard.is_null() {
        set_error("null output handle");
        return IdpGuardStatus::NullArgument;
    }
    let network_path = match path_arg(network_path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let bounds_path = match path_arg(bounds_path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let built = catch_unwind(AssertUnwindSafe(|| -> Result<AccessGuard, String> {
        let net = artifacts::load_network(network_path).map_err(|e| e.to_string())?;
        let file = artifacts::load_bounds(bounds_path).map_err(|e| e.to_string())?;
        let bounds = artifacts::class_bounds(&file, net.num_classes(), bounds_path)
            .map_err(|e| e.to_string())?;
        AccessGuard::new(net, bounds, epsilon, seed, memo_capacity).map_err(|e| e.to_string())
    }));
    match built {
        Ok(Ok(inner)) => {
            *out_guard = Box::into_raw(Box::new(IdpGuard { inner }));
            IdpGuardStatus::Ok
        }
        Ok(Err(message)) => {
            set_error(message);
            IdpGuardStatus::ArtifactError
        }
        Err(_) => {
            set_error("internal panic while opening the guard");
            IdpGuardStatus::InternalError
        }
    }
}

/// Answer one guarded label-only query.
///
/// `features` must point to `len == input_dim` doubles; the label lands in
/// `out_label`.
///
/// # Safety
/// `guard` must be a live handle from [`idpguard_guard_open`]; `features`
/// must point to `len` readable doubles; `out_label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idpguard_guard_query(
    guard: *const IdpGuard,
    features: *const f64,
    len: usize,
    out_label: *mut u32,
) -> IdpGuardStatus {
    if guard.is_null() || features.is_null() || out_label.is_null() {
        set_error("null argument");
        return IdpGuardStatus::NullArgument;
    }
    let guard = &*guard;
    let x = std::slice::from_raw_parts(features, len);
    let answered = catch_unwind(AssertUnwindSafe(|| guard.inner.query(x)));
    match answered {
        Ok(Ok(label)) => {
            *out_label = label as u32;
            IdpGuardStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            IdpGuardStatus::QueryError
        }
        Err(_) => {
            set_error("internal panic during query");
            IdpGuardStatus::InternalError
        }
    }
}

/// Input dimension expected by the guard's network; 0 for a null handle.
///
/// # Safety
/// `guard` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn idpguard_guard_input_dim(guard: *const IdpGuard) -> usize {
    if guard.is_null() {
        return 0;
    }
    (*guard).inner.network().input_dim()
}

/// Number of classes of the guard's network; 0 for a null handle.
///
/// # Safety
/// `guard` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn idpguard_guard_num_classes(guard: *const IdpGuard) -> usize {
    if guard.is_null() {
        return 0;
    }
    (*guard).inner.network().num_classes()
}

/// Release a handle. Null is a no-op; double-free is undefined behavior.
///
/// # Safety
/// `guard` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn idpguard_guard_free(guard: *mut IdpGuard) {
    if !guard.is_null() {
        drop(Box::from_raw(guard));
    }
}
