//! C ABI for the zeronoise library. Handles are opaque; every function
//! returns a `ZnStatus`, and `zn_last_error` exposes the message of the most
//! recent failure on the calling thread. No panic crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use zeronoise::kernels::NoiseKernel;
use zeronoise::maps::{CircleMap, SmoothMap};
use zeronoise::operators::{assemble_convolution, assemble_ulam, compose_noisy, Backend};
use zeronoise::response::{zero_noise_sweep, SweepConfig};
use zeronoise::solver::stationary_density;
use zeronoise::Error;

/// Expanding circle map handle.
pub struct ZnMap(CircleMap);

/// Noise kernel handle.
pub struct ZnKernel(NoiseKernel);

/// Result of every fallible call. `ZN_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZnStatus {
    Ok = 0,
    /// null pointer, bad buffer length, or an out-of-range parameter
    InvalidArgument = 1,
    MapError = 2,
    KernelError = 3,
    SolverError = 4,
    /// the requested resolution failed a self-consistency check
    ResolutionError = 5,
    Unsupported = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: ZnStatus, msg: String) -> ZnStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> ZnStatus {
    match e {
        Error::Map(_) | Error::Expr(_) => ZnStatus::MapError,
        Error::Kernel(_) => ZnStatus::KernelError,
        Error::NonConvergence { .. } | Error::SingularSystem => ZnStatus::SolverError,
        Error::Resolution(_) => ZnStatus::ResolutionError,
        Error::Unsupported(_) | Error::Representation(_) => ZnStatus::Unsupported,
        Error::Io(_) => ZnStatus::Internal,
        _ => ZnStatus::InvalidArgument,
    }
}

fn from_error(e: Error) -> ZnStatus {
    fail(status_of(&e), e.to_string())
}

/// Wrap a body so that neither errors nor panics escape the ABI.
fn guarded(body: impl FnOnce() -> Result<ZnStatus, Error>) -> ZnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => from_error(e),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ZnStatus::Internal, format!("internal invariant violated: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ZnStatus> {
    if ptr.is_null() {
        return Err(fail(ZnStatus::InvalidArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ZnStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next library call from the same thread. Never NULL.
#[no_mangle]
pub extern "C" fn zn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string, e.g. "0.1.0".
#[no_mangle]
pub extern "C" fn zn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a built-in map: "doubling", "perturbed-doubling" or "skew-tent".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zn_map_new_builtin(
    name: *const c_char,
    out: *mut *mut ZnMap,
) -> ZnStatus {
    if out.is_null() {
        return fail(ZnStatus::InvalidArgument, "out is NULL".into());
    }
    let name = match read_str(name, "name") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match CircleMap::by_name(name) {
        Ok(map) => {
            *out = Box::into_raw(Box::new(ZnMap(map)));
            ZnStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Create a smooth map from a lift expression in `x`, e.g.
/// "2*x + 0.1*sin(2*pi*x)". The lift must be expanding with integer degree.
///
/// # Safety
/// `expr` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zn_map_new_smooth(
    expr: *const c_char,
    out: *mut *mut ZnMap,
) -> ZnStatus {
    if out.is_null() {
        return fail(ZnStatus::InvalidArgument, "out is NULL".into());
    }
    let expr = match read_str(expr, "expr") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match SmoothMap::from_expr("custom", expr) {
        Ok(map) => {
            *out = Box::into_raw(Box::new(ZnMap(CircleMap::Smooth(map))));
            ZnStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// # Safety
/// `map` must come from a `zn_map_new_*` call; passing it twice is UB.
#[no_mangle]
pub unsafe extern "C" fn zn_map_free(map: *mut ZnMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Create a built-in kernel: "uniform", "triangular", "epanechnikov" or "skew".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zn_kernel_new_builtin(
    name: *const c_char,
    out: *mut *mut ZnKernel,
) -> ZnStatus {
    if out.is_null() {
        return fail(ZnStatus::InvalidArgument, "out is NULL".into());
    }
    let name = match read_str(name, "name") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match NoiseKernel::by_name(name) {
        Ok(kernel) => {
            *out = Box::into_raw(Box::new(ZnKernel(kernel)));
            ZnStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Second moment sigma^2 of the kernel, or NaN if `kernel` is NULL.
///
/// # Safety
/// `kernel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zn_kernel_sigma2(kernel: *const ZnKernel) -> f64 {
    match kernel.as_ref() {
        Some(k) => k.0.sigma2(),
        None => f64::NAN,
    }
}

/// # Safety
/// `kernel` must come from `zn_kernel_new_builtin`; passing it twice is UB.
#[no_mangle]
pub unsafe extern "C" fn zn_kernel_free(kernel: *mut ZnKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Stationary density of the (noisy) transfer operator on `n_bins` equal
/// bins, written into `out` (length `n_bins`, mean 1). Pass `kernel = NULL`
/// for the deterministic operator; `delta` is ignored in that case.
///
/// # Safety
/// `map` must be a live handle, `kernel` NULL or a live handle, and `out`
/// must point to `n_bins` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn zn_stationary_density(
    map: *const ZnMap,
    kernel: *const ZnKernel,
    delta: f64,
    n_bins: usize,
    out: *mut f64,
) -> ZnStatus {
    let (map, kernel) = (map.as_ref(), kernel.as_ref());
    guarded(|| {
        let map = match map {
            Some(m) => &m.0,
            None => return Ok(fail(ZnStatus::InvalidArgument, "map is NULL".into())),
        };
        if out.is_null() {
            return Ok(fail(ZnStatus::InvalidArgument, "out is NULL".into()));
        }
        if n_bins < 2 {
            return Ok(fail(
                ZnStatus::InvalidArgument,
                format!("n_bins = {n_bins}: need at least 2"),
            ));
        }
        let lt = assemble_ulam(map, n_bins)?;
        let op = match kernel {
            None => lt,
            Some(k) => {
                let q = assemble_convolution(&k.0, delta, Backend::Ulam(n_bins))?;
                compose_noisy(lt, q)?
            }
        };
        let (h, _) = stationary_density(&op, 1e-12, 100_000)?;
        let vals = h.bin_values().expect("ulam solve yields bins");
        std::ptr::copy_nonoverlapping(vals.as_ptr(), out, n_bins);
        Ok(ZnStatus::Ok)
    })
}

/// Zero-noise sweep on `n_bins` Ulam bins. `deltas` (length `n_deltas`) must
/// be strictly decreasing in (0, 0.25]. For each delta the L1 distance to
/// the deterministic density goes to `out_dist_l1` and the grid Lipschitz
/// constant of the stationary density to `out_lip`; either may be NULL.
///
/// # Safety
/// Handles must be live; non-NULL output buffers must hold `n_deltas` doubles.
#[no_mangle]
pub unsafe extern "C" fn zn_sweep(
    map: *const ZnMap,
    kernel: *const ZnKernel,
    deltas: *const f64,
    n_deltas: usize,
    n_bins: usize,
    out_dist_l1: *mut f64,
    out_lip: *mut f64,
) -> ZnStatus {
    let (map, kernel) = (map.as_ref(), kernel.as_ref());
    guarded(|| {
        let (map, kernel) = match (map, kernel) {
            (Some(m), Some(k)) => (&m.0, &k.0),
            _ => return Ok(fail(ZnStatus::InvalidArgument, "map or kernel is NULL".into())),
        };
        if deltas.is_null() || n_deltas == 0 {
            return Ok(fail(ZnStatus::InvalidArgument, "deltas is NULL or empty".into()));
        }
        if n_bins < 2 {
            return Ok(fail(
                ZnStatus::InvalidArgument,
                format!("n_bins = {n_bins}: need at least 2"),
            ));
        }
        let deltas = std::slice::from_raw_parts(deltas, n_deltas);
        let records = zero_noise_sweep(map, kernel, deltas, &SweepConfig::ulam(n_bins))?;
        for (i, rec) in records.iter().enumerate() {
            if !out_dist_l1.is_null() {
                *out_dist_l1.add(i) = rec.dist_l1;
            }
            if !out_lip.is_null() {
                *out_lip.add(i) = rec.lip_hdelta;
            }
        }
        Ok(ZnStatus::Ok)
    })
}

/// Sharp L1 lower bound 1/(9a) for approximating the reference two-level
/// density by an a-Lipschitz function. Returns NaN unless a > 2/3.
#[no_mangle]
pub extern "C" fn zn_best_lipschitz_bound(a: f64) -> f64 {
    if a > 2.0 / 3.0 {
        1.0 / (9.0 * a)
    } else {
        f64::NAN
    }
}
