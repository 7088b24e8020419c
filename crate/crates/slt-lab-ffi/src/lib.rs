//! C ABI over the network, scaling, and ticket-construction APIs.
//!
//! Conventions, mirrored verbatim in `include/slt_lab.h`:
//!
//! - Networks are opaque handles created by this library and released
//!   with [`slt_network_free`]. A handle is never returned half-built:
//!   constructors yield either a valid pointer or null.
//! - Fallible calls return a status code (`SLT_OK` = 0); constructors
//!   signal failure with null. Either way the thread-local message
//!   retrieved by [`slt_last_error`] describes the most recent failure
//!   on the calling thread.
//! - Sample buffers are row-major with one sample per row: `inputs`
//!   holds `n_samples * input_dim` doubles, `outputs` receives
//!   `n_samples * output_dim`.
//! - A network loaded from disk has its saved mask (if any) applied:
//!   pruned parameters are materialized as zeros.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use slt_lab::construct::{
    construct_ticket, construction_report, sup_norm_probes, ConstructOptions,
};
use slt_lab::init::{initialize, InitSpec, Scheme};
use slt_lab::net::{Architecture, Network, SavedNetwork};
use slt_lab::numeric::derive_seed;
use slt_lab::scaling::distribute_lambda_in_place;

/// Success.
pub const SLT_OK: c_int = 0;
/// A required pointer argument was null.
pub const SLT_NULL_ARGUMENT: c_int = 1;
/// An argument was out of range or structurally invalid.
pub const SLT_INVALID_ARGUMENT: c_int = 2;
/// Reading or writing a file failed.
pub const SLT_IO_ERROR: c_int = 3;
/// The underlying computation failed; see `slt_last_error`.
pub const SLT_RUNTIME_ERROR: c_int = 4;

/// Uniform weights on `[-sigma, sigma]` (He-style scales).
pub const SLT_SCHEME_UNIFORM: c_int = 0;
/// Gaussian weights (He-style scales).
pub const SLT_SCHEME_NORMAL: c_int = 1;
/// Mirrored-orthogonal "looks linear" blocks.
pub const SLT_SCHEME_LOOKS_LINEAR: c_int = 2;

/// Opaque network handle.
pub struct SltNetwork {
    net: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let msg = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Copies the most recent error message on this thread into `buf`
/// (NUL-terminated, truncated to `cap` bytes) and returns the full
/// message length in bytes, excluding the terminator. Returns 0 when no
/// error has occurred. `buf` may be null to query the length alone.
///
/// # Safety
/// `buf`, when non-null, must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn slt_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Runs `f`, converting panics into `SLT_RUNTIME_ERROR` so they never
/// unwind across the ABI boundary.
fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            SLT_RUNTIME_ERROR
        }
    }
}

fn guarded_ptr(f: impl FnOnce() -> *mut SltNetwork) -> *mut SltNetwork {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(ptr) => ptr,
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, c_int> {
    if ptr.is_null() {
        set_error("path is null");
        return Err(SLT_NULL_ARGUMENT);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(SLT_INVALID_ARGUMENT)
        }
    }
}

fn export(net: Network) -> *mut SltNetwork {
    clear_error();
    Box::into_raw(Box::new(SltNetwork { net }))
}

/// Samples a fresh network with variance-preserving ("He") layer scales.
///
/// `widths` lists the layer widths from input to output (at least two
/// entries, all positive). `output_linear` skips the activation on the
/// final layer. `scheme` is one of the `SLT_SCHEME_*` constants;
/// `zero_bias` forces all biases to zero. Returns null on failure.
///
/// # Safety
/// `widths` must point to `n_widths` readable `size_t` values.
#[no_mangle]
pub unsafe extern "C" fn slt_network_init_he(
    widths: *const usize,
    n_widths: usize,
    output_linear: c_int,
    scheme: c_int,
    zero_bias: c_int,
    seed: u64,
) -> *mut SltNetwork {
    guarded_ptr(|| {
        if widths.is_null() {
            set_error("widths is null");
            return std::ptr::null_mut();
        }
        let widths = unsafe { std::slice::from_raw_parts(widths, n_widths) }.to_vec();
        let scheme = match scheme {
            SLT_SCHEME_UNIFORM => Scheme::Uniform,
            SLT_SCHEME_NORMAL => Scheme::Normal,
            SLT_SCHEME_LOOKS_LINEAR => Scheme::LooksLinear,
            other => {
                set_error(format!("unknown scheme {other}"));
                return std::ptr::null_mut();
            }
        };
        let arch = match Architecture::new(widths, output_linear != 0) {
            Ok(a) => a,
            Err(e) => {
                set_error(e.to_string());
                return std::ptr::null_mut();
            }
        };
        let mut spec = InitSpec::he(&arch, scheme, seed);
        spec.zero_bias = zero_bias != 0;
        match initialize(&arch, &spec) {
            Ok(net) => export(net),
            Err(e) => {
                set_error(e.to_string());
                std::ptr::null_mut()
            }
        }
    })
}

/// Loads a network saved by `slt_network_save` or the `slt-lab` CLI.
/// A stored mask is applied, zeroing the pruned parameters. Returns
/// null on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slt_network_load(path: *const c_char) -> *mut SltNetwork {
    guarded_ptr(|| {
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(_) => return std::ptr::null_mut(),
        };
        match SavedNetwork::load(&path) {
            Ok(saved) => {
                let net = match &saved.mask {
                    Some(mask) => saved.net.materialize_mask(mask),
                    None => saved.net,
                };
                export(net)
            }
            Err(e) => {
                set_error(format!("loading {}: {e}", path.display()));
                std::ptr::null_mut()
            }
        }
    })
}

/// Saves the network as JSON readable by `slt_network_load` and the CLI.
///
/// # Safety
/// `net` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slt_network_save(
    net: *const SltNetwork,
    path: *const c_char,
) -> c_int {
    guarded(|| {
        let Some(net) = (unsafe { net.as_ref() }) else {
            set_error("network is null");
            return SLT_NULL_ARGUMENT;
        };
        let path = match unsafe { path_from(path) } {
            Ok(p) => p,
            Err(code) => return code,
        };
        match SavedNetwork::new(net.net.clone()).save(&path) {
            Ok(()) => {
                clear_error();
                SLT_OK
            }
            Err(e) => {
                set_error(format!("saving {}: {e}", path.display()));
                SLT_IO_ERROR
            }
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn slt_network_free(net: *mut SltNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Number of input features, or 0 if `net` is null.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slt_network_input_dim(net: *const SltNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.net.arch.input_dim())
}

/// Number of outputs, or 0 if `net` is null.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slt_network_output_dim(net: *const SltNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.net.arch.output_dim())
}

/// Number of layers (weight matrices), or 0 if `net` is null.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slt_network_depth(net: *const SltNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.net.arch.depth())
}

/// Evaluates the network on `n_samples` row-major samples of
/// `input_dim` doubles each, writing `n_samples * output_dim` doubles
/// to `outputs`. `output_cap` guards the destination: it must be at
/// least the required length.
///
/// # Safety
/// `inputs` must hold `n_samples * input_dim` readable doubles and
/// `outputs` must hold `output_cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn slt_network_forward(
    net: *const SltNetwork,
    inputs: *const f64,
    n_samples: usize,
    input_dim: usize,
    outputs: *mut f64,
    output_cap: usize,
) -> c_int {
    guarded(|| {
        let Some(handle) = (unsafe { net.as_ref() }) else {
            set_error("network is null");
            return SLT_NULL_ARGUMENT;
        };
        if inputs.is_null() || outputs.is_null() {
            set_error("input or output buffer is null");
            return SLT_NULL_ARGUMENT;
        }
        if input_dim != handle.net.arch.input_dim() {
            set_error(format!(
                "network expects {} inputs, got {input_dim}",
                handle.net.arch.input_dim()
            ));
            return SLT_INVALID_ARGUMENT;
        }
        let output_dim = handle.net.arch.output_dim();
        let needed = n_samples * output_dim;
        if output_cap < needed {
            set_error(format!(
                "output buffer holds {output_cap} doubles, need {needed}"
            ));
            return SLT_INVALID_ARGUMENT;
        }
        let flat = unsafe { std::slice::from_raw_parts(inputs, n_samples * input_dim) };
        // Rows are samples at the ABI; columns are samples internally.
        let x = ndarray::Array2::from_shape_fn((input_dim, n_samples), |(d, s)| {
            flat[s * input_dim + d]
        });
        let y = handle.net.output(None, &x);
        let out = unsafe { std::slice::from_raw_parts_mut(outputs, needed) };
        for s in 0..n_samples {
            for d in 0..output_dim {
                out[s * output_dim + d] = y[[d, s]];
            }
        }
        clear_error();
        SLT_OK
    })
}

/// Multiplies the network's output by `lambda` by folding the factor
/// into the parameters (weights of one layer and downstream biases).
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slt_network_scale(net: *mut SltNetwork, lambda: f64) -> c_int {
    guarded(|| {
        let Some(handle) = (unsafe { net.as_mut() }) else {
            set_error("network is null");
            return SLT_NULL_ARGUMENT;
        };
        match distribute_lambda_in_place(&mut handle.net, lambda) {
            Ok(()) => {
                clear_error();
                SLT_OK
            }
            Err(e) => {
                set_error(e.to_string());
                SLT_INVALID_ARGUMENT
            }
        }
    })
}

/// Builds a strong lottery ticket approximating `target`: samples a
/// wider random "mother" network, prunes it by subset-sum matching, and
/// returns the masked result with the output scale folded in, so the
/// returned network approximates the target directly. On success, when
/// `sup_error_out` is non-null it receives the measured sup-norm error
/// over fresh probe inputs (a value at most `epsilon` up to sampling
/// error). Returns null on failure.
///
/// # Safety
/// `target` must be a live handle; `sup_error_out` must be null or
/// point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn slt_construct_ticket(
    target: *const SltNetwork,
    epsilon: f64,
    delta: f64,
    seed: u64,
    sup_error_out: *mut f64,
) -> *mut SltNetwork {
    guarded_ptr(|| {
        let Some(target) = (unsafe { target.as_ref() }) else {
            set_error("target is null");
            return std::ptr::null_mut();
        };
        let options = ConstructOptions::new(epsilon, delta, seed);
        let built = match construct_ticket(&target.net, &options) {
            Ok(b) => b,
            Err(e) => {
                set_error(e.to_string());
                return std::ptr::null_mut();
            }
        };
        let probes = sup_norm_probes(
            target.net.arch.input_dim(),
            2048,
            derive_seed(seed, &[0xFF1]),
        );
        let report = construction_report(&built, &target.net, &probes);
        let mut ticket = built.mother.net.materialize_mask(&built.mask);
        if let Err(e) = distribute_lambda_in_place(&mut ticket, built.lambda) {
            set_error(e.to_string());
            return std::ptr::null_mut();
        }
        if !sup_error_out.is_null() {
            unsafe { *sup_error_out = report.sup_error };
        }
        export(ticket)
    })
}
