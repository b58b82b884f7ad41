//! C ABI over the lleaks network engine.
//!
//! Networks are opaque handles created by `lleaks_network_load` or
//! `lleaks_network_build` and released with `lleaks_network_free`. Every
//! fallible call returns an [`LleaksStatus`]; on failure the message is
//! available from `lleaks_last_error` until the next call on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lleaks::losses::mi_softmax;
use lleaks::models::{build_arch, ArchId};
use lleaks::nn::{load_network, save_network, Network, Tensor};
use lleaks::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LleaksStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Panic = 6,
}

/// Opaque network handle.
pub struct LleaksNetwork {
    net: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LleaksStatus {
    match e {
        Error::Io { .. } => LleaksStatus::Io,
        Error::BadMagic { .. } | Error::Truncated { .. } | Error::DescriptorMismatch { .. } => {
            LleaksStatus::Format
        }
        Error::Shape { .. } | Error::IncompatibleArch { .. } => LleaksStatus::Shape,
        _ => LleaksStatus::InvalidArgument,
    }
}

struct Failure(LleaksStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LleaksStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LleaksStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LleaksStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LleaksStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LleaksStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn net_arg<'a>(h: *const LleaksNetwork) -> Result<&'a Network, Failure> {
    h.as_ref().map(|h| &h.net).ok_or_else(|| null("network"))
}

unsafe fn emit(out: *mut *mut LleaksNetwork, net: Network) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(LleaksNetwork { net }));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn lleaks_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_load(
    path: *const c_char,
    out: *mut *mut LleaksNetwork,
) -> LleaksStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        emit(out, load_network(path)?)
    })
}

/// Builds a freshly initialized registry architecture.
///
/// # Safety
/// `arch` must be a NUL-terminated string, `input_shape` must point to
/// `rank` values and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_build(
    arch: *const c_char,
    input_shape: *const usize,
    rank: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut LleaksNetwork,
) -> LleaksStatus {
    guard(|| {
        let arch: ArchId = str_arg(arch, "arch")?.parse()?;
        if input_shape.is_null() || rank == 0 {
            return Err(null("input_shape"));
        }
        let shape = std::slice::from_raw_parts(input_shape, rank);
        emit(out, build_arch(arch, shape, num_classes, seed)?)
    })
}

/// Writes the network as a checkpoint file.
///
/// # Safety
/// `net` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_save(
    net: *const LleaksNetwork,
    path: *const c_char,
) -> LleaksStatus {
    guard(|| {
        let net = net_arg(net)?;
        Ok(save_network(net, str_arg(path, "path")?)?)
    })
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_num_classes(net: *const LleaksNetwork) -> usize {
    net.as_ref().map_or(0, |h| h.net.num_classes())
}

/// Values per input sample, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_input_len(net: *const LleaksNetwork) -> usize {
    net.as_ref().map_or(0, |h| h.net.input_shape().iter().product())
}

/// Raw logits for `batch` samples laid out row-major in `input`.
/// `out_logits` receives `batch * num_classes` values.
///
/// # Safety
/// `input` must hold `batch * input_len` values and `out_logits` must have
/// room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_forward(
    net: *const LleaksNetwork,
    input: *const f64,
    batch: usize,
    out_logits: *mut f64,
    out_len: usize,
) -> LleaksStatus {
    guard(|| {
        let net = net_arg(net)?;
        if input.is_null() {
            return Err(null("input"));
        }
        if out_logits.is_null() {
            return Err(null("out_logits"));
        }
        let c = net.num_classes();
        if batch == 0 || out_len != batch * c {
            return Err(Failure(
                LleaksStatus::InvalidArgument,
                format!("need a positive batch and out_len = batch * {c}, got {batch} and {out_len}"),
            ));
        }
        let per: usize = net.input_shape().iter().product();
        let data = std::slice::from_raw_parts(input, batch * per).to_vec();
        let mut shape = vec![batch];
        shape.extend_from_slice(net.input_shape());
        let logits = net.forward(&Tensor::new(shape, data)?)?;
        std::slice::from_raw_parts_mut(out_logits, out_len).copy_from_slice(logits.data());
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must be null or come from this library, and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lleaks_network_free(net: *mut LleaksNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Tempered softmax of `n` logits into `out`.
///
/// # Safety
/// `logits` and `out` must each point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn lleaks_mi_softmax(
    logits: *const f64,
    n: usize,
    temperature: f64,
    out: *mut f64,
) -> LleaksStatus {
    guard(|| {
        if logits.is_null() || out.is_null() {
            return Err(null("logits or out"));
        }
        let z = std::slice::from_raw_parts(logits, n);
        let p = mi_softmax(z, temperature)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(p.values());
        Ok(())
    })
}
