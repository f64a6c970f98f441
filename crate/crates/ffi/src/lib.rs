//! C ABI over `cidlab`.
//!
//! Every fallible function returns a [`CidStatus`]; on anything other than
//! `CID_STATUS_OK` the message is available from [`cid_last_error_message`]
//! on the same thread. Output buffers are caller-allocated, and lengths are
//! checked. Panics are caught at the boundary and reported as
//! `CID_STATUS_PANIC`.
//!
//! The header is generated into `include/cidlab.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cidlab::contrastive::{band_count, info_nce_from_dots, info_nce_grad_query, rank_order};
use cidlab::encoder::{load_checkpoint, EncoderParams};
use cidlab::experiments::{run_single, ExperimentConfig};
use cidlab::numerics::dot;
use cidlab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFinite = 4,
    Io = 5,
    VersionMismatch = 6,
    CorruptChecksum = 7,
    EmptyNegatives = 8,
    Config = 9,
    Failed = 10,
    Panic = 11,
}

/// Opaque handle to a frozen query encoder loaded from a checkpoint.
pub struct CidEncoder {
    params: EncoderParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> CidStatus {
    match e {
        Error::ShapeMismatch { .. } => CidStatus::ShapeMismatch,
        Error::NonFinite(_) | Error::ZeroVector { .. } => CidStatus::NonFinite,
        Error::Io { .. } => CidStatus::Io,
        Error::VersionMismatch { .. } => CidStatus::VersionMismatch,
        Error::CorruptChecksum(_) => CidStatus::CorruptChecksum,
        Error::EmptyNegatives => CidStatus::EmptyNegatives,
        Error::Config(_) | Error::GridTooLarge { .. } => CidStatus::Config,
        _ => CidStatus::Failed,
    }
}

struct Fail(CidStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CidStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CidStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CidStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CidStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn need_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(
            CidStatus::ShapeMismatch,
            format!("{what} has length {got}, expected {want}"),
        ));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or "" after a success.
/// The pointer stays valid until the next cidlab call on this thread.
#[no_mangle]
pub extern "C" fn cid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of negatives in a fractional band over `k` ranked negatives:
/// `max(1, round(fraction * k))`. Returns 0 if `fraction` is outside (0, 1].
#[no_mangle]
pub extern "C" fn cid_band_count(fraction: f64, k: usize) -> usize {
    if fraction > 0.0 && fraction <= 1.0 {
        band_count(fraction, k)
    } else {
        0
    }
}

/// Query, positive and negative rows borrowed from caller memory.
type NceInputs<'a> = (&'a [f64], &'a [f64], Vec<&'a [f64]>);

unsafe fn nce_inputs<'a>(
    query: *const f64,
    positive: *const f64,
    negatives: *const f64,
    n_negatives: usize,
    dim: usize,
    tau: f64,
) -> Result<NceInputs<'a>, Fail> {
    if dim == 0 {
        return Err(invalid("dim must be positive"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("temperature must be positive, got {tau}")));
    }
    let q = slice(query, dim, "query")?;
    let p = slice(positive, dim, "positive")?;
    let n = slice(negatives, n_negatives * dim, "negatives")?;
    Ok((q, p, n.chunks(dim).collect()))
}

/// InfoNCE loss for one query. `negatives` is row-major, `n_negatives × dim`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out_loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cid_info_nce_loss(
    query: *const f64,
    positive: *const f64,
    negatives: *const f64,
    n_negatives: usize,
    dim: usize,
    tau: f64,
    out_loss: *mut f64,
) -> CidStatus {
    guard(|| {
        let (q, p, negs) = nce_inputs(query, positive, negatives, n_negatives, dim, tau)?;
        let out = out_slice(out_loss, 1, "out_loss")?;
        let dots: Vec<f64> = negs.iter().map(|k| dot(q, k)).collect();
        out[0] = info_nce_from_dots(dot(q, p), &dots, tau);
        Ok(())
    })
}

/// Gradient of the InfoNCE loss with respect to the query, written to
/// `out_grad` (`dim` entries).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cid_info_nce_grad(
    query: *const f64,
    positive: *const f64,
    negatives: *const f64,
    n_negatives: usize,
    dim: usize,
    tau: f64,
    out_grad: *mut f64,
) -> CidStatus {
    guard(|| {
        let (q, p, negs) = nce_inputs(query, positive, negatives, n_negatives, dim, tau)?;
        let out = out_slice(out_grad, dim, "out_grad")?;
        out.copy_from_slice(&info_nce_grad_query(q, p, &negs, tau));
        Ok(())
    })
}

/// Ranks negatives by dot product with the query, hardest first. Equal dots
/// keep the lower index first, so pass the oldest negative at index 0 to get
/// queue order. Writes `n_negatives` indices to `out_order`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cid_rank_difficulty(
    query: *const f64,
    negatives: *const f64,
    n_negatives: usize,
    dim: usize,
    out_order: *mut usize,
) -> CidStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        if n_negatives == 0 {
            return Err(Error::EmptyNegatives.into());
        }
        let q = slice(query, dim, "query")?;
        let n = slice(negatives, n_negatives * dim, "negatives")?;
        let out = out_slice(out_order, n_negatives, "out_order")?;
        let dots: Vec<f64> = n.chunks(dim).map(|k| dot(q, k).clamp(-1.0, 1.0)).collect();
        out.copy_from_slice(&rank_order(&dots, |i| i as u64));
        Ok(())
    })
}

/// Loads the query encoder from a checkpoint file. On success `*out` owns a
/// handle that must be released with [`cid_encoder_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cid_encoder_load(
    path: *const c_char,
    out: *mut *mut CidEncoder,
) -> CidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let ck = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(CidEncoder {
            params: ck.pair.query,
        }));
        Ok(())
    })
}

/// Releases a handle from [`cid_encoder_load`]. Null is a no-op.
///
/// # Safety
/// `enc` must be null or a live handle, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn cid_encoder_free(enc: *mut CidEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Input, representation and embedding widths of the encoder. Any output
/// pointer may be null.
///
/// # Safety
/// `enc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cid_encoder_dims(
    enc: *const CidEncoder,
    input_dim: *mut usize,
    repr_dim: *mut usize,
    embed_dim: *mut usize,
) -> CidStatus {
    guard(|| {
        let e = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let c = e.params.config();
        for (p, v) in [
            (input_dim, c.input_dim),
            (repr_dim, c.repr_dim),
            (embed_dim, c.embed_dim),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

unsafe fn encode(
    enc: *const CidEncoder,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
    repr: bool,
) -> CidStatus {
    guard(|| {
        let e = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let c = e.params.config();
        need_len(x_len, c.input_dim, "input")?;
        let want = if repr { c.repr_dim } else { c.embed_dim };
        need_len(out_len, want, "output buffer")?;
        let x = slice(x, x_len, "input")?;
        let out = out_slice(out, out_len, "output")?;
        let v = if repr {
            e.params.forward_base(x)?
        } else {
            e.params.embed(x)?
        };
        out.copy_from_slice(&v);
        Ok(())
    })
}

/// Unit-norm embedding of one input (`embed_dim` outputs).
///
/// # Safety
/// `enc` must be a live handle; buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cid_encoder_embed(
    enc: *const CidEncoder,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> CidStatus {
    encode(enc, x, x_len, out, out_len, false)
}

/// Base-network representation of one input (`repr_dim` outputs), the
/// features a linear probe sees.
///
/// # Safety
/// `enc` must be a live handle; buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cid_encoder_represent(
    enc: *const CidEncoder,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> CidStatus {
    encode(enc, x, x_len, out, out_len, true)
}

/// Runs one experiment from `key = value` config text: pre-training, probe
/// and the configured analyses. Artifacts go to `out_dir` unless it is null.
/// The probe top-1 accuracy is written to `out_top1` when non-null.
///
/// # Safety
/// `config_text` must be NUL-terminated; `out_dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cid_run_config(
    config_text: *const c_char,
    out_dir: *const c_char,
    out_top1: *mut f64,
) -> CidStatus {
    guard(|| {
        let cfg = ExperimentConfig::parse(text(config_text, "config_text")?)?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(text(out_dir, "out_dir")?))
        };
        let out = run_single(&cfg, dir)?;
        if !out_top1.is_null() {
            *out_top1 = out.probe.top1;
        }
        Ok(())
    })
}
