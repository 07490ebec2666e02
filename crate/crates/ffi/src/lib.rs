//! C interface to trained snapshots: load a model file, rank raw text or a
//! sparse count vector, read leaf names. Every call returns an
//! [`HsimStatus`]; on failure [`hsim_last_error`] has the message for the
//! calling thread.
//!
//! Handles are opaque. A model handle may be shared between threads for
//! ranking; it must be released exactly once with [`hsim_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hsim_core::simcore::RankedList;
use hsim_core::snapshot::Snapshot;
use hsim_core::sparse::SparseVec;
use hsim_core::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// The file is not a valid snapshot.
    Format = 4,
    InvalidArgument = 5,
    OutOfRange = 6,
    /// The output buffer is too short; the required length was written.
    BufferTooSmall = 7,
    /// The document has no dictionary words; outputs hold the tie order.
    EmptyDocument = 8,
    Internal = 99,
}

/// A loaded snapshot.
pub struct HsimModel {
    snapshot: Snapshot,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: HsimStatus, msg: impl Into<String>) -> HsimStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> HsimStatus {
    match e {
        Error::Io(_) => HsimStatus::Io,
        Error::Format { .. } | Error::Json(_) => HsimStatus::Format,
        Error::OutOfRange { .. } => HsimStatus::OutOfRange,
        _ => HsimStatus::InvalidArgument,
    }
}

/// Runs `f`, turning panics into [`HsimStatus::Internal`].
fn guard(f: impl FnOnce() -> HsimStatus) -> HsimStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(HsimStatus::Internal, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, HsimStatus> {
    if p.is_null() {
        return Err(fail(HsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const HsimModel) -> Result<&'a HsimModel, HsimStatus> {
    m.as_ref()
        .ok_or_else(|| fail(HsimStatus::NullPointer, "model handle is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length, 0 when
/// there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hsim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Loads a snapshot file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsim_model_load(
    path: *const c_char,
    out: *mut *mut HsimModel,
) -> HsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(HsimStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Snapshot::load(Path::new(path)) {
            Ok(snapshot) => {
                *out = Box::into_raw(Box::new(HsimModel { snapshot }));
                HsimStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from [`hsim_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsim_model_free(model: *mut HsimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of leaves, which is the length every ranking buffer needs.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsim_model_leaf_count(
    model: *const HsimModel,
    out: *mut usize,
) -> HsimStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(HsimStatus::NullPointer, "out is null");
        }
        *out = m.snapshot.model.leaf_count();
        HsimStatus::Ok
    })
}

/// Levels of the topic tree, root included.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsim_model_height(model: *const HsimModel, out: *mut usize) -> HsimStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(HsimStatus::NullPointer, "out is null");
        }
        *out = m.snapshot.model.height();
        HsimStatus::Ok
    })
}

/// Writes the `root / … / leaf` path of `leaf` into `buf` with a NUL. When
/// `len` is too short nothing is written, `*needed` gets the byte count
/// including the NUL and [`HsimStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `buf` must point to `len` writable bytes (or be null with `len == 0`);
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn hsim_model_leaf_path(
    model: *const HsimModel,
    leaf: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> HsimStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let tree = &m.snapshot.model.tree;
        if leaf >= tree.leaf_count() {
            return fail(
                HsimStatus::OutOfRange,
                format!("leaf {leaf} out of range ({} leaves)", tree.leaf_count()),
            );
        }
        let path = tree.leaf_path(leaf);
        let want = path.len() + 1;
        if !needed.is_null() {
            *needed = want;
        }
        if len < want || buf.is_null() {
            return fail(
                HsimStatus::BufferTooSmall,
                format!("leaf path needs {want} bytes"),
            );
        }
        ptr::copy_nonoverlapping(path.as_ptr().cast(), buf, path.len());
        *buf.add(path.len()) = 0;
        HsimStatus::Ok
    })
}

unsafe fn write_ranking(
    m: &HsimModel,
    x: &SparseVec,
    order: *mut usize,
    scores: *mut f64,
    len: usize,
) -> HsimStatus {
    let k = m.snapshot.model.leaf_count();
    if order.is_null() {
        return fail(HsimStatus::NullPointer, "order buffer is null");
    }
    if len != k {
        return fail(
            HsimStatus::InvalidArgument,
            format!("buffers must hold {k} leaves, got {len}"),
        );
    }
    let empty = x.is_empty();
    let raw = if empty {
        vec![0.0; k]
    } else {
        m.snapshot.model.scores(x)
    };
    let ranked = RankedList::from_scores(&raw);
    std::slice::from_raw_parts_mut(order, k).copy_from_slice(&ranked.order);
    if !scores.is_null() {
        std::slice::from_raw_parts_mut(scores, k).copy_from_slice(&ranked.scores);
    }
    if empty {
        fail(
            HsimStatus::EmptyDocument,
            "no dictionary words in the document",
        )
    } else {
        HsimStatus::Ok
    }
}

/// Ranks raw text: `order[i]` is the leaf at position `i`, `scores[i]` its
/// score (`scores` may be null). Both buffers hold exactly the leaf count.
///
/// # Safety
/// `text` must be NUL-terminated; `order` and a non-null `scores` must
/// point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn hsim_rank_text(
    model: *const HsimModel,
    text: *const c_char,
    order: *mut usize,
    scores: *mut f64,
    len: usize,
) -> HsimStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let x = m.snapshot.vectorize_text(text);
        write_ranking(m, &x, order, scores, len)
    })
}

/// Ranks a sparse count vector given as `nnz` (word index, count) pairs.
///
/// # Safety
/// `indices` and `counts` must point to `nnz` elements (or be null with
/// `nnz == 0`); output buffers as for [`hsim_rank_text`].
#[no_mangle]
pub unsafe extern "C" fn hsim_rank_counts(
    model: *const HsimModel,
    indices: *const u32,
    counts: *const f64,
    nnz: usize,
    order: *mut usize,
    scores: *mut f64,
    len: usize,
) -> HsimStatus {
    guard(|| {
        let m = match model_arg(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        if nnz > 0 && (indices.is_null() || counts.is_null()) {
            return fail(HsimStatus::NullPointer, "indices or counts is null");
        }
        let (idx, val) = if nnz == 0 {
            (&[][..], &[][..])
        } else {
            (
                std::slice::from_raw_parts(indices, nnz),
                std::slice::from_raw_parts(counts, nnz),
            )
        };
        let dim = m.snapshot.model.dictionary.len();
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= dim) {
            return fail(
                HsimStatus::OutOfRange,
                format!("word index {bad} out of range ({dim} words)"),
            );
        }
        if val.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail(
                HsimStatus::InvalidArgument,
                "counts must be finite and non-negative",
            );
        }
        let x = SparseVec::from_pairs(idx.iter().zip(val).map(|(&i, &v)| (i, v)));
        write_ranking(m, &x, order, scores, len)
    })
}
