//! C interface to the xltag tagger.
//!
//! Models and embedding spaces are handed out as opaque pointers that the
//! caller releases with the matching `_free` function. Every fallible call
//! returns an [`XltagStatus`]; on failure [`xltag_last_error`] describes what
//! went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use xltag::cli::{load_space, Side, SpaceArgs};
use xltag::embed::EmbeddingSpace;
use xltag::tagger::Tagger;
use xltag::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XltagStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    /// Model and embeddings (or tagsets) do not belong together.
    Mismatch = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Which projection of an alignment to apply to loaded embeddings.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XltagSide {
    Source = 0,
    Target = 1,
}

/// A trained tagger.
pub struct XltagModel {
    inner: Tagger,
}

/// Word vectors, possibly projected into an aligned space.
pub struct XltagSpace {
    inner: EmbeddingSpace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> XltagStatus {
    match e {
        Error::Io { .. } => XltagStatus::Io,
        Error::SpaceMismatch { .. } | Error::TagsetMismatch(_) => XltagStatus::Mismatch,
        _ if e.is_numerical() => XltagStatus::Numerical,
        _ => XltagStatus::InvalidInput,
    }
}

struct Failure(XltagStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> XltagStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => XltagStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            XltagStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(XltagStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(XltagStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null if it succeeded.
/// The string stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn xltag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model file written by `xltag train-source` or `train-joint`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xltag_model_load(path: *const c_char, out: *mut *mut XltagModel) -> XltagStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model = Tagger::load_file(std::path::Path::new(path))?;
        *out = Box::into_raw(Box::new(XltagModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`xltag_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xltag_model_free(model: *mut XltagModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads embeddings. With a non-null `alignment_dir` the vectors are
/// projected by the `side` projection of that alignment.
///
/// # Safety
/// String arguments must be NUL-terminated (`alignment_dir` may be null) and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xltag_space_load(
    embeddings_path: *const c_char,
    alignment_dir: *const c_char,
    side: XltagSide,
    out: *mut *mut XltagSpace,
) -> XltagStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let embeddings = PathBuf::from(str_arg(embeddings_path, "embeddings_path")?);
        let alignment = if alignment_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(alignment_dir, "alignment_dir")?))
        };
        let side = match side {
            XltagSide::Source => Side::Src,
            XltagSide::Target => Side::Tgt,
        };
        let args = SpaceArgs {
            embeddings,
            alignment,
            side: Some(side),
        };
        let (space, _) = load_space(&args, side)?;
        *out = Box::into_raw(Box::new(XltagSpace { inner: space }));
        Ok(())
    })
}

/// Releases a space. Null is ignored.
///
/// # Safety
/// `space` must come from [`xltag_space_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xltag_space_free(space: *mut XltagSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Size of the model's tagset.
///
/// # Safety
/// `model` must be a live model and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xltag_model_num_tags(model: *const XltagModel, out: *mut usize) -> XltagStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = model.inner.num_tags();
        Ok(())
    })
}

/// Copies the name of tag `index` into `buf` with a terminating NUL.
/// `needed` (if non-null) receives the required size including the NUL, so
/// callers can size the buffer with a first call using `buf_len = 0`.
///
/// # Safety
/// `model` must be a live model, `buf` valid for `buf_len` bytes (or null
/// when `buf_len` is 0) and `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn xltag_model_tag_name(
    model: *const XltagModel,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> XltagStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let tagset = model.inner.tagset();
        if index >= tagset.len() {
            return Err(Failure(
                XltagStatus::OutOfRange,
                format!("tag index {index} out of range for {} tags", tagset.len()),
            ));
        }
        let name = tagset.name(index).as_bytes();
        if !needed.is_null() {
            *needed = name.len() + 1;
        }
        if buf_len < name.len() + 1 {
            return Err(Failure(
                XltagStatus::BufferTooSmall,
                format!("tag name needs {} bytes", name.len() + 1),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Tags one sentence of `n_tokens` words, writing tag indices to `out_tags`.
/// The gold head is used when the model was trained on gold labels, the
/// distant head otherwise.
///
/// # Safety
/// `tokens` must point to `n_tokens` NUL-terminated strings and `out_tags`
/// must have room for `n_tokens` values.
#[no_mangle]
pub unsafe extern "C" fn xltag_predict(
    model: *const XltagModel,
    space: *const XltagSpace,
    tokens: *const *const c_char,
    n_tokens: usize,
    out_tags: *mut usize,
) -> XltagStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let space = space.as_ref().ok_or_else(|| null("space"))?;
        if tokens.is_null() {
            return Err(null("tokens"));
        }
        if out_tags.is_null() {
            return Err(null("out_tags"));
        }
        let words = std::slice::from_raw_parts(tokens, n_tokens)
            .iter()
            .map(|&t| str_arg(t, "token").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let m = &model.inner;
        let tags = m.tag_tokens(&space.inner, &words, m.evaluation_head())?;
        std::slice::from_raw_parts_mut(out_tags, n_tokens).copy_from_slice(&tags);
        Ok(())
    })
}

/// Balancing weight between `gold_tokens` and `distant_tokens`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xltag_gamma(gold_tokens: usize, distant_tokens: usize, out: *mut f64) -> XltagStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = xltag::trainer::gamma(gold_tokens, distant_tokens)?;
        Ok(())
    })
}
