//! C ABI over `a2f-core`.
//!
//! Every function returns an [`A2fStatus`]; on failure a human-readable
//! message is available from [`a2f_last_error`] on the same thread. Models
//! are opaque handles created by `a2f_model_create`/`a2f_model_load` and
//! released with `a2f_model_free`. Images are tightly packed 8-bit RGB,
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use a2f_core::data::{psnr_y, ssim_y, ColorTag, ImagePlane};
use a2f_core::model::{Ablation, Model, ModelConfig, Variant};
use a2f_core::store::{load_checkpoint, save_checkpoint, Metadata};
use a2f_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A2fStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Not a checkpoint, corrupt, or an unsupported version.
    Format = 4,
    ShapeMismatch = 5,
    Numerical = 6,
    Evaluation = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

/// Opaque model handle.
pub struct A2fModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> A2fStatus {
    match err {
        Error::Config(_) => A2fStatus::InvalidArgument,
        Error::Numerical { .. } => A2fStatus::Numerical,
        Error::Io { .. } => A2fStatus::Io,
        Error::Image { .. } => A2fStatus::Format,
        Error::BadMagic | Error::UnsupportedVersion(_) | Error::Checksum { .. } | Error::Parse(_) => {
            A2fStatus::Format
        }
        Error::ShapeMismatch(_) => A2fStatus::ShapeMismatch,
        Error::Evaluation(_) => A2fStatus::Evaluation,
    }
}

struct Fail(A2fStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(A2fStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(A2fStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics to a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> A2fStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            A2fStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            A2fStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(m: *const A2fModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null("output pointer"))
}

unsafe fn rgb8_plane(data: *const u8, width: usize, height: usize, what: &str) -> Result<ImagePlane, Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    if width == 0 || height == 0 {
        return Err(invalid(format!("{what} has zero size")));
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| invalid(format!("{what} dimensions overflow")))?;
    let bytes = std::slice::from_raw_parts(data, len).to_vec();
    Ok(ImagePlane::from_u8(width, height, ColorTag::Rgb, bytes)?)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn a2f_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn a2f_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a freshly initialised model. `variant` is "S", "SD", "M" or "L".
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_create(
    variant: *const c_char,
    scale: u32,
    seed: u64,
    out: *mut *mut A2fModel,
) -> A2fStatus {
    guard(|| {
        let out = out_ref(out)?;
        let variant: Variant = str_arg(variant, "variant")?.parse()?;
        let config = ModelConfig::variant(variant, scale as usize, Ablation::default())?;
        let model = Model::new(config, seed)?;
        *out = Box::into_raw(Box::new(A2fModel { model }));
        Ok(())
    })
}

/// Creates a custom model of `blocks` blocks with `channels` trunk channels.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_create_custom(
    blocks: u32,
    channels: u32,
    scale: u32,
    seed: u64,
    out: *mut *mut A2fModel,
) -> A2fStatus {
    guard(|| {
        let out = out_ref(out)?;
        let config = ModelConfig::custom(scale as usize, blocks as usize, channels as usize)?;
        *out = Box::into_raw(Box::new(A2fModel { model: Model::new(config, seed)? }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_load(path: *const c_char, out: *mut *mut A2fModel) -> A2fStatus {
    guard(|| {
        let out = out_ref(out)?;
        let model = load_checkpoint(str_arg(path, "path")?)?.model;
        *out = Box::into_raw(Box::new(A2fModel { model }));
        Ok(())
    })
}

/// Writes the weights (no optimizer state) to `path`.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_save(model: *const A2fModel, path: *const c_char) -> A2fStatus {
    guard(|| {
        let model = model_ref(model)?;
        save_checkpoint(str_arg(path, "path")?, model, None, &Metadata::default())?;
        Ok(())
    })
}

/// Releases a model; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_free(model: *mut A2fModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_param_count(model: *const A2fModel, out: *mut u64) -> A2fStatus {
    guard(|| {
        *out_ref(out)? = model_ref(model)?.count_params() as u64;
        Ok(())
    })
}

/// Multiply-accumulates of one forward pass producing a `width`×`height` output.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_multiadds(
    model: *const A2fModel,
    width: usize,
    height: usize,
    out: *mut u64,
) -> A2fStatus {
    guard(|| {
        *out_ref(out)? = model_ref(model)?.count_multiadds((width, height))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_scale(model: *const A2fModel, out: *mut u32) -> A2fStatus {
    guard(|| {
        *out_ref(out)? = model_ref(model)?.config.scale as u32;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_block_count(model: *const A2fModel, out: *mut u32) -> A2fStatus {
    guard(|| {
        *out_ref(out)? = model_ref(model)?.config.n_blocks as u32;
        Ok(())
    })
}

/// Writes (λ_res, λ_att, λ_x) for every block, block-major, into `out`,
/// which holds `len` floats and must fit 3 × block count.
///
/// # Safety
/// `model` must come from this library and `out` hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_lambdas(model: *const A2fModel, out: *mut f32, len: usize) -> A2fStatus {
    guard(|| {
        let report = model_ref(model)?.lambda_report();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len < 3 * report.len() {
            return Err(invalid(format!("buffer holds {len} floats, need {}", 3 * report.len())));
        }
        let out = std::slice::from_raw_parts_mut(out, 3 * report.len());
        for (chunk, t) in out.chunks_exact_mut(3).zip(&report) {
            chunk.copy_from_slice(&[t.res as f32, t.att as f32, t.x as f32]);
        }
        Ok(())
    })
}

/// Super-resolves a `width`×`height` RGB8 image into `output`, which holds
/// `output_len` bytes and must fit (scale·width)·(scale·height)·3.
///
/// # Safety
/// `input` must hold width·height·3 bytes and `output` `output_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn a2f_model_upscale_rgb8(
    model: *const A2fModel,
    input: *const u8,
    width: usize,
    height: usize,
    output: *mut u8,
    output_len: usize,
) -> A2fStatus {
    guard(|| {
        let model = model_ref(model)?;
        let plane = rgb8_plane(input, width, height, "input")?;
        if output.is_null() {
            return Err(null("output"));
        }
        let p = model.config.scale;
        let need = width * p * height * p * 3;
        if output_len < need {
            return Err(invalid(format!("output holds {output_len} bytes, need {need}")));
        }
        let sr = ImagePlane::from_tensor(&model.forward(&plane.to_tensor())?, 0)?.quantized();
        let bytes = match &sr.samples {
            a2f_core::data::Samples::U8(b) => b,
            _ => unreachable!("quantized planes hold bytes"),
        };
        std::slice::from_raw_parts_mut(output, need).copy_from_slice(bytes);
        Ok(())
    })
}

unsafe fn metric(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    shave: usize,
    out: *mut f64,
    f: fn(&ImagePlane, &ImagePlane, usize) -> a2f_core::Result<f64>,
) -> A2fStatus {
    guard(|| {
        let out = out_ref(out)?;
        let a = rgb8_plane(a, width, height, "first image")?;
        let b = rgb8_plane(b, width, height, "second image")?;
        *out = f(&a, &b, shave)?;
        Ok(())
    })
}

/// PSNR on BT.601 luma of two RGB8 images, ignoring `shave` border pixels.
///
/// # Safety
/// `a` and `b` must each hold width·height·3 bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2f_psnr_y_rgb8(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    shave: usize,
    out: *mut f64,
) -> A2fStatus {
    metric(a, b, width, height, shave, out, psnr_y)
}

/// SSIM on BT.601 luma of two RGB8 images, ignoring `shave` border pixels.
///
/// # Safety
/// As [`a2f_psnr_y_rgb8`].
#[no_mangle]
pub unsafe extern "C" fn a2f_ssim_y_rgb8(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    shave: usize,
    out: *mut f64,
) -> A2fStatus {
    metric(a, b, width, height, shave, out, ssim_y)
}
