//! C interface to `dream-core`.
//!
//! Every fallible call returns a [`DreamStatus`]; on failure the message is
//! available from [`dream_last_error`] on the same thread. Objects are opaque
//! handles created by `*_load`/`*_builtin` and released with the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dream_core::block::{dream_forward, BlockError, DreamParams};
use dream_core::eval::{compute_eer, cosine, roc_from_scores, EvalError};
use dream_core::io::{self, IoError};
use dream_core::pose::{
    estimate_pose, yaw_coefficient, CameraIntrinsics, FaceModel3D, GateMode, LandmarkSet, PoseError, NUM_LANDMARKS,
};
use dream_core::Embedding;
use nalgebra::Vector2;

pub const DREAM_GATE_NONLINEAR: u32 = 0;
pub const DREAM_GATE_LINEAR: u32 = 1;
pub const DREAM_GATE_CLOSED: u32 = 2;

/// Number of landmarks expected by [`dream_estimate_pose`].
pub const DREAM_NUM_LANDMARKS: usize = 21;
const _: () = assert!(DREAM_NUM_LANDMARKS == NUM_LANDMARKS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DreamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Panic = 6,
}

/// Trained residual block.
pub struct DreamBlock {
    params: DreamParams,
}

/// 21-point 3D face model.
pub struct DreamFaceModel {
    model: FaceModel3D,
}

/// Head pose in radians and millimetres.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DreamPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rmse_px: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DreamStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(DreamStatus::InvalidArgument, msg.into())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let status = if e.is_io() { DreamStatus::Io } else { DreamStatus::Format };
        Failure(status, e.to_string())
    }
}

impl From<BlockError> for Failure {
    fn from(e: BlockError) -> Self {
        let status = match e {
            BlockError::NonFiniteLoss | BlockError::NonFiniteParams => DreamStatus::Numerical,
            _ => DreamStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure(DreamStatus::InvalidArgument, e.to_string())
    }
}

impl From<PoseError> for Failure {
    fn from(e: PoseError) -> Self {
        let status = match e {
            PoseError::DegenerateConfiguration | PoseError::NonFiniteResidual => DreamStatus::Numerical,
            _ => DreamStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DreamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            DreamStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            DreamStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(DreamStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn gate_mode(code: u32) -> Result<GateMode, Failure> {
    match code {
        DREAM_GATE_NONLINEAR => Ok(GateMode::Nonlinear),
        DREAM_GATE_LINEAR => Ok(GateMode::Linear),
        DREAM_GATE_CLOSED => Ok(GateMode::Closed),
        other => Err(Failure::arg(format!("unknown gate code {other}"))),
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    non_null(p, "path")?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::arg("path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dream_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn dream_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file into a new block handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dream_block_load(path: *const c_char, out: *mut *mut DreamBlock) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let params = io::load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DreamBlock { params }));
        Ok(())
    })
}

/// Releases a block; NULL is ignored.
///
/// # Safety
/// `block` must come from [`dream_block_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dream_block_free(block: *mut DreamBlock) {
    if !block.is_null() {
        drop(Box::from_raw(block));
    }
}

/// Embedding dimension of the block, 0 for NULL.
///
/// # Safety
/// `block` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dream_block_dim(block: *const DreamBlock) -> usize {
    block.as_ref().map_or(0, |b| b.params.dim)
}

/// Corrects one embedding: `out = x + c(yaw)·R(x)`. `out` may alias `x`.
///
/// # Safety
/// `x` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dream_block_apply(
    block: *const DreamBlock,
    gate: u32,
    x: *const f64,
    len: usize,
    yaw: f64,
    out: *mut f64,
) -> DreamStatus {
    guard(|| {
        non_null(block, "block")?;
        non_null(out, "out")?;
        apply_one(&(*block).params, gate_mode(gate)?, slice(x, len, "x")?.to_vec(), yaw, out)
    })
}

unsafe fn apply_one(params: &DreamParams, mode: GateMode, x: Vec<f64>, yaw: f64, out: *mut f64) -> Result<(), Failure> {
    if !yaw.is_finite() {
        return Err(Failure::arg("yaw is not finite"));
    }
    let y = dream_forward(params, &Embedding::new(x), yaw_coefficient(yaw, mode))?;
    ptr::copy_nonoverlapping(y.values.as_ptr(), out, y.values.len());
    Ok(())
}

/// Corrects `n` row-major embeddings of width `dim` with one yaw each.
/// Nothing is written to `out` unless every row succeeds.
///
/// # Safety
/// `xs` and `out` must each hold `n·dim` doubles and `yaws` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dream_block_apply_batch(
    block: *const DreamBlock,
    gate: u32,
    xs: *const f64,
    n: usize,
    dim: usize,
    yaws: *const f64,
    out: *mut f64,
) -> DreamStatus {
    guard(|| {
        non_null(block, "block")?;
        non_null(out, "out")?;
        let params = &(*block).params;
        let mode = gate_mode(gate)?;
        let total = n.checked_mul(dim).ok_or_else(|| Failure::arg("n·dim overflows"))?;
        let xs = slice(xs, total, "xs")?;
        let yaws = slice(yaws, n, "yaws")?;
        let mut result = vec![0.0; total];
        for i in 0..n {
            let row = xs[i * dim..(i + 1) * dim].to_vec();
            apply_one(params, mode, row, yaws[i], result[i * dim..].as_mut_ptr())
                .map_err(|Failure(s, m)| Failure(s, format!("row {i}: {m}")))?;
        }
        ptr::copy_nonoverlapping(result.as_ptr(), out, total);
        Ok(())
    })
}

/// Gate coefficient for a yaw in radians.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dream_yaw_coefficient(yaw: f64, gate: u32, out: *mut f64) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = yaw_coefficient(yaw, gate_mode(gate)?);
        Ok(())
    })
}

/// The built-in face model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dream_face_model_builtin(out: *mut *mut DreamFaceModel) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(DreamFaceModel {
            model: FaceModel3D::builtin(),
        }));
        Ok(())
    })
}

/// Loads a `landmark_id,X,Y,Z` CSV face model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dream_face_model_load(path: *const c_char, out: *mut *mut DreamFaceModel) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let model = io::read_file(path_arg(path)?, io::read_face_model)?;
        *out = Box::into_raw(Box::new(DreamFaceModel { model }));
        Ok(())
    })
}

/// Releases a face model; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dream_face_model_free(model: *mut DreamFaceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Estimates head pose from 21 landmarks given as `x0,y0,...,x20,y20` pixels.
/// `visible` may be NULL (all visible) or point to 21 bytes, nonzero meaning visible.
/// The camera has focal length equal to the image width and the principal point at the centre.
///
/// # Safety
/// `xy` must hold 42 doubles, `visible` NULL or 21 bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dream_estimate_pose(
    model: *const DreamFaceModel,
    xy: *const f64,
    visible: *const u8,
    image_width: f64,
    image_height: f64,
    out: *mut DreamPose,
) -> DreamStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let xy = slice(xy, 2 * NUM_LANDMARKS, "xy")?;
        let points = xy.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect();
        let vis = if visible.is_null() {
            None
        } else {
            Some(std::slice::from_raw_parts(visible, NUM_LANDMARKS).iter().map(|v| *v != 0).collect())
        };
        let lms = LandmarkSet::new("ffi", points, vis)?;
        let cam = CameraIntrinsics::for_image(image_width, image_height)?;
        let p = estimate_pose(&(*model).model, &lms, &cam)?;
        *out = DreamPose {
            yaw: p.yaw,
            pitch: p.pitch,
            roll: p.roll,
            tx: p.translation.x,
            ty: p.translation.y,
            tz: p.translation.z,
            rmse_px: p.reprojection_rmse,
        };
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dream_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = cosine(slice(a, len, "a")?, slice(b, len, "b")?)?;
        Ok(())
    })
}

/// Equal error rate of `n` scores, higher meaning more similar, with labels
/// nonzero for same-subject pairs.
///
/// # Safety
/// `scores` must hold `n` doubles and `labels` `n` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dream_eer(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> DreamStatus {
    guard(|| {
        non_null(out, "out")?;
        let scores = slice(scores, n, "scores")?;
        if n > 0 {
            non_null(labels, "labels")?;
        }
        let labels: &[u8] = if n == 0 { &[] } else { std::slice::from_raw_parts(labels, n) };
        let scored: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(s, l)| (*s, *l != 0)).collect();
        *out = compute_eer(&roc_from_scores(&scored)?);
        Ok(())
    })
}
