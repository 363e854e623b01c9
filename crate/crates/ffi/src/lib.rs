//! C interface to the trajectory forecaster.
//!
//! Models are opaque [`StgcnnModel`] handles created by
//! [`stgcnn_model_new`] or [`stgcnn_model_load`] and released with
//! [`stgcnn_model_free`]. Every fallible call returns a [`StgcnnStatus`];
//! on failure [`stgcnn_last_error`] describes the problem for the calling
//! thread.
//!
//! Arrays are row-major `f64`. Observed tracks are `n_peds × t_obs × 2`
//! absolute positions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use stgcnn::checkpoint::{load_checkpoint, save_checkpoint};
use stgcnn::graph::{self, KernelKind};
use stgcnn::model::{init_params, param_count, predict_window, ModelConfig, ModelParams};
use stgcnn::trajdata::{Track, TrajectoryWindow};
use stgcnn::{eval, gaussian, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StgcnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Shape = 6,
    Numeric = 7,
    Panic = 8,
}

/// Edge-weight function selector for [`stgcnn_kernel_weight`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StgcnnKernel {
    Sim = 0,
    L2 = 1,
    Exp = 2,
    SimEps = 3,
    Ones = 4,
}

/// Opaque model handle.
pub struct StgcnnModel {
    params: ModelParams,
    config: ModelConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> StgcnnStatus {
    match e {
        Error::Parse { .. } | Error::Csv(_) => StgcnnStatus::Parse,
        Error::Io(_) | Error::NoScenes(_) | Error::EmptyScene(_) => StgcnnStatus::Io,
        Error::Checkpoint { .. } => StgcnnStatus::Checkpoint,
        Error::Shape { .. } => StgcnnStatus::Shape,
        Error::Numeric(_) => StgcnnStatus::Numeric,
        Error::Config(_) | Error::Contract(_) | Error::UnknownScene { .. } => StgcnnStatus::InvalidArgument,
    }
}

struct Fail(StgcnnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StgcnnStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(StgcnnStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StgcnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StgcnnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            StgcnnStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const StgcnnModel) -> Result<&'a StgcnnModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_slice<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

fn tracks(flat: &[f64], n: usize, t: usize) -> Vec<Track> {
    (0..n)
        .map(|i| (0..t).map(|s| [flat[(i * t + s) * 2], flat[(i * t + s) * 2 + 1]]).collect())
        .collect()
}

fn observed_window(model: &StgcnnModel, obs: *const f64, n_peds: usize) -> Result<TrajectoryWindow, Fail> {
    if n_peds == 0 {
        return Err(invalid("n_peds must be positive"));
    }
    let t_obs = model.config.t_obs;
    let flat = unsafe { slice_arg(obs, n_peds * t_obs * 2, "obs")? };
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Fail(StgcnnStatus::Numeric, "observed positions must be finite".into()));
    }
    Ok(TrajectoryWindow {
        obs: tracks(flat, n_peds, t_obs),
        pred: vec![Vec::new(); n_peds],
        ped_ids: (0..n_peds as i64).collect(),
        start_frame: 0,
    })
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stgcnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stgcnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Trainable parameter count of the default architecture.
#[no_mangle]
pub extern "C" fn stgcnn_default_param_count() -> usize {
    param_count(&ModelConfig::default())
}

/// Creates a model with the default architecture and weights drawn from
/// `seed`.
///
/// # Safety
/// `out` must be null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_new(seed: u64, out: *mut *mut StgcnnModel) -> StgcnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = ModelConfig::default();
        let model = StgcnnModel {
            params: init_params(&config, seed),
            config,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_load(path: *const c_char, out: *mut *mut StgcnnModel) -> StgcnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(StgcnnModel {
            params: ck.params,
            config: ck.config,
        }));
        Ok(())
    })
}

/// Writes the model as a checkpoint (epoch 0).
///
/// # Safety
/// `model` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_save(model: *const StgcnnModel, path: *const c_char) -> StgcnnStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_checkpoint(&m.params, &m.config, 0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_free(model: *mut StgcnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trainable parameter count of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_param_count(model: *const StgcnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.scalar_count())
}

/// Observed steps the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_t_obs(model: *const StgcnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.config.t_obs)
}

/// Predicted steps, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_model_t_pred(model: *const StgcnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.config.t_pred)
}

/// Predicted position distributions. `out` receives `t_pred × n_peds × 5`
/// values `(mu_x, mu_y, sigma_x, sigma_y, rho)` with absolute means; the
/// sigmas and correlation are those of the per-step output.
///
/// # Safety
/// `obs` must hold `n_peds × t_obs × 2` values and `out`
/// `t_pred × n_peds × 5`.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_predict(
    model: *const StgcnnModel,
    obs: *const f64,
    n_peds: usize,
    out: *mut f64,
) -> StgcnnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let window = observed_window(m, obs, n_peds)?;
        let seq = predict_window(&window, &m.params, &m.config)?;
        let means = seq.absolute_means();
        let out = out_slice(out, m.config.t_pred * n_peds * 5, "out")?;
        for t in 0..m.config.t_pred {
            for n in 0..n_peds {
                let g = seq.at(t, n);
                let o = &mut out[(t * n_peds + n) * 5..][..5];
                o.copy_from_slice(&[means[n][t][0], means[n][t][1], g.sigma[0], g.sigma[1], g.rho]);
            }
        }
        Ok(())
    })
}

/// Draws `count` absolute trajectories; `out` receives
/// `count × n_peds × t_pred × 2` values. Deterministic in `seed`.
///
/// # Safety
/// `obs` must hold `n_peds × t_obs × 2` values and `out` the sample block.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_sample(
    model: *const StgcnnModel,
    obs: *const f64,
    n_peds: usize,
    count: usize,
    seed: u64,
    out: *mut f64,
) -> StgcnnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let window = observed_window(m, obs, n_peds)?;
        let seq = predict_window(&window, &m.params, &m.config)?;
        let out = out_slice(out, count * n_peds * m.config.t_pred * 2, "out")?;
        let flat = gaussian::sample(&seq, seed, count)
            .into_iter()
            .flatten()
            .flatten()
            .flat_map(|p| p.into_iter());
        for (o, v) in out.iter_mut().zip(flat) {
            *o = v;
        }
        Ok(())
    })
}

unsafe fn metric(
    pred: *const f64,
    gt: *const f64,
    n_peds: usize,
    t_len: usize,
    out: *mut f64,
    f: fn(&[Track], &[Track]) -> stgcnn::Result<f64>,
) -> StgcnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n_peds == 0 || t_len == 0 {
            return Err(invalid("n_peds and t_len must be positive"));
        }
        let len = n_peds * t_len * 2;
        let p = tracks(slice_arg(pred, len, "pred")?, n_peds, t_len);
        let g = tracks(slice_arg(gt, len, "gt")?, n_peds, t_len);
        *out = f(&p, &g)?;
        Ok(())
    })
}

/// Average displacement error of `n_peds × t_len × 2` arrays.
///
/// # Safety
/// `pred` and `gt` must hold `n_peds × t_len × 2` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_ade(pred: *const f64, gt: *const f64, n_peds: usize, t_len: usize, out: *mut f64) -> StgcnnStatus {
    metric(pred, gt, n_peds, t_len, out, eval::ade)
}

/// Final displacement error of `n_peds × t_len × 2` arrays.
///
/// # Safety
/// As for [`stgcnn_ade`].
#[no_mangle]
pub unsafe extern "C" fn stgcnn_fde(pred: *const f64, gt: *const f64, n_peds: usize, t_len: usize, out: *mut f64) -> StgcnnStatus {
    metric(pred, gt, n_peds, t_len, out, eval::fde)
}

/// Edge weight between two points. `param` is sigma for `Exp`, epsilon for
/// `SimEps`, and ignored otherwise.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn stgcnn_kernel_weight(
    kind: StgcnnKernel,
    param: f64,
    xi: f64,
    yi: f64,
    xj: f64,
    yj: f64,
    out: *mut f64,
) -> StgcnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let k = match kind {
            StgcnnKernel::Sim => KernelKind::Sim,
            StgcnnKernel::L2 => KernelKind::L2,
            StgcnnKernel::Exp => KernelKind::Exp { sigma: param },
            StgcnnKernel::SimEps => KernelKind::SimEps { epsilon: param },
            StgcnnKernel::Ones => KernelKind::Ones,
        };
        k.validate()?;
        *out = graph::kernel(k, [xi, yi], [xj, yj]);
        Ok(())
    })
}
