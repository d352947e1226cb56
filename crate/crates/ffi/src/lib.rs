//! C interface to the dsvb engine.
//!
//! Every function returns a [`DsvbStatus`]; on failure the message is
//! available from [`dsvb_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dsvb::checkpoint::{Checkpoint, TrainedModel};
use dsvb::data::{
    load_csv, synth_generate, write_csv, ActuationPattern, ContactMode, Domain, SequenceDataset, SynthConfig,
};
use dsvb::diffcore::Tensor;
use dsvb::vrnn::gaussian_kld_values;
use dsvb::DsvbError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsvbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    ShapeMismatch = 5,
    Checkpoint = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsvbContactMode {
    Tip = 0,
    Surface = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsvbActuation {
    Oscillatory = 0,
    Random = 1,
}

/// A loaded checkpoint ready for inference.
pub struct DsvbModel {
    checkpoint: Checkpoint,
    model: TrainedModel,
}

/// A time series of measurements and optional state labels.
pub struct DsvbDataset {
    inner: SequenceDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &DsvbError) -> DsvbStatus {
    match err {
        DsvbError::ShapeMismatch { .. } => DsvbStatus::ShapeMismatch,
        DsvbError::Schema(_) | DsvbError::Parse { .. } | DsvbError::Csv(_) | DsvbError::Json(_) => DsvbStatus::Parse,
        DsvbError::Io(_) => DsvbStatus::Io,
        DsvbError::Checkpoint(_) => DsvbStatus::Checkpoint,
        DsvbError::NumericalDivergence(_) | DsvbError::TrainingDiverged { .. } | DsvbError::DomainError { .. } => {
            DsvbStatus::Numerical
        }
        _ => DsvbStatus::InvalidArgument,
    }
}

struct Fail(DsvbStatus, String);

impl From<DsvbError> for Fail {
    fn from(e: DsvbError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsvbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DsvbStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DsvbStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DsvbStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(DsvbStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Fail(
            DsvbStatus::BufferTooSmall,
            format!("`{what}` holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next dsvb call on the same thread.
#[no_mangle]
pub extern "C" fn dsvb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsvb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_load(path: *const c_char, out: *mut *mut DsvbModel) -> DsvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let checkpoint = Checkpoint::load(path_arg(path)?)?;
        if checkpoint.normalization.is_none() {
            return Err(Fail(DsvbStatus::Checkpoint, "checkpoint has no normalization statistics".into()));
        }
        let model = checkpoint.build()?;
        *out = Box::into_raw(Box::new(DsvbModel { checkpoint, model }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from `dsvb_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_free(model: *mut DsvbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of measurement channels, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_n_y(model: *const DsvbModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_y())
}

/// Number of state channels, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_n_x(model: *const DsvbModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_x())
}

/// True when the model reports posterior standard deviations.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_has_std(model: *const DsvbModel) -> bool {
    model
        .as_ref()
        .is_some_and(|m| matches!(m.model, TrainedModel::Dsvb(_)))
}

/// Estimate states from raw measurements `[rows, n_y]` (row-major).
///
/// `mean_out` receives `rows * n_x` values in state units. `std_out` may be
/// null; otherwise it receives the posterior std (DSVB models only).
///
/// # Safety
/// Buffers must hold at least the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn dsvb_model_infer(
    model: *const DsvbModel,
    measurements: *const f64,
    rows: usize,
    n_y: usize,
    chunk_len: usize,
    mean_out: *mut f64,
    mean_len: usize,
    std_out: *mut f64,
    std_len: usize,
) -> DsvbStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if measurements.is_null() {
            return Err(null("measurements"));
        }
        if n_y != m.model.n_y() || rows == 0 || chunk_len == 0 {
            return Err(Fail(
                DsvbStatus::InvalidArgument,
                format!("expected rows > 0, chunk_len > 0 and n_y = {}", m.model.n_y()),
            ));
        }
        let needed = rows * m.model.n_x();
        let mean_buf = out_slice(mean_out, mean_len, needed, "mean_out")?;
        let stats = m.checkpoint.normalization.as_ref().expect("checked on load");
        let raw = Tensor::matrix(rows, n_y, std::slice::from_raw_parts(measurements, rows * n_y).to_vec())?;
        let est = m.model.estimate(&stats.normalize_measurements(&raw)?, chunk_len)?;
        mean_buf.copy_from_slice(stats.denormalize_states(&est.mean)?.data());
        if !std_out.is_null() {
            let Some(std) = &est.std else {
                return Err(Fail(DsvbStatus::InvalidArgument, "baseline models have no posterior std".into()));
            };
            let std_buf = out_slice(std_out, std_len, needed, "std_out")?;
            std_buf.copy_from_slice(stats.denormalize_state_std(std)?.data());
        }
        Ok(())
    })
}

/// Run the soft-finger simulator.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsvb_synth_generate(
    mode: DsvbContactMode,
    actuation: DsvbActuation,
    seed: u64,
    samples: usize,
    out: *mut *mut DsvbDataset,
) -> DsvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SynthConfig {
            contact_mode: match mode {
                DsvbContactMode::Tip => ContactMode::Tip,
                DsvbContactMode::Surface => ContactMode::Surface,
            },
            actuation: match actuation {
                DsvbActuation::Oscillatory => ActuationPattern::Oscillatory,
                DsvbActuation::Random => ActuationPattern::Random,
            },
            seed,
            samples,
            ..SynthConfig::default()
        };
        let inner = synth_generate(&cfg)?;
        *out = Box::into_raw(Box::new(DsvbDataset { inner }));
        Ok(())
    })
}

/// Read a dataset CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_load_csv(path: *const c_char, out: *mut *mut DsvbDataset) -> DsvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_csv(path_arg(path)?, Domain::Source)?;
        *out = Box::into_raw(Box::new(DsvbDataset { inner }));
        Ok(())
    })
}

/// Write a dataset CSV.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_write_csv(ds: *const DsvbDataset, path: *const c_char) -> DsvbStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let file = std::fs::File::create(path_arg(path)?).map_err(DsvbError::from)?;
        write_csv(&d.inner, std::io::BufWriter::new(file))?;
        Ok(())
    })
}

/// Release a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_free(ds: *mut DsvbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_rows(ds: *const DsvbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_n_y(ds: *const DsvbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n_y())
}

/// State channels, or 0 when the dataset is unlabelled.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_n_x(ds: *const DsvbDataset) -> usize {
    ds.as_ref().and_then(|d| d.inner.n_x()).unwrap_or(0)
}

/// Copy measurements `[rows, n_y]` into `out`.
///
/// # Safety
/// `out` must hold at least `len` values.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_measurements(ds: *const DsvbDataset, out: *mut f64, len: usize) -> DsvbStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let src = d.inner.measurements.data();
        out_slice(out, len, src.len(), "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Copy state labels `[rows, n_x]` into `out`.
///
/// # Safety
/// `out` must hold at least `len` values.
#[no_mangle]
pub unsafe extern "C" fn dsvb_dataset_states(ds: *const DsvbDataset, out: *mut f64, len: usize) -> DsvbStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let Some(states) = &d.inner.states else {
            return Err(Fail(DsvbStatus::InvalidArgument, "dataset has no state labels".into()));
        };
        out_slice(out, len, states.numel(), "out")?.copy_from_slice(states.data());
        Ok(())
    })
}

/// KL divergence between diagonal Gaussians q and p of dimension `n`.
///
/// # Safety
/// The four arrays must hold `n` values each and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dsvb_gaussian_kld(
    mu_q: *const f64,
    sd_q: *const f64,
    mu_p: *const f64,
    sd_p: *const f64,
    n: usize,
    out: *mut f64,
) -> DsvbStatus {
    guard(|| {
        if [mu_q, sd_q, mu_p, sd_p].iter().any(|p| p.is_null()) || out.is_null() {
            return Err(null("argument"));
        }
        let s = |p: *const f64| std::slice::from_raw_parts(p, n);
        *out = gaussian_kld_values(s(mu_q), s(sd_q), s(mu_p), s(sd_p))?;
        Ok(())
    })
}
