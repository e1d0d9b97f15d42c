//! C ABI over `ann-epistemic`.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `*_new`/`*_load`/`*_build` style call and released by the matching
//! `*_free`. Fallible calls return an [`AeStatus`]; on failure the message is
//! available from [`ae_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ann_epistemic::datapipe::{synth_generate, ReducedTable, SynthConfig};
use ann_epistemic::mlp::{self, Architecture, Dataset, ModelFile, Network};
use ann_epistemic::remap::{remap_model, NetCost, Remap, RemapConfig, RemapFile};
use ann_epistemic::sampler::{gaussianity_diagnostic, run_chain, McmcConfig, SampleSet};
use ann_epistemic::trainer::{train_to_optimum, TrainConfig};
use ann_epistemic::Error;

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NotOptimised = 5,
    Remap = 6,
    Sampler = 7,
    Numeric = 8,
    Panic = 9,
}

fn status_of(e: &Error) -> AeStatus {
    match e {
        Error::Io { .. } => AeStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => AeStatus::Parse,
        Error::NotOptimised { .. } => AeStatus::NotOptimised,
        Error::Unconstrained { .. }
        | Error::ScaleNotFound { .. }
        | Error::NotAtMinimum { .. }
        | Error::NonMonotoneProbes { .. }
        | Error::NonFiniteCost { .. }
        | Error::Eigen(_)
        | Error::ModelMismatch { .. } => AeStatus::Remap,
        Error::StepSize { .. } | Error::InsufficientData(_) => AeStatus::Sampler,
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::EmptyDataset | Error::NonFiniteInput(_) => {
            AeStatus::InvalidArgument
        }
        _ => AeStatus::Numeric,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AeStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            AeStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a live handle from this library.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and NUL-terminated by contract.
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Error::InvalidArgument(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and valid for `len` elements by contract.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    // SAFETY: `out` is non-null and writable by contract.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `Box::into_raw` in this library and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Training patterns with binary targets.
pub struct AeDataset(Dataset);

/// A trained network with its optimisation record.
pub struct AeModel {
    file: ModelFile,
    net: Network,
}

/// Per-weight remapping and inverse covariance for one model.
pub struct AeRemap(Remap);

/// Weight sets drawn by the sampler.
pub struct AeSamples(SampleSet);

/// Message of the most recent failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a reduced-table CSV.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_dataset_load(path: *const c_char, out: *mut *mut AeDataset) -> AeStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let data = ReducedTable::load(&path)?.to_dataset()?;
        unsafe { put(out, AeDataset(data)) }
    })
}

/// Builds a dataset from row-major `rows × input_dim` inputs and
/// `rows × output_dim` targets in [0, 1].
///
/// # Safety
/// `inputs` and `targets` must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_dataset_from_arrays(
    rows: usize,
    input_dim: usize,
    output_dim: usize,
    inputs: *const f64,
    targets: *const f64,
    out: *mut *mut AeDataset,
) -> AeStatus {
    guard(|| {
        let n_in = rows.checked_mul(input_dim).ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let n_out = rows.checked_mul(output_dim).ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let x = unsafe { slice_arg(inputs, n_in, "inputs") }?;
        let t = unsafe { slice_arg(targets, n_out, "targets") }?;
        let data = Dataset::from_flat(input_dim, output_dim, x.to_vec(), t.to_vec())?;
        unsafe { put(out, AeDataset(data)) }
    })
}

/// Generates the default synthetic cohort and returns its reduced table.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_dataset_synthetic(seed: u64, out: *mut *mut AeDataset) -> AeStatus {
    guard(|| {
        let data = synth_generate(&SynthConfig::default(), seed)?.reduced.to_dataset()?;
        unsafe { put(out, AeDataset(data)) }
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ae_dataset_len(data: *const AeDataset) -> usize {
    unsafe { data.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be NULL or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ae_dataset_free(data: *mut AeDataset) {
    unsafe { free(data) }
}

/// Trains a network with `n_hidden` hidden layers of the given widths from a
/// seeded random start, refining until fully optimised when possible.
///
/// # Safety
/// `hidden` must hold `n_hidden` values; `data` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_model_train(
    data: *const AeDataset,
    hidden: *const usize,
    n_hidden: usize,
    seed: u64,
    out: *mut *mut AeModel,
) -> AeStatus {
    guard(|| {
        let data = &unsafe { deref(data, "data") }?.0;
        let hidden = unsafe { slice_arg(hidden, n_hidden, "hidden") }?.to_vec();
        let arch = Architecture::new(data.input_dim(), hidden, data.output_dim())?;
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let r = train_to_optimum(&Network::random(arch, seed)?, data, &config, 20)?;
        let file = ModelFile::from_network(&r.network, None, seed, r.fully_optimised, r.final_cost, r.grad_max);
        unsafe { put(out, AeModel { file, net: r.network }) }
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_model_load(path: *const c_char, out: *mut *mut AeModel) -> AeStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let file = ModelFile::load(&path)?;
        let net = file.network()?;
        unsafe { put(out, AeModel { file, net }) }
    })
}

/// # Safety
/// `model` must be live; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ae_model_save(model: *const AeModel, path: *const c_char) -> AeStatus {
    guard(|| {
        let model = unsafe { deref(model, "model") }?;
        let path = unsafe { path_arg(path, "path") }?;
        model.file.save(&path)?;
        Ok(())
    })
}

/// Number of weights, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_model_weight_count(model: *const AeModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.net.theta().len())
}

/// Whether training reached the fully-optimised criterion; false for NULL.
///
/// # Safety
/// `model` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_model_fully_optimised(model: *const AeModel) -> bool {
    unsafe { model.as_ref() }.is_some_and(|m| m.file.fully_optimised)
}

/// Final training cost, or NaN for NULL.
///
/// # Safety
/// `model` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_model_final_cost(model: *const AeModel) -> f64 {
    unsafe { model.as_ref() }.map_or(f64::NAN, |m| m.file.final_cost)
}

/// Network outputs for one input pattern.
///
/// # Safety
/// `x` must hold `n_in` values and `out` room for `n_out`.
#[no_mangle]
pub unsafe extern "C" fn ae_model_forward(model: *const AeModel, x: *const f64, n_in: usize, out: *mut f64, n_out: usize) -> AeStatus {
    guard(|| {
        let model = unsafe { deref(model, "model") }?;
        let x = unsafe { slice_arg(x, n_in, "x") }?;
        let y = model.net.forward(x)?;
        if n_out != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: n_out }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        // SAFETY: `out` has room for `n_out` values by contract.
        unsafe { ptr::copy_nonoverlapping(y.as_ptr(), out, n_out) };
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a model handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ae_model_free(model: *mut AeModel) {
    unsafe { free(model) }
}

/// Remaps a fully optimised model with default settings.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ae_remap_build(model: *const AeModel, data: *const AeDataset, out: *mut *mut AeRemap) -> AeStatus {
    guard(|| {
        let model = unsafe { deref(model, "model") }?;
        let data = &unsafe { deref(data, "data") }?.0;
        let remap = remap_model(&model.file, data, &RemapConfig::default())?;
        unsafe { put(out, AeRemap(remap)) }
    })
}

/// Loads a remap file, checking it belongs to `model`.
///
/// # Safety
/// `model` must be live; `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ae_remap_load(path: *const c_char, model: *const AeModel, out: *mut *mut AeRemap) -> AeStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let model = unsafe { deref(model, "model") }?;
        let remap = RemapFile::load(&path)?.into_remap(&model.net)?;
        unsafe { put(out, AeRemap(remap)) }
    })
}

/// # Safety
/// Handles must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ae_remap_save(remap: *const AeRemap, model: *const AeModel, path: *const c_char) -> AeStatus {
    guard(|| {
        let remap = &unsafe { deref(remap, "remap") }?.0;
        let model = unsafe { deref(model, "model") }?;
        let path = unsafe { path_arg(path, "path") }?;
        RemapFile::from_remap(remap, &model.net).save(&path)?;
        Ok(())
    })
}

/// Cost evaluations spent building the remap, or 0 for NULL.
///
/// # Safety
/// `remap` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_remap_eval_count(remap: *const AeRemap) -> usize {
    unsafe { remap.as_ref() }.map_or(0, |r| r.0.evals.total())
}

/// # Safety
/// `remap` must be NULL or a remap handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ae_remap_free(remap: *mut AeRemap) {
    unsafe { free(remap) }
}

/// Runs the Metropolis sampler. Non-positive `step_sigma`, or zero `thin` or
/// `n_samples`, select the defaults.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ae_sample(
    model: *const AeModel,
    remap: *const AeRemap,
    data: *const AeDataset,
    step_sigma: f64,
    thin: usize,
    n_samples: usize,
    seed: u64,
    out: *mut *mut AeSamples,
) -> AeStatus {
    guard(|| {
        let model = unsafe { deref(model, "model") }?;
        let remap = &unsafe { deref(remap, "remap") }?.0;
        let data = &unsafe { deref(data, "data") }?.0;
        let d = McmcConfig::default();
        let config = McmcConfig {
            step_sigma: if step_sigma > 0.0 { step_sigma } else { d.step_sigma },
            thin: if thin > 0 { thin } else { d.thin },
            n_samples: if n_samples > 0 { n_samples } else { d.n_samples },
            seed,
            ..d
        };
        let set = run_chain(remap, &NetCost { arch: model.net.arch(), data }, &config)?;
        unsafe { put(out, AeSamples(set)) }
    })
}

/// Number of draws, or 0 for NULL.
///
/// # Safety
/// `samples` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_samples_len(samples: *const AeSamples) -> usize {
    unsafe { samples.as_ref() }.map_or(0, |s| s.0.draws.len())
}

/// Fraction of accepted proposals, or NaN for NULL.
///
/// # Safety
/// `samples` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ae_samples_acceptance(samples: *const AeSamples) -> f64 {
    unsafe { samples.as_ref() }.map_or(f64::NAN, |s| s.0.acceptance())
}

/// Network outputs for pattern `x` under every drawn weight set, written
/// row-major as `draws × outputs` into `out` of length `out_len`.
///
/// # Safety
/// `x` must hold `n_in` values and `out` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn ae_samples_outputs(
    samples: *const AeSamples,
    model: *const AeModel,
    x: *const f64,
    n_in: usize,
    out: *mut f64,
    out_len: usize,
) -> AeStatus {
    guard(|| {
        let set = &unsafe { deref(samples, "samples") }?.0;
        let model = unsafe { deref(model, "model") }?;
        let x = unsafe { slice_arg(x, n_in, "x") }?;
        let arch = model.net.arch();
        let need = set.draws.len() * arch.output_dim;
        if out_len != need {
            return Err(Error::DimensionMismatch { expected: need, got: out_len }.into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let mut values = Vec::with_capacity(need);
        for d in &set.draws {
            values.extend(mlp::forward(arch, &d.theta, x)?);
        }
        // SAFETY: `out` has room for `out_len` values by contract.
        unsafe { ptr::copy_nonoverlapping(values.as_ptr(), out, need) };
        Ok(())
    })
}

/// Gaussianity diagnostic of the draws against the remap's Mahalanobis form.
///
/// # Safety
/// Handles must be live; the three result pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ae_samples_diagnose(
    samples: *const AeSamples,
    remap: *const AeRemap,
    trials: usize,
    seed: u64,
    slope: *mut f64,
    scatter: *mut f64,
    equivalent_error: *mut f64,
) -> AeStatus {
    guard(|| {
        let set = &unsafe { deref(samples, "samples") }?.0;
        let remap = &unsafe { deref(remap, "remap") }?.0;
        if slope.is_null() || scatter.is_null() || equivalent_error.is_null() {
            return Err(Failure::Null("result"));
        }
        let r = gaussianity_diagnostic(set, &remap.ic, trials, seed)?;
        // SAFETY: all three are non-null and writable by contract.
        unsafe {
            *slope = r.slope;
            *scatter = r.scatter;
            *equivalent_error = r.equivalent_error;
        }
        Ok(())
    })
}

/// # Safety
/// `samples` must be NULL or a sample handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ae_samples_free(samples: *mut AeSamples) {
    unsafe { free(samples) }
}
