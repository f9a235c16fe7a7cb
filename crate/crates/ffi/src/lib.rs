//! C ABI for the cosmix clustering engine.
//!
//! All objects cross the boundary as opaque handles created by a `cosmix_*`
//! constructor and released with the matching `*_free`. Every function returns
//! a [`CosmixStatus`]; on failure [`cosmix_last_error`] describes the error
//! for the calling thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cosmix::geometry::{cosine_distance, DistanceMatrix};
use cosmix::mixture::{
    classify, fit_em, load_model, save_model, solve_lambda, CalibrationTarget, ClusteringResult, EmOptions, Init,
    LambdaMode, MixtureModel,
};
use cosmix::textprep::{DocTermMatrix, Vocabulary, Weighting};
use cosmix::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosmixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Mismatch = 5,
    /// Empty selections, single-document corpora and similar data problems.
    Data = 6,
    TooConcentrated = 7,
    NoFiniteRoot = 8,
    ComponentCollapse = 9,
    /// Other numerical failures.
    Numerical = 10,
    Panic = 11,
}

/// Term weighting of a matrix built from memory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosmixWeighting {
    RawCount = 0,
    IdfWeighted = 1,
}

/// Options of [`cosmix_fit_em`]. Start from [`cosmix_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CosmixFitOptions {
    /// Target rate of documents not allocated to their nearest centroid.
    pub alpha: f64,
    /// Fixed lambda; zero or negative re-solves it at every iteration.
    pub lambda: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

pub struct CosmixMatrix(DocTermMatrix);
pub struct CosmixModel(MixtureModel);
pub struct CosmixResult(ClusteringResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CosmixStatus {
    match e {
        Error::Io { .. } => CosmixStatus::Io,
        Error::Parse(_) => CosmixStatus::Parse,
        Error::InvalidArgument(_) => CosmixStatus::InvalidArgument,
        Error::DimensionMismatch { .. } | Error::VocabularyMismatch { .. } => CosmixStatus::Mismatch,
        Error::TooConcentrated { .. } => CosmixStatus::TooConcentrated,
        Error::NoFiniteRoot => CosmixStatus::NoFiniteRoot,
        Error::ComponentCollapse { .. } => CosmixStatus::ComponentCollapse,
        e if e.is_numerical() => CosmixStatus::Numerical,
        _ => CosmixStatus::Data,
    }
}

enum Fail {
    Status(CosmixStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(CosmixStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CosmixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CosmixStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CosmixStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(CosmixStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copy `src` into a caller buffer of `cap` elements; `needed` receives the full length.
unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if dst.is_null() {
        return Ok(());
    }
    if cap < src.len() {
        return Err(Fail::Status(
            CosmixStatus::InvalidArgument,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn cosmix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cosmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Cosine distance of two vectors of length `len`, clamped to [0, 1].
///
/// # Safety
/// `x` and `y` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_cosine_distance(x: *const f64, y: *const f64, len: usize, out_d: *mut f64) -> CosmixStatus {
    guard(|| {
        let x = slice(x, len, "x")?;
        let y = slice(y, len, "y")?;
        *out(out_d, "out")? = cosine_distance(x, y)?;
        Ok(())
    })
}

/// Solve the calibration equation for lambda from an `n` x `k` row-major
/// distance matrix and `k` component weights.
///
/// # Safety
/// `distances` must hold `n * k` doubles, `weights` `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn cosmix_solve_lambda(
    distances: *const f64,
    n: usize,
    k: usize,
    weights: *const f64,
    alpha: f64,
    out_lambda: *mut f64,
) -> CosmixStatus {
    guard(|| {
        let len = n.checked_mul(k).ok_or_else(|| Fail::Status(CosmixStatus::InvalidArgument, "n * k overflows".into()))?;
        let d = DistanceMatrix::new(n, k, slice(distances, len, "distances")?.to_vec())?;
        let w = slice(weights, k, "weights")?;
        *out(out_lambda, "out")? = solve_lambda(&d, w, CalibrationTarget::new(alpha)?)?;
        Ok(())
    })
}

/// Read a matrix file written by the `cosmix` tools.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_matrix_read(path: *const c_char, out_m: *mut *mut CosmixMatrix) -> CosmixStatus {
    guard(|| {
        let slot = out(out_m, "out")?;
        let m = DocTermMatrix::read(&path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(CosmixMatrix(m)));
        Ok(())
    })
}

/// Build a matrix from `n_docs` x `n_terms` row-major values. Terms are named `t0`, `t1`, ...
///
/// # Safety
/// `values` must hold `n_docs * n_terms` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_matrix_from_dense(
    values: *const f64,
    n_docs: usize,
    n_terms: usize,
    weighting: CosmixWeighting,
    out_m: *mut *mut CosmixMatrix,
) -> CosmixStatus {
    guard(|| {
        let slot = out(out_m, "out")?;
        let len = n_docs
            .checked_mul(n_terms)
            .ok_or_else(|| Fail::Status(CosmixStatus::InvalidArgument, "n_docs * n_terms overflows".into()))?;
        let v = slice(values, len, "values")?;
        let rows: Vec<Vec<(usize, f64)>> = (0..n_docs)
            .map(|j| {
                v[j * n_terms..(j + 1) * n_terms]
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|&(_, x)| x != 0.0)
                    .collect()
            })
            .collect();
        let vocab = Vocabulary::new((0..n_terms).map(|i| format!("t{i}")));
        let w = match weighting {
            CosmixWeighting::RawCount => Weighting::RawCount,
            CosmixWeighting::IdfWeighted => Weighting::IdfWeighted,
        };
        let m = DocTermMatrix::from_rows(rows, vocab, w)?;
        *slot = Box::into_raw(Box::new(CosmixMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn cosmix_matrix_n_docs(m: *const CosmixMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_docs())
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn cosmix_matrix_n_terms(m: *const CosmixMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_terms())
}

/// # Safety
/// `m` must come from a `cosmix_matrix_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cosmix_matrix_free(m: *mut CosmixMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

#[no_mangle]
pub extern "C" fn cosmix_fit_options_default() -> CosmixFitOptions {
    let em = EmOptions::default();
    CosmixFitOptions {
        alpha: 0.05,
        lambda: 0.0,
        n_runs: 5,
        seed: 0,
        max_iter: em.max_iter,
        tol: em.tol,
    }
}

/// Fit a `k`-component mixture by EM from seeded k-means starts.
///
/// # Safety
/// `m` must be a live matrix handle; `opts` readable; the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_fit_em(
    m: *const CosmixMatrix,
    k: usize,
    opts: *const CosmixFitOptions,
    out_model: *mut *mut CosmixModel,
    out_result: *mut *mut CosmixResult,
) -> CosmixStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        let o = *handle(opts, "options")?;
        let model_slot = out(out_model, "out_model")?;
        let result_slot = out(out_result, "out_result")?;
        let mode = if o.lambda > 0.0 {
            LambdaMode::Fixed(o.lambda)
        } else {
            LambdaMode::ResolveEachIter
        };
        let (model, result) = fit_em(
            &m.0,
            k,
            CalibrationTarget::new(o.alpha)?,
            &Init::KMeans {
                n_runs: o.n_runs,
                seed: o.seed,
            },
            mode,
            EmOptions {
                max_iter: o.max_iter,
                tol: o.tol,
            },
        )?;
        *model_slot = Box::into_raw(Box::new(CosmixModel(model)));
        *result_slot = Box::into_raw(Box::new(CosmixResult(result)));
        Ok(())
    })
}

/// Posteriors and labels of `m` under a fitted model, without refitting.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_classify(
    model: *const CosmixModel,
    m: *const CosmixMatrix,
    out_result: *mut *mut CosmixResult,
) -> CosmixStatus {
    guard(|| {
        let r = classify(&handle(model, "model")?.0, &handle(m, "matrix")?.0)?;
        *out(out_result, "out")? = Box::into_raw(Box::new(CosmixResult(r)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_load(path: *const c_char, out_model: *mut *mut CosmixModel) -> CosmixStatus {
    guard(|| {
        let slot = out(out_model, "out")?;
        *slot = Box::into_raw(Box::new(CosmixModel(load_model(&path_arg(path)?)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be live; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_save(model: *const CosmixModel, path: *const c_char) -> CosmixStatus {
    guard(|| {
        save_model(&handle(model, "model")?.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_k(model: *const CosmixModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.k())
}

/// # Safety
/// `model` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_lambda(model: *const CosmixModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.lambda)
}

/// Copy the k mixing weights into `buf` (capacity `cap`); `needed` gets k.
/// A null `buf` only reports the length.
///
/// # Safety
/// `model` must be live; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_weights(
    model: *const CosmixModel,
    buf: *mut f64,
    cap: usize,
    needed: *mut usize,
) -> CosmixStatus {
    guard(|| copy_out(&handle(model, "model")?.0.weights, buf, cap, needed))
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cosmix_model_free(model: *mut CosmixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_n_docs(r: *const CosmixResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.hard_labels.len())
}

/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_k(r: *const CosmixResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.posteriors.k())
}

/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_partial_loglik(r: *const CosmixResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.partial_loglik)
}

/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_n_iterations(r: *const CosmixResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.n_iterations)
}

/// # Safety
/// `r` must be live.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_converged(r: *const CosmixResult) -> bool {
    r.as_ref().is_some_and(|r| r.0.converged)
}

/// Hard labels, one per document.
///
/// # Safety
/// `r` must be live; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_labels(
    r: *const CosmixResult,
    buf: *mut usize,
    cap: usize,
    needed: *mut usize,
) -> CosmixStatus {
    guard(|| copy_out(&handle(r, "result")?.0.hard_labels, buf, cap, needed))
}

/// Posteriors, `n_docs` x `k` row-major.
///
/// # Safety
/// `r` must be live; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_posteriors(
    r: *const CosmixResult,
    buf: *mut f64,
    cap: usize,
    needed: *mut usize,
) -> CosmixStatus {
    guard(|| {
        let r = &handle(r, "result")?.0;
        let flat: Vec<f64> = (0..r.hard_labels.len()).flat_map(|j| r.posteriors.row(j).to_vec()).collect();
        copy_out(&flat, buf, cap, needed)
    })
}

/// # Safety
/// `r` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cosmix_result_free(r: *mut CosmixResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
