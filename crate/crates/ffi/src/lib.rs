//! C ABI for the bhsne embedding engine.
//!
//! All objects are opaque handles created and destroyed through this API.
//! Fallible functions return a [`BhsneStatus`]; on failure a description is
//! available from [`bhsne_last_error`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bhsne::metrics::knn_error;
use bhsne::pipeline::embed;
use bhsne::{Algorithm, Condition, DataMatrix, Embedding, Error, LabelVector, RunConfig};

/// Result of a fallible call. Values 1-3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhsneStatus {
    Ok = 0,
    /// Bad argument or configuration value.
    InvalidArgument = 1,
    /// Unreadable, malformed or invalid input data.
    DataError = 2,
    /// The optimization produced non-finite values.
    NumericError = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// An internal error was caught at the boundary.
    InternalError = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhsneAlgorithm {
    Exact = 0,
    BarnesHut = 1,
    DualTree = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhsneCondition {
    Standard = 0,
    PaperLiteral = 1,
}

/// Input data matrix.
pub struct BhsneMatrix(DataMatrix);

/// Run configuration; starts at the library defaults.
pub struct BhsneConfig(RunConfig);

/// Result of an embedding run.
pub struct BhsneEmbedding {
    embedding: Embedding,
    final_cost: f64,
    seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BhsneStatus {
    match err.exit_code() {
        1 => BhsneStatus::InvalidArgument,
        2 => BhsneStatus::DataError,
        _ => BhsneStatus::NumericError,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (BhsneStatus, String)>) -> BhsneStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BhsneStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            BhsneStatus::InternalError
        }
    }
}

fn lib_err(e: Error) -> (BhsneStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BhsneStatus, String) {
    (BhsneStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> (BhsneStatus, String) {
    (BhsneStatus::InvalidArgument, msg.into())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn bhsne_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bhsne_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n * d` row-major values into a new matrix.
///
/// # Safety
/// `values` must point to `n * d` readable doubles and `out` must be a valid
/// pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn bhsne_matrix_new(n: usize, d: usize, values: *const f64, out: *mut *mut BhsneMatrix) -> BhsneStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).ok_or_else(|| bad("n * d overflows"))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let m = DataMatrix::new(n, d, data).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BhsneMatrix(m)));
        Ok(())
    })
}

/// Loads a CSV (no label column) or binary matrix file, chosen by extension.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bhsne_matrix_load(path: *const c_char, out: *mut *mut BhsneMatrix) -> BhsneStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| bad("path is not UTF-8"))?;
        let (m, _) = bhsne::io::load_matrix(path, None, false).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BhsneMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bhsne_matrix_free(m: *mut BhsneMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of rows, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_matrix_rows(m: *const BhsneMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// Number of columns, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_matrix_cols(m: *const BhsneMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.d())
}

/// New configuration with default settings.
#[no_mangle]
pub extern "C" fn bhsne_config_new() -> *mut BhsneConfig {
    Box::into_raw(Box::new(BhsneConfig(RunConfig::default())))
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_free(c: *mut BhsneConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

unsafe fn with_config(c: *mut BhsneConfig, f: impl FnOnce(&mut RunConfig)) -> BhsneStatus {
    guard(|| {
        let c = c.as_mut().ok_or_else(|| null("config"))?;
        let mut next = c.0.clone();
        f(&mut next);
        next.validate().map_err(lib_err)?;
        c.0 = next;
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_perplexity(c: *mut BhsneConfig, value: f64) -> BhsneStatus {
    with_config(c, |cfg| cfg.perplexity = value)
}

/// Barnes-Hut trade-off; 0 is exact.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_theta(c: *mut BhsneConfig, value: f64) -> BhsneStatus {
    with_config(c, |cfg| cfg.theta = value)
}

/// Dual-tree trade-off; 0 is exact.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_rho(c: *mut BhsneConfig, value: f64) -> BhsneStatus {
    with_config(c, |cfg| cfg.rho = value)
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_iterations(c: *mut BhsneConfig, value: usize) -> BhsneStatus {
    with_config(c, |cfg| cfg.iterations = value)
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_learning_rate(c: *mut BhsneConfig, value: f64) -> BhsneStatus {
    with_config(c, |cfg| cfg.learning_rate = value)
}

/// Early exaggeration factor.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_exaggeration(c: *mut BhsneConfig, value: f64) -> BhsneStatus {
    with_config(c, |cfg| cfg.exaggeration = value)
}

/// Number of iterations with exaggerated affinities.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_exaggeration_iters(c: *mut BhsneConfig, value: usize) -> BhsneStatus {
    with_config(c, |cfg| cfg.exaggeration_iters = value)
}

/// Iteration at which momentum changes from 0.5 to 0.8.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_momentum_switch(c: *mut BhsneConfig, value: usize) -> BhsneStatus {
    with_config(c, |cfg| cfg.momentum_switch_iter = value)
}

/// Output dimensionality, 2 or 3.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_output_dims(c: *mut BhsneConfig, value: usize) -> BhsneStatus {
    with_config(c, |cfg| cfg.output_dims = value)
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_seed(c: *mut BhsneConfig, value: u64) -> BhsneStatus {
    with_config(c, |cfg| cfg.seed = value)
}

/// PCA target dimensionality; 0 disables PCA.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_pca(c: *mut BhsneConfig, value: usize) -> BhsneStatus {
    with_config(c, |cfg| cfg.pca_target = value)
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_algorithm(c: *mut BhsneConfig, value: BhsneAlgorithm) -> BhsneStatus {
    with_config(c, |cfg| {
        cfg.algorithm = match value {
            BhsneAlgorithm::Exact => Algorithm::Exact,
            BhsneAlgorithm::BarnesHut => Algorithm::BarnesHut,
            BhsneAlgorithm::DualTree => Algorithm::DualTree,
        }
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_config_set_condition(c: *mut BhsneConfig, value: BhsneCondition) -> BhsneStatus {
    with_config(c, |cfg| {
        cfg.condition = match value {
            BhsneCondition::Standard => Condition::Standard,
            BhsneCondition::PaperLiteral => Condition::PaperLiteral,
        }
    })
}

/// Runs the full pipeline (PCA, affinities, optimization) on `data`.
///
/// # Safety
/// `data` and `config` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embed(
    data: *const BhsneMatrix,
    config: *const BhsneConfig,
    out: *mut *mut BhsneEmbedding,
) -> BhsneStatus {
    guard(|| {
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let res = embed(&data.0, None, &config.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BhsneEmbedding {
            embedding: res.result.embedding,
            final_cost: res.report.kl_cost,
            seconds: res.report.wall_time_seconds,
        }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_free(e: *mut BhsneEmbedding) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_rows(e: *const BhsneEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.embedding.n())
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_dims(e: *const BhsneEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.embedding.dims())
}

/// Row-major coordinates, valid while the handle lives; null for a null handle.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_coords(e: *const BhsneEmbedding) -> *const f64 {
    e.as_ref().map_or(ptr::null(), |e| e.embedding.coords().as_ptr())
}

/// KL divergence at the end of the run; NaN for a null handle.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_final_cost(e: *const BhsneEmbedding) -> f64 {
    e.as_ref().map_or(f64::NAN, |e| e.final_cost)
}

/// Wall-clock seconds spent in the pipeline; NaN for a null handle.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_seconds(e: *const BhsneEmbedding) -> f64 {
    e.as_ref().map_or(f64::NAN, |e| e.seconds)
}

/// Leave-one-out 1-nearest-neighbor label error of the embedding.
///
/// # Safety
/// `e` must be a live handle, `labels` must point to one label per row, and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_knn_error(
    e: *const BhsneEmbedding,
    labels: *const i64,
    n_labels: usize,
    out: *mut f64,
) -> BhsneStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("embedding"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let labels = LabelVector(std::slice::from_raw_parts(labels, n_labels).to_vec());
        labels.check_len(e.embedding.n()).map_err(lib_err)?;
        *out = knn_error(&e.embedding, &labels);
        Ok(())
    })
}

/// Writes the embedding as CSV.
///
/// # Safety
/// `e` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bhsne_embedding_write_csv(e: *const BhsneEmbedding, path: *const c_char) -> BhsneStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("embedding"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| bad("path is not UTF-8"))?;
        bhsne::io::write_embedding(path, &e.embedding, None).map_err(lib_err)
    })
}
