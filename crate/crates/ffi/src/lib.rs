//! C interface to gadget-core.
//!
//! Every function returns a [`GadgetStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. After a failure, `gadget_last_error` describes it until the next
//! call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gadget_core::beeps::EffectMatrix;
use gadget_core::graph::Dag;
use gadget_core::pipeline::{self, BeepsSummary, GadgetConfig, Selector};
use gadget_core::{load_csv, standardize, BgeHyper, DataMatrix, Error, McmcConfig};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadgetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Io = 4,
    Numeric = 5,
    TooLarge = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadgetSelector {
    Top = 0,
    Greedy = 1,
    GreedyLite = 2,
    BackForth = 3,
    Opt = 4,
}

/// Settings for [`gadget_run`]. Start from [`gadget_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GadgetOptions {
    /// Candidate parents per node; 0 picks min(12, n - 1).
    pub k: usize,
    pub selector: GadgetSelector,
    pub lite_tail: usize,
    pub chains: usize,
    pub steps: usize,
    pub burn_in_fraction: f64,
    pub dags: usize,
    pub seed: u64,
    /// Nonzero to standardize the data before scoring.
    pub standardize: c_int,
}

/// A data matrix, samples by variables.
pub struct GadgetData(DataMatrix);

/// DAGs drawn by [`gadget_run`].
pub struct GadgetDagSet(Vec<Dag>);

/// Causal-effect matrices, one per DAG.
pub struct GadgetEffects {
    effects: Vec<EffectMatrix>,
    summary: BeepsSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GadgetStatus {
    match e {
        Error::MissingFile(_) | Error::Io(_) => GadgetStatus::Io,
        Error::RaggedRows { .. }
        | Error::NonNumericCell { .. }
        | Error::ConstantColumn(_)
        | Error::InvalidData(_)
        | Error::Csv(_)
        | Error::Json(_) => GadgetStatus::InvalidData,
        Error::NumericFailure { .. } | Error::SingularBlock { .. } | Error::EmptySupport { .. } => {
            GadgetStatus::Numeric
        }
        Error::TooLarge(_) => GadgetStatus::TooLarge,
        _ => GadgetStatus::InvalidArgument,
    }
}

struct Fail(GadgetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GadgetStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GadgetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GadgetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GadgetStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn gadget_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn gadget_options_default() -> GadgetOptions {
    let m = McmcConfig::default();
    GadgetOptions {
        k: 0,
        selector: GadgetSelector::GreedyLite,
        lite_tail: 6,
        chains: m.chains,
        steps: m.length,
        burn_in_fraction: m.burn_in_fraction,
        dags: 1000,
        seed: 0,
        standardize: 1,
    }
}

/// Copies a row-major `n_samples x n_vars` array.
///
/// # Safety
/// `values` must point to `n_samples * n_vars` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_data_from_rows(
    values: *const f64,
    n_samples: usize,
    n_vars: usize,
    out: *mut *mut GadgetData,
) -> GadgetStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let len = n_samples
            .checked_mul(n_vars)
            .ok_or_else(|| Fail(GadgetStatus::InvalidArgument, "size overflow".into()))?;
        let slice = unsafe { std::slice::from_raw_parts(values, len) };
        let m = DMatrix::from_row_slice(n_samples, n_vars, slice);
        unsafe { put(out, GadgetData(DataMatrix::from_values(m)?)) }
    })
}

/// Reads a CSV file; `has_header` nonzero skips the first row.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_data_load_csv(
    path: *const c_char,
    has_header: c_int,
    out: *mut *mut GadgetData,
) -> GadgetStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let s = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Fail(GadgetStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let d = load_csv(Path::new(s), has_header != 0)?;
        unsafe { put(out, GadgetData(d)) }
    })
}

/// # Safety
/// `data` must be a live handle or null; `n_vars` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_data_shape(
    data: *const GadgetData,
    n_samples: *mut usize,
    n_vars: *mut usize,
) -> GadgetStatus {
    guard(|| {
        let d = unsafe { deref(data, "data") }?;
        if n_samples.is_null() || n_vars.is_null() {
            return Err(null("out"));
        }
        unsafe {
            *n_samples = d.0.n_samples();
            *n_vars = d.0.n_vars();
        }
        Ok(())
    })
}

/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gadget_data_free(data: *mut GadgetData) {
    if !data.is_null() {
        drop(unsafe { Box::from_raw(data) });
    }
}

fn prepared(d: &DataMatrix, std_flag: c_int) -> Result<DataMatrix, Fail> {
    Ok(if std_flag != 0 { standardize(d)? } else { d.clone() })
}

/// Selects candidates, runs the partition chain and draws `opts->dags` DAGs.
///
/// # Safety
/// `data` and `opts` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_run(
    data: *const GadgetData,
    opts: *const GadgetOptions,
    out: *mut *mut GadgetDagSet,
) -> GadgetStatus {
    guard(|| {
        let d = unsafe { deref(data, "data") }?;
        let o = *unsafe { deref(opts, "opts") }?;
        let d = prepared(&d.0, o.standardize)?;
        let n = d.n_vars();
        let k = if o.k == 0 { 12.min(n.saturating_sub(1)) } else { o.k };
        let selector = match o.selector {
            GadgetSelector::Top => Selector::Top,
            GadgetSelector::Greedy => Selector::Greedy,
            GadgetSelector::GreedyLite => Selector::GreedyLite { tail: o.lite_tail },
            GadgetSelector::BackForth => Selector::BackForth,
            GadgetSelector::Opt => Selector::Opt,
        };
        let cfg = GadgetConfig {
            k,
            selector,
            mcmc: McmcConfig {
                chains: o.chains,
                length: o.steps,
                thinning: GadgetConfig::thinning_for(o.steps, o.burn_in_fraction, o.dags)?,
                burn_in_fraction: o.burn_in_fraction,
                seed: o.seed,
            },
            dag_count: o.dags,
        };
        let run = pipeline::run_gadget(&d, &BgeHyper::default_for(n), &cfg)?;
        unsafe { put(out, GadgetDagSet(run.dags)) }
    })
}

/// # Safety
/// `dags` must be a live handle; `count` and `n_nodes` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_dags_shape(
    dags: *const GadgetDagSet,
    count: *mut usize,
    n_nodes: *mut usize,
) -> GadgetStatus {
    guard(|| {
        let s = unsafe { deref(dags, "dags") }?;
        if count.is_null() || n_nodes.is_null() {
            return Err(null("out"));
        }
        unsafe {
            *count = s.0.len();
            *n_nodes = s.0.first().map_or(0, Dag::n);
        }
        Ok(())
    })
}

/// Writes DAG `index` as an `n x n` row-major 0/1 matrix, `adj[i * n + j] = 1` for `i -> j`.
///
/// # Safety
/// `adj` must have room for `n * n` bytes.
#[no_mangle]
pub unsafe extern "C" fn gadget_dags_adjacency(
    dags: *const GadgetDagSet,
    index: usize,
    adj: *mut u8,
) -> GadgetStatus {
    guard(|| {
        let s = unsafe { deref(dags, "dags") }?;
        if adj.is_null() {
            return Err(null("adj"));
        }
        let g = s.0.get(index).ok_or_else(|| {
            Fail(GadgetStatus::InvalidArgument, format!("index {index} out of range"))
        })?;
        let n = g.n();
        let out = unsafe { std::slice::from_raw_parts_mut(adj, n * n) };
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = g.has_edge(i, j) as u8;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dags` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gadget_dags_free(dags: *mut GadgetDagSet) {
    if !dags.is_null() {
        drop(unsafe { Box::from_raw(dags) });
    }
}

/// Samples one effect matrix per DAG for a joint intervention on `intervene`
/// (empty for single-node effects).
///
/// # Safety
/// `intervene` must point to `n_intervene` values (or be null when zero).
#[no_mangle]
pub unsafe extern "C" fn gadget_beeps(
    data: *const GadgetData,
    dags: *const GadgetDagSet,
    intervene: *const usize,
    n_intervene: usize,
    standardize_data: c_int,
    seed: u64,
    out: *mut *mut GadgetEffects,
) -> GadgetStatus {
    guard(|| {
        let d = unsafe { deref(data, "data") }?;
        let s = unsafe { deref(dags, "dags") }?;
        let nodes: &[usize] = if n_intervene == 0 {
            &[]
        } else if intervene.is_null() {
            return Err(null("intervene"));
        } else {
            unsafe { std::slice::from_raw_parts(intervene, n_intervene) }
        };
        let d = prepared(&d.0, standardize_data)?;
        if let Some(&x) = nodes.iter().find(|&&x| x >= d.n_vars()) {
            return Err(Fail(GadgetStatus::InvalidArgument, format!("node {x} out of range")));
        }
        let h = BgeHyper::default_for(d.n_vars());
        let (effects, summary) = pipeline::run_beeps_summary(&s.0, &d, &h, nodes, &[], seed)?;
        unsafe { put(out, GadgetEffects { effects, summary }) }
    })
}

/// # Safety
/// `effects` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadget_effects_count(
    effects: *const GadgetEffects,
    count: *mut usize,
) -> GadgetStatus {
    guard(|| {
        let e = unsafe { deref(effects, "effects") }?;
        if count.is_null() {
            return Err(null("count"));
        }
        unsafe { *count = e.effects.len() };
        Ok(())
    })
}

fn write_matrix(m: &DMatrix<f64>, out: *mut f64) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let n = m.nrows();
    let dst = unsafe { std::slice::from_raw_parts_mut(out, n * n) };
    for i in 0..n {
        for j in 0..n {
            dst[i * n + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Writes sample `index` row-major; entry `(i, j)` is the effect of `j` on `i`.
///
/// # Safety
/// `out` must have room for `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gadget_effects_matrix(
    effects: *const GadgetEffects,
    index: usize,
    out: *mut f64,
) -> GadgetStatus {
    guard(|| {
        let e = unsafe { deref(effects, "effects") }?;
        let m = e.effects.get(index).ok_or_else(|| {
            Fail(GadgetStatus::InvalidArgument, format!("index {index} out of range"))
        })?;
        write_matrix(&m.a_mat, out)
    })
}

/// Posterior mean effect matrix, row-major.
///
/// # Safety
/// `out` must have room for `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gadget_effects_mean(
    effects: *const GadgetEffects,
    out: *mut f64,
) -> GadgetStatus {
    guard(|| {
        let e = unsafe { deref(effects, "effects") }?;
        write_matrix(&e.summary.mean_matrix(), out)
    })
}

/// # Safety
/// `effects` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gadget_effects_free(effects: *mut GadgetEffects) {
    if !effects.is_null() {
        drop(unsafe { Box::from_raw(effects) });
    }
}
