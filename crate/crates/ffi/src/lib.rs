//! C ABI for the change-detection library: opaque handles, integer error
//! codes, and a flat report struct. Models arrive as the same JSON schema
//! the CLI consumes; the filter is exposed as a stateful handle driven one
//! observation at a time.
//!
//! Ownership rules: every `*_new`/`*_from_json` output must be released
//! with the matching `*_free`; all other functions borrow. Passing a null
//! required pointer returns `HMMQCD_ERR_NULL_ARG` and never crashes.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hmmqcd::detector::pfa_bound;
use hmmqcd::filter::{filter_init, filter_step, Belief};
use hmmqcd::io::ModelDoc;
use hmmqcd::model::{build_augmented, AugmentedModel};
use hmmqcd::simulate::monte_carlo_grid;

/// Success.
pub const HMMQCD_OK: i32 = 0;
/// A required pointer argument was null.
pub const HMMQCD_ERR_NULL_ARG: i32 = 1;
/// The model JSON was not valid UTF-8 or not valid JSON for the schema.
pub const HMMQCD_ERR_PARSE: i32 = 2;
/// The model failed validation (dimensions, stochasticity, rho range).
pub const HMMQCD_ERR_INVALID_MODEL: i32 = 3;
/// A filter update failed (wrong observation length, non-finite value, or
/// numeric underflow of every density).
pub const HMMQCD_ERR_FILTER: i32 = 4;
/// A simulation failed or its parameters were invalid.
pub const HMMQCD_ERR_SIMULATION: i32 = 5;
/// An output buffer was too small for the requested data.
pub const HMMQCD_ERR_BUFFER_TOO_SMALL: i32 = 6;
/// An internal panic was caught at the ABI boundary.
pub const HMMQCD_ERR_INTERNAL: i32 = 7;

/// Opaque handle to a validated model plus its compiled augmented chain.
pub struct HmmqcdModel {
    aug: AugmentedModel,
}

/// Opaque handle to a running filter.
pub struct HmmqcdFilter {
    aug: AugmentedModel,
    belief: Belief,
}

/// Monte Carlo summary for one threshold. Means come with standard errors.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HmmqcdReport {
    /// Mean detection delay `(tau - nu)^+`.
    pub add: f64,
    pub add_se: f64,
    /// Fraction of runs alarming strictly before the change.
    pub pfa_frac: f64,
    pub pfa_frac_se: f64,
    /// Posterior-based false-alarm estimate.
    pub pfa_stat: f64,
    pub pfa_stat_se: f64,
    /// Mean Bayesian cost `c * delay + 1{false alarm}`.
    pub cost: f64,
    pub cost_se: f64,
    /// Runs with no alarm before the horizon.
    pub censored: usize,
    /// Runs dropped due to numeric failure.
    pub failed: usize,
}

fn guard(f: impl FnOnce() -> i32) -> i32 {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(HMMQCD_ERR_INTERNAL)
}

/// Parse a model from JSON (same schema as the CLI model files) and
/// compile it. On success writes a handle to `out`.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string; `out` must be a valid
/// pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_model_from_json(
    json: *const c_char,
    out: *mut *mut HmmqcdModel,
) -> i32 {
    if json.is_null() || out.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    guard(|| {
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => return HMMQCD_ERR_PARSE,
        };
        let doc: ModelDoc = match serde_json::from_str(text) {
            Ok(d) => d,
            Err(_) => return HMMQCD_ERR_PARSE,
        };
        let model = match doc.to_model() {
            Ok(m) => m,
            Err(_) => return HMMQCD_ERR_INVALID_MODEL,
        };
        let aug = match build_augmented(&model) {
            Ok(a) => a,
            Err(_) => return HMMQCD_ERR_INVALID_MODEL,
        };
        unsafe { *out = Box::into_raw(Box::new(HmmqcdModel { aug })) };
        HMMQCD_OK
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by
/// [`hmmqcd_model_from_json`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_model_free(model: *mut HmmqcdModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of pre-change and post-change states. Either output pointer may
/// be null to skip it.
///
/// # Safety
/// `model` must be a live model handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_model_state_counts(
    model: *const HmmqcdModel,
    n_alpha: *mut usize,
    n_beta: *mut usize,
) -> i32 {
    if model.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    let spaces = unsafe { &(*model).aug.spaces };
    if !n_alpha.is_null() {
        unsafe { *n_alpha = spaces.n_alpha };
    }
    if !n_beta.is_null() {
        unsafe { *n_beta = spaces.n_beta };
    }
    HMMQCD_OK
}

/// Observation dimension expected by the filter (0 when the model does not
/// pin one down).
///
/// # Safety
/// `model` must be a live model handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_model_observation_dim(
    model: *const HmmqcdModel,
    dim: *mut usize,
) -> i32 {
    if model.is_null() || dim.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    unsafe { *dim = (*model).aug.obs.dim().unwrap_or(0) };
    HMMQCD_OK
}

/// Start a filter at the model's initial belief.
///
/// # Safety
/// `model` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_new(
    model: *const HmmqcdModel,
    out: *mut *mut HmmqcdFilter,
) -> i32 {
    if model.is_null() || out.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    guard(|| {
        let aug = unsafe { (*model).aug.clone() };
        let belief = filter_init(&aug);
        unsafe { *out = Box::into_raw(Box::new(HmmqcdFilter { aug, belief })) };
        HMMQCD_OK
    })
}

/// Release a filter handle. Null is a no-op.
///
/// # Safety
/// `filter` must be a pointer previously returned by [`hmmqcd_filter_new`]
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_free(filter: *mut HmmqcdFilter) {
    if !filter.is_null() {
        drop(unsafe { Box::from_raw(filter) });
    }
}

/// Rewind a filter to the initial belief.
///
/// # Safety
/// `filter` must be a live filter handle.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_reset(filter: *mut HmmqcdFilter) -> i32 {
    if filter.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    guard(|| {
        let f = unsafe { &mut *filter };
        f.belief = filter_init(&f.aug);
        HMMQCD_OK
    })
}

/// Advance the filter by one observation of `y_len` components.
///
/// # Safety
/// `filter` must be a live filter handle; `y` must point to `y_len`
/// readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_step(
    filter: *mut HmmqcdFilter,
    y: *const f64,
    y_len: usize,
) -> i32 {
    if filter.is_null() || (y.is_null() && y_len > 0) {
        return HMMQCD_ERR_NULL_ARG;
    }
    guard(|| {
        let f = unsafe { &mut *filter };
        let obs = unsafe { std::slice::from_raw_parts(y, y_len) };
        match filter_step(&f.belief, obs, &f.aug) {
            Ok(next) => {
                f.belief = next;
                HMMQCD_OK
            }
            Err(_) => HMMQCD_ERR_FILTER,
        }
    })
}

/// Posterior probability that the change has occurred.
///
/// # Safety
/// `filter` must be a live filter handle; `m2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_change_mass(
    filter: *const HmmqcdFilter,
    m2: *mut f64,
) -> i32 {
    if filter.is_null() || m2.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    unsafe { *m2 = (*filter).belief.m2 };
    HMMQCD_OK
}

/// Time index of the current belief (0 before any observation).
///
/// # Safety
/// `filter` must be a live filter handle; `k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_time(
    filter: *const HmmqcdFilter,
    k: *mut usize,
) -> i32 {
    if filter.is_null() || k.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    unsafe { *k = (*filter).belief.k };
    HMMQCD_OK
}

/// Copy the posterior over all augmented states into `out` (capacity
/// `out_len`, which must be at least the total state count).
///
/// # Safety
/// `filter` must be a live filter handle; `out` must point to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_filter_posterior(
    filter: *const HmmqcdFilter,
    out: *mut f64,
    out_len: usize,
) -> i32 {
    if filter.is_null() || out.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    let z = unsafe { &(*filter).belief.z };
    if out_len < z.len() {
        return HMMQCD_ERR_BUFFER_TOO_SMALL;
    }
    unsafe { std::ptr::copy_nonoverlapping(z.as_ptr(), out, z.len()) };
    HMMQCD_OK
}

/// Upper bound `1 - h` on the false-alarm probability of the threshold
/// rule.
#[no_mangle]
pub extern "C" fn hmmqcd_pfa_bound(h: f64) -> f64 {
    pfa_bound(h)
}

/// Monte Carlo evaluation of the threshold rule: `runs` simulated
/// trajectories of length `horizon`, threshold `h`, delay penalty `c`,
/// reproducible under `seed`.
///
/// # Safety
/// `model` must be a live model handle; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hmmqcd_monte_carlo(
    model: *const HmmqcdModel,
    h: f64,
    c: f64,
    horizon: usize,
    runs: usize,
    seed: u64,
    report: *mut HmmqcdReport,
) -> i32 {
    if model.is_null() || report.is_null() {
        return HMMQCD_ERR_NULL_ARG;
    }
    guard(|| {
        let aug = unsafe { &(*model).aug };
        let row = match monte_carlo_grid(aug, &[h], c, horizon, runs, seed) {
            Ok(r) => r.rows.into_iter().next().unwrap(),
            Err(_) => return HMMQCD_ERR_SIMULATION,
        };
        unsafe {
            *report = HmmqcdReport {
                add: row.add.mean,
                add_se: row.add.se,
                pfa_frac: row.pfa_frac.mean,
                pfa_frac_se: row.pfa_frac.se,
                pfa_stat: row.pfa_stat.mean,
                pfa_stat_se: row.pfa_stat.se,
                cost: row.cost.mean,
                cost_se: row.cost.se,
                censored: row.censored,
                failed: row.failed,
            };
        }
        HMMQCD_OK
    })
}
