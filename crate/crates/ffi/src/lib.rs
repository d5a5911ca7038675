//! C ABI over `lpcond`.
//!
//! Models and laws cross the boundary as opaque handles that are released
//! with the matching `*_free`. Every fallible call returns an [`LpcondStatus`]; the message of
//! the most recent failure on the calling thread is available through
//! [`lpcond_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lpcond::conditional::rejection_sample;
use lpcond::exact::{exact_conditional_law, exact_displacement_pmf, ConditioningSpec};
use lpcond::fourier::llt_check;
use lpcond::model::ModelSpec;
use lpcond::models::{build_model, ModelConfig};
use lpcond::probing::{total_displacement, HashSequence};
use lpcond::{Error, Pmf};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpcondStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Capacity = 4,
    Parameter = 5,
    TooLarge = 6,
    EmptyCondition = 7,
    Degenerate = 8,
    Quadrature = 9,
    Hypothesis = 10,
    Io = 11,
    OutOfRange = 12,
    Panic = 13,
}

/// A summand model together with its conditioning event `S_N = m`.
pub struct LpcondModel {
    spec: ModelSpec,
    cond: ConditioningSpec,
}

/// A probability mass function on the integers.
pub struct LpcondPmf {
    pmf: Pmf,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LpcondStatus {
    match e {
        Error::Input(_) => LpcondStatus::InvalidInput,
        Error::Capacity { .. } => LpcondStatus::Capacity,
        Error::Parameter(_) => LpcondStatus::Parameter,
        Error::TooLarge(_) => LpcondStatus::TooLarge,
        Error::EmptyCondition { .. } => LpcondStatus::EmptyCondition,
        Error::Degenerate(_) => LpcondStatus::Degenerate,
        Error::Quadrature { .. } => LpcondStatus::Quadrature,
        Error::Hypothesis(_) => LpcondStatus::Hypothesis,
        Error::Io(_) => LpcondStatus::Io,
    }
}

struct Failure(LpcondStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LpcondStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(body: F) -> LpcondStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            LpcondStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside lpcond".to_string());
            LpcondStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LpcondStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies the last error message of this thread into `buf`, NUL-terminated
/// and truncated to `len - 1` bytes. Returns the full message length in bytes
/// (excluding the terminator), or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lpcond_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lpcond_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Total displacement of inserting `addresses[0..n]` (home urns in `1..=m`)
/// into an empty table of `m` urns with linear probing.
///
/// # Safety
/// `addresses` must point to `n` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_total_displacement(
    m: usize,
    addresses: *const usize,
    n: usize,
    out: *mut u64,
) -> LpcondStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let addrs = if n == 0 {
            Vec::new()
        } else if addresses.is_null() {
            return Err(null("addresses"));
        } else {
            std::slice::from_raw_parts(addresses, n).to_vec()
        };
        *out = total_displacement(&HashSequence::new(m, addrs)?);
        Ok(())
    })
}

/// Builds a model from a JSON config such as
/// `{"kind":"hashing","params":{"n":6},"m":9}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_model_from_json(
    json: *const c_char,
    out: *mut *mut LpcondModel,
) -> LpcondStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let config = ModelConfig::from_json(read_str(json, "json")?)?;
        let (spec, cond) = build_model(&config)?;
        *out = Box::into_raw(Box::new(LpcondModel { spec, cond }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`lpcond_model_from_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lpcond_model_free(model: *mut LpcondModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of summands `N` and target `m` of the conditioning event.
///
/// # Safety
/// `model` must be a live handle; `n_summands` and `m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_model_condition(
    model: *const LpcondModel,
    n_summands: *mut u64,
    m: *mut i64,
) -> LpcondStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        *out_ref(n_summands, "n_summands")? = model.cond.n_summands;
        *out_ref(m, "m")? = model.cond.m;
        Ok(())
    })
}

/// Exact law of `T_N` given `S_N = m`; `p_condition` receives `P(S_N = m)`
/// and may be null.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_exact_conditional(
    model: *const LpcondModel,
    out: *mut *mut LpcondPmf,
    p_condition: *mut f64,
) -> LpcondStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let law = exact_conditional_law(&model.spec, &model.cond)?;
        if let Some(p) = p_condition.as_mut() {
            *p = law.p_condition;
        }
        *out = Box::into_raw(Box::new(LpcondPmf { pmf: law.law }));
        Ok(())
    })
}

/// Exact law of the total displacement of `n` balls hashed into `m` urns.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_exact_displacement(
    m: u64,
    n: u64,
    out: *mut *mut LpcondPmf,
) -> LpcondStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let pmf = exact_displacement_pmf(m, n)?;
        *out = Box::into_raw(Box::new(LpcondPmf { pmf }));
        Ok(())
    })
}

/// Exact `P(S_N = m)` and its ratio to the Gaussian local approximation.
///
/// # Safety
/// `model` must be a live handle; `p_exact` and `ratio` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_local_limit(
    model: *const LpcondModel,
    p_exact: *mut f64,
    ratio: *mut f64,
) -> LpcondStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let p_exact = out_ref(p_exact, "p_exact")?;
        let ratio = out_ref(ratio, "ratio")?;
        let r = llt_check(&model.spec, &model.cond)?;
        *p_exact = r.p_exact;
        *ratio = r.ratio;
        Ok(())
    })
}

/// Rejection-samples up to `capacity` values of `T_N` given `S_N = m` into
/// `values`, spending at most `budget` attempts (0 selects the default).
/// `written` receives the number of accepted values; `attempts` may be null.
///
/// # Safety
/// `model` must be a live handle, `values` must hold `capacity` slots and
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_sample_conditional(
    model: *const LpcondModel,
    seed: u64,
    capacity: usize,
    budget: u64,
    values: *mut i64,
    written: *mut usize,
    attempts: *mut u64,
) -> LpcondStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let written = out_ref(written, "written")?;
        *written = 0;
        if capacity > 0 && values.is_null() {
            return Err(null("values"));
        }
        let budget = (budget > 0).then_some(budget);
        let batch = rejection_sample(&model.spec, &model.cond, capacity as u64, budget, seed)?;
        let n = batch.values.len().min(capacity);
        if n > 0 {
            std::slice::from_raw_parts_mut(values, n).copy_from_slice(&batch.values[..n]);
        }
        *written = n;
        if let Some(a) = attempts.as_mut() {
            *a = batch.attempts;
        }
        Ok(())
    })
}

/// Number of atoms stored in `pmf`; 0 for null.
///
/// # Safety
/// `pmf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_len(pmf: *const LpcondPmf) -> usize {
    pmf.as_ref().map_or(0, |p| p.pmf.len())
}

/// The `index`-th atom in increasing order of value.
///
/// # Safety
/// `pmf` must be a live handle; `value` and `prob` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_atom(
    pmf: *const LpcondPmf,
    index: usize,
    value: *mut i64,
    prob: *mut f64,
) -> LpcondStatus {
    guard(|| {
        let pmf = &pmf.as_ref().ok_or_else(|| null("pmf"))?.pmf;
        if index >= pmf.len() {
            return Err(Failure(
                LpcondStatus::OutOfRange,
                format!("atom {index} out of range for {} atoms", pmf.len()),
            ));
        }
        *out_ref(value, "value")? = pmf.support()[index];
        *out_ref(prob, "prob")? = pmf.probs()[index];
        Ok(())
    })
}

/// `P(value)`, zero off the support.
///
/// # Safety
/// `pmf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_prob(pmf: *const LpcondPmf, value: i64) -> f64 {
    pmf.as_ref().map_or(f64::NAN, |p| p.pmf.prob(value))
}

/// Mean of the stored law; NaN for null.
///
/// # Safety
/// `pmf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_mean(pmf: *const LpcondPmf) -> f64 {
    pmf.as_ref().map_or(f64::NAN, |p| p.pmf.mean())
}

/// Variance of the stored law; NaN for null.
///
/// # Safety
/// `pmf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_variance(pmf: *const LpcondPmf) -> f64 {
    pmf.as_ref().map_or(f64::NAN, |p| p.pmf.variance())
}

/// Releases a law. Null is ignored.
///
/// # Safety
/// `pmf` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lpcond_pmf_free(pmf: *mut LpcondPmf) {
    if !pmf.is_null() {
        drop(Box::from_raw(pmf));
    }
}

/// Runs a command line (for example `{"lpcond", "enumerate", "--m", "8",
/// "--n", "6"}`) and returns its JSON or CSV output in `out`, to be released
/// with [`lpcond_string_free`].
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lpcond_run(
    argc: usize,
    argv: *const *const c_char,
    out: *mut *mut c_char,
) -> LpcondStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if argc > 0 && argv.is_null() {
            return Err(null("argv"));
        }
        let mut args = Vec::with_capacity(argc);
        for i in 0..argc {
            args.push(read_str(*argv.add(i), "argument")?.to_string());
        }
        let bytes = lpcond::cli::run_to_bytes(args)?;
        let text = CString::new(bytes).map_err(|_| {
            Failure(
                LpcondStatus::InvalidInput,
                "output contains NUL".to_string(),
            )
        })?;
        *out = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by [`lpcond_run`]. Null is ignored.
///
/// # Safety
/// `s` must come from [`lpcond_run`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lpcond_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
