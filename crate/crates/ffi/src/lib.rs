//! C ABI for `lmcollapse`.
//!
//! Objects cross the boundary as opaque handles (`LmcModel`,
//! `LmcSchedule`, `LmcTrajectory`) created and freed by this library.
//! Every fallible function returns an `LmcStatus`; on failure a message is
//! available from `lmc_last_error` on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lmcollapse::lab::{perplexity, validation_loss, CountLM};
use lmcollapse::recurrence::{closed_accumulate_state, closed_replace_state};
use lmcollapse::{
    convergence_scan, decompose_error, iterate, min_slack, ContextStats, Distribution, Error,
    ErrorSchedule, Paradigm, StateVector, Trajectory,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    UnknownToken = 5,
    /// A decomposition or ratio is undefined for the given numbers.
    Numeric = 6,
    ScheduleExhausted = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmcParadigmKind {
    Replace = 0,
    Accumulate = 1,
}

/// `k` is read only for `Accumulate`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmcParadigm {
    pub kind: LmcParadigmKind,
    pub k: f64,
}

pub struct LmcModel(CountLM);

pub struct LmcSchedule(ErrorSchedule);

pub struct LmcTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
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

fn status_of(e: &Error) -> LmcStatus {
    match e {
        Error::Io { .. } => LmcStatus::Io,
        Error::Parse { .. } => LmcStatus::Parse,
        Error::UnknownToken(_) => LmcStatus::UnknownToken,
        Error::ZeroProbability { .. } | Error::NegativeAlpha { .. } | Error::UndefinedRatio(_) => {
            LmcStatus::Numeric
        }
        Error::ScheduleExhausted { .. } => LmcStatus::ScheduleExhausted,
        _ => LmcStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> LmcStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LmcStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(&format!("null pointer: {name}"));
            LmcStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            LmcStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn reference<'a, T>(ptr: *const T, name: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(ptr: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(name))
}

unsafe fn string<'a>(ptr: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{name} is not UTF-8"))))
}

fn to_paradigm(p: LmcParadigm) -> Result<Paradigm, Failure> {
    match p.kind {
        LmcParadigmKind::Replace => Ok(Paradigm::Replace),
        LmcParadigmKind::Accumulate => Ok(Paradigm::accumulate(p.k)?),
    }
}

fn boxed<T>(value: T, dst: &mut *mut T) {
    *dst = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or "" after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn lmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---- models -------------------------------------------------------------

/// # Safety
/// `path` is a NUL-terminated string; `model` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_model_load(path: *const c_char, model: *mut *mut LmcModel) -> LmcStatus {
    guard(|| {
        let path = string(path, "path")?;
        let dst = out(model, "model")?;
        boxed(LmcModel(CountLM::load(Path::new(path))?), dst);
        Ok(())
    })
}

/// # Safety
/// `model` is null or came from `lmc_model_load` and was not freed.
#[no_mangle]
pub unsafe extern "C" fn lmc_model_free(model: *mut LmcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size including BOS (id 0); 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmc_model_vocab_size(model: *const LmcModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.vocab().size())
}

/// # Safety
/// `model` is a live handle, `label` a NUL-terminated string, `id` writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_model_token_id(
    model: *const LmcModel,
    label: *const c_char,
    id: *mut u32,
) -> LmcStatus {
    guard(|| {
        let m = reference(model, "model")?;
        let label = string(label, "label")?;
        *out(id, "id")? = m.0.vocab().require_id(label)?;
        Ok(())
    })
}

/// `p(token | context)` with `context` given as token ids, oldest first.
///
/// # Safety
/// `context` points to `context_len` ids (may be null when 0); `prob` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_model_prob(
    model: *const LmcModel,
    context: *const u32,
    context_len: usize,
    token: u32,
    prob: *mut f64,
) -> LmcStatus {
    guard(|| {
        let m = reference(model, "model")?;
        let ctx = slice(context, context_len, "context")?;
        let size = m.0.vocab().size();
        if let Some(&bad) = ctx.iter().chain(std::iter::once(&token)).find(|&&t| t as usize >= size) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary")).into());
        }
        *out(prob, "prob")? = m.0.prob(ctx, token);
        Ok(())
    })
}

/// Mean token loss of the model on a corpus text file.
///
/// # Safety
/// `corpus_path` is a NUL-terminated string; `loss` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_validation_loss(
    model: *const LmcModel,
    corpus_path: *const c_char,
    window: usize,
    loss: *mut f64,
) -> LmcStatus {
    guard(|| {
        let m = reference(model, "model")?;
        let path = Path::new(string(corpus_path, "corpus_path")?);
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let corpus = lmcollapse::corpus::parse_corpus_with(&text, m.0.vocab())?;
        *out(loss, "loss")? = validation_loss(&m.0, &corpus, window)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn lmc_perplexity(loss: f64) -> f64 {
    perplexity(loss)
}

// ---- schedules ----------------------------------------------------------

/// # Safety
/// `c` points to `dim` values; `schedule` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_schedule_constant(
    c: *const f64,
    dim: usize,
    schedule: *mut *mut LmcSchedule,
) -> LmcStatus {
    guard(|| {
        let c = slice(c, dim, "c")?.to_vec();
        boxed(LmcSchedule(ErrorSchedule::constant(c)?), out(schedule, "schedule")?);
        Ok(())
    })
}

/// `α_i[n] = c_i · n^(−exponent)`.
///
/// # Safety
/// `c` points to `dim` values; `schedule` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_schedule_power_decay(
    c: *const f64,
    dim: usize,
    exponent: f64,
    schedule: *mut *mut LmcSchedule,
) -> LmcStatus {
    guard(|| {
        let c = slice(c, dim, "c")?.to_vec();
        boxed(
            LmcSchedule(ErrorSchedule::power_decay(c, exponent)?),
            out(schedule, "schedule")?,
        );
        Ok(())
    })
}

/// # Safety
/// `lo` and `hi` point to `dim` values; `schedule` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_schedule_random_uniform(
    lo: *const f64,
    hi: *const f64,
    dim: usize,
    seed: u64,
    schedule: *mut *mut LmcSchedule,
) -> LmcStatus {
    guard(|| {
        let lo = slice(lo, dim, "lo")?.to_vec();
        let hi = slice(hi, dim, "hi")?.to_vec();
        boxed(
            LmcSchedule(ErrorSchedule::random_uniform(lo, hi, seed)?),
            out(schedule, "schedule")?,
        );
        Ok(())
    })
}

/// Table schedule; `rows` is row-major with `n_rows × dim` values, row
/// `n−1` holding generation `n`.
///
/// # Safety
/// `rows` points to `n_rows * dim` values; `schedule` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_schedule_explicit(
    rows: *const f64,
    n_rows: usize,
    dim: usize,
    schedule: *mut *mut LmcSchedule,
) -> LmcStatus {
    guard(|| {
        let len = n_rows
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("table too large".into()))?;
        let flat = slice(rows, len, "rows")?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()).into());
        }
        let table = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        boxed(LmcSchedule(ErrorSchedule::explicit(table)?), out(schedule, "schedule")?);
        Ok(())
    })
}

/// # Safety
/// `schedule` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmc_schedule_free(schedule: *mut LmcSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

// ---- recurrences --------------------------------------------------------

/// Iterates generations `1..=n_max` from initial counts `counts[0..dim]`.
///
/// # Safety
/// `counts` points to `dim` values; `schedule` is live; `trajectory` writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_iterate(
    counts: *const f64,
    dim: usize,
    schedule: *const LmcSchedule,
    paradigm: LmcParadigm,
    n_max: u64,
    trajectory: *mut *mut LmcTrajectory,
) -> LmcStatus {
    guard(|| {
        let stats = ContextStats::from_counts(slice(counts, dim, "counts")?.to_vec())?;
        let s = reference(schedule, "schedule")?;
        let t = iterate(&stats, &s.0, to_paradigm(paradigm)?, n_max)?;
        boxed(LmcTrajectory(t), out(trajectory, "trajectory")?);
        Ok(())
    })
}

/// # Safety
/// `trajectory` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmc_trajectory_free(trajectory: *mut LmcTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of generations stored; 0 for a null handle.
///
/// # Safety
/// `trajectory` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmc_trajectory_len(trajectory: *const LmcTrajectory) -> u64 {
    trajectory.as_ref().map_or(0, |t| t.0.len() as u64)
}

/// Copies `p̂_n` into `p_hat[0..dim]`.
///
/// # Safety
/// `trajectory` is live; `p_hat` points to `dim` writable values.
#[no_mangle]
pub unsafe extern "C" fn lmc_trajectory_p_hat(
    trajectory: *const LmcTrajectory,
    n: u64,
    p_hat: *mut f64,
    dim: usize,
) -> LmcStatus {
    guard(|| {
        let t = reference(trajectory, "trajectory")?;
        let row = t
            .0
            .row(n)
            .ok_or_else(|| Error::InvalidArgument(format!("generation {n} not stored")))?;
        if dim != row.p_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: row.p_hat.len(),
                actual: dim,
            }
            .into());
        }
        slice_mut(p_hat, dim, "p_hat")?.copy_from_slice(&row.p_hat);
        Ok(())
    })
}

/// Deviation from the limit ratio at generation `n`. Returns `Numeric`
/// when the ratio is undefined there.
///
/// # Safety
/// `trajectory` is live; `deviation` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_trajectory_deviation(
    trajectory: *const LmcTrajectory,
    n: u64,
    deviation: *mut f64,
) -> LmcStatus {
    guard(|| {
        let t = reference(trajectory, "trajectory")?;
        let row = t
            .0
            .row(n)
            .ok_or_else(|| Error::InvalidArgument(format!("generation {n} not stored")))?;
        *out(deviation, "deviation")? = row.deviation.ok_or(Error::UndefinedRatio(n))?;
        Ok(())
    })
}

/// Last generation whose deviation is at least `epsilon`, provided the
/// final stored generation is within `epsilon`. `*found` is 0 when no such
/// generation exists inside the stored horizon.
///
/// # Safety
/// `trajectory` is live; `n0` and `found` are writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_convergence_scan(
    trajectory: *const LmcTrajectory,
    epsilon: f64,
    n0: *mut u64,
    found: *mut bool,
) -> LmcStatus {
    guard(|| {
        let t = reference(trajectory, "trajectory")?;
        let result = convergence_scan(&t.0, epsilon)?;
        *out(found, "found")? = result.is_some();
        *out(n0, "n0")? = result.unwrap_or(0);
        Ok(())
    })
}

/// Closed-form state at generation `n`: `y[0..dim]` and its total.
///
/// # Safety
/// `counts` points to `dim` values; `schedule` is live; `y` points to
/// `dim` writable values; `y_total` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_closed_form(
    counts: *const f64,
    dim: usize,
    schedule: *const LmcSchedule,
    paradigm: LmcParadigm,
    n: u64,
    y: *mut f64,
    y_total: *mut f64,
) -> LmcStatus {
    guard(|| {
        let stats = ContextStats::from_counts(slice(counts, dim, "counts")?.to_vec())?;
        let s = reference(schedule, "schedule")?;
        let state = match to_paradigm(paradigm)? {
            Paradigm::Replace => closed_replace_state(&stats, &s.0, n)?,
            Paradigm::Accumulate { k } => closed_accumulate_state(&stats, &s.0, k, n)?,
        };
        slice_mut(y, dim, "y")?.copy_from_slice(state.y_per_token());
        *out(y_total, "y_total")? = state.y_total();
        Ok(())
    })
}

// ---- error decomposition ------------------------------------------------

unsafe fn target_and_reference(
    target: *const f64,
    y: *const f64,
    y_total: f64,
    dim: usize,
) -> Result<(Distribution, StateVector), Failure> {
    let target = Distribution::new(slice(target, dim, "target")?.to_vec())?;
    let reference = StateVector::new(slice(y, dim, "y")?.to_vec(), y_total)?;
    Ok((target, reference))
}

/// Smallest total error that decomposes `reference → target` with every
/// component non-negative.
///
/// # Safety
/// `target` and `y` point to `dim` values; `slack` is writable.
#[no_mangle]
pub unsafe extern "C" fn lmc_min_slack(
    target: *const f64,
    y: *const f64,
    y_total: f64,
    dim: usize,
    slack: *mut f64,
) -> LmcStatus {
    guard(|| {
        let (t, r) = target_and_reference(target, y, y_total, dim)?;
        *out(slack, "slack")? = min_slack(&t, &r)?;
        Ok(())
    })
}

/// Error vector `α_i = p_i·S + p_i·y − y_i` for total error `S = slack`.
///
/// # Safety
/// `target` and `y` point to `dim` values; `alpha` to `dim` writable values.
#[no_mangle]
pub unsafe extern "C" fn lmc_decompose_error(
    target: *const f64,
    y: *const f64,
    y_total: f64,
    dim: usize,
    slack: f64,
    alpha: *mut f64,
) -> LmcStatus {
    guard(|| {
        let (t, r) = target_and_reference(target, y, y_total, dim)?;
        let d = decompose_error(&t, &r, slack)?;
        slice_mut(alpha, dim, "alpha")?.copy_from_slice(&d.alpha_i);
        Ok(())
    })
}
