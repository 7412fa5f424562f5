//! C interface to the qagg fidelity evaluator.
//!
//! Scenarios are opaque handles created with `qagg_scenario_new` and
//! released with `qagg_scenario_free`. Every call returns a [`QaggStatus`];
//! on failure `qagg_last_error_message` describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qagg_core::analytic::ConfigurationLabel;
use qagg_core::codes::{AmplitudeVector, CodeSpec};
use qagg_core::channel::{MemoryModel, PathSet, PhysicalConstants};
use qagg_core::planner::{find_crossing, find_threshold_distance, AggregationScenario, Evaluator, SweepParameter};
use qagg_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QaggStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoSignChange = 3,
    MultipleCrossings = 4,
    NoThreshold = 5,
    Internal = 6,
}

/// Opaque scenario handle.
pub struct QaggScenario {
    scenario: AggregationScenario,
    evaluator: Evaluator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> QaggStatus {
    match e {
        Error::NoSignChange { .. } => QaggStatus::NoSignChange,
        Error::MultipleCrossings { .. } => QaggStatus::MultipleCrossings,
        Error::NoThreshold(_) => QaggStatus::NoThreshold,
        Error::Calibration(_) => QaggStatus::Internal,
        _ => QaggStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (QaggStatus, String)>) -> QaggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QaggStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QaggStatus::Internal
        }
    }
}

fn lift<T>(r: qagg_core::Result<T>) -> Result<T, (QaggStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (QaggStatus, String) {
    (QaggStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (QaggStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn memory(t2_s: f64) -> qagg_core::Result<MemoryModel> {
    if t2_s == 0.0 {
        Ok(MemoryModel::none())
    } else {
        MemoryModel::new(t2_s)
    }
}

/// Creates a scenario with default constants and uniform amplitudes.
///
/// `assignment` and `lengths_km` both hold `num_paths` entries (1 to 3).
/// `t2_s` is the memory coherence time; 0 means no memory, +inf a perfect one.
///
/// # Safety
/// The arrays must be valid for `num_paths` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn qagg_scenario_new(
    code: u32,
    assignment: *const u32,
    lengths_km: *const f64,
    num_paths: usize,
    t2_s: f64,
    out: *mut *mut QaggScenario,
) -> QaggStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let a = slice(assignment, num_paths, "assignment")?;
        let l = slice(lengths_km, num_paths, "lengths_km")?;
        let code = lift(CodeSpec::new(code as usize))?;
        let label = lift(ConfigurationLabel::new(code, a.iter().map(|&x| x as usize).collect()))?;
        let scenario = lift(AggregationScenario::new(
            label,
            lift(PathSet::new(l.to_vec()))?,
            lift(memory(t2_s))?,
            PhysicalConstants::default(),
            AmplitudeVector::uniform(code.dim()),
        ))?;
        *out = Box::into_raw(Box::new(QaggScenario { scenario, evaluator: Evaluator::default() }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from `qagg_scenario_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qagg_scenario_free(scenario: *mut QaggScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Replaces the logical amplitudes with real values `alpha[0..len]`,
/// rescaled to unit norm.
///
/// # Safety
/// `scenario` must be a live handle and `alpha` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn qagg_scenario_set_alpha(scenario: *mut QaggScenario, alpha: *const f64, len: usize) -> QaggStatus {
    guard(|| {
        let h = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let a = lift(AmplitudeVector::from_real(slice(alpha, len, "alpha")?))?;
        h.scenario = lift(h.scenario.with_alpha(a))?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qagg_scenario_set_t2(scenario: *mut QaggScenario, t2_s: f64) -> QaggStatus {
    guard(|| {
        let h = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        h.scenario = lift(h.scenario.with_t2(t2_s))?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qagg_scenario_set_constants(
    scenario: *mut QaggScenario,
    attenuation_length_km: f64,
    light_speed_km_per_s: f64,
) -> QaggStatus {
    guard(|| {
        let h = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        let c = lift(PhysicalConstants::new(attenuation_length_km, light_speed_km_per_s))?;
        let s = &h.scenario;
        h.scenario = lift(AggregationScenario::new(s.label().clone(), s.paths().clone(), s.memory(), c, s.alpha().clone()))?;
        Ok(())
    })
}

/// Fidelity and success probability; either output may be null.
///
/// # Safety
/// `scenario` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qagg_fidelity(
    scenario: *const QaggScenario,
    fidelity: *mut f64,
    success_probability: *mut f64,
) -> QaggStatus {
    guard(|| {
        let h = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let r = lift(h.evaluator.fidelity(&h.scenario))?;
        if let Some(f) = fidelity.as_mut() {
            *f = r.fidelity;
        }
        if let Some(p) = success_probability.as_mut() {
            *p = r.success_probability;
        }
        Ok(())
    })
}

/// Coherence time in [lo_s, hi_s] at which the two scenarios have equal
/// fidelity.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qagg_crossing_t2(
    a: *const QaggScenario,
    b: *const QaggScenario,
    lo_s: f64,
    hi_s: f64,
    out: *mut f64,
) -> QaggStatus {
    guard(|| {
        let ha = a.as_ref().ok_or_else(|| null("a"))?;
        let hb = b.as_ref().ok_or_else(|| null("b"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(find_crossing(&ha.evaluator, &ha.scenario, &hb.scenario, SweepParameter::T2, (lo_s, hi_s)))?;
        Ok(())
    })
}

/// Length of the last path (km) at which the fidelity drops to `target`.
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qagg_threshold_km(scenario: *const QaggScenario, t2_s: f64, target: f64, out: *mut f64) -> QaggStatus {
    guard(|| {
        let h = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lift(find_threshold_distance(&h.evaluator, &h.scenario, t2_s, target))?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next qagg call on the same thread.
#[no_mangle]
pub extern "C" fn qagg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
