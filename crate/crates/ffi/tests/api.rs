use std::ffi::CStr;
use std::ptr;

use qagg::*;

fn new(code: u32, a: &[u32], l: &[f64], t2: f64) -> (QaggStatus, *mut QaggScenario) {
    assert_eq!(a.len(), l.len());
    let mut h = ptr::null_mut();
    let s = unsafe { qagg_scenario_new(code, a.as_ptr(), l.as_ptr(), a.len(), t2, &mut h) };
    (s, h)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(qagg_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn evaluates_a_layout() {
    let (s, h) = new(3, &[2, 1], &[1.0, 3.0], 0.0);
    assert_eq!(s, QaggStatus::Ok);
    let (mut f, mut ps) = (0.0, 0.0);
    assert_eq!(unsafe { qagg_fidelity(h, &mut f, &mut ps) }, QaggStatus::Ok);
    assert!((f - 0.938).abs() < 2e-3, "{f}");
    assert!(ps > f - 0.1 && ps <= 1.0);
    assert_eq!(unsafe { qagg_fidelity(h, ptr::null_mut(), ptr::null_mut()) }, QaggStatus::Ok);
    unsafe { qagg_scenario_free(h) };
}

#[test]
fn setters_validate() {
    let (_, h) = new(3, &[1, 2], &[1.0, 3.0], 1e-3);
    let bad = [1.0, 2.0];
    assert_eq!(unsafe { qagg_scenario_set_alpha(h, bad.as_ptr(), 2) }, QaggStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let good = [1.0, 1.0, 2.0];
    assert_eq!(unsafe { qagg_scenario_set_alpha(h, good.as_ptr(), 3) }, QaggStatus::Ok);
    assert!(last_error().is_empty());
    assert_eq!(unsafe { qagg_scenario_set_t2(h, -1.0) }, QaggStatus::InvalidArgument);
    assert_eq!(unsafe { qagg_scenario_set_constants(h, 22.0, 3e5) }, QaggStatus::Ok);
    unsafe { qagg_scenario_free(h) };
}

#[test]
fn rejects_bad_scenarios() {
    assert_eq!(new(7, &[5, 3], &[1.0, 3.0], 1.0).0, QaggStatus::InvalidArgument);
    assert!(last_error().contains("sums to 8"));
    assert_eq!(new(4, &[2, 2], &[1.0, 3.0], 1.0).0, QaggStatus::InvalidArgument);
    assert_eq!(new(3, &[2, 1], &[3.0, 1.0], 1.0).0, QaggStatus::InvalidArgument);
    let mut h = ptr::null_mut();
    let s = unsafe { qagg_scenario_new(3, ptr::null(), ptr::null(), 2, 1.0, &mut h) };
    assert_eq!(s, QaggStatus::NullPointer);
    assert!(h.is_null());
    assert_eq!(unsafe { qagg_fidelity(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, QaggStatus::NullPointer);
    unsafe { qagg_scenario_free(ptr::null_mut()) };
}

#[test]
fn crossing_and_threshold() {
    let (_, a) = new(3, &[1, 1, 1], &[1.0, 2.0, 3.0], 1.0);
    let (_, b) = new(3, &[1, 2], &[1.0, 3.0], 1.0);
    let mut t = 0.0;
    assert_eq!(unsafe { qagg_crossing_t2(a, b, 1e-6, 1e-1, &mut t) }, QaggStatus::Ok);
    assert!((1e-4..1e-3).contains(&t), "{t}");
    assert_eq!(unsafe { qagg_crossing_t2(a, a, 1e-6, 1e-1, &mut t) }, QaggStatus::NoSignChange);

    let (_, c) = new(3, &[2, 1], &[1.0, 3.0], 1e-4);
    let mut l = 0.0;
    assert_eq!(unsafe { qagg_threshold_km(c, 1e-4, 0.5, &mut l) }, QaggStatus::NoThreshold);
    assert_eq!(unsafe { qagg_threshold_km(b, 1e-6, 0.5, &mut l) }, QaggStatus::Ok);
    assert!(l > 3.0, "{l}");
    for h in [a, b, c] {
        unsafe { qagg_scenario_free(h) };
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qagg.h")).unwrap();
    for name in [
        "typedef struct QaggScenario QaggScenario",
        "QAGG_STATUS_NO_THRESHOLD",
        "qagg_scenario_new",
        "qagg_scenario_free",
        "qagg_fidelity",
        "qagg_crossing_t2",
        "qagg_threshold_km",
        "qagg_last_error_message",
    ] {
        assert!(h.contains(name), "{name} missing from the header");
    }
}
