//! C ABI for the trajectory toolkit: opaque scenario handles, status
//! codes, and flat result structs. Every entry point returns an
//! `IppStatus`; on failure a thread-local message is readable through
//! `ipp_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ippkit::control::closed_loop_simulate;
use ippkit::moments::integrate_moments;
use ippkit::rng::RandomStream;
use ippkit::scenario::{guided_scenario, nominal_scenario, Scenario};
use ippkit::sde::{run_ensemble, simulate_trajectory, ImpactStats, SimOptions};
use ippkit::Error;

/// Status codes returned by every API entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IppStatus {
    IppOk = 0,
    IppErrNullPointer = 1,
    IppErrParse = 2,
    IppErrValidation = 3,
    IppErrSingularity = 4,
    IppErrDegenerateFlow = 5,
    IppErrStatistics = 6,
    IppErrHorizon = 7,
    IppErrUsage = 8,
    IppErrIo = 9,
    IppErrPanic = 10,
}

/// Opaque scenario handle.
pub struct IppScenario {
    inner: Scenario,
}

/// Ground-plane impact statistics of an ensemble.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IppImpactStats {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
}

/// Moment-engine impact prediction.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IppMomentPrediction {
    pub tau: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
}

/// Single-trajectory impact record.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IppImpact {
    /// 1 if the trajectory reached the ground within the horizon.
    pub landed: i32,
    pub tau: f64,
    pub x: f64,
    pub y: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(err: &Error) -> IppStatus {
    match err {
        Error::Parse(_) => IppStatus::IppErrParse,
        Error::Validation { .. } => IppStatus::IppErrValidation,
        Error::Singularity(_) => IppStatus::IppErrSingularity,
        Error::DegenerateFlow { .. } => IppStatus::IppErrDegenerateFlow,
        Error::Statistics(_) => IppStatus::IppErrStatistics,
        Error::HorizonExceeded(_) => IppStatus::IppErrHorizon,
        Error::Usage(_) => IppStatus::IppErrUsage,
        Error::Io(_) => IppStatus::IppErrIo,
    }
}

fn fail(err: &Error) -> IppStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn guarded(f: impl FnOnce() -> IppStatus) -> IppStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            IppStatus::IppErrPanic
        }
    }
}

fn flat_stats(s: &ImpactStats) -> IppImpactStats {
    IppImpactStats {
        n: s.n,
        mean_x: s.mean_x,
        mean_y: s.mean_y,
        sd_x: s.sd_x,
        sd_y: s.sd_y,
        cov_xx: s.cov[0][0],
        cov_xy: s.cov[0][1],
        cov_yy: s.cov[1][1],
    }
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ipp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Built-in ballistic scenario.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ipp_scenario_nominal(out: *mut *mut IppScenario) -> IppStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return IppStatus::IppErrNullPointer;
        }
        let handle = Box::new(IppScenario {
            inner: nominal_scenario(),
        });
        unsafe { *out = Box::into_raw(handle) };
        IppStatus::IppOk
    })
}

/// Built-in canard-guided scenario.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ipp_scenario_guided(out: *mut *mut IppScenario) -> IppStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return IppStatus::IppErrNullPointer;
        }
        let handle = Box::new(IppScenario {
            inner: guided_scenario(),
        });
        unsafe { *out = Box::into_raw(handle) };
        IppStatus::IppOk
    })
}

/// Parse and validate a scenario from a JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string; `out` must be a valid
/// pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn ipp_scenario_from_json(
    json: *const c_char,
    out: *mut *mut IppScenario,
) -> IppStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            set_error("null pointer argument");
            return IppStatus::IppErrNullPointer;
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("scenario JSON is not valid UTF-8");
                return IppStatus::IppErrParse;
            }
        };
        match Scenario::from_json(text) {
            Ok(sc) => {
                unsafe { *out = Box::into_raw(Box::new(IppScenario { inner: sc })) };
                IppStatus::IppOk
            }
            Err(e) => {
                unsafe { *out = ptr::null_mut() };
                fail(&e)
            }
        }
    })
}

/// Override the integration step of a scenario handle.
///
/// # Safety
/// `sc` must be a live handle from this library, not freed, and not
/// aliased mutably from another thread during the call.
#[no_mangle]
pub unsafe extern "C" fn ipp_scenario_set_step(
    sc: *mut IppScenario,
    step: f64,
) -> IppStatus {
    guarded(|| {
        let Some(handle) = (unsafe { sc.as_mut() }) else {
            set_error("scenario handle is null");
            return IppStatus::IppErrNullPointer;
        };
        let previous = handle.inner.integration.step;
        handle.inner.integration.step = step;
        if let Err(e) = handle.inner.validate() {
            handle.inner.integration.step = previous;
            return fail(&e);
        }
        IppStatus::IppOk
    })
}

/// Release a scenario handle. Passing null is a no-op.
///
/// # Safety
/// `sc` must be null or a handle obtained from this library that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn ipp_scenario_free(sc: *mut IppScenario) {
    if !sc.is_null() {
        drop(unsafe { Box::from_raw(sc) });
    }
}

/// Integrate one trajectory and report its impact.
///
/// # Safety
/// `sc` must be a live handle; `out` must point to writable storage for
/// one `IppImpact`.
#[no_mangle]
pub unsafe extern "C" fn ipp_simulate_impact(
    sc: *const IppScenario,
    seed: u64,
    deterministic: bool,
    random_ic: bool,
    out: *mut IppImpact,
) -> IppStatus {
    guarded(|| {
        let (Some(handle), Some(out)) = (unsafe { sc.as_ref() }, unsafe { out.as_mut() }) else {
            set_error("null pointer argument");
            return IppStatus::IppErrNullPointer;
        };
        let mut stream = RandomStream::substream(seed, 0);
        match simulate_trajectory(
            &handle.inner,
            &mut stream,
            None,
            &SimOptions {
                sample_ic: random_ic,
                record_every: usize::MAX,
                zero_noise: deterministic,
            },
        ) {
            Ok(traj) => {
                *out = match traj.impact {
                    Some(r) => IppImpact {
                        landed: 1,
                        tau: r.tau,
                        x: r.x,
                        y: r.y,
                    },
                    None => IppImpact {
                        landed: 0,
                        tau: 0.0,
                        x: 0.0,
                        y: 0.0,
                    },
                };
                IppStatus::IppOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Monte Carlo impact ensemble statistics.
///
/// # Safety
/// `sc` must be a live handle; `out` must point to writable storage for
/// one `IppImpactStats`.
#[no_mangle]
pub unsafe extern "C" fn ipp_run_ensemble(
    sc: *const IppScenario,
    runs: usize,
    seed: u64,
    random_ic: bool,
    out: *mut IppImpactStats,
) -> IppStatus {
    guarded(|| {
        let (Some(handle), Some(out)) = (unsafe { sc.as_ref() }, unsafe { out.as_mut() }) else {
            set_error("null pointer argument");
            return IppStatus::IppErrNullPointer;
        };
        match run_ensemble(&handle.inner, runs, seed, random_ic, None) {
            Ok(res) => {
                *out = flat_stats(&res.stats);
                IppStatus::IppOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Mean-field moment propagation impact prediction.
///
/// # Safety
/// `sc` must be a live handle; `out` must point to writable storage for
/// one `IppMomentPrediction`.
#[no_mangle]
pub unsafe extern "C" fn ipp_moment_prediction(
    sc: *const IppScenario,
    random_ic: bool,
    out: *mut IppMomentPrediction,
) -> IppStatus {
    guarded(|| {
        let (Some(handle), Some(out)) = (unsafe { sc.as_ref() }, unsafe { out.as_mut() }) else {
            set_error("null pointer argument");
            return IppStatus::IppErrNullPointer;
        };
        match integrate_moments(&handle.inner, random_ic, usize::MAX) {
            Ok(res) => {
                let p = res.prediction;
                *out = IppMomentPrediction {
                    tau: p.tau,
                    mean_x: p.mean_x,
                    mean_y: p.mean_y,
                    sd_x: p.sd_x,
                    sd_y: p.sd_y,
                };
                IppStatus::IppOk
            }
            Err(e) => fail(&e),
        }
    })
}

/// Paired controlled/uncontrolled dispersion study.
///
/// # Safety
/// `sc` must be a live handle; the three output pointers must each point
/// to writable storage of the corresponding type.
#[no_mangle]
pub unsafe extern "C" fn ipp_control_study(
    sc: *const IppScenario,
    runs: usize,
    seed: u64,
    controlled: *mut IppImpactStats,
    uncontrolled: *mut IppImpactStats,
    trace_ratio: *mut f64,
) -> IppStatus {
    guarded(|| {
        let Some(handle) = (unsafe { sc.as_ref() }) else {
            set_error("scenario handle is null");
            return IppStatus::IppErrNullPointer;
        };
        if controlled.is_null() || uncontrolled.is_null() || trace_ratio.is_null() {
            set_error("null pointer argument");
            return IppStatus::IppErrNullPointer;
        }
        match closed_loop_simulate(&handle.inner, seed, runs) {
            Ok(study) => {
                unsafe {
                    *controlled = flat_stats(&study.controlled);
                    *uncontrolled = flat_stats(&study.uncontrolled);
                    *trace_ratio = study.trace_ratio;
                }
                IppStatus::IppOk
            }
            Err(e) => fail(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_lifecycle_and_ensemble() {
        let mut sc: *mut IppScenario = ptr::null_mut();
        assert_eq!(unsafe { ipp_scenario_nominal(&mut sc) }, IppStatus::IppOk);
        assert!(!sc.is_null());
        let mut stats = IppImpactStats {
            n: 0,
            mean_x: 0.0,
            mean_y: 0.0,
            sd_x: 0.0,
            sd_y: 0.0,
            cov_xx: 0.0,
            cov_xy: 0.0,
            cov_yy: 0.0,
        };
        let st = unsafe { ipp_run_ensemble(sc, 50, 9, false, &mut stats) };
        assert_eq!(st, IppStatus::IppOk);
        assert_eq!(stats.n, 50);
        assert!(stats.sd_x > 0.0 && stats.sd_y > 0.0);
        unsafe { ipp_scenario_free(sc) };
    }

    #[test]
    fn null_pointer_rejected() {
        assert_eq!(
            unsafe { ipp_scenario_nominal(ptr::null_mut()) },
            IppStatus::IppErrNullPointer
        );
        let msg = unsafe { CStr::from_ptr(ipp_last_error()) };
        assert!(!msg.to_bytes().is_empty());
    }

    #[test]
    fn bad_json_reports_parse_error() {
        let mut sc: *mut IppScenario = ptr::null_mut();
        let json = CString::new("{ not json").unwrap();
        let st = unsafe { ipp_scenario_from_json(json.as_ptr(), &mut sc) };
        assert_eq!(st, IppStatus::IppErrParse);
        assert!(sc.is_null());
    }

    #[test]
    fn deterministic_impact_matches_between_calls() {
        let mut sc: *mut IppScenario = ptr::null_mut();
        assert_eq!(unsafe { ipp_scenario_nominal(&mut sc) }, IppStatus::IppOk);
        let mut a = IppImpact {
            landed: 0,
            tau: 0.0,
            x: 0.0,
            y: 0.0,
        };
        let mut b = a;
        unsafe {
            assert_eq!(
                ipp_simulate_impact(sc, 3, true, false, &mut a),
                IppStatus::IppOk
            );
            assert_eq!(
                ipp_simulate_impact(sc, 3, true, false, &mut b),
                IppStatus::IppOk
            );
            ipp_scenario_free(sc);
        }
        assert_eq!(a.landed, 1);
        assert_eq!((a.tau, a.x, a.y), (b.tau, b.x, b.y));
    }

    #[test]
    fn invalid_step_rejected_and_handle_unchanged() {
        let mut sc: *mut IppScenario = ptr::null_mut();
        assert_eq!(unsafe { ipp_scenario_nominal(&mut sc) }, IppStatus::IppOk);
        unsafe {
            assert_eq!(
                ipp_scenario_set_step(sc, -1.0),
                IppStatus::IppErrValidation
            );
            assert_eq!(ipp_scenario_set_step(sc, 0.01), IppStatus::IppOk);
            ipp_scenario_free(sc);
        }
    }
}
