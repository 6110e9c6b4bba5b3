//! C ABI over the `hgdagger` library.
//!
//! Every fallible call returns an [`HgStatus`]; on failure the message is
//! kept per thread and can be read with [`hg_last_error`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use hgdagger::ensemble::Ensemble;
use hgdagger::evaluation::bhattacharyya;
use hgdagger::session::protocol::{ServerBody, ServerMessage};
use hgdagger::session::{start_session, Applied, ControlEvent, ControlEventKind, Phase, Session, SessionConfig};
use hgdagger::sim::{generate_scenario, Observation, Scenario};
use hgdagger::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NotFound = 5,
    SessionRejected = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgEventKind {
    TakeControl = 0,
    ReleaseControl = 1,
    SteerInput = 2,
    SpeedInput = 3,
    Pause = 4,
    Resume = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgPhase {
    Idle = 0,
    NoviceDriving = 1,
    ExpertDriving = 2,
    Paused = 3,
    Finished = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HgApplied {
    Takeover = 0,
    Changed = 1,
    Ignored = 2,
}

/// Ego pose and speed after a session tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HgEgoState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub s: f64,
}

pub struct HgScenario(Scenario);

pub struct HgEnsemble(Arc<Ensemble>);

pub struct HgSession(Session);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> HgStatus {
    match err {
        Error::InvalidArgument(_) | Error::DegenerateRegion { .. } | Error::UndefinedThreshold => {
            HgStatus::InvalidArgument
        }
        Error::Io { .. } => HgStatus::Io,
        Error::Format { .. } => HgStatus::Format,
        Error::NotFound(_) => HgStatus::NotFound,
        Error::SessionRejected(_) => HgStatus::SessionRejected,
        Error::TrainingAborted(_) => HgStatus::Internal,
    }
}

fn fail(status: HgStatus, msg: impl Into<String>) -> HgStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), HgStatus>) -> HgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(HgStatus::Internal, "panic inside hgdagger"),
    }
}

fn lib(err: Error) -> HgStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, HgStatus> {
    p.as_ref().ok_or_else(|| fail(HgStatus::NullPointer, format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, HgStatus> {
    p.as_mut().ok_or_else(|| fail(HgStatus::NullPointer, format!("{name} is null")))
}

/// Copies `text` plus a terminating NUL into `buf`. `written` receives the
/// required size including the NUL, also when the buffer is too small.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, written: *mut usize) -> Result<(), HgStatus> {
    let need = text.len() + 1;
    if !written.is_null() {
        *written = need;
    }
    if buf.is_null() || len < need {
        return Err(fail(HgStatus::BufferTooSmall, format!("need {need} bytes")));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hg_scenario_generate(seed: u64, road_length: f64, out: *mut *mut HgScenario) -> HgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let scenario = generate_scenario(seed, road_length).map_err(lib)?;
        *out = Box::into_raw(Box::new(HgScenario(scenario)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`hg_scenario_generate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hg_scenario_free(scenario: *mut HgScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_scenario_obstacle_count(scenario: *const HgScenario, out: *mut usize) -> HgStatus {
    guard(|| {
        let scenario = deref(scenario, "scenario")?;
        *deref_mut(out, "out")? = scenario.0.obstacles.len();
        Ok(())
    })
}

/// Loads an ensemble checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_ensemble_load(path: *const c_char, out: *mut *mut HgEnsemble) -> HgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(deref(path, "path")?)
            .to_str()
            .map_err(|_| fail(HgStatus::InvalidArgument, "path is not UTF-8"))?;
        let ensemble = Ensemble::load(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(HgEnsemble(Arc::new(ensemble))));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from [`hg_ensemble_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hg_ensemble_free(ensemble: *mut HgEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Mean action `[steer, speed_cmd]` and doubt for a 7-element observation.
///
/// # Safety
/// `observation` must point to 7 doubles, `action` to 2 writable doubles,
/// `doubt` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hg_ensemble_predict(
    ensemble: *const HgEnsemble,
    observation: *const f64,
    action: *mut f64,
    doubt: *mut f64,
) -> HgStatus {
    guard(|| {
        let ensemble = deref(ensemble, "ensemble")?;
        deref(observation, "observation")?;
        deref_mut(action, "action")?;
        let doubt = deref_mut(doubt, "doubt")?;
        let mut obs = [0.0; 7];
        obs.copy_from_slice(std::slice::from_raw_parts(observation, 7));
        let pred = ensemble.0.predict(&Observation::from_array(obs)).map_err(lib)?;
        let a = pred.mean_action.to_array();
        std::slice::from_raw_parts_mut(action, 2).copy_from_slice(&a);
        *doubt = pred.doubt();
        Ok(())
    })
}

/// Starts a session driving `scenario` with `ensemble`. Pass NaN for `tau`
/// when no threshold is known. Both inputs stay owned by the caller.
///
/// # Safety
/// Handles must be live; `id` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hg_session_start(
    id: *const c_char,
    scenario: *const HgScenario,
    ensemble: *const HgEnsemble,
    rate_hz: f64,
    tau: f64,
    out: *mut *mut HgSession,
) -> HgStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let id = CStr::from_ptr(deref(id, "id")?).to_string_lossy().into_owned();
        let scenario = deref(scenario, "scenario")?;
        let ensemble = deref(ensemble, "ensemble")?;
        let config = SessionConfig {
            rate_hz,
            tau: (!tau.is_nan()).then_some(tau),
            ..SessionConfig::default()
        };
        let session = start_session(id, scenario.0.clone(), ensemble.0.clone(), config).map_err(lib)?;
        *out = Box::into_raw(Box::new(HgSession(session)));
        Ok(())
    })
}

/// # Safety
/// `session` must come from [`hg_session_start`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hg_session_free(session: *mut HgSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Applies an operator event. `has_value` selects whether `value` is used.
///
/// # Safety
/// `session` must be live; `applied` may be null.
#[no_mangle]
pub unsafe extern "C" fn hg_session_event(
    session: *mut HgSession,
    kind: HgEventKind,
    has_value: bool,
    value: f64,
    client_time: f64,
    applied: *mut HgApplied,
) -> HgStatus {
    guard(|| {
        let session = deref_mut(session, "session")?;
        let kind = match kind {
            HgEventKind::TakeControl => ControlEventKind::TakeControl,
            HgEventKind::ReleaseControl => ControlEventKind::ReleaseControl,
            HgEventKind::SteerInput => ControlEventKind::SteerInput,
            HgEventKind::SpeedInput => ControlEventKind::SpeedInput,
            HgEventKind::Pause => ControlEventKind::Pause,
            HgEventKind::Resume => ControlEventKind::Resume,
        };
        let event = ControlEvent::new(kind, has_value.then_some(value), client_time);
        let result = session.0.handle_event(event).map_err(lib)?;
        if !applied.is_null() {
            *applied = match result {
                Applied::Takeover => HgApplied::Takeover,
                Applied::Changed => HgApplied::Changed,
                Applied::Ignored => HgApplied::Ignored,
            };
        }
        Ok(())
    })
}

/// Advances one control step.
///
/// # Safety
/// `session` must be live; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn hg_session_tick(
    session: *mut HgSession,
    state: *mut HgEgoState,
    doubt: *mut f64,
    phase: *mut HgPhase,
) -> HgStatus {
    guard(|| {
        let session = deref_mut(session, "session")?;
        session.0.tick().map_err(lib)?;
        let s = session.0.state();
        if !state.is_null() {
            *state = HgEgoState {
                x: s.x,
                y: s.y,
                theta: s.theta,
                s: s.s,
            };
        }
        if !doubt.is_null() {
            *doubt = session.0.doubt();
        }
        if !phase.is_null() {
            *phase = match session.0.phase() {
                Phase::Idle => HgPhase::Idle,
                Phase::NoviceDriving => HgPhase::NoviceDriving,
                Phase::ExpertDriving => HgPhase::ExpertDriving,
                Phase::Paused => HgPhase::Paused,
                Phase::Finished => HgPhase::Finished,
            };
        }
        Ok(())
    })
}

/// Label and intervention counts collected so far.
///
/// # Safety
/// `session` must be live; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn hg_session_counts(
    session: *const HgSession,
    labels: *mut usize,
    interventions: *mut usize,
) -> HgStatus {
    guard(|| {
        let session = deref(session, "session")?;
        if !labels.is_null() {
            *labels = session.0.dataset().len();
        }
        if !interventions.is_null() {
            *interventions = session.0.interventions().len();
        }
        Ok(())
    })
}

/// Writes the current snapshot as a wire-protocol JSON frame.
///
/// # Safety
/// `buf` must hold `len` bytes (or be null to query the size); `written`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn hg_session_snapshot_json(
    session: *mut HgSession,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> HgStatus {
    guard(|| {
        let session = deref_mut(session, "session")?;
        let json = ServerMessage::new(ServerBody::Snapshot(session.0.snapshot())).to_json();
        copy_out(&json, buf, len, written)
    })
}

/// Writes the session's label file text (the dataset format).
///
/// # Safety
/// As for [`hg_session_snapshot_json`].
#[no_mangle]
pub unsafe extern "C" fn hg_session_dataset_text(
    session: *const HgSession,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> HgStatus {
    guard(|| {
        let session = deref(session, "session")?;
        copy_out(&session.0.dataset().to_text(), buf, len, written)
    })
}

/// Bhattacharyya distance between two histograms of length `n`.
///
/// # Safety
/// `p` and `q` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hg_bhattacharyya(p: *const f64, q: *const f64, n: usize, out: *mut f64) -> HgStatus {
    guard(|| {
        deref(p, "p")?;
        deref(q, "q")?;
        let out = deref_mut(out, "out")?;
        let p = std::slice::from_raw_parts(p, n);
        let q = std::slice::from_raw_parts(q, n);
        *out = bhattacharyya(p, q).map_err(lib)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(HgStatus::Ok as i32, 0);
        assert_eq!(HgStatus::Internal as i32, 8);
        assert_eq!(status_of(&Error::NotFound("x".into())), HgStatus::NotFound);
    }

    #[test]
    fn copy_out_reports_size() {
        let mut n = 0;
        let s = unsafe { copy_out("abc", ptr::null_mut(), 0, &mut n) };
        assert_eq!(s, Err(HgStatus::BufferTooSmall));
        assert_eq!(n, 4);
        let mut buf = [1 as c_char; 4];
        unsafe { copy_out("abc", buf.as_mut_ptr(), 4, &mut n) }.unwrap();
        assert_eq!(buf[3], 0);
    }
}
