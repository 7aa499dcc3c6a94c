//! C interface to the payload-transport simulator.
//!
//! Scenarios and simulations are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns
//! a [`PtStatus`]; on failure [`pt_last_error`] describes what went wrong on
//! the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use payload_transport::control::ModelMode;
use payload_transport::geom::{Mat3, Vec3};
use payload_transport::sim::{self, RunLog, Scenario, Simulation, StepRecord};
use payload_transport::Error;

/// Result of an API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    /// The simulation hit a numerical failure and cannot continue.
    Numerical = 5,
    /// The simulation already reached its final time.
    Finished = 6,
    Panic = 7,
}

/// Dynamic model driven by the controller.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtModel {
    Simplified = 0,
    Full = 1,
}

/// Opaque scenario handle.
pub struct PtScenario(Scenario);

/// Opaque simulation handle. Keeps the log of every step taken.
pub struct PtSimulation {
    sim: Simulation,
    log: RunLog,
    failed: bool,
}

/// Logged quantities of one step, evaluated before the step is taken.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtStepRecord {
    pub t: f64,
    pub position: [f64; 3],
    pub position_error: [f64; 3],
    pub psi0: f64,
    /// Largest link direction error.
    pub link_psi_max: f64,
    /// Largest quadrotor attitude error; zero for the simplified model.
    pub quad_psi_max: f64,
    pub lyapunov: f64,
    pub realization_gap: f64,
    pub estimate_norms: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtPayloadState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Row-major rotation matrix.
    pub attitude: [f64; 9],
    pub body_rate: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtQuadState {
    pub link: [f64; 3],
    pub link_rate: [f64; 3],
    /// Row-major rotation matrix.
    pub attitude: [f64; 9],
    pub body_rate: [f64; 3],
}

/// Summary of the steps taken so far.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtMetrics {
    pub steps: usize,
    pub t_last: f64,
    pub position_error_final: f64,
    /// Means over the last 2 s of logged steps.
    pub position_error_mean: f64,
    pub psi0_mean: f64,
    pub link_psi_max_mean: f64,
    pub estimate_norm_max: f64,
    pub lyapunov_initial: f64,
    pub lyapunov_final: f64,
    pub orthogonality_max: f64,
    pub unit_norm_max: f64,
    pub tangency_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> PtStatus {
    match e {
        Error::Parse(_) => PtStatus::Parse,
        Error::Io(_) => PtStatus::Io,
        Error::Validation { .. } | Error::BadExponent(_) | Error::ArityMismatch { .. } | Error::RankDeficient => {
            PtStatus::InvalidArgument
        }
        _ => PtStatus::Numerical,
    }
}

struct Failure(PtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PtStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PtStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure and turns panics into [`PtStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn arg_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn arg_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn v3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn m3(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

fn fmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl From<&StepRecord> for PtStepRecord {
    fn from(r: &StepRecord) -> Self {
        PtStepRecord {
            t: r.t,
            position: v3(&r.position),
            position_error: v3(&r.position_error),
            psi0: r.psi0_trace,
            link_psi_max: fmax(&r.link_psi),
            quad_psi_max: fmax(&r.quad_psi),
            lyapunov: r.lyapunov,
            realization_gap: r.realization_gap,
            estimate_norms: r.estimate_norms,
        }
    }
}

/// Returns the message of the last failed call on this thread, or null.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// scenarios

unsafe fn emit_scenario(out: *mut *mut PtScenario, sc: Scenario) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(PtScenario(sc)));
    Ok(())
}

/// Creates a scenario from a bundled preset such as `"figure8"`.
#[no_mangle]
pub unsafe extern "C" fn pt_scenario_preset(name: *const c_char, out: *mut *mut PtScenario) -> PtStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_scenario(out, sim::preset(name)?)
    })
}

/// Reads a scenario from a TOML file.
#[no_mangle]
pub unsafe extern "C" fn pt_scenario_load(path: *const c_char, out: *mut *mut PtScenario) -> PtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_scenario(out, sim::load_scenario(path)?)
    })
}

/// Parses a scenario from TOML text.
#[no_mangle]
pub unsafe extern "C" fn pt_scenario_parse(text: *const c_char, out: *mut *mut PtScenario) -> PtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_scenario(out, sim::parse_scenario(text)?)
    })
}

/// Releases a scenario. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pt_scenario_free(scenario: *mut PtScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of quadrotors, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pt_scenario_quad_count(scenario: *const PtScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.params.n())
}

/// Applies `edit` and keeps it only if the scenario still validates.
unsafe fn edit_scenario(scenario: *mut PtScenario, edit: impl FnOnce(&mut Scenario)) -> PtStatus {
    guard(|| {
        let sc = &mut arg_mut(scenario, "scenario")?.0;
        let mut next = sc.clone();
        edit(&mut next);
        next.validate()?;
        *sc = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_dt(scenario: *mut PtScenario, dt: f64) -> PtStatus {
    edit_scenario(scenario, |s| s.integrator.dt = dt)
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_t_final(scenario: *mut PtScenario, t_final: f64) -> PtStatus {
    edit_scenario(scenario, |s| s.t_final = t_final)
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_model(scenario: *mut PtScenario, model: PtModel) -> PtStatus {
    edit_scenario(scenario, |s| {
        s.mode = match model {
            PtModel::Simplified => ModelMode::Simplified,
            PtModel::Full => ModelMode::Full,
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_adaptation(scenario: *mut PtScenario, enabled: bool) -> PtStatus {
    edit_scenario(scenario, |s| s.adaptation = enabled)
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_control(scenario: *mut PtScenario, enabled: bool) -> PtStatus {
    edit_scenario(scenario, |s| s.control = enabled)
}

#[no_mangle]
pub unsafe extern "C" fn pt_scenario_set_decimation(scenario: *mut PtScenario, decimation: usize) -> PtStatus {
    edit_scenario(scenario, |s| s.decimation = decimation)
}

// ---------------------------------------------------------------------------
// simulations

/// Starts a simulation from a copy of `scenario`; the scenario handle stays
/// owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_new(scenario: *const PtScenario, out: *mut *mut PtSimulation) -> PtStatus {
    guard(|| {
        let sc = arg_ref(scenario, "scenario")?.0.clone();
        if out.is_null() {
            return Err(null("out"));
        }
        let log = RunLog {
            n: sc.params.n(),
            dt: sc.integrator.dt,
            records: Vec::with_capacity(sc.steps()),
        };
        let sim = Simulation::new(sc)?;
        *out = Box::into_raw(Box::new(PtSimulation { sim, log, failed: false }));
        Ok(())
    })
}

/// Releases a simulation. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_free(simulation: *mut PtSimulation) {
    if !simulation.is_null() {
        drop(Box::from_raw(simulation));
    }
}

fn advance(h: &mut PtSimulation) -> Result<&StepRecord, Failure> {
    if h.failed {
        return Err(Failure(PtStatus::Numerical, "simulation already failed".into()));
    }
    if h.sim.finished() {
        return Err(Failure(PtStatus::Finished, "simulation reached its final time".into()));
    }
    match h.sim.step() {
        Ok(info) => {
            h.log.records.push(info.record);
            Ok(h.log.records.last().expect("just pushed"))
        }
        Err(e) => {
            h.failed = true;
            Err(e.into())
        }
    }
}

/// Takes one integration step. `record` may be null; otherwise it receives
/// the quantities logged for the step.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_step(simulation: *mut PtSimulation, record: *mut PtStepRecord) -> PtStatus {
    guard(|| {
        let h = arg_mut(simulation, "simulation")?;
        let r = advance(h)?;
        if let Some(out) = record.as_mut() {
            *out = r.into();
        }
        Ok(())
    })
}

/// Steps until the final time or the first failure.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_run(simulation: *mut PtSimulation) -> PtStatus {
    guard(|| {
        let h = arg_mut(simulation, "simulation")?;
        while !h.sim.finished() {
            advance(h)?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_simulation_time(simulation: *const PtSimulation) -> f64 {
    simulation.as_ref().map_or(f64::NAN, |h| h.sim.time())
}

#[no_mangle]
pub unsafe extern "C" fn pt_simulation_step_index(simulation: *const PtSimulation) -> usize {
    simulation.as_ref().map_or(0, |h| h.sim.step_index())
}

#[no_mangle]
pub unsafe extern "C" fn pt_simulation_finished(simulation: *const PtSimulation) -> bool {
    simulation.as_ref().is_none_or(|h| h.sim.finished())
}

#[no_mangle]
pub unsafe extern "C" fn pt_simulation_payload(simulation: *const PtSimulation, out: *mut PtPayloadState) -> PtStatus {
    guard(|| {
        let p = &arg_ref(simulation, "simulation")?.sim.state().payload;
        *arg_mut(out, "out")? = PtPayloadState {
            position: v3(&p.position),
            velocity: v3(&p.velocity),
            attitude: m3(&p.attitude),
            body_rate: v3(&p.body_rate),
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_simulation_quad(
    simulation: *const PtSimulation,
    index: usize,
    out: *mut PtQuadState,
) -> PtStatus {
    guard(|| {
        let quads = &arg_ref(simulation, "simulation")?.sim.state().quads;
        let q = quads
            .get(index)
            .ok_or_else(|| invalid(format!("quadrotor index {index} out of range ({} quadrotors)", quads.len())))?;
        *arg_mut(out, "out")? = PtQuadState {
            link: v3(&q.link),
            link_rate: v3(&q.link_rate),
            attitude: m3(&q.attitude),
            body_rate: v3(&q.body_rate),
        };
        Ok(())
    })
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Summarizes the logged steps. Fails if no step has been taken.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_metrics(simulation: *const PtSimulation, out: *mut PtMetrics) -> PtStatus {
    guard(|| {
        let log = &arg_ref(simulation, "simulation")?.log;
        let out = arg_mut(out, "out")?;
        let (Some(first), Some(last)) = (log.records.first(), log.last()) else {
            return Err(invalid("no steps logged yet"));
        };
        let window = log.window(last.t - 2.0);
        let manifold = log.worst_manifold();
        *out = PtMetrics {
            steps: log.records.len(),
            t_last: last.t,
            position_error_final: last.position_error.norm(),
            position_error_mean: mean(window.iter().map(|r| r.position_error.norm())),
            psi0_mean: mean(window.iter().map(|r| r.psi0_trace)),
            link_psi_max_mean: mean(window.iter().map(|r| fmax(&r.link_psi))),
            estimate_norm_max: log.records.iter().map(|r| fmax(&r.estimate_norms)).fold(0.0, f64::max),
            lyapunov_initial: first.lyapunov,
            lyapunov_final: last.lyapunov,
            orthogonality_max: manifold.orthogonality,
            unit_norm_max: manifold.unit_norm,
            tangency_max: manifold.tangency,
        };
        Ok(())
    })
}

/// Writes `timeseries.csv`, `metrics.txt` and `plotdata/` for the steps
/// logged so far into `dir`.
#[no_mangle]
pub unsafe extern "C" fn pt_simulation_write_outputs(simulation: *const PtSimulation, dir: *const c_char) -> PtStatus {
    guard(|| {
        let h = arg_ref(simulation, "simulation")?;
        let dir = str_arg(dir, "dir")?;
        sim::write_outputs(&h.log, dir)?;
        Ok(())
    })
}
