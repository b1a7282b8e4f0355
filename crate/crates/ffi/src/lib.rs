//! C ABI over `coralsim`.
//!
//! Every entry point returns a [`CoralStatus`]; on failure a message is
//! available from [`coral_last_error`] on the same thread. Simulations live
//! behind an opaque [`CoralSim`] pointer owned by the caller and released
//! with [`coral_sim_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use coralsim::diagnostics::{record, verdict, DiagnosticsRecord, VerdictOptions};
use coralsim::io::config::parse_config;
use coralsim::io::snapshot::{read_snapshot, write_snapshot};
use coralsim::oracle::{homogeneous_solution, HomogeneousIC};
use coralsim::stepping::{run_from, SimState, StopReason, Stepper};
use coralsim::{Error, SimConfig};

/// Number of values in one diagnostics record.
pub const CORAL_RECORD_LEN: usize = 29;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoralStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    InvalidParameter = 4,
    SolverNotConverged = 5,
    CflViolation = 6,
    NegativeDensity = 7,
    NonFinite = 8,
    Io = 9,
    Snapshot = 10,
    Diagnostics = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Field selector for [`coral_sim_copy_field`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoralField {
    N = 0,
    C = 1,
    M = 2,
    VelocityX = 3,
    VelocityY = 4,
    VelocityZ = 5,
    Pressure = 6,
}

/// Why the last [`coral_sim_run`] stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoralStop {
    EndTime = 0,
    Converged = 1,
    MaxSteps = 2,
}

/// Opaque simulation handle.
pub struct CoralSim {
    cfg: SimConfig,
    stepper: Stepper,
    state: SimState,
    records: Vec<DiagnosticsRecord>,
    stop: Option<StopReason>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior NULs removed"));
}

fn status_of(e: &Error) -> CoralStatus {
    match e {
        Error::InvalidGrid(_) | Error::InvalidParameter { .. } => CoralStatus::InvalidParameter,
        Error::NonFinite(_) => CoralStatus::NonFinite,
        Error::SolverNotConverged { .. } => CoralStatus::SolverNotConverged,
        Error::CflViolation { .. } => CoralStatus::CflViolation,
        Error::NegativeDensity { .. } => CoralStatus::NegativeDensity,
        Error::Config(_) => CoralStatus::Config,
        Error::Snapshot(_) => CoralStatus::Snapshot,
        Error::Diagnostics(_) => CoralStatus::Diagnostics,
        Error::Io { .. } => CoralStatus::Io,
    }
}

struct Failure(CoralStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(CoralStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure for [`coral_last_error`], and contains panics.
fn guard(f: impl FnOnce() -> Outcome) -> CoralStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CoralStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            CoralStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CoralStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn sim_ref<'a>(sim: *const CoralSim) -> Result<&'a CoralSim, Failure> {
    sim.as_ref().ok_or_else(|| null("simulation handle"))
}

unsafe fn sim_mut<'a>(sim: *mut CoralSim) -> Result<&'a mut CoralSim, Failure> {
    sim.as_mut().ok_or_else(|| null("simulation handle"))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn make_sim(cfg: SimConfig, state: Option<SimState>) -> Result<Box<CoralSim>, Failure> {
    let stepper = Stepper::new(&cfg)?;
    let state = match state {
        Some(s) => s,
        None => SimState::initial(&cfg)?,
    };
    Ok(Box::new(CoralSim {
        cfg,
        stepper,
        state,
        records: Vec::new(),
        stop: None,
    }))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn coral_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn coral_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulation from TOML configuration text.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_new(config_toml: *const c_char, out: *mut *mut CoralSim) -> CoralStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = parse_config(str_arg(config_toml, "config_toml")?)?;
        out.write(Box::into_raw(make_sim(cfg, None)?));
        Ok(())
    })
}

/// Creates a simulation from TOML text and a snapshot file to resume from.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_from_snapshot(
    config_toml: *const c_char,
    snapshot_path: *const c_char,
    out: *mut *mut CoralSim,
) -> CoralStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = parse_config(str_arg(config_toml, "config_toml")?)?;
        let state = read_snapshot(&PathBuf::from(str_arg(snapshot_path, "snapshot_path")?))?;
        if state.grid() != &cfg.grid {
            return Err(Failure(CoralStatus::Snapshot, "snapshot grid does not match the configuration".into()));
        }
        out.write(Box::into_raw(make_sim(cfg, Some(state))?));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_free(sim: *mut CoralSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances up to `steps` steps with the configured time-step policy,
/// stopping early at the end time.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_step(sim: *mut CoralSim, steps: u64) -> CoralStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        for _ in 0..steps {
            if s.state.t >= s.cfg.t_end {
                break;
            }
            s.stepper.step(&mut s.state)?;
        }
        Ok(())
    })
}

/// Runs from the current state to the end time (or convergence / step cap),
/// replacing the stored diagnostics series.
///
/// # Safety
/// `sim` must be a live handle; `stop` may be null.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_run(sim: *mut CoralSim, stop: *mut CoralStop) -> CoralStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        let mut records = Vec::new();
        let outcome = run_from(s.state.clone(), &s.cfg, &mut records)?;
        s.state = outcome.state;
        s.records = records;
        s.stop = Some(outcome.stop);
        if !stop.is_null() {
            stop.write(match outcome.stop {
                StopReason::EndTime => CoralStop::EndTime,
                StopReason::Converged => CoralStop::Converged,
                StopReason::MaxSteps => CoralStop::MaxSteps,
            });
        }
        Ok(())
    })
}

/// Current time and step count. Either pointer may be null.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_time(sim: *const CoralSim, t: *mut f64, step: *mut u64) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        if !t.is_null() {
            t.write(s.state.t);
        }
        if !step.is_null() {
            step.write(s.state.step);
        }
        Ok(())
    })
}

/// Cell counts per axis; inactive axes report 1.
///
/// # Safety
/// `sim` must be a live handle and `dims` point to three `size_t`.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_dims(sim: *const CoralSim, dims: *mut usize) -> CoralStatus {
    guard(|| {
        let d = sim_ref(sim)?.state.grid().dims();
        if dims.is_null() {
            return Err(null("dims"));
        }
        std::ptr::copy_nonoverlapping(d.as_ptr(), dims, 3);
        Ok(())
    })
}

/// Number of values [`coral_sim_copy_field`] writes for `field`.
///
/// # Safety
/// `sim` must be a live handle and `len` valid.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_field_len(sim: *const CoralSim, field: CoralField, len: *mut usize) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        write_out(len, field_slice(&s.state, field).len(), "len")
    })
}

fn field_slice(state: &SimState, field: CoralField) -> &[f64] {
    match field {
        CoralField::N => state.n.values(),
        CoralField::C => state.c.values(),
        CoralField::M => state.m.values(),
        CoralField::VelocityX => state.u.component(0),
        CoralField::VelocityY => state.u.component(1),
        CoralField::VelocityZ => state.u.component(2),
        CoralField::Pressure => state.pressure.field().values(),
    }
}

/// Copies a field into `buf` (x fastest). Cell fields hold nx·ny·nz values;
/// the face array normal to axis `a` has one extra entry along `a`.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_copy_field(
    sim: *const CoralSim,
    field: CoralField,
    buf: *mut f64,
    len: usize,
) -> CoralStatus {
    guard(|| {
        let src = field_slice(&sim_ref(sim)?.state, field);
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < src.len() {
            return Err(Failure(
                CoralStatus::BufferTooSmall,
                format!("buffer holds {len} values, field needs {}", src.len()),
            ));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Diagnostics of the current state as `CORAL_RECORD_LEN` values in the
/// column order given by [`coral_record_column`]. The residual columns are
/// zero here since they belong to a step, not a state.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for `CORAL_RECORD_LEN` doubles.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_current_record(sim: *const CoralSim, out: *mut f64) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        copy_record(&record(&s.state, &s.cfg)?, out)
    })
}

unsafe fn copy_record(r: &DiagnosticsRecord, out: *mut f64) -> Outcome {
    if out.is_null() {
        return Err(null("out"));
    }
    let v = r.values();
    std::ptr::copy_nonoverlapping(v.as_ptr(), out, CORAL_RECORD_LEN);
    Ok(())
}

/// Number of records stored by the last [`coral_sim_run`].
///
/// # Safety
/// `sim` must be a live handle and `count` valid.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_record_count(sim: *const CoralSim, count: *mut usize) -> CoralStatus {
    guard(|| write_out(count, sim_ref(sim)?.records.len(), "count"))
}

/// Record `index` of the last run's series.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for `CORAL_RECORD_LEN` doubles.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_record(sim: *const CoralSim, index: usize, out: *mut f64) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let r = s.records.get(index).ok_or_else(|| {
            Failure(
                CoralStatus::InvalidArgument,
                format!("record {index} out of range ({} stored)", s.records.len()),
            )
        })?;
        copy_record(r, out)
    })
}

/// Column name `index` as a static NUL-terminated string, or null when out
/// of range.
#[no_mangle]
pub extern "C" fn coral_record_column(index: usize) -> *const c_char {
    const NAMES: [&CStr; CORAL_RECORD_LEN] = [
        c"t", c"step", c"dt", c"mass_n", c"mass_c", c"mass_m", c"mass_diff", c"max_n", c"max_c", c"max_m",
        c"min_n", c"min_c", c"min_m", c"m_l2", c"u_l2", c"grad_c_l2", c"grad_m_l2", c"grad_u_l2",
        c"lp_functional", c"acc_nm", c"acc_grad_m", c"acc_grad_c", c"acc_grad_u", c"div_residual",
        c"energy_residual", c"yosida_ratio", c"dist_n", c"dist_m", c"dist_c",
    ];
    NAMES.get(index).map_or(std::ptr::null(), |s| s.as_ptr())
}

/// Checks every invariant over the last run's series. `failed` receives the
/// number of failed checks; details go to [`coral_last_error`] only on error.
///
/// # Safety
/// `sim` must be a live handle and `failed` valid.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_verdict(sim: *const CoralSim, failed: *mut usize) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        let mut opts = VerdictOptions::for_config(&s.cfg);
        opts.converged &= s.stop == Some(StopReason::Converged);
        let v = verdict(&s.records, opts)?;
        write_out(failed, v.failures().count(), "failed")
    })
}

/// Writes the current state to a binary snapshot.
///
/// # Safety
/// `sim` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn coral_sim_write_snapshot(sim: *const CoralSim, path: *const c_char) -> CoralStatus {
    guard(|| {
        let s = sim_ref(sim)?;
        write_snapshot(&s.state, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Closed-form homogeneous solution (n, m, c) at time `t`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn coral_oracle(
    n0: f64,
    m0: f64,
    c0: f64,
    t: f64,
    n: *mut f64,
    m: *mut f64,
    c: *mut f64,
) -> CoralStatus {
    guard(|| {
        if n.is_null() || m.is_null() || c.is_null() {
            return Err(null("output"));
        }
        let (nv, mv, cv) = homogeneous_solution(&HomogeneousIC::new(n0, m0, c0)?, t)?;
        n.write(nv);
        m.write(mv);
        c.write(cv);
        Ok(())
    })
}
