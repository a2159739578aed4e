//! C interface. A simulation lives behind an opaque `GgSim` handle created
//! from a `key = value` config string. Every fallible call returns a
//! `GgStatus`; the message for the last failure on the calling thread is
//! available through `gg_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use geogossip::config::ExperimentConfig;
use geogossip::engine::{SimState, StopReason};
use geogossip::experiment::{build_state, stop_condition};
use geogossip::kernel::{expected_quadratic_form, Alpha};
use geogossip::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgStopReason {
    MaxTicks = 0,
    Target = 1,
    RootDeactivated = 2,
}

/// Transmissions by category, plus their total.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GgLedger {
    pub near: u64,
    pub far_routing: u64,
    pub activate: u64,
    pub deactivate: u64,
    pub flood: u64,
    pub total: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GgFaults {
    pub routing_failure: u64,
    pub concurrent_violation: u64,
    pub flood_gap: u64,
    pub isolated_near: u64,
}

/// Opaque simulation handle.
pub struct GgSim {
    config: ExperimentConfig,
    state: SimState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(GgStatus, String);

fn status_of(e: &Error) -> GgStatus {
    match e {
        Error::Config { .. } => GgStatus::Config,
        Error::Csv(_) | Error::Io(_) => GgStatus::Runtime,
        _ => GgStatus::InvalidArgument,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GgStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return GgStatus::Ok,
        Ok(Err(Failure(status, msg))) => (status, msg),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            (GgStatus::Panic, msg)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

fn null(what: &str) -> Failure {
    Failure(GgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn sim_ref<'a>(sim: *const GgSim) -> Result<&'a GgSim, Failure> {
    sim.as_ref().ok_or_else(|| null("sim"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

/// Builds a simulation from a config body (`key = value` lines, the same
/// format as the command line tool) with `seed` overriding any seed key.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a writable pointer.
/// The handle written to `out` must be released with `gg_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_new(config: *const c_char, seed: u64, out: *mut *mut GgSim) -> GgStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| Failure(GgStatus::InvalidArgument, "config is not valid UTF-8".to_string()))?;
        let config = ExperimentConfig::parse(text, &[("seed".to_string(), seed.to_string())])?;
        let state = build_state(&config)?;
        out.write(Box::into_raw(Box::new(GgSim { config, state })));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from `gg_sim_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_free(sim: *mut GgSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Fires `ticks` more clocks, ignoring stop conditions.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_step(sim: *mut GgSim, ticks: u64) -> GgStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        for _ in 0..ticks {
            sim.state.step();
        }
        Ok(())
    })
}

/// Runs until the config's stop condition (target ratio `eps`, `max_ticks`
/// or root deactivation) fires.
///
/// # Safety
/// `sim` must be a live handle; `reason` may be null.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_run(sim: *mut GgSim, reason: *mut GgStopReason) -> GgStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let stop = sim.state.run_with(stop_condition(&sim.config), sim.config.stride(), |_| {});
        if !reason.is_null() {
            reason.write(match stop {
                StopReason::MaxTicks => GgStopReason::MaxTicks,
                StopReason::Target => GgStopReason::Target,
                StopReason::RootDeactivated => GgStopReason::RootDeactivated,
            });
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_len(sim: *const GgSim, out: *mut usize) -> GgStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.nodes().len()))
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_tick(sim: *const GgSim, out: *mut u64) -> GgStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.tick()))
}

/// `|x(t)| / |x(0)|`.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_err_ratio(sim: *const GgSim, out: *mut f64) -> GgStatus {
    guard(|| write_out(out, sim_ref(sim)?.state.err_l2_ratio()))
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_ledger(sim: *const GgSim, out: *mut GgLedger) -> GgStatus {
    guard(|| {
        let l = sim_ref(sim)?.state.ledger();
        write_out(
            out,
            GgLedger {
                near: l.near,
                far_routing: l.far_routing,
                activate: l.activate,
                deactivate: l.deactivate,
                flood: l.flood,
                total: l.total(),
            },
        )
    })
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_faults(sim: *const GgSim, out: *mut GgFaults) -> GgStatus {
    guard(|| {
        let f = sim_ref(sim)?.state.faults();
        write_out(
            out,
            GgFaults {
                routing_failure: f.routing_failure,
                concurrent_violation: f.concurrent_violation,
                flood_gap: f.flood_gap,
                isolated_near: f.isolated_near,
            },
        )
    })
}

/// Copies the current values into `buf`, which must hold exactly
/// `gg_sim_len` doubles.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gg_sim_values(sim: *const GgSim, buf: *mut f64, len: usize) -> GgStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let values = sim.state.values();
        if len != values.len() {
            return Err(Failure(GgStatus::InvalidArgument, format!("buffer holds {len}, need {}", values.len())));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, len);
        Ok(())
    })
}

/// Writes the `n x n` expected second moment of one affine pair update,
/// row-major, for weights `alpha[0..n]`.
///
/// # Safety
/// `alpha` must be valid for `n` reads and `out` for `n * n` writes.
#[no_mangle]
pub unsafe extern "C" fn gg_kernel_second_moment(alpha: *const f64, n: usize, out: *mut f64) -> GgStatus {
    guard(|| {
        if alpha.is_null() {
            return Err(null("alpha"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let alpha = Alpha::new(std::slice::from_raw_parts(alpha, n).to_vec())?;
        let m = expected_quadratic_form(&alpha)?.0;
        for r in 0..n {
            for c in 0..n {
                out.add(r * n + c).write(m[(r, c)]);
            }
        }
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the byte length needed
/// for the full message including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            buf.add(n).write(0);
        }
        bytes.len() + 1
    })
}
