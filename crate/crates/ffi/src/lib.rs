//! C ABI over the `nslb` laboratory.
//!
//! Every function returns an [`NslbStatus`]. Results come back through out
//! pointers; on failure the out pointer is left untouched and
//! [`nslb_last_error`] describes the problem. Handles are opaque, created by
//! `nslb_*_new`/`load`/`read`/`run` functions and released by the matching
//! `*_free`. Strings returned by the library are released with
//! [`nslb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use nslb::config::{Experiment, ExperimentConfig};
use nslb::dynamics::{simulate, SolverConfig, Termination};
use nslb::experiments::{run, RunOptions};
use nslb::flows::taylor_green;
use nslb::report::Report;
use nslb::snapshot::Snapshot;
use nslb::spectral::{PhysicalField, TorusGrid};
use nslb::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NslbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Numerical = 6,
    Panic = 7,
}

/// Experiments runnable through [`nslb_run_experiment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NslbExperiment {
    Simulate = 0,
    TransformCheck = 1,
    FitSingularity = 2,
    VerifyKernels = 3,
    RescaleAudit = 4,
    DuhamelResidual = 5,
}

impl From<NslbExperiment> for Experiment {
    fn from(e: NslbExperiment) -> Self {
        match e {
            NslbExperiment::Simulate => Experiment::Simulate,
            NslbExperiment::TransformCheck => Experiment::TransformCheck,
            NslbExperiment::FitSingularity => Experiment::FitSingularity,
            NslbExperiment::VerifyKernels => Experiment::VerifyKernels,
            NslbExperiment::RescaleAudit => Experiment::RescaleAudit,
            NslbExperiment::DuhamelResidual => Experiment::DuhamelResidual,
        }
    }
}

/// Parsed experiment configuration.
pub struct NslbConfig {
    config: ExperimentConfig,
    base_dir: PathBuf,
}

/// Outcome of one experiment run.
pub struct NslbReport {
    report: Report,
}

/// A time-stamped grid field.
pub struct NslbSnapshot {
    snapshot: Snapshot,
}

/// Shape and time of a snapshot.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NslbSnapshotInfo {
    pub dim: usize,
    pub n: usize,
    pub components: usize,
    /// Values per component, `n^dim`.
    pub points: usize,
    pub time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(err: &Error) -> NslbStatus {
    match err {
        Error::InvalidArgument(_) | Error::GridMismatch(_) | Error::OutOfRange(_) => NslbStatus::InvalidArgument,
        Error::Config(_) => NslbStatus::Config,
        Error::Io { .. } => NslbStatus::Io,
        Error::Format { .. } => NslbStatus::Format,
        Error::NonFinite { .. } | Error::Degenerate(_) | Error::Unstable(_) => NslbStatus::Numerical,
    }
}

struct Failure(NslbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NslbStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> NslbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NslbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NslbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NslbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failure on this thread, empty after a success. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn nslb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nslb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nslb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses TOML configuration text. Relative paths inside it resolve against
/// `base_dir`, or the working directory when `base_dir` is null.
///
/// # Safety
/// `toml_text` and `base_dir` must be NUL-terminated strings or null; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_config_parse(
    toml_text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut NslbConfig,
) -> NslbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = ExperimentConfig::parse(text(toml_text, "toml_text")?)?;
        let base_dir = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            PathBuf::from(text(base_dir, "base_dir")?)
        };
        emit(out, NslbConfig { config, base_dir });
        Ok(())
    })
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_config_load(path: *const c_char, out: *mut *mut NslbConfig) -> NslbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = Path::new(text(path, "path")?);
        let config = ExperimentConfig::load(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        emit(out, NslbConfig { config, base_dir });
        Ok(())
    })
}

/// # Safety
/// `config` must come from `nslb_config_parse`/`nslb_config_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn nslb_config_free(config: *mut NslbConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs an experiment, writing its artifacts under `out_dir`. A report is
/// returned even when checks fail; inspect it with [`nslb_report_passed`].
/// When `override_seed` is false the config seed is used.
///
/// # Safety
/// `config` must be a live handle, `out_dir` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_run_experiment(
    config: *const NslbConfig,
    experiment: NslbExperiment,
    out_dir: *const c_char,
    override_seed: bool,
    seed: u64,
    out: *mut *mut NslbReport,
) -> NslbStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = RunOptions {
            out_dir: PathBuf::from(text(out_dir, "out_dir")?),
            base_dir: cfg.base_dir.clone(),
            seed: override_seed.then_some(seed),
        };
        let experiment = Experiment::from(experiment);
        if let Some(named) = cfg.config.experiment {
            if named != experiment {
                return Err(Failure(
                    NslbStatus::Config,
                    format!(
                        "config names experiment `{}` but `{}` was requested",
                        named.name(),
                        experiment.name()
                    ),
                ));
            }
        }
        let report = run(experiment, &cfg.config, &opts)?;
        emit(out, NslbReport { report });
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_report_passed(report: *const NslbReport, passed: *mut bool) -> NslbStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if passed.is_null() {
            return Err(null("passed"));
        }
        *passed = r.report.passed;
        Ok(())
    })
}

/// Number of checks in the report.
///
/// # Safety
/// `report` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_report_check_count(report: *const NslbReport, count: *mut usize) -> NslbStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if count.is_null() {
            return Err(null("count"));
        }
        *count = r.report.checks.len();
        Ok(())
    })
}

/// Outcome of check `index`. `name` receives a string to release with
/// [`nslb_string_free`]; `measured`, `threshold` and `passed` may be null.
///
/// # Safety
/// `report` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_report_check(
    report: *const NslbReport,
    index: usize,
    name: *mut *mut c_char,
    measured: *mut f64,
    threshold: *mut f64,
    passed: *mut bool,
) -> NslbStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let check = r.report.checks.get(index).ok_or_else(|| {
            Failure(
                NslbStatus::InvalidArgument,
                format!("check index {index} out of range ({} checks)", r.report.checks.len()),
            )
        })?;
        if !name.is_null() {
            *name = CString::new(check.name.as_str()).unwrap_or_default().into_raw();
        }
        if !measured.is_null() {
            *measured = check.measured;
        }
        if !threshold.is_null() {
            *threshold = check.threshold;
        }
        if !passed.is_null() {
            *passed = check.pass;
        }
        Ok(())
    })
}

/// The report as deterministic JSON, released with [`nslb_string_free`].
///
/// # Safety
/// `report` must be a live handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_report_json(report: *const NslbReport, json: *mut *mut c_char) -> NslbStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let s = r.report.to_json()?;
        *json = CString::new(s).unwrap_or_default().into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must come from `nslb_run_experiment` or be null.
#[no_mangle]
pub unsafe extern "C" fn nslb_report_free(report: *mut NslbReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Taylor-Green vortex of the given amplitude at time 0. In three
/// dimensions this is the classical `(sin x cos y cos z, -cos x sin y cos z, 0)`
/// cell with `2 pi` wavenumbers.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_taylor_green(
    dim: usize,
    n: usize,
    amplitude: f64,
    out: *mut *mut NslbSnapshot,
) -> NslbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = TorusGrid::new(dim, n)?;
        let field = taylor_green(&grid, amplitude)?.to_grid();
        emit(out, NslbSnapshot { snapshot: Snapshot { time: 0.0, field } });
        Ok(())
    })
}

/// Builds a snapshot from `components * n^dim` values, each component in
/// turn, row-major with the last axis fastest.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_new(
    dim: usize,
    n: usize,
    components: usize,
    time: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut NslbSnapshot,
) -> NslbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = TorusGrid::new(dim, n)?;
        if components == 0 || len != components * grid.len() {
            return Err(Failure(
                NslbStatus::InvalidArgument,
                format!("expected {components} x {} values, got {len}", grid.len()),
            ));
        }
        let data = std::slice::from_raw_parts(values, len);
        let split = data.chunks(grid.len()).map(<[f64]>::to_vec).collect();
        let field = PhysicalField::new(grid, split)?;
        emit(out, NslbSnapshot { snapshot: Snapshot { time, field } });
        Ok(())
    })
}

/// Reads a binary snapshot file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_read(path: *const c_char, out: *mut *mut NslbSnapshot) -> NslbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let snapshot = Snapshot::read(Path::new(text(path, "path")?))?;
        emit(out, NslbSnapshot { snapshot });
        Ok(())
    })
}

/// Writes a binary snapshot file.
///
/// # Safety
/// `snapshot` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_write(snapshot: *const NslbSnapshot, path: *const c_char) -> NslbStatus {
    guard(|| {
        let s = handle(snapshot, "snapshot")?;
        s.snapshot.write(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `snapshot` must be a live handle and `info` writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_info(snapshot: *const NslbSnapshot, info: *mut NslbSnapshotInfo) -> NslbStatus {
    guard(|| {
        let s = handle(snapshot, "snapshot")?;
        if info.is_null() {
            return Err(null("info"));
        }
        let grid = s.snapshot.field.grid();
        *info = NslbSnapshotInfo {
            dim: grid.dim(),
            n: grid.n(),
            components: s.snapshot.field.components(),
            points: grid.len(),
            time: s.snapshot.time,
        };
        Ok(())
    })
}

/// Copies component `component` into `buffer`, which must hold `n^dim` values.
///
/// # Safety
/// `snapshot` must be a live handle and `buffer` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_component(
    snapshot: *const NslbSnapshot,
    component: usize,
    buffer: *mut f64,
    len: usize,
) -> NslbStatus {
    guard(|| {
        let s = handle(snapshot, "snapshot")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let field = &s.snapshot.field;
        if component >= field.components() {
            return Err(Failure(
                NslbStatus::InvalidArgument,
                format!("component {component} out of range ({} components)", field.components()),
            ));
        }
        let values = field.component(component);
        if len < values.len() {
            return Err(Failure(
                NslbStatus::InvalidArgument,
                format!("buffer holds {len} values, need {}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
        Ok(())
    })
}

/// Integrates the Navier-Stokes equations from `initial` to `t_end` and
/// returns the final state. The initial velocity is dealiased and projected;
/// a run stopped by the blow-up guard fails with `Numerical`.
///
/// # Safety
/// `initial` must be a live velocity handle (`dim` components); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nslb_simulate(
    initial: *const NslbSnapshot,
    nu: f64,
    dt: f64,
    t_end: f64,
    out: *mut *mut NslbSnapshot,
) -> NslbStatus {
    guard(|| {
        let s = handle(initial, "initial")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SolverConfig::new(nu, dt, t_end)?;
        let traj = simulate(&s.snapshot.field.to_modes()?, &cfg)?;
        if let Termination::BlowUp { time, grid_max } = traj.termination {
            return Err(Failure(
                NslbStatus::Numerical,
                format!("blow-up guard tripped at t={time} (grid max {grid_max:e})"),
            ));
        }
        let (time, last) = match (traj.times.last(), traj.snapshots.last()) {
            (Some(&t), Some(v)) => (t, v),
            _ => return Err(Failure(NslbStatus::Numerical, "empty trajectory".into())),
        };
        emit(
            out,
            NslbSnapshot {
                snapshot: Snapshot {
                    time: s.snapshot.time + time,
                    field: last.to_grid(),
                },
            },
        );
        Ok(())
    })
}

/// # Safety
/// `snapshot` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nslb_snapshot_free(snapshot: *mut NslbSnapshot) {
    if !snapshot.is_null() {
        drop(Box::from_raw(snapshot));
    }
}
