//! C ABI over `mi-probe`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_read`
//! style constructors and released with the matching `*_free`. Every
//! fallible call returns an [`MiStatus`]; on failure the message is kept per
//! thread and can be read with [`mi_last_error_message`]. Strings returned
//! by the library are owned by the caller and released with
//! [`mi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mi_probe::experiment::{run_experiment, ExperimentSpec};
use mi_probe::mine::{estimate_mi_sample, FeatureSequence, MineConfig, Side};
use mi_probe::nn::DenseMatrix;
use mi_probe::probe::{classify_trend, LayerProbeReport, TrendLabel};
use mi_probe::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiStatus {
    Ok = 0,
    NullArgument = 1,
    /// Configuration, usage or dimension problem.
    Config = 2,
    Numeric = 3,
    PartialProbe = 4,
    Io = 5,
    /// Malformed container or JSON.
    Format = 6,
    /// Degenerate input such as constant features.
    Degenerate = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiTrend {
    ReconstructionShaped = 0,
    MonotoneDecreasing = 1,
    Other = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiSide {
    Input = 0,
    Target = 1,
}

/// Opaque experiment specification.
pub struct MiExperiment(ExperimentSpec);

/// Opaque layer probe report.
pub struct MiReport(LayerProbeReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MiStatus {
    match e {
        Error::Numeric { .. } => MiStatus::Numeric,
        Error::PartialProbe { .. } => MiStatus::PartialProbe,
        Error::Io { .. } => MiStatus::Io,
        Error::Container { .. } | Error::Json(_) => MiStatus::Format,
        Error::Degenerate(_) => MiStatus::Degenerate,
        Error::Dimension { .. } | Error::Usage(_) | Error::Config(_) => MiStatus::Config,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MiStatus>) -> MiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MiStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MiStatus::Internal
        }
    }
}

fn fail(e: Error) -> MiStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> MiStatus {
    set_error(format!("{what} is null"));
    MiStatus::NullArgument
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MiStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        MiStatus::Config
    })
}

fn side_of(side: MiSide) -> Side {
    match side {
        MiSide::Input => Side::InputSide,
        MiSide::Target => Side::TargetSide,
    }
}

fn trend_of(label: TrendLabel) -> MiTrend {
    match label {
        TrendLabel::ReconstructionShaped => MiTrend::ReconstructionShaped,
        TrendLabel::MonotoneDecreasing => MiTrend::MonotoneDecreasing,
        TrendLabel::Other => MiTrend::Other,
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an experiment spec from JSON. Missing fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_from_json(json: *const c_char, out: *mut *mut MiExperiment) -> MiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let spec = ExperimentSpec::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(MiExperiment(spec)));
        Ok(())
    })
}

/// Applies one `path=value` override, e.g. `train.epochs=5`.
///
/// # Safety
/// `exp` must be a live handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_set(exp: *mut MiExperiment, assignment: *const c_char) -> MiStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("experiment"))?;
        let item = str_arg(assignment, "assignment")?;
        exp.0 = exp.0.with_overrides(&[item.to_string()]).map_err(fail)?;
        Ok(())
    })
}

/// Sets the output directory of the run.
///
/// # Safety
/// `exp` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_set_out_dir(exp: *mut MiExperiment, dir: *const c_char) -> MiStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("experiment"))?;
        exp.0.out_dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(())
    })
}

/// Config hash of the spec as a new string.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_config_hash(exp: *const MiExperiment, out: *mut *mut c_char) -> MiStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let hash = exp.0.config_hash().map_err(fail)?;
        *out = CString::new(hash).expect("hex has no NUL").into_raw();
        Ok(())
    })
}

/// Runs the experiment, writing its artifacts, and returns the report.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_run(exp: *const MiExperiment, out: *mut *mut MiReport) -> MiStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let outcome = run_experiment(&exp.0).map_err(fail)?;
        *out = Box::into_raw(Box::new(MiReport(outcome.report)));
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mi_experiment_free(exp: *mut MiExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Loads a report JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_report_read(path: *const c_char, out: *mut *mut MiReport) -> MiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let report = LayerProbeReport::read(path.as_ref()).map_err(fail)?;
        *out = Box::into_raw(Box::new(MiReport(report)));
        Ok(())
    })
}

/// Number of probed layers.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_report_layer_count(report: *const MiReport, out: *mut usize) -> MiStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = report.0.taps.len();
        Ok(())
    })
}

fn side_report(report: &MiReport, side: MiSide) -> Result<&mi_probe::probe::SideReport, MiStatus> {
    report.0.side(side_of(side)).ok_or_else(|| {
        set_error(format!("report has no {} curve", side_of(side).as_str()));
        MiStatus::Config
    })
}

/// Copies the log-MI curve of `side` into `buf`, which must hold `len`
/// values; `len` must equal the layer count.
///
/// # Safety
/// `report` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mi_report_log_curve(report: *const MiReport, side: MiSide, buf: *mut f64, len: usize) -> MiStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let curve = &side_report(report, side)?.curve.log_values;
        if curve.len() != len {
            return Err(fail(Error::dimension("log curve buffer", curve.len(), len)));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(curve);
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_report_trend(report: *const MiReport, side: MiSide, out: *mut MiTrend) -> MiStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = trend_of(side_report(report, side)?.trend_label);
        Ok(())
    })
}

/// The report serialized as JSON, as a new string.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_report_to_json(report: *const MiReport, out: *mut *mut c_char) -> MiStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = report.0.to_json().map_err(fail)?;
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mi_report_free(report: *mut MiReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Estimates `I(X; T)` in nats from paired frames stored row-major:
/// `x` holds `frames * dx` values and `t` holds `frames * dt`.
/// `config_json` may be null for the default estimator settings.
///
/// # Safety
/// `x` and `t` must be valid for the stated lengths, `config_json` null or
/// NUL-terminated, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_estimate(
    x: *const f64,
    t: *const f64,
    frames: usize,
    dx: usize,
    dt: usize,
    config_json: *const c_char,
    out: *mut f64,
) -> MiStatus {
    guard(|| {
        if x.is_null() || t.is_null() {
            return Err(null("x or t"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg: MineConfig = if config_json.is_null() {
            MineConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(|e| fail(e.into()))?
        };
        let seq = |p: *const f64, d: usize| {
            let data = std::slice::from_raw_parts(p, frames * d).to_vec();
            DenseMatrix::from_vec(frames, d, data).and_then(FeatureSequence::new)
        };
        let xs = seq(x, dx).map_err(fail)?;
        let ts = seq(t, dt).map_err(fail)?;
        *out = estimate_mi_sample(&xs, &ts, &cfg).map_err(fail)?.value_nats;
        Ok(())
    })
}

/// Classifies the shape of a log-MI curve of `len` values.
///
/// # Safety
/// `curve` must be valid for `len` reads (it may be null when `len` is 0)
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mi_classify_trend(curve: *const f64, len: usize, noise_band: f64, out: *mut MiTrend) -> MiStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let values: &[f64] = if len == 0 {
            &[]
        } else if curve.is_null() {
            return Err(null("curve"));
        } else {
            std::slice::from_raw_parts(curve, len)
        };
        *out = trend_of(classify_trend(values, noise_band));
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
