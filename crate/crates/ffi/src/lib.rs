//! C ABI for the pitrack library.
//!
//! Every fallible function returns a `PitStatus`; on failure the message is
//! available from `pit_last_error_message` on the same thread. Objects are
//! handed out as opaque handles and must be released with their `_free`
//! function. Output parameters are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pitrack::autodiff::jacobian_forward;
use pitrack::config::SimConfig;
use pitrack::dataset::{generate_dataset, read_manifest, read_trajectories, SplitReader, MANIFEST_FILE};
use pitrack::doe::{effect_estimate, ResponseTable, Term, DEC_AVG, ENC_AVG};
use pitrack::heatmap::{ExpectationOperator, Heatmap};
use pitrack::losses::{pill_loss, PillMode};
use pitrack::physics::{physics_refine_window, to_frame_units, Bounds, FrameUnitParams};
use pitrack::rng::{sequence_stream, Split};
use pitrack::selfcheck::{OperatorFn, WindowFn};
use pitrack::sim::{simulate_trajectory, Trajectory};
use pitrack::tracker::{evaluate_stream, read_metric_rows, write_metrics_csv, Metric, MetricTable, TrackerOptions};
use pitrack::vec2::Vec2;
use pitrack::video::split_len;
use pitrack::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    IncompleteDesign = 6,
    Panic = 7,
}

pub const PIT_SPLIT_TRAIN: u32 = 0;
pub const PIT_SPLIT_VAL: u32 = 1;
pub const PIT_SPLIT_TEST: u32 = 2;

pub const PIT_OPERATOR_BILINEAR: u32 = 0;
pub const PIT_OPERATOR_COARSE_TO_FINE: u32 = 1;
pub const PIT_OPERATOR_BIQUADRATIC: u32 = 2;
pub const PIT_OPERATOR_BICUBIC: u32 = 3;

/// Number of tracking metrics; see `pit_metric_name`.
pub const PIT_METRIC_COUNT: u32 = 15;

/// Simulation and imaging configuration.
pub struct PitConfig {
    inner: SimConfig,
}

/// Ground-truth trajectory of one sequence.
pub struct PitTrajectory {
    inner: Trajectory,
}

/// A dataset directory written by `pit_dataset_generate` or `pitrack gen`.
pub struct PitDataset {
    dir: PathBuf,
    config: SimConfig,
}

/// Per-sequence tracking metrics of one split.
pub struct PitMetrics {
    inner: MetricTable,
}

/// Physics parameters in frame units (pixels and frames).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitFrameUnits {
    pub g_frame: f64,
    pub restitution: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub v_max_frame: f64,
}

/// Refined three-frame window as interleaved `x, y` pairs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitWindow {
    pub positions: [f64; 6],
    pub velocities: [f64; 6],
    /// 1 when a reflection happened during the step ending at that frame.
    pub bounces: [u8; 3],
}

struct Failure {
    status: PitStatus,
    message: String,
}

impl Failure {
    fn new(status: PitStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Failure::new(PitStatus::NullPointer, format!("`{name}` is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::new(PitStatus::InvalidArgument, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) | Error::Locked(_) | Error::MissingDataset(_) => PitStatus::Io,
            Error::UnsupportedFormat { .. } | Error::Truncated { .. } | Error::Csv(_) | Error::Json(_) => {
                PitStatus::Format
            }
            Error::ShapeMismatch { .. } => PitStatus::Shape,
            Error::MissingCells { .. } => PitStatus::IncompleteDesign,
            _ => PitStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type Outcome<T = ()> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Outcome) -> PitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            PitStatus::Ok
        }
        Ok(Err(e)) => {
            set_last_error(Some(e.message));
            e.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("internal panic: {msg}")));
            PitStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn get_mut<'a, T>(p: *mut T, name: &str) -> Outcome<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Outcome {
    if out.is_null() {
        return Err(Failure::null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Outcome<&'a [T]> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn fill<T: Copy>(out: *mut T, len: usize, src: &[T], name: &str) -> Outcome {
    if out.is_null() {
        return Err(Failure::null(name));
    }
    if len < src.len() {
        return Err(Failure::new(
            PitStatus::Shape,
            format!("`{name}` holds {len} elements, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn split_of(code: u32) -> Outcome<Split> {
    match code {
        PIT_SPLIT_TRAIN => Ok(Split::Train),
        PIT_SPLIT_VAL => Ok(Split::Val),
        PIT_SPLIT_TEST => Ok(Split::Test),
        _ => Err(Failure::invalid(format!("unknown split code {code}"))),
    }
}

fn operator_of(code: u32) -> Outcome<ExpectationOperator> {
    ExpectationOperator::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Failure::invalid(format!("unknown operator code {code}")))
}

fn metric_of(code: u32) -> Outcome<Metric> {
    Metric::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Failure::invalid(format!("unknown metric code {code}")))
}

fn params_of(p: &PitFrameUnits) -> FrameUnitParams {
    FrameUnitParams {
        g_frame: p.g_frame,
        e: p.restitution,
        dt: p.dt,
        bounds: Bounds {
            x_min: p.x_min,
            x_max: p.x_max,
            y_min: p.y_min,
            y_max: p.y_max,
        },
        v_max_frame: p.v_max_frame,
    }
}

fn window_of(x: &[f64]) -> [Vec2; 3] {
    [Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]), Vec2::new(x[4], x[5])]
}

fn flat(w: &[Vec2; 3]) -> [f64; 6] {
    [w[0].x, w[0].y, w[1].x, w[1].y, w[2].x, w[2].y]
}

fn heatmap_of(values: &[f64], width: usize, height: usize) -> Outcome<Heatmap> {
    if width == 0 || height == 0 {
        return Err(Failure::new(PitStatus::Shape, "heatmap must be non-empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::invalid("heatmap values must be finite"));
    }
    Ok(Heatmap::new(width, height, values.to_vec()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code, or "unknown status".
#[no_mangle]
pub extern "C" fn pit_status_name(status: i32) -> *const c_char {
    let name: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"i/o error",
        4 => c"format error",
        5 => c"shape mismatch",
        6 => c"incomplete design",
        7 => c"internal panic",
        _ => c"unknown status",
    };
    name.as_ptr()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string obtained from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn pit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_config_new(out: *mut *mut PitConfig) -> PitStatus {
    guard(|| put(out, handle(PitConfig { inner: SimConfig::default() }), "out"))
}

/// Configuration from JSON; missing fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_config_from_json(json: *const c_char, out: *mut *mut PitConfig) -> PitStatus {
    guard(|| {
        let cfg: SimConfig = serde_json::from_str(text(json, "json")?).map_err(Error::from)?;
        cfg.validate()?;
        put(out, handle(PitConfig { inner: cfg }), "out")
    })
}

/// JSON rendering of a configuration, released with `pit_string_free`.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_config_to_json(cfg: *const PitConfig, out: *mut *mut c_char) -> PitStatus {
    guard(|| {
        let json = serde_json::to_string(&get(cfg, "cfg")?.inner).map_err(Error::from)?;
        put(out, CString::new(json).expect("json has no nul").into_raw(), "out")
    })
}

/// Sets one field by name, such as `gravity` or `n_test`. Integer fields
/// require an integral value no larger than 2^53. The configuration is left
/// unchanged when the result would be invalid.
///
/// # Safety
/// `cfg` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pit_config_set(cfg: *mut PitConfig, key: *const c_char, value: f64) -> PitStatus {
    guard(|| {
        let cfg = get_mut(cfg, "cfg")?;
        let key = text(key, "key")?;
        let mut json = serde_json::to_value(&cfg.inner).map_err(Error::from)?;
        let slot = json
            .get_mut(key)
            .ok_or_else(|| Failure::invalid(format!("unknown config key `{key}`")))?;
        *slot = if slot.is_u64() {
            if !(value.is_finite() && value >= 0.0 && value.fract() == 0.0 && value <= 2f64.powi(53)) {
                return Err(Failure::invalid(format!("`{key}` needs a non-negative integer, got {value}")));
            }
            serde_json::Value::from(value as u64)
        } else {
            serde_json::Number::from_f64(value)
                .map(serde_json::Value::Number)
                .ok_or_else(|| Failure::invalid(format!("`{key}` must be finite")))?
        };
        let next: SimConfig = serde_json::from_value(json).map_err(Error::from)?;
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// Reads one field by name.
///
/// # Safety
/// `cfg` must be a live handle, `key` a NUL-terminated string and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_config_get(cfg: *const PitConfig, key: *const c_char, out: *mut f64) -> PitStatus {
    guard(|| {
        let cfg = get(cfg, "cfg")?;
        let key = text(key, "key")?;
        let json = serde_json::to_value(&cfg.inner).map_err(Error::from)?;
        let v = json
            .get(key)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| Failure::invalid(format!("unknown config key `{key}`")))?;
        put(out, v, "out")
    })
}

/// # Safety
/// `cfg` must be NULL or a live handle, released once.
#[no_mangle]
pub unsafe extern "C" fn pit_config_free(cfg: *mut PitConfig) {
    release(cfg);
}

/// Physics parameters of a configuration in frame units.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_frame_units(cfg: *const PitConfig, out: *mut PitFrameUnits) -> PitStatus {
    guard(|| {
        let p = to_frame_units(&get(cfg, "cfg")?.inner);
        let fu = PitFrameUnits {
            g_frame: p.g_frame,
            restitution: p.e,
            dt: p.dt,
            x_min: p.bounds.x_min,
            x_max: p.bounds.x_max,
            y_min: p.bounds.y_min,
            y_max: p.bounds.y_max,
            v_max_frame: p.v_max_frame,
        };
        put(out, fu, "out")
    })
}

/// Refines three landmarks `x0, y0, x1, y1, x2, y2` with the physics model.
///
/// # Safety
/// `params` and `out` must be valid; `landmarks` must hold 6 values.
#[no_mangle]
pub unsafe extern "C" fn pit_physics_refine(
    params: *const PitFrameUnits,
    landmarks: *const f64,
    out: *mut PitWindow,
) -> PitStatus {
    guard(|| {
        let p = params_of(get(params, "params")?);
        let x = slice(landmarks, 6, "landmarks")?;
        let w = physics_refine_window(&window_of(x), &p);
        let res = PitWindow {
            positions: flat(&w.positions),
            velocities: flat(&w.velocities),
            bounces: w.bounces.map(u8::from),
        };
        put(out, res, "out")
    })
}

/// Jacobian of the refined positions and velocities (12 outputs, in the
/// order of `PitWindow`) with respect to the 6 landmark coordinates,
/// row-major into `out[72]`.
///
/// # Safety
/// `params` must be valid; `landmarks` must hold 6 values and `out` 72.
#[no_mangle]
pub unsafe extern "C" fn pit_physics_refine_jacobian(
    params: *const PitFrameUnits,
    landmarks: *const f64,
    out: *mut f64,
) -> PitStatus {
    guard(|| {
        let f = WindowFn(params_of(get(params, "params")?));
        let x = slice(landmarks, 6, "landmarks")?;
        fill(out, 72, &jacobian_forward(&f, x).data, "out")
    })
}

/// Sub-pixel landmark `out[0] = x, out[1] = y` of a row-major heatmap.
///
/// # Safety
/// `values` must hold `width * height` values and `out` 2.
#[no_mangle]
pub unsafe extern "C" fn pit_expectation(
    op: u32,
    values: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
) -> PitStatus {
    guard(|| {
        let op = operator_of(op)?;
        let n = width.checked_mul(height).ok_or_else(|| Failure::invalid("heatmap too large"))?;
        let h = heatmap_of(slice(values, n, "values")?, width, height)?;
        let p = op.apply(&h);
        fill(out, 2, &[p.x, p.y], "out")
    })
}

/// Jacobian of `pit_expectation` with respect to every heatmap value,
/// row-major `2 x (width * height)`. Costs one pass per pixel.
///
/// # Safety
/// `values` must hold `width * height` values and `out` twice that.
#[no_mangle]
pub unsafe extern "C" fn pit_expectation_jacobian(
    op: u32,
    values: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
) -> PitStatus {
    guard(|| {
        let op = operator_of(op)?;
        let n = width.checked_mul(height).ok_or_else(|| Failure::invalid("heatmap too large"))?;
        let h = heatmap_of(slice(values, n, "values")?, width, height)?;
        let f = OperatorFn { op, width, height };
        fill(out, 2 * n, &jacobian_forward(&f, &h.values).data, "out")
    })
}

/// Unsupervised physics loss of three landmarks given in heatmap
/// coordinates and scaled by `a` into image coordinates.
///
/// # Safety
/// `params` and `out` must be valid; `landmarks` must hold 6 values.
#[no_mangle]
pub unsafe extern "C" fn pit_pill_loss(
    params: *const PitFrameUnits,
    landmarks: *const f64,
    a: f64,
    last_frame_only: bool,
    out: *mut f64,
) -> PitStatus {
    guard(|| {
        let p = params_of(get(params, "params")?);
        let x = slice(landmarks, 6, "landmarks")?;
        let mode = if last_frame_only { PillMode::LastFrame } else { PillMode::AllFrames };
        put(out, pill_loss(&window_of(x), &p, a, mode), "out")
    })
}

/// Ground-truth trajectory of sequence `index` in `split`, identical to the
/// one stored by `pit_dataset_generate` for the same configuration.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_simulate(
    cfg: *const PitConfig,
    split: u32,
    index: u32,
    out: *mut *mut PitTrajectory,
) -> PitStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.inner;
        let split = split_of(split)?;
        cfg.validate()?;
        let tr = simulate_trajectory(cfg, &mut sequence_stream(cfg.seed, split, index))?;
        put(out, handle(PitTrajectory { inner: tr }), "out")
    })
}

/// Number of frames, or 0 for a NULL handle.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_len(traj: *const PitTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Centers in pixels as interleaved `x, y`; `out` holds `len` values and
/// needs `2 * pit_trajectory_len`.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_positions(traj: *const PitTrajectory, out: *mut f64, len: usize) -> PitStatus {
    guard(|| {
        let t = get(traj, "traj")?;
        let v: Vec<f64> = t.inner.positions_px.iter().flat_map(|p| [p.x, p.y]).collect();
        fill(out, len, &v, "out")
    })
}

/// Velocities in pixels per frame as interleaved `x, y`.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_velocities(traj: *const PitTrajectory, out: *mut f64, len: usize) -> PitStatus {
    guard(|| {
        let t = get(traj, "traj")?;
        let v: Vec<f64> = t.inner.velocities_fu.iter().flat_map(|p| [p.x, p.y]).collect();
        fill(out, len, &v, "out")
    })
}

/// Per-frame bounce flags, 1 when a reflection ended at that frame.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_bounces(traj: *const PitTrajectory, out: *mut u8, len: usize) -> PitStatus {
    guard(|| {
        let t = get(traj, "traj")?;
        let v: Vec<u8> = t.inner.bounce_flags.iter().map(|&b| u8::from(b)).collect();
        fill(out, len, &v, "out")
    })
}

/// # Safety
/// `traj` must be NULL or a live handle, released once.
#[no_mangle]
pub unsafe extern "C" fn pit_trajectory_free(traj: *mut PitTrajectory) {
    release(traj);
}

/// Renders all three splits of `cfg` into `dir`.
///
/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_generate(cfg: *const PitConfig, dir: *const c_char) -> PitStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.inner;
        let dir = PathBuf::from(text(dir, "dir")?);
        std::fs::create_dir_all(&dir)?;
        generate_dataset(&dir, cfg)?;
        Ok(())
    })
}

/// Opens a dataset directory after checking its manifest.
///
/// # Safety
/// `dir` must be a NUL-terminated path and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_open(dir: *const c_char, out: *mut *mut PitDataset) -> PitStatus {
    guard(|| {
        let dir = PathBuf::from(text(dir, "dir")?);
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(Error::MissingDataset(dir).into());
        }
        let manifest = read_manifest(&dir)?;
        put(out, handle(PitDataset { dir, config: manifest.config }), "out")
    })
}

/// Copy of the configuration the dataset was generated with.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_config(ds: *const PitDataset, out: *mut *mut PitConfig) -> PitStatus {
    guard(|| {
        let cfg = get(ds, "ds")?.config.clone();
        put(out, handle(PitConfig { inner: cfg }), "out")
    })
}

/// Number of sequences in a split.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_len(ds: *const PitDataset, split: u32, out: *mut usize) -> PitStatus {
    guard(|| {
        let n = split_len(&get(ds, "ds")?.config, split_of(split)?);
        put(out, n, "out")
    })
}

/// Frames of one sequence, row-major `frames x height x width`.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_read_frames(
    ds: *const PitDataset,
    split: u32,
    index: usize,
    out: *mut f32,
    len: usize,
) -> PitStatus {
    guard(|| {
        let ds = get(ds, "ds")?;
        let split = split_of(split)?;
        let (_, mut reader) = SplitReader::open(&ds.dir, split)?;
        if index >= reader.len() {
            return Err(Failure::invalid(format!("sequence {index} out of range 0..{}", reader.len())));
        }
        reader.skip_sequences(index)?;
        let seq = reader.next().expect("index checked")?;
        let pixels: Vec<f32> = seq.frames.iter().flat_map(|f| f.pixels.iter().copied()).collect();
        fill(out, len, &pixels, "out")
    })
}

/// Stored ground-truth trajectory of one sequence.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_trajectory(
    ds: *const PitDataset,
    split: u32,
    index: usize,
    out: *mut *mut PitTrajectory,
) -> PitStatus {
    guard(|| {
        let ds = get(ds, "ds")?;
        let mut all = read_trajectories(&ds.dir, split_of(split)?, &ds.config)?;
        if index >= all.len() {
            return Err(Failure::invalid(format!("sequence {index} out of range 0..{}", all.len())));
        }
        put(out, handle(PitTrajectory { inner: all.swap_remove(index) }), "out")
    })
}

/// Tracks and evaluates every sequence of a split.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_track(
    ds: *const PitDataset,
    split: u32,
    temporal_mean: bool,
    out: *mut *mut PitMetrics,
) -> PitStatus {
    guard(|| {
        let ds = get(ds, "ds")?;
        let (manifest, reader) = SplitReader::open(&ds.dir, split_of(split)?)?;
        let opts = TrackerOptions { temporal_mean };
        let (table, _) = evaluate_stream(reader, &manifest.config, &opts)?;
        put(out, handle(PitMetrics { inner: table }), "out")
    })
}

/// # Safety
/// `ds` must be NULL or a live handle, released once.
#[no_mangle]
pub unsafe extern "C" fn pit_dataset_free(ds: *mut PitDataset) {
    release(ds);
}

/// Static name of metric `index` (such as "P224" or "bounce56"), or NULL when out of range.
#[no_mangle]
pub extern "C" fn pit_metric_name(index: u32) -> *const c_char {
    const NAMES: [&CStr; 15] = [
        c"B56", c"B112", c"B224", c"H56", c"H112", c"H224", c"P56", c"P112", c"P224", c"V56", c"V112", c"V224",
        c"bounce56", c"bounce112", c"bounce224",
    ];
    NAMES.get(index as usize).map_or(std::ptr::null(), |c| c.as_ptr())
}

/// Number of evaluated sequences, or 0 for a NULL handle.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pit_metrics_sequences(m: *const PitMetrics) -> usize {
    m.as_ref().map_or(0, |m| m.inner.per_sequence.len())
}

/// Mean of one metric over the evaluated sequences.
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_metrics_mean(m: *const PitMetrics, metric: u32, out: *mut f64) -> PitStatus {
    guard(|| {
        let v = get(m, "m")?.inner.get(metric_of(metric)?);
        put(out, v, "out")
    })
}

/// Median of one metric over the evaluated sequences.
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_metrics_median(m: *const PitMetrics, metric: u32, out: *mut f64) -> PitStatus {
    guard(|| {
        let v = get(m, "m")?.inner.median(metric_of(metric)?);
        put(out, v, "out")
    })
}

/// Writes the means as `config,replicate,metric,value` rows, the input
/// format of `pit_effect_estimate` and `pitrack effects`.
///
/// # Safety
/// `m` must be a live handle; `path` and `config` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pit_metrics_write_csv(
    m: *const PitMetrics,
    path: *const c_char,
    config: *const c_char,
    replicate: usize,
) -> PitStatus {
    guard(|| {
        let m = get(m, "m")?;
        let label = text(config, "config")?;
        label.parse::<pitrack::doe::FactorConfig>()?;
        let file = File::create(text(path, "path")?)?;
        write_metrics_csv(file, label, replicate, &m.inner)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a live handle, released once.
#[no_mangle]
pub unsafe extern "C" fn pit_metrics_free(m: *mut PitMetrics) {
    release(m);
}

/// Effect of `term` (such as "C" or "ABF") on `metric` over a full 2^6
/// design read from a metrics CSV. `replicates` of 0 infers the count.
/// `metric` may also be "enc_avg" or "dec_avg".
///
/// # Safety
/// `path`, `term` and `metric` must be NUL-terminated strings and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pit_effect_estimate(
    path: *const c_char,
    replicates: usize,
    term: *const c_char,
    metric: *const c_char,
    out: *mut f64,
) -> PitStatus {
    guard(|| {
        let term: Term = text(term, "term")?.parse()?;
        let metric = text(metric, "metric")?;
        let rows = read_metric_rows(File::open(text(path, "path")?)?)?;
        let mut table = ResponseTable::from_rows(&rows, (replicates > 0).then_some(replicates))?;
        if metric == ENC_AVG || metric == DEC_AVG {
            table = table.with_aggregates()?;
        }
        put(out, effect_estimate(&table, metric, term)?, "out")
    })
}
