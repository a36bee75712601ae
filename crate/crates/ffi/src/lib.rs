//! C ABI over the groundsense pipeline.
//!
//! Every fallible function returns a [`GsStatus`]; on failure the message is
//! kept per thread and read with [`gs_last_error`]. Stateful pieces (IMU
//! processor, alert tracker, depth frames) are opaque handles created by a
//! `*_new` function and released with the matching `*_free`.
//!
//! Categories cross the boundary as their numeric ids, missing distances as
//! NaN. Rotation matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use groundsense::alert::{self, AlertState};
use groundsense::geometry;
use groundsense::{
    AccelSample, AlertConfig, BBox, Category, DepthFrame, Detection, Error, Extrinsics, FusedDetection, FusionConfig,
    ImuParams, ImuProcessor, Intrinsics,
};
use nalgebra::{Matrix3, Vector3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad parameter, sample, calibration or category id.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed file contents.
    Format = 4,
    /// Detection stream protocol violation or early end of stream.
    Protocol = 5,
    /// Output buffer too small; the required size is reported.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsDetection {
    pub frame_id: u64,
    pub category: u8,
    pub confidence: f64,
    pub bbox: GsBox,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsFused {
    pub detection: GsDetection,
    /// NaN when no sampled pixel had a depth return.
    pub distance_m: f64,
    pub valid_samples: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsExtrinsics {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    /// Translation in meters.
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsFusionConfig {
    pub n_samples: u32,
    pub radius_frac: f64,
    pub trim_keep: f64,
    pub rng_seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsAlertConfig {
    pub threshold_m: f64,
    /// 0 disables hysteresis.
    pub clear_margin_m: f64,
    pub min_consecutive: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsWarning {
    pub frame_id: u64,
    pub category: u8,
    pub distance_m: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsImuParams {
    pub alpha: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_variance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsVibrationPoint {
    pub t: f64,
    pub raw: f64,
    pub smoothed: f64,
}

/// Opaque IMU vibration processor.
pub struct GsImu(ImuProcessor);

/// Opaque alert tracker for one stream.
pub struct GsAlert {
    cfg: AlertConfig,
    state: AlertState,
}

/// Opaque raw depth frame.
pub struct GsDepth(DepthFrame);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => GsStatus::Io,
            Error::Parse { .. } | Error::Format { .. } | Error::Range { .. } | Error::Order { .. } => GsStatus::Format,
            Error::Protocol(_) | Error::EndOfStream(_) => GsStatus::Protocol,
            _ => GsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GsStatus::NullPointer, format!("{what} is null"))
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure for `gs_last_error` and turns panics into
/// `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {message}"));
            GsStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, n))
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn category(id: u8) -> Result<Category, Failure> {
    Ok(Category::from_id(i64::from(id))?)
}

impl From<GsBox> for BBox {
    fn from(b: GsBox) -> Self {
        BBox::new(b.x1, b.y1, b.x2, b.y2)
    }
}

impl From<BBox> for GsBox {
    fn from(b: BBox) -> Self {
        GsBox {
            x1: b.x1,
            y1: b.y1,
            x2: b.x2,
            y2: b.y2,
        }
    }
}

impl GsDetection {
    fn to_core(self) -> Result<Detection, Failure> {
        Ok(Detection {
            frame_id: self.frame_id,
            category: category(self.category)?,
            confidence: self.confidence,
            bbox: self.bbox.into(),
        })
    }

    fn from_core(d: &Detection) -> Self {
        GsDetection {
            frame_id: d.frame_id,
            category: d.category.id(),
            confidence: d.confidence,
            bbox: d.bbox.into(),
        }
    }
}

impl GsFused {
    fn to_core(self) -> Result<FusedDetection, Failure> {
        Ok(FusedDetection {
            detection: self.detection.to_core()?,
            distance_m: (!self.distance_m.is_nan()).then_some(self.distance_m),
            valid_samples: self.valid_samples as usize,
        })
    }
}

impl From<GsIntrinsics> for Intrinsics {
    fn from(i: GsIntrinsics) -> Self {
        Intrinsics {
            width: i.width,
            height: i.height,
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
        }
    }
}

impl From<GsExtrinsics> for Extrinsics {
    fn from(e: GsExtrinsics) -> Self {
        Extrinsics {
            rotation: Matrix3::from_row_slice(&e.rotation),
            translation: Vector3::from(e.translation),
        }
    }
}

impl From<GsFusionConfig> for FusionConfig {
    fn from(c: GsFusionConfig) -> Self {
        FusionConfig {
            n_samples: c.n_samples as usize,
            radius_frac: c.radius_frac,
            trim_keep: c.trim_keep,
            rng_seed: c.rng_seed,
        }
    }
}

impl From<GsAlertConfig> for AlertConfig {
    fn from(c: GsAlertConfig) -> Self {
        AlertConfig {
            threshold_m: c.threshold_m,
            clear_margin_m: c.clear_margin_m,
            min_consecutive: c.min_consecutive,
        }
    }
}

// ---------------------------------------------------------------- errors and metadata

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, nul-terminated library version.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static snake_case name of a category id, or NULL for unknown ids.
#[no_mangle]
pub extern "C" fn gs_category_name(id: u8) -> *const c_char {
    let name: &'static CStr = match id {
        0 => c"manhole_cover",
        1 => c"non_directional_crack",
        2 => c"pine_cone",
        3 => c"pothole",
        4 => c"tree_branch",
        5 => c"truncated_dome",
        _ => return ptr::null(),
    };
    name.as_ptr()
}

#[no_mangle]
pub extern "C" fn gs_fusion_config_default() -> GsFusionConfig {
    let d = FusionConfig::default();
    GsFusionConfig {
        n_samples: d.n_samples as u32,
        radius_frac: d.radius_frac,
        trim_keep: d.trim_keep,
        rng_seed: d.rng_seed,
    }
}

#[no_mangle]
pub extern "C" fn gs_alert_config_default() -> GsAlertConfig {
    let d = AlertConfig::default();
    GsAlertConfig {
        threshold_m: d.threshold_m,
        clear_margin_m: d.clear_margin_m,
        min_consecutive: d.min_consecutive,
    }
}

#[no_mangle]
pub extern "C" fn gs_imu_params_default() -> GsImuParams {
    let d = ImuParams::default();
    GsImuParams {
        alpha: d.alpha,
        process_noise: d.process_noise,
        measurement_noise: d.measurement_noise,
        initial_variance: d.initial_variance,
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
#[no_mangle]
pub extern "C" fn gs_iou(a: GsBox, b: GsBox) -> f64 {
    BBox::from(a).iou(&BBox::from(b))
}

// ---------------------------------------------------------------- IMU

/// # Safety
/// `params` must be NULL (defaults) or point to a valid struct; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gs_imu_new(params: *const GsImuParams, out: *mut *mut GsImu) -> GsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let params = match params.as_ref() {
            Some(p) => ImuParams {
                alpha: p.alpha,
                process_noise: p.process_noise,
                measurement_noise: p.measurement_noise,
                initial_variance: p.initial_variance,
            },
            None => ImuParams::default(),
        };
        *out = Box::into_raw(Box::new(GsImu(ImuProcessor::new(params)?)));
        Ok(())
    })
}

/// Feeds one accelerometer sample (m/s^2, device axes) and returns the raw and
/// smoothed vertical vibration. Timestamps must increase.
///
/// # Safety
/// `imu` must come from `gs_imu_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_imu_push(
    imu: *mut GsImu,
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    out: *mut GsVibrationPoint,
) -> GsStatus {
    guard(|| {
        let imu = handle_mut(imu, "imu")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = imu.0.push(&AccelSample::new(t, ax, ay, az))?;
        *out = GsVibrationPoint {
            t: p.t,
            raw: p.raw,
            smoothed: p.smoothed,
        };
        Ok(())
    })
}

/// # Safety
/// `imu` must come from `gs_imu_new` and not be used afterwards. NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn gs_imu_free(imu: *mut GsImu) {
    if !imu.is_null() {
        drop(Box::from_raw(imu));
    }
}

// ---------------------------------------------------------------- depth frames

/// Copies a row-major raster of raw depth units into a new frame.
///
/// # Safety
/// `values` must hold `width * height` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_depth_new(
    width: u32,
    height: u32,
    values: *const u16,
    depth_scale: f64,
    frame_id: u64,
    out: *mut *mut GsDepth,
) -> GsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let n = width as usize * height as usize;
        let values = slice(values, n, "values")?.to_vec();
        *out = Box::into_raw(Box::new(GsDepth(DepthFrame::new(width, height, values, depth_scale, frame_id)?)));
        Ok(())
    })
}

/// Loads a 16-bit grayscale depth PNG.
///
/// # Safety
/// `path` must be a nul-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_depth_load_png(
    path: *const c_char,
    depth_scale: f64,
    frame_id: u64,
    out: *mut *mut GsDepth,
) -> GsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(GsStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let frame = groundsense::dataset::load_depth_frame(path.as_ref(), depth_scale, frame_id)?;
        *out = Box::into_raw(Box::new(GsDepth(frame)));
        Ok(())
    })
}

/// # Safety
/// `depth` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_depth_size(depth: *const GsDepth, width: *mut u32, height: *mut u32) -> GsStatus {
    guard(|| {
        let d = &handle(depth, "depth")?.0;
        *out(width, "width")? = d.width;
        *out(height, "height")? = d.height;
        Ok(())
    })
}

/// Copies the raw values out. Returns `BufferTooSmall` when `capacity` is
/// below `width * height`.
///
/// # Safety
/// `depth` must be a live handle; `buf` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn gs_depth_copy(depth: *const GsDepth, buf: *mut u16, capacity: usize) -> GsStatus {
    guard(|| {
        let d = &handle(depth, "depth")?.0;
        if capacity < d.values.len() {
            return Err(Failure(
                GsStatus::BufferTooSmall,
                format!("need {} values, got room for {capacity}", d.values.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(d.values.as_ptr(), buf, d.values.len());
        Ok(())
    })
}

/// # Safety
/// `depth` must come from this library and not be used afterwards. NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn gs_depth_free(depth: *mut GsDepth) {
    if !depth.is_null() {
        drop(Box::from_raw(depth));
    }
}

/// Reprojects a depth frame into the color camera. The result is a new frame
/// of the color resolution; the input is untouched.
///
/// # Safety
/// `depth` must be a live handle; the calibration pointers must be valid and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gs_align_depth(
    depth: *const GsDepth,
    depth_intr: *const GsIntrinsics,
    color_intr: *const GsIntrinsics,
    depth_to_color: *const GsExtrinsics,
    out: *mut *mut GsDepth,
) -> GsStatus {
    guard(|| {
        let d = &handle(depth, "depth")?.0;
        let di = Intrinsics::from(*handle(depth_intr, "depth_intr")?);
        let ci = Intrinsics::from(*handle(color_intr, "color_intr")?);
        let ex = Extrinsics::from(*handle(depth_to_color, "depth_to_color")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let aligned = geometry::align_depth_to_color(d, &di, &ci, &ex)?;
        *out = Box::into_raw(Box::new(GsDepth(aligned)));
        Ok(())
    })
}

// ---------------------------------------------------------------- fusion

/// Trimmed mean depth in meters over the given pixels. `points` holds `n`
/// (u, v) pairs as `2 * n` integers. Writes NaN when no pixel had a return.
///
/// # Safety
/// `depth` must be a live handle; `points` must hold `2 * n` values;
/// `out_m` must be writable and `out_valid` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_robust_depth(
    depth: *const GsDepth,
    points: *const u32,
    n: usize,
    trim_keep: f64,
    out_m: *mut f64,
    out_valid: *mut u32,
) -> GsStatus {
    guard(|| {
        let d = &handle(depth, "depth")?.0;
        let flat = slice(points, 2 * n, "points")?;
        let out_m = out(out_m, "out_m")?;
        if !(trim_keep > 0.0 && trim_keep <= 1.0) {
            return Err(Failure(GsStatus::InvalidArgument, format!("trim_keep {trim_keep} outside (0, 1]")));
        }
        let pts: Vec<(u32, u32)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        if let Some(&(u, v)) = pts.iter().find(|&&(u, v)| u >= d.width || v >= d.height) {
            return Err(Failure(
                GsStatus::InvalidArgument,
                format!("pixel ({u}, {v}) is outside a {}x{} frame", d.width, d.height),
            ));
        }
        let (m, valid) = groundsense::fusion::robust_depth_with_count(d, &pts, trim_keep);
        *out_m = m.unwrap_or(f64::NAN);
        if let Some(v) = out_valid.as_mut() {
            *v = valid as u32;
        }
        Ok(())
    })
}

/// Estimates a distance for each detection from an aligned depth frame.
/// `out` receives exactly `n` entries in input order.
///
/// # Safety
/// `depth` must be a live handle; `dets` must hold `n` entries and `out` room
/// for `capacity`; `cfg` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn gs_fuse(
    depth: *const GsDepth,
    dets: *const GsDetection,
    n: usize,
    cfg: *const GsFusionConfig,
    out: *mut GsFused,
    capacity: usize,
) -> GsStatus {
    guard(|| {
        let d = &handle(depth, "depth")?.0;
        let dets = slice(dets, n, "dets")?
            .iter()
            .map(|g| g.to_core())
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = cfg.as_ref().map_or_else(FusionConfig::default, |c| (*c).into());
        cfg.validate()?;
        if capacity < n {
            return Err(Failure(GsStatus::BufferTooSmall, format!("need {n} entries, got room for {capacity}")));
        }
        if n > 0 && out.is_null() {
            return Err(null("out"));
        }
        for (i, f) in groundsense::fusion::fuse(&dets, d, &cfg).iter().enumerate() {
            *out.add(i) = GsFused {
                detection: GsDetection::from_core(&f.detection),
                distance_m: f.distance_m.unwrap_or(f64::NAN),
                valid_samples: f.valid_samples as u32,
            };
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- alerts

/// At most one warning per category and frame, so this many entries always
/// suffice for `gs_alert_assess`.
pub const GS_MAX_WARNINGS_PER_FRAME: usize = 6;

const _: () = assert!(GS_MAX_WARNINGS_PER_FRAME == Category::COUNT);

/// # Safety
/// `cfg` must be NULL (defaults) or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_alert_new(cfg: *const GsAlertConfig, out: *mut *mut GsAlert) -> GsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = cfg.as_ref().map_or_else(AlertConfig::default, |c| (*c).into());
        cfg.validate()?;
        *out = Box::into_raw(Box::new(GsAlert {
            cfg,
            state: AlertState::default(),
        }));
        Ok(())
    })
}

/// Applies the warning rule to one frame of fused detections and writes the
/// warnings raised, in category order. The tracker only advances when the
/// call succeeds.
///
/// # Safety
/// `tracker` must be a live handle; `fused` must hold `n` entries; `out` must
/// have room for `capacity` and `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_alert_assess(
    tracker: *mut GsAlert,
    frame_id: u64,
    fused: *const GsFused,
    n: usize,
    out: *mut GsWarning,
    capacity: usize,
    out_count: *mut usize,
) -> GsStatus {
    guard(|| {
        let tracker = handle_mut(tracker, "tracker")?;
        let fused = slice(fused, n, "fused")?
            .iter()
            .map(|f| f.to_core())
            .collect::<Result<Vec<_>, _>>()?;
        let out_count = self::out(out_count, "out_count")?;
        let (events, next) = alert::assess(frame_id, &fused, &tracker.cfg, &tracker.state);
        *out_count = events.len();
        if events.len() > capacity {
            return Err(Failure(
                GsStatus::BufferTooSmall,
                format!("need {} entries, got room for {capacity}", events.len()),
            ));
        }
        if !events.is_empty() && out.is_null() {
            return Err(null("out"));
        }
        for (i, e) in events.iter().enumerate() {
            *out.add(i) = GsWarning {
                frame_id: e.frame_id,
                category: e.category.id(),
                distance_m: e.distance_m,
            };
        }
        tracker.state = next;
        Ok(())
    })
}

/// Clears all per-category state, as at the start of a new stream.
///
/// # Safety
/// `tracker` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_alert_reset(tracker: *mut GsAlert) -> GsStatus {
    guard(|| {
        handle_mut(tracker, "tracker")?.state = AlertState::default();
        Ok(())
    })
}

/// # Safety
/// `tracker` must come from `gs_alert_new` and not be used afterwards. NULL
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn gs_alert_free(tracker: *mut GsAlert) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}
