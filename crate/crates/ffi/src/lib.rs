//! C ABI for driftwatch.
//!
//! Conventions:
//! - every fallible function returns a [`DwStatus`]; on failure a message is
//!   available from [`dw_last_error`] on the same thread;
//! - analyzers are opaque handles created by [`dw_analyzer_new`] and released with
//!   [`dw_analyzer_free`];
//! - images are 8-bit grayscale, row-major, `width * height` bytes, no padding;
//! - panics never cross the boundary: they are reported as `DW_STATUS_INTERNAL`.

use driftwatch::gmc::{estimate_affine_ransac, Correspondence, FeaturePoint, RansacParams};
use driftwatch::imgcore::{BitGrid, GrayFrame, InstanceMask};
use driftwatch::motion::Stability;
use driftwatch::optflow::{farneback_flow, FlowParams};
use driftwatch::pipeline::{Analyzer, AnalyzerConfig, FrameReport, RunConfig};
use driftwatch::Error;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DwStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Data = 3,
    Io = 4,
    Contract = 5,
    Estimation = 6,
    OutOfRange = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DwStability {
    Stable = 0,
    Suspect = 1,
    Unstable = 2,
}

impl From<Stability> for DwStability {
    fn from(s: Stability) -> Self {
        match s {
            Stability::Stable => DwStability::Stable,
            Stability::Suspect => DwStability::Suspect,
            Stability::Unstable => DwStability::Unstable,
        }
    }
}

/// One residual sample of the last pushed frame.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DwResidual {
    pub frame_index: u64,
    pub track_id: u64,
    pub mask_label: u32,
    pub v_abs: f64,
    pub v_common: f64,
    pub v_rel: f64,
    pub threshold: f64,
    pub accumulated: f64,
    pub sustained_frames: u32,
    /// A DwStability value.
    pub stability: i32,
    pub suppressed: u8,
    pub degraded: u8,
}

/// A transition into `unstable` in the last pushed frame.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DwAlert {
    pub frame_index: u64,
    pub track_id: u64,
    pub time_s: f64,
    /// x, y, width, height
    pub bbox: [u32; 4],
    pub accumulated_px: f64,
    pub threshold: f64,
    pub sustained_frames: u32,
}

/// Camera-motion estimate of the last pushed frame.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DwGmc {
    /// 0 for the first frame, which has no predecessor.
    pub available: u8,
    pub degraded: u8,
    /// a00, a01, a10, a11, bx, by; maps previous-frame to current-frame pixels.
    pub transform: [f64; 6],
    pub inlier_ratio: f64,
    pub mean_reprojection_error: f64,
    pub n_containers: u32,
}

/// Opaque streaming analyzer.
pub struct DwAnalyzer {
    inner: Analyzer,
    last: Option<FrameReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DwStatus {
    match e {
        Error::Config(_) => DwStatus::Config,
        Error::Data { .. } | Error::Image { .. } | Error::EmptyMask | Error::NoContainers => {
            DwStatus::Data
        }
        Error::Io { .. } => DwStatus::Io,
        Error::Contract(_) => DwStatus::Contract,
        Error::Estimation(_) => DwStatus::Estimation,
    }
}

fn fail(status: DwStatus, msg: &str) -> DwStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), DwStatus>) -> DwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DwStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(DwStatus::Internal, "internal panic"),
    }
}

fn lib<T>(r: driftwatch::Result<T>) -> Result<T, DwStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

/// # Safety
/// `p` must be null or valid for reads of `len` elements.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], DwStatus> {
    if p.is_null() {
        return Err(fail(DwStatus::NullArgument, &format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn pixels(width: u32, height: u32) -> Result<usize, DwStatus> {
    (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| fail(DwStatus::Contract, "image dimensions overflow"))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread (empty after a success). The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn dw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Create an analyzer from a JSON run configuration (same schema as the CLI
/// config file; NULL means defaults).
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_new(
    config_json: *const c_char,
    out: *mut *mut DwAnalyzer,
) -> DwStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DwStatus::NullArgument, "out is null"));
        }
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| fail(DwStatus::Config, "config is not UTF-8"))?;
            lib(RunConfig::from_json(text, "config"))?
        };
        let acfg = AnalyzerConfig::from_run_config(&cfg, cfg.fps.unwrap_or(10.0));
        let inner = lib(Analyzer::new(acfg))?;
        *out = Box::into_raw(Box::new(DwAnalyzer { inner, last: None }));
        Ok(())
    })
}

/// Release an analyzer. NULL is ignored.
///
/// # Safety
/// `a` must be null or a handle from [`dw_analyzer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_free(a: *mut DwAnalyzer) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

fn masks_from_labels(
    labels: &[u32],
    width: usize,
    height: usize,
) -> driftwatch::Result<Vec<InstanceMask>> {
    let mut grids: BTreeMap<u32, BitGrid> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            grids
                .entry(l)
                .or_insert_with(|| BitGrid::new(width, height))
                .set(i % width, i / width, true);
        }
    }
    grids
        .into_iter()
        .map(|(l, g)| InstanceMask::new(l, g))
        .collect()
}

/// Analyse the next frame. `labels` is an optional `width * height` label image
/// (0 = background, other values = container instance labels); NULL means no
/// detections in this frame.
///
/// # Safety
/// `a` must be a live handle; `pixels` must hold `width * height` bytes; `labels`
/// must be null or hold `width * height` values.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_push_frame(
    a: *mut DwAnalyzer,
    frame_index: u64,
    pixels_ptr: *const u8,
    width: u32,
    height: u32,
    labels: *const u32,
) -> DwStatus {
    guard(|| {
        let a = a
            .as_mut()
            .ok_or_else(|| fail(DwStatus::NullArgument, "analyzer is null"))?;
        let n = pixels(width, height)?;
        let data = slice(pixels_ptr, n, "pixels")?.to_vec();
        let frame = lib(GrayFrame::new(width as usize, height as usize, data))?;
        let masks = if labels.is_null() {
            Vec::new()
        } else {
            lib(masks_from_labels(
                slice(labels, n, "labels")?,
                width as usize,
                height as usize,
            ))?
        };
        a.last = None;
        a.last = Some(lib(a.inner.push_frame(frame_index, frame, masks))?);
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a live handle that outlives `'a`.
unsafe fn last<'a>(a: *const DwAnalyzer) -> Option<&'a FrameReport> {
    a.as_ref().and_then(|a| a.last.as_ref())
}

/// Number of residual samples produced by the last pushed frame (0 if none).
///
/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_residual_count(a: *const DwAnalyzer) -> usize {
    last(a).map_or(0, |r| r.residuals.len())
}

/// Copy residual `index` of the last pushed frame into `out`.
///
/// # Safety
/// `a` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_residual(
    a: *const DwAnalyzer,
    index: usize,
    out: *mut DwResidual,
) -> DwStatus {
    guard(|| {
        let out = out
            .as_mut()
            .ok_or_else(|| fail(DwStatus::NullArgument, "out is null"))?;
        let r = last(a).ok_or_else(|| fail(DwStatus::Contract, "no frame has been analysed"))?;
        let row = r
            .residuals
            .get(index)
            .ok_or_else(|| fail(DwStatus::OutOfRange, "residual index out of range"))?;
        *out = DwResidual {
            frame_index: r.frame_index,
            track_id: row.track_id,
            mask_label: row.mask_label,
            v_abs: row.sample.v_abs,
            v_common: row.sample.v_common,
            v_rel: row.sample.v_rel,
            threshold: row.verdict.threshold_used,
            accumulated: row.verdict.accumulated,
            sustained_frames: row.verdict.sustained_frames as u32,
            stability: DwStability::from(row.verdict.stability) as i32,
            suppressed: row.verdict.suppressed as u8,
            degraded: row.sample.degraded as u8,
        };
        Ok(())
    })
}

/// Number of alerts raised by the last pushed frame.
///
/// # Safety
/// `a` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_alert_count(a: *const DwAnalyzer) -> usize {
    last(a).map_or(0, |r| r.alerts.len())
}

/// Copy alert `index` of the last pushed frame into `out`.
///
/// # Safety
/// `a` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_alert(
    a: *const DwAnalyzer,
    index: usize,
    out: *mut DwAlert,
) -> DwStatus {
    guard(|| {
        let out = out
            .as_mut()
            .ok_or_else(|| fail(DwStatus::NullArgument, "out is null"))?;
        let r = last(a).ok_or_else(|| fail(DwStatus::Contract, "no frame has been analysed"))?;
        let al = r
            .alerts
            .get(index)
            .ok_or_else(|| fail(DwStatus::OutOfRange, "alert index out of range"))?;
        *out = DwAlert {
            frame_index: al.frame_index,
            track_id: al.track_id,
            time_s: al.time_s,
            bbox: al.bbox,
            accumulated_px: al.accumulated_px,
            threshold: al.threshold,
            sustained_frames: al.sustained_frames as u32,
        };
        Ok(())
    })
}

/// Camera-motion estimate of the last pushed frame.
///
/// # Safety
/// `a` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dw_analyzer_gmc(a: *const DwAnalyzer, out: *mut DwGmc) -> DwStatus {
    guard(|| {
        let out = out
            .as_mut()
            .ok_or_else(|| fail(DwStatus::NullArgument, "out is null"))?;
        let r = last(a).ok_or_else(|| fail(DwStatus::Contract, "no frame has been analysed"))?;
        *out = match &r.gmc {
            None => DwGmc::default(),
            Some(g) => DwGmc {
                available: 1,
                degraded: g.degraded as u8,
                transform: g.transform.to_array(),
                inlier_ratio: g.inlier_ratio,
                mean_reprojection_error: g.mean_reprojection_error,
                n_containers: r.n_containers as u32,
            },
        };
        Ok(())
    })
}

/// Robust affine fit `dst ≈ A·src + b` from `n` point pairs (`src`/`dst` hold
/// `2n` interleaved x, y values) with default RANSAC settings. Writes the six
/// parameters (a00, a01, a10, a11, bx, by) to `out6` and the degraded flag to
/// `degraded` (identity is written when degraded).
///
/// # Safety
/// `src` and `dst` must hold `2n` doubles, `out6` six doubles; `degraded` may be null.
#[no_mangle]
pub unsafe extern "C" fn dw_estimate_affine(
    src: *const f64,
    dst: *const f64,
    n: usize,
    seed: u64,
    out6: *mut f64,
    degraded: *mut u8,
) -> DwStatus {
    guard(|| {
        let len = n
            .checked_mul(2)
            .ok_or_else(|| fail(DwStatus::Contract, "point count overflows"))?;
        let s = slice(src, len, "src")?;
        let d = slice(dst, len, "dst")?;
        if out6.is_null() {
            return Err(fail(DwStatus::NullArgument, "out6 is null"));
        }
        let corrs: Vec<Correspondence> = (0..n)
            .map(|i| Correspondence {
                p: FeaturePoint {
                    x: s[2 * i],
                    y: s[2 * i + 1],
                    score: 1.0,
                },
                qx: d[2 * i],
                qy: d[2 * i + 1],
                match_error: 0.0,
            })
            .collect();
        let r = estimate_affine_ransac(&corrs, &RansacParams::default(), seed);
        std::slice::from_raw_parts_mut(out6, 6).copy_from_slice(&r.transform.to_array());
        if !degraded.is_null() {
            *degraded = r.degraded as u8;
        }
        Ok(())
    })
}

/// Dense Farnebäck flow from `prev` to `cur` with default parameters. `u` and `v`
/// receive `width * height` floats; `valid` (optional) receives 1/0 per pixel.
///
/// # Safety
/// Image pointers must hold `width * height` bytes, `u`/`v` that many floats, and
/// `valid` must be null or hold that many bytes.
#[no_mangle]
pub unsafe extern "C" fn dw_farneback_flow(
    prev: *const u8,
    cur: *const u8,
    width: u32,
    height: u32,
    u: *mut f32,
    v: *mut f32,
    valid: *mut u8,
) -> DwStatus {
    guard(|| {
        let n = pixels(width, height)?;
        let (w, h) = (width as usize, height as usize);
        let a = lib(GrayFrame::new(w, h, slice(prev, n, "prev")?.to_vec()))?;
        let b = lib(GrayFrame::new(w, h, slice(cur, n, "cur")?.to_vec()))?;
        if u.is_null() || v.is_null() {
            return Err(fail(DwStatus::NullArgument, "u or v is null"));
        }
        let flow = lib(farneback_flow(&a, &b, &FlowParams::default()))?;
        std::slice::from_raw_parts_mut(u, n).copy_from_slice(flow.u());
        std::slice::from_raw_parts_mut(v, n).copy_from_slice(flow.v());
        if !valid.is_null() {
            let out = std::slice::from_raw_parts_mut(valid, n);
            for (i, o) in out.iter_mut().enumerate() {
                *o = flow.valid().get_index(i) as u8;
            }
        }
        Ok(())
    })
}
