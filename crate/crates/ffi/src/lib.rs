//! C ABI for fuseflow.
//!
//! Conventions:
//! - every fallible function returns an [`FfStatus`]; on failure a message
//!   is available from [`ff_last_error_message`] on the same thread;
//! - objects are opaque handles created by `*_new`/producer functions and
//!   released with the matching `*_free`;
//! - images are row-major `width * height` arrays of `double`;
//! - flow vectors are in pixels per frame interval.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fuseflow::farneback::{farneback_flow, FarnebackParams};
use fuseflow::fusion::{Accumulation, FusionParams, FusionState};
use fuseflow::harness::ops_count;
use fuseflow::io::{read_flo, write_flo, Event, Polarity};
use fuseflow::leaky::{LeakyFilter, LeakyParams};
use fuseflow::metrics::aee;
use fuseflow::{Error, FlowField, GridShape, ScalarMap};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NoOverlap = 4,
    EventOrder = 5,
    Io = 6,
    Format = 7,
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FfStatus {
    match e {
        Error::InvalidShape { .. } | Error::InvalidParam(_) | Error::Config(_) => {
            FfStatus::InvalidArgument
        }
        Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } => FfStatus::ShapeMismatch,
        Error::NoOverlap => FfStatus::NoOverlap,
        Error::EventOutOfOrder { .. } | Error::QueryInPast { .. } => FfStatus::EventOrder,
        Error::Io { .. } => FfStatus::Io,
        Error::Format { .. } => FfStatus::Format,
    }
}

struct Fail(FfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            FfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            FfStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(FfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn shape(width: u32, height: u32) -> Result<GridShape, Fail> {
    Ok(GridShape::new(width as usize, height as usize)?)
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next fuseflow call on this thread.
#[no_mangle]
pub extern "C" fn ff_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Parameters

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FfLeakyParams {
    pub tau_us: f64,
    pub smooth_k: u32,
    pub act_threshold: f64,
    pub gain: f64,
}

impl From<FfLeakyParams> for LeakyParams {
    fn from(p: FfLeakyParams) -> Self {
        LeakyParams {
            tau_us: p.tau_us,
            smooth_k: p.smooth_k as usize,
            act_threshold: p.act_threshold,
            gain: p.gain,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FfFarnebackParams {
    pub pyramid_levels: u32,
    pub pyr_scale: f64,
    pub poly_n: u32,
    pub poly_sigma: f64,
    pub avg_window: u32,
    pub iterations: u32,
    pub det_eps: f64,
}

impl From<FfFarnebackParams> for FarnebackParams {
    fn from(p: FfFarnebackParams) -> Self {
        FarnebackParams {
            pyramid_levels: p.pyramid_levels as usize,
            pyr_scale: p.pyr_scale,
            poly_n: p.poly_n as usize,
            poly_sigma: p.poly_sigma,
            avg_window: p.avg_window as usize,
            iterations: p.iterations as usize,
            det_eps: p.det_eps,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfAccumulation {
    Literal = 0,
    Single = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FfFusionParams {
    pub thresh_farneback: f64,
    pub thresh_leakycnn: f64,
    pub thresh_confidence: f64,
    pub rho: f64,
    pub accumulation: FfAccumulation,
}

impl From<FfFusionParams> for FusionParams {
    fn from(p: FfFusionParams) -> Self {
        FusionParams {
            thresh_farneback: p.thresh_farneback,
            thresh_leakycnn: p.thresh_leakycnn,
            thresh_confidence: p.thresh_confidence,
            rho: p.rho,
            accumulation: match p.accumulation {
                FfAccumulation::Literal => Accumulation::Literal,
                FfAccumulation::Single => Accumulation::Single,
            },
        }
    }
}

#[no_mangle]
pub extern "C" fn ff_leaky_params_default() -> FfLeakyParams {
    let p = LeakyParams::default();
    FfLeakyParams {
        tau_us: p.tau_us,
        smooth_k: p.smooth_k as u32,
        act_threshold: p.act_threshold,
        gain: p.gain,
    }
}

#[no_mangle]
pub extern "C" fn ff_farneback_params_default() -> FfFarnebackParams {
    let p = FarnebackParams::default();
    FfFarnebackParams {
        pyramid_levels: p.pyramid_levels as u32,
        pyr_scale: p.pyr_scale,
        poly_n: p.poly_n as u32,
        poly_sigma: p.poly_sigma,
        avg_window: p.avg_window as u32,
        iterations: p.iterations as u32,
        det_eps: p.det_eps,
    }
}

#[no_mangle]
pub extern "C" fn ff_fusion_params_default() -> FfFusionParams {
    let p = FusionParams::default();
    FfFusionParams {
        thresh_farneback: p.thresh_farneback,
        thresh_leakycnn: p.thresh_leakycnn,
        thresh_confidence: p.thresh_confidence,
        rho: p.rho,
        accumulation: match p.accumulation {
            Accumulation::Literal => FfAccumulation::Literal,
            Accumulation::Single => FfAccumulation::Single,
        },
    }
}

// ---------------------------------------------------------------------------
// Flow fields

/// Dense flow field with a per-pixel validity flag.
pub struct FfFlowField {
    inner: FlowField,
}

/// New field of the given size with every pixel invalid.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_new(
    width: u32,
    height: u32,
    out: *mut *mut FfFlowField,
) -> FfStatus {
    guard(|| {
        let inner = FlowField::invalid(shape(width, height)?);
        put(out, FfFlowField { inner })
    })
}

/// # Safety
/// `flow` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_free(flow: *mut FfFlowField) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// # Safety
/// `flow` must be a live handle; `width`/`height` writable or null.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_size(
    flow: *const FfFlowField,
    width: *mut u32,
    height: *mut u32,
) -> FfStatus {
    guard(|| {
        let s = deref(flow, "flow")?.inner.shape();
        *deref_mut(width, "width")? = s.width as u32;
        *deref_mut(height, "height")? = s.height as u32;
        Ok(())
    })
}

fn check_xy(flow: &FlowField, x: u32, y: u32) -> Result<(), Fail> {
    if flow.shape().contains(x as i64, y as i64) {
        Ok(())
    } else {
        Err(Fail(
            FfStatus::InvalidArgument,
            format!("pixel ({x}, {y}) outside {}", flow.shape()),
        ))
    }
}

/// Reads one pixel. For invalid pixels `valid` is 0 and `u`, `v` are 0.
///
/// # Safety
/// `flow` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_get(
    flow: *const FfFlowField,
    x: u32,
    y: u32,
    u: *mut f32,
    v: *mut f32,
    valid: *mut u8,
) -> FfStatus {
    guard(|| {
        let f = &deref(flow, "flow")?.inner;
        check_xy(f, x, y)?;
        let (u_out, v_out, ok_out) = (
            deref_mut(u, "u")?,
            deref_mut(v, "v")?,
            deref_mut(valid, "valid")?,
        );
        match f.get(x as usize, y as usize) {
            Some((a, b)) => (*u_out, *v_out, *ok_out) = (a, b, 1),
            None => (*u_out, *v_out, *ok_out) = (0.0, 0.0, 0),
        }
        Ok(())
    })
}

/// Writes one pixel; non-finite components mark it invalid.
///
/// # Safety
/// `flow` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_set(
    flow: *mut FfFlowField,
    x: u32,
    y: u32,
    u: f32,
    v: f32,
) -> FfStatus {
    guard(|| {
        let f = &mut deref_mut(flow, "flow")?.inner;
        check_xy(f, x, y)?;
        f.set(x as usize, y as usize, u, v);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_read_flo(
    path: *const c_char,
    out: *mut *mut FfFlowField,
) -> FfStatus {
    guard(|| {
        let inner = read_flo(path_arg(path)?)?;
        put(out, FfFlowField { inner })
    })
}

/// # Safety
/// `flow` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ff_flow_write_flo(
    flow: *const FfFlowField,
    path: *const c_char,
) -> FfStatus {
    guard(|| {
        let f = &deref(flow, "flow")?.inner;
        Ok(write_flo(path_arg(path)?, f)?)
    })
}

/// Average endpoint error over pixels valid in both fields.
///
/// # Safety
/// Both handles must be live; `mean` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_aee(
    flow: *const FfFlowField,
    gt: *const FfFlowField,
    mean: *mut f64,
) -> FfStatus {
    guard(|| {
        let r = aee(&deref(flow, "flow")?.inner, &deref(gt, "gt")?.inner)?;
        *deref_mut(mean, "mean")? = r.mean;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Frame flow

unsafe fn image(data: *const f64, s: GridShape, what: &str) -> Result<ScalarMap, Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    let v = std::slice::from_raw_parts(data, s.len()).to_vec();
    Ok(ScalarMap::from_vec(s, v)?)
}

/// Dense Farneback flow from `frame1` to `frame2`.
///
/// # Safety
/// Both frames must point to `width * height` doubles; `params` may be
/// null for defaults; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_farneback(
    frame1: *const f64,
    frame2: *const f64,
    width: u32,
    height: u32,
    params: *const FfFarnebackParams,
    out: *mut *mut FfFlowField,
) -> FfStatus {
    guard(|| {
        let s = shape(width, height)?;
        let p = params
            .as_ref()
            .map_or_else(FarnebackParams::default, |p| (*p).into());
        let inner = farneback_flow(
            &image(frame1, s, "frame1")?,
            &image(frame2, s, "frame2")?,
            &p,
        )?;
        put(out, FfFlowField { inner })
    })
}

// ---------------------------------------------------------------------------
// Event flow

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FfEvent {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    /// +1 or -1.
    pub polarity: i8,
}

/// Stateful leaky event-flow filter.
pub struct FfLeakyFilter {
    inner: LeakyFilter,
}

/// # Safety
/// `params` may be null for defaults; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_leaky_new(
    width: u32,
    height: u32,
    params: *const FfLeakyParams,
    out: *mut *mut FfLeakyFilter,
) -> FfStatus {
    guard(|| {
        let p = params
            .as_ref()
            .map_or_else(LeakyParams::default, |p| (*p).into());
        let inner = LeakyFilter::new(shape(width, height)?, p)?;
        put(out, FfLeakyFilter { inner })
    })
}

/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_leaky_free(filter: *mut FfLeakyFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

unsafe fn events(ptr: *const FfEvent, n: usize) -> Result<Vec<Event>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if ptr.is_null() {
        return Err(null("events"));
    }
    std::slice::from_raw_parts(ptr, n)
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = Polarity::from_i8(e.polarity).ok_or_else(|| {
                Fail(
                    FfStatus::InvalidArgument,
                    format!("event {i}: polarity {}", e.polarity),
                )
            })?;
            Ok(Event::new(e.t_us, e.x, e.y, p))
        })
        .collect()
}

/// Feeds events without producing flow (e.g. before the first frame).
///
/// # Safety
/// `filter` live; `events_ptr` points to `n` events (may be null if 0).
#[no_mangle]
pub unsafe extern "C" fn ff_leaky_ingest(
    filter: *mut FfLeakyFilter,
    events_ptr: *const FfEvent,
    n: usize,
) -> FfStatus {
    guard(|| {
        let f = deref_mut(filter, "filter")?;
        let ev = events(events_ptr, n)?;
        if let Some((i, e)) = ev
            .iter()
            .enumerate()
            .find(|(_, e)| !f.inner.state().shape().contains(e.x as i64, e.y as i64))
        {
            return Err(Fail(
                FfStatus::InvalidArgument,
                format!("event {i} at ({}, {}) outside sensor", e.x, e.y),
            ));
        }
        Ok(f.inner.ingest(&ev)?)
    })
}

/// Accumulates the slice `[t0, t1)` and returns the flow sampled at `t1`.
///
/// # Safety
/// `filter` live; `events_ptr` points to `n` events (may be null if 0);
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_leaky_event_flow(
    filter: *mut FfLeakyFilter,
    events_ptr: *const FfEvent,
    n: usize,
    t0_us: u64,
    t1_us: u64,
    out: *mut *mut FfFlowField,
) -> FfStatus {
    guard(|| {
        let f = deref_mut(filter, "filter")?;
        let ev = events(events_ptr, n)?;
        if let Some((i, e)) = ev
            .iter()
            .enumerate()
            .find(|(_, e)| !f.inner.state().shape().contains(e.x as i64, e.y as i64))
        {
            return Err(Fail(
                FfStatus::InvalidArgument,
                format!("event {i} at ({}, {}) outside sensor", e.x, e.y),
            ));
        }
        let inner = f.inner.event_flow(&ev, t0_us, t1_us)?;
        put(out, FfFlowField { inner })
    })
}

// ---------------------------------------------------------------------------
// Fusion

/// Confidence-map fusion state.
pub struct FfFusionState {
    inner: FusionState,
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_fusion_new(
    width: u32,
    height: u32,
    out: *mut *mut FfFusionState,
) -> FfStatus {
    guard(|| {
        let inner = FusionState::new(shape(width, height)?);
        put(out, FfFusionState { inner })
    })
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_fusion_free(state: *mut FfFusionState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Installs a new frame flow (copied) and applies the carry-over factor.
///
/// # Safety
/// Handles live; `params` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn ff_fusion_on_frame_flow(
    state: *mut FfFusionState,
    frame_flow: *const FfFlowField,
    params: *const FfFusionParams,
) -> FfStatus {
    guard(|| {
        let s = deref_mut(state, "state")?;
        let flow = deref(frame_flow, "frame_flow")?.inner.clone();
        let p = params
            .as_ref()
            .map_or_else(FusionParams::default, |p| (*p).into());
        Ok(s.inner.on_new_frame_inference(flow, &p)?)
    })
}

/// One fusion step on a new event flow. `source_mask`, if not null,
/// receives `width * height` bytes: 1 where the output came from events.
///
/// # Safety
/// Handles live; `params` may be null; `out` writable; `source_mask` null
/// or `width * height` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ff_fusion_step(
    state: *mut FfFusionState,
    event_flow: *const FfFlowField,
    params: *const FfFusionParams,
    out: *mut *mut FfFlowField,
    source_mask: *mut u8,
) -> FfStatus {
    guard(|| {
        let s = deref_mut(state, "state")?;
        let ev = &deref(event_flow, "event_flow")?.inner;
        let p = params
            .as_ref()
            .map_or_else(FusionParams::default, |p| (*p).into());
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let fused = s.inner.step(ev, &p)?;
        if !source_mask.is_null() {
            let bits = fused.source_mask.bits();
            let dst = std::slice::from_raw_parts_mut(source_mask, bits.len());
            for (d, &b) in dst.iter_mut().zip(bits) {
                *d = b as u8;
            }
        }
        put(out, FfFlowField { inner: fused.flow })
    })
}

// ---------------------------------------------------------------------------
// Cost model

/// Arithmetic operations for one event-pipeline prediction plus fusion.
///
/// # Safety
/// `leaky`/`fusion` may be null for defaults; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn ff_ops_count(
    leaky: *const FfLeakyParams,
    fusion: *const FfFusionParams,
    width: u32,
    height: u32,
    n_events: u64,
    count: *mut u64,
) -> FfStatus {
    guard(|| {
        let l = leaky
            .as_ref()
            .map_or_else(LeakyParams::default, |p| (*p).into());
        let f = fusion
            .as_ref()
            .map_or_else(FusionParams::default, |p| (*p).into());
        let n = ops_count(&l, shape(width, height)?, n_events, &f);
        *deref_mut(count, "count")? = n;
        Ok(())
    })
}
