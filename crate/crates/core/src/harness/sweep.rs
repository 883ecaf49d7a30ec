use rayon::prelude::*;

use super::{frame_flows, summarize, Dataset, PreparedRun, RunConfig, RunSummary};
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::io::EventStream;
use crate::leaky::{LeakyFilter, LeakyParams};
use crate::synth::{dvs_simulate, DvsParams, Scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub thresh_farneback: f64,
    pub thresh_leakycnn: f64,
    pub rate_multiplier: usize,
    pub summary: RunSummary,
}

/// Fuses every `(thresh_farneback, thresh_leakycnn)` pair, row-major with
/// `thresh_farneback` as the outer axis.
pub fn threshold_sweep(
    prepared: &PreparedRun,
    base: &FusionParams,
    rate_multiplier: usize,
    thresh_farneback: &[f64],
    thresh_leakycnn: &[f64],
) -> Result<Vec<SweepPoint>> {
    let grid: Vec<(f64, f64)> = thresh_farneback
        .iter()
        .flat_map(|&f| thresh_leakycnn.iter().map(move |&l| (f, l)))
        .collect();
    grid.par_iter()
        .map(|&(f, l)| {
            let params = FusionParams {
                thresh_farneback: f,
                thresh_leakycnn: l,
                ..*base
            };
            let rows = prepared.fuse(&params)?;
            Ok(SweepPoint {
                thresh_farneback: f,
                thresh_leakycnn: l,
                rate_multiplier,
                summary: summarize(&rows, prepared.eval_mode()),
            })
        })
        .collect()
}

/// Runs the full pipeline at each rate multiplier with the fusion
/// parameters of `config`. Frame flows are computed once and shared.
pub fn rate_sweep(
    dataset: &Dataset<'_>,
    config: &RunConfig,
    rates: &[usize],
) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    dataset.shape()?;
    let flows = frame_flows(dataset.frames, &config.farneback)?;
    rates
        .par_iter()
        .map(|&n| {
            let cfg = RunConfig {
                rate_multiplier: n,
                ..config.clone()
            };
            let prepared = PreparedRun::with_frame_flows(dataset, &cfg, flows.clone())?;
            let rows = prepared.fuse(&cfg.fusion)?;
            Ok(SweepPoint {
                thresh_farneback: cfg.fusion.thresh_farneback,
                thresh_leakycnn: cfg.fusion.thresh_leakycnn,
                rate_multiplier: n,
                summary: summarize(&rows, cfg.eval_mode),
            })
        })
        .collect()
}

/// Picks the grid point with the lowest mean fused AEE among points where
/// events contributed at all (falling back to the whole grid when none
/// did). Ties go to the larger `thresh_farneback`, then the smaller
/// `thresh_leakycnn`.
pub fn calibrate_thresholds(points: &[SweepPoint]) -> Result<SweepPoint> {
    let key = |p: &SweepPoint| p.summary.mean_aee_fused;
    let contributing: Vec<&SweepPoint> = points
        .iter()
        .filter(|p| p.summary.mean_event_percent > 0.0 && key(p).is_some())
        .collect();
    let pool: Vec<&SweepPoint> = if contributing.is_empty() {
        points.iter().filter(|p| key(p).is_some()).collect()
    } else {
        contributing
    };
    pool.into_iter()
        .min_by(|a, b| {
            key(a)
                .unwrap()
                .total_cmp(&key(b).unwrap())
                .then(b.thresh_farneback.total_cmp(&a.thresh_farneback))
                .then(a.thresh_leakycnn.total_cmp(&b.thresh_leakycnn))
        })
        .copied()
        .ok_or_else(|| Error::InvalidParam("no evaluated grid point to calibrate from".into()))
}

/// Least-squares gain mapping unit-gain event flow to ground-truth `u` on a
/// synthetic scene: `Σ s·g / Σ s²` over pixels with both values, from
/// sub-slices ending at or after `warmup_us`.
pub fn calibrate_gain(
    scene_config: &SceneConfig,
    events: &EventStream,
    leaky: &LeakyParams,
    slice_us: u64,
    warmup_us: u64,
) -> Result<f64> {
    if slice_us == 0 {
        return Err(Error::InvalidParam("slice length must be positive".into()));
    }
    let scene = Scene::new(scene_config.clone())?;
    let unit = LeakyParams {
        gain: 1.0,
        ..*leaky
    };
    let mut filter = LeakyFilter::new(events.shape(), unit)?;
    let end = scene_config.duration_us();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    let mut t0 = 0;
    while t0 + slice_us <= end {
        let t1 = t0 + slice_us;
        let flow = filter.event_flow(events.slice(t0, t1), t0, t1)?;
        if t1 >= warmup_us {
            let gt = scene.gt_flow(t1)?;
            for i in 0..flow.shape().len() {
                if let (Some((s, _)), Some((g, _))) = (flow.get_index(i), gt.get_index(i)) {
                    num += s as f64 * g as f64;
                    den += s as f64 * s as f64;
                }
            }
        }
        t0 = t1;
    }
    if den == 0.0 {
        return Err(Error::NoOverlap);
    }
    Ok(num / den)
}

/// Outcome of [`calibrate`].
#[derive(Debug, Clone)]
pub struct Calibration {
    /// `base` with the fitted gain and the chosen thresholds.
    pub config: RunConfig,
    pub gain: f64,
    pub grid: Vec<SweepPoint>,
    pub chosen: SweepPoint,
}

/// The calibration procedure used for benchmark runs:
///
/// 1. simulate `edge_scene` with `dvs` and fit the gain with
///    [`calibrate_gain`] on quarter-frame-interval slices, skipping the
///    first 100 ms;
/// 2. with that gain, sweep the threshold grid on `dataset` at
///    `base.rate_multiplier`;
/// 3. keep the point chosen by [`calibrate_thresholds`].
pub fn calibrate(
    dataset: &Dataset<'_>,
    base: &RunConfig,
    edge_scene: &SceneConfig,
    dvs: &DvsParams,
    thresh_farneback: &[f64],
    thresh_leakycnn: &[f64],
) -> Result<Calibration> {
    let edge = Scene::new(edge_scene.clone())?;
    let edge_events = dvs_simulate(&edge, dvs)?;
    let gain = calibrate_gain(
        edge_scene,
        &edge_events,
        &base.leaky,
        edge_scene.frame_interval_us() / 4,
        CALIBRATION_WARMUP_US,
    )?;
    let mut config = base.clone();
    config.leaky.gain = gain;
    let prepared = PreparedRun::new(dataset, &config)?;
    let grid = threshold_sweep(
        &prepared,
        &config.fusion,
        config.rate_multiplier,
        thresh_farneback,
        thresh_leakycnn,
    )?;
    let chosen = calibrate_thresholds(&grid)?;
    config.fusion.thresh_farneback = chosen.thresh_farneback;
    config.fusion.thresh_leakycnn = chosen.thresh_leakycnn;
    Ok(Calibration {
        config,
        gain,
        grid,
        chosen,
    })
}

pub const CALIBRATION_WARMUP_US: u64 = 100_000;
