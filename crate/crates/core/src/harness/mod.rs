//! End-to-end runs: frame flow once per frame interval, event flow on `N`
//! sub-slices per interval, fusion per sub-slice, metrics per sub-slice.

mod ops;
mod report;
mod sweep;
mod truth;

pub use ops::{
    fusion_ops_per_pixel, ops_breakdown, ops_count, smooth_ops_per_active, OpsBreakdown,
    ACCUMULATE_OPS_PER_EVENT, DIFF_OPS_PER_PIXEL_PER_MAP, EXP_EXTRA_OPS, SNAPSHOT_OPS_PER_ACTIVE,
};
pub use report::{
    metrics_csv, sweep_csv, write_metrics_csv, write_sweep_csv, METRICS_HEADER, SWEEP_HEADER,
};
pub use sweep::{
    calibrate, calibrate_gain, calibrate_thresholds, rate_sweep, threshold_sweep, Calibration,
    SweepPoint, CALIBRATION_WARMUP_US,
};
pub use truth::{FileTruth, GroundTruth, NoTruth, SceneTruth};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::farneback::{farneback_flow, FarnebackParams};
use crate::fusion::{FusedFlow, FusionParams, FusionState};
use crate::grid::{BinaryMap, FlowField, GridShape};
use crate::io::{EventStream, FrameSequence};
use crate::leaky::{LeakyFilter, LeakyParams};
use crate::metrics::{aee_masked, event_percent};

/// Which pixels enter the AEE of fused and frame-only flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Only pixels where the event pipeline produced an estimate.
    EventActivePixels,
    /// Every pixel with valid ground truth.
    #[default]
    AllGtPixels,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::EventActivePixels => "event_active_pixels",
            EvalMode::AllGtPixels => "all_gt_pixels",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "event_active_pixels" => Some(EvalMode::EventActivePixels),
            "all_gt_pixels" => Some(EvalMode::AllGtPixels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub leaky: LeakyParams,
    pub farneback: FarnebackParams,
    pub fusion: FusionParams,
    /// Event inferences per frame interval (`N`).
    pub rate_multiplier: usize,
    pub eval_mode: EvalMode,
    /// When off, every event flow is empty and the fused output is the
    /// frame flow.
    pub event_pipeline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            leaky: LeakyParams::default(),
            farneback: FarnebackParams::default(),
            fusion: FusionParams::default(),
            rate_multiplier: 4,
            eval_mode: EvalMode::default(),
            event_pipeline: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.leaky.validate()?;
        self.farneback.validate()?;
        self.fusion.validate()?;
        if self.rate_multiplier == 0 {
            return Err(Error::InvalidParam(
                "rate multiplier must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs of one run.
pub struct Dataset<'a> {
    pub events: &'a EventStream,
    pub frames: &'a FrameSequence,
    pub truth: &'a dyn GroundTruth,
}

impl Dataset<'_> {
    pub fn shape(&self) -> Result<GridShape> {
        let shape = self.events.shape();
        shape.check_same(&self.frames.shape())?;
        shape.require_pipeline()?;
        if self.frames.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "need at least 2 frames, got {}",
                self.frames.len()
            )));
        }
        Ok(shape)
    }
}

/// AEE of the three outputs over one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeeSet {
    pub fused: Option<f64>,
    pub frame_only: Option<f64>,
    pub event_only: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub frame_index: usize,
    pub slice_index: usize,
    pub t0_us: u64,
    pub t1_us: u64,
    /// Midpoint of the sub-slice; the evaluation timestamp.
    pub t_us: u64,
    /// False when no ground truth exists for this sub-slice.
    pub evaluated: bool,
    pub all_gt: AeeSet,
    pub event_active: AeeSet,
    /// AEE inside the fast-moving region over all ground-truth pixels.
    pub region: AeeSet,
    pub event_percent: f64,
    pub n_events: usize,
    pub active_pixels: usize,
    pub op_count: u64,
}

impl MetricsRow {
    pub fn aee(&self, mode: EvalMode) -> &AeeSet {
        match mode {
            EvalMode::EventActivePixels => &self.event_active,
            EvalMode::AllGtPixels => &self.all_gt,
        }
    }
}

/// Per sub-slice output handed to the caller of [`run_pipeline_with`].
pub struct StepOutput<'a> {
    pub row: &'a MetricsRow,
    pub fused: &'a FusedFlow,
    pub event_flow: &'a FlowField,
    pub frame_flow: &'a FlowField,
}

/// Sub-slice boundaries of `[t_a, t_b)` split into `n` integer-µs pieces.
pub fn sub_slices(t_a: u64, t_b: u64, n: usize) -> Vec<(u64, u64)> {
    let span = (t_b - t_a) as u128;
    let n128 = n as u128;
    let edge = |i: usize| t_a + (span * i as u128 / n128) as u64;
    (0..n).map(|i| (edge(i), edge(i + 1))).collect()
}

/// Frame flow for every consecutive pair, computed in parallel.
pub fn frame_flows(frames: &FrameSequence, params: &FarnebackParams) -> Result<Vec<FlowField>> {
    let list = frames.frames();
    (0..list.len().saturating_sub(1))
        .into_par_iter()
        .map(|k| farneback_flow(&list[k].image, &list[k + 1].image, params))
        .collect()
}

struct PreparedStep {
    frame_index: usize,
    slice_index: usize,
    t0: u64,
    t1: u64,
    n_events: usize,
    event_flow: FlowField,
    gt: Option<FlowField>,
    region: Option<BinaryMap>,
}

/// Everything a run needs that does not depend on the fusion parameters:
/// frame flows, event flows and ground truth per sub-slice.
pub struct PreparedRun {
    shape: GridShape,
    leaky: LeakyParams,
    eval_mode: EvalMode,
    frame_flows: Vec<FlowField>,
    steps: Vec<PreparedStep>,
}

impl PreparedRun {
    pub fn new(dataset: &Dataset<'_>, config: &RunConfig) -> Result<Self> {
        config.validate()?;
        dataset.shape()?;
        let flows = frame_flows(dataset.frames, &config.farneback)?;
        Self::with_frame_flows(dataset, config, flows)
    }

    /// Like [`PreparedRun::new`] but reuses frame flows computed earlier
    /// with the same Farneback parameters.
    pub fn with_frame_flows(
        dataset: &Dataset<'_>,
        config: &RunConfig,
        frame_flows: Vec<FlowField>,
    ) -> Result<Self> {
        config.validate()?;
        let shape = dataset.shape()?;
        let frames = dataset.frames.frames();
        if frame_flows.len() != frames.len() - 1 {
            return Err(Error::InvalidParam(format!(
                "expected {} frame flows, got {}",
                frames.len() - 1,
                frame_flows.len()
            )));
        }
        for f in &frame_flows {
            shape.check_same(&f.shape())?;
        }

        let mut leaky = LeakyFilter::new(shape, config.leaky)?;
        leaky.ingest(dataset.events.slice(0, frames[0].t))?;

        let mut bounds = Vec::new();
        for k in 0..frames.len() - 1 {
            for (i, (t0, t1)) in sub_slices(frames[k].t, frames[k + 1].t, config.rate_multiplier)
                .into_iter()
                .enumerate()
            {
                bounds.push((k, i, t0, t1));
            }
        }

        let mut event_flows = Vec::with_capacity(bounds.len());
        for &(_, _, t0, t1) in &bounds {
            let slice = dataset.events.slice(t0, t1);
            let flow = if config.event_pipeline {
                leaky.event_flow(slice, t0, t1)?
            } else {
                leaky.ingest(slice)?;
                FlowField::invalid(shape)
            };
            event_flows.push((slice.len(), flow));
        }

        let truth = dataset.truth;
        let gts: Vec<(Option<FlowField>, Option<BinaryMap>)> = bounds
            .par_iter()
            .map(|&(_, _, t0, t1)| {
                let mid = t0 + (t1 - t0) / 2;
                Ok((truth.flow_for(t0, t1, mid)?, truth.region_for(mid)?))
            })
            .collect::<Result<_>>()?;

        let steps = bounds
            .into_iter()
            .zip(event_flows)
            .zip(gts)
            .map(|(((k, i, t0, t1), (n_events, event_flow)), (gt, region))| {
                if let Some(g) = &gt {
                    shape.check_same(&g.shape())?;
                }
                Ok(PreparedStep {
                    frame_index: k,
                    slice_index: i,
                    t0,
                    t1,
                    n_events,
                    event_flow,
                    gt,
                    region,
                })
            })
            .collect::<Result<_>>()?;

        Ok(Self {
            shape,
            leaky: config.leaky,
            eval_mode: config.eval_mode,
            frame_flows,
            steps,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn eval_mode(&self) -> EvalMode {
        self.eval_mode
    }

    pub fn frame_flows(&self) -> &[FlowField] {
        &self.frame_flows
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Runs fusion over every sub-slice in order.
    pub fn fuse(&self, params: &FusionParams) -> Result<Vec<MetricsRow>> {
        self.fuse_with(params, |_| Ok(()))
    }

    pub fn fuse_with(
        &self,
        params: &FusionParams,
        mut sink: impl FnMut(&StepOutput<'_>) -> Result<()>,
    ) -> Result<Vec<MetricsRow>> {
        params.validate()?;
        let mut state = FusionState::new(self.shape);
        let mut rows = Vec::with_capacity(self.steps.len());
        let mut current_frame = usize::MAX;
        for step in &self.steps {
            if step.frame_index != current_frame {
                current_frame = step.frame_index;
                state.on_new_frame_inference(self.frame_flows[current_frame].clone(), params)?;
            }
            let fused = state.step(&step.event_flow, params)?;
            let frame_flow = &self.frame_flows[current_frame];
            let row = self.metrics_row(step, &fused, frame_flow, params)?;
            sink(&StepOutput {
                row: &row,
                fused: &fused,
                event_flow: &step.event_flow,
                frame_flow,
            })?;
            rows.push(row);
        }
        Ok(rows)
    }

    fn metrics_row(
        &self,
        step: &PreparedStep,
        fused: &FusedFlow,
        frame_flow: &FlowField,
        params: &FusionParams,
    ) -> Result<MetricsRow> {
        let active_mask = step.event_flow.valid_mask();
        let active_pixels = active_mask.count_ones();
        let pct = event_percent(&fused.source_mask, &fused.flow.valid_mask())?;
        let ops = ops_breakdown(
            &self.leaky,
            self.shape,
            step.n_events as u64,
            active_pixels as u64,
            params,
        )
        .total();

        let mut row = MetricsRow {
            frame_index: step.frame_index,
            slice_index: step.slice_index,
            t0_us: step.t0,
            t1_us: step.t1,
            t_us: step.t0 + (step.t1 - step.t0) / 2,
            evaluated: step.gt.is_some(),
            all_gt: AeeSet::default(),
            event_active: AeeSet::default(),
            region: AeeSet::default(),
            event_percent: pct.percent,
            n_events: step.n_events,
            active_pixels,
            op_count: ops,
        };
        if let Some(gt) = &step.gt {
            let event_only = mean_or_none(&step.event_flow, gt, None)?;
            row.all_gt = AeeSet {
                fused: mean_or_none(&fused.flow, gt, None)?,
                frame_only: mean_or_none(frame_flow, gt, None)?,
                event_only,
            };
            row.event_active = AeeSet {
                fused: mean_or_none(&fused.flow, gt, Some(&active_mask))?,
                frame_only: mean_or_none(frame_flow, gt, Some(&active_mask))?,
                event_only,
            };
            if let Some(region) = &step.region {
                row.region = AeeSet {
                    fused: mean_or_none(&fused.flow, gt, Some(region))?,
                    frame_only: mean_or_none(frame_flow, gt, Some(region))?,
                    event_only: mean_or_none(&step.event_flow, gt, Some(region))?,
                };
            }
        }
        Ok(row)
    }
}

fn mean_or_none(flow: &FlowField, gt: &FlowField, mask: Option<&BinaryMap>) -> Result<Option<f64>> {
    match aee_masked(flow, gt, mask) {
        Ok(r) => Ok(Some(r.mean)),
        Err(Error::NoOverlap) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Prepares and fuses in one call.
pub fn run_pipeline(dataset: &Dataset<'_>, config: &RunConfig) -> Result<Vec<MetricsRow>> {
    PreparedRun::new(dataset, config)?.fuse(&config.fusion)
}

pub fn run_pipeline_with(
    dataset: &Dataset<'_>,
    config: &RunConfig,
    sink: impl FnMut(&StepOutput<'_>) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    PreparedRun::new(dataset, config)?.fuse_with(&config.fusion, sink)
}

/// Run-level averages over rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSummary {
    pub mean_aee_fused: Option<f64>,
    pub mean_aee_frame_only: Option<f64>,
    pub mean_aee_event_only: Option<f64>,
    pub mean_region_aee_fused: Option<f64>,
    pub mean_region_aee_frame_only: Option<f64>,
    pub mean_event_percent: f64,
    pub mean_op_count: f64,
    pub evaluated_rows: usize,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(rows: &[MetricsRow], mode: EvalMode) -> RunSummary {
    let n = rows.len().max(1) as f64;
    RunSummary {
        mean_aee_fused: mean_of(rows.iter().map(|r| r.aee(mode).fused)),
        mean_aee_frame_only: mean_of(rows.iter().map(|r| r.aee(mode).frame_only)),
        mean_aee_event_only: mean_of(rows.iter().map(|r| r.aee(mode).event_only)),
        mean_region_aee_fused: mean_of(rows.iter().map(|r| r.region.fused)),
        mean_region_aee_frame_only: mean_of(rows.iter().map(|r| r.region.frame_only)),
        mean_event_percent: rows.iter().map(|r| r.event_percent).sum::<f64>() / n,
        mean_op_count: rows.iter().map(|r| r.op_count as f64).sum::<f64>() / n,
        evaluated_rows: rows.iter().filter(|r| r.evaluated).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_slices_tile_the_interval() {
        let s = sub_slices(1000, 51_001, 3);
        assert_eq!(s.first().unwrap().0, 1000);
        assert_eq!(s.last().unwrap().1, 51_001);
        for w in s.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn eval_mode_names_round_trip() {
        for m in [EvalMode::EventActivePixels, EvalMode::AllGtPixels] {
            assert_eq!(EvalMode::parse(m.name()), Some(m));
        }
    }
}
