//! Confidence-map fusion of event flow into frame flow.
//!
//! Per event inference, a pixel earns belief when its event flow is far from
//! the latest frame flow (condition 1) yet close to the previous event flow
//! (condition 2). Beliefs accumulate into a confidence map; where confidence
//! exceeds a threshold the fused output takes the event flow, elsewhere the
//! frame flow. Nothing is blended: every fused pixel is a copy of one input.

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, FlowField, GridShape, ScalarMap};
use crate::metrics::flow_distance_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Accumulation {
    /// `belief = belief_prev + b; confidence += belief`, as printed.
    Literal,
    /// `confidence += b`.
    Single,
}

impl Accumulation {
    pub fn name(self) -> &'static str {
        match self {
            Accumulation::Literal => "literal",
            Accumulation::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "literal" => Some(Accumulation::Literal),
            "single" => Some(Accumulation::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Condition 1 fires when event flow is farther than this from frame flow.
    pub thresh_farneback: f64,
    /// Condition 2 fires when event flow is closer than this to the previous event flow.
    pub thresh_leakycnn: f64,
    /// Strict `>` cutoff on the confidence map.
    pub thresh_confidence: f64,
    /// Carry-over of belief and confidence when a new frame flow arrives.
    pub rho: f64,
    pub accumulation: Accumulation,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            thresh_farneback: 4.0,
            thresh_leakycnn: 8.0,
            thresh_confidence: 2.0,
            rho: 0.0,
            accumulation: Accumulation::Literal,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("thresh_farneback", self.thresh_farneback),
            ("thresh_leakycnn", self.thresh_leakycnn),
            ("thresh_confidence", self.thresh_confidence),
        ] {
            // 0 and +inf are legitimate "never fires" settings for sweeps
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParam(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFlags {
    /// Condition 1: event flow disagrees with frame flow.
    pub err_frame: BinaryMap,
    /// Condition 2: event flow agrees with the previous event flow.
    pub err_event: BinaryMap,
}

/// Both flags are 0 wherever either compared flow is missing.
pub fn condition_flags(
    of_frame: &FlowField,
    of_event_t: &FlowField,
    of_event_prev: &FlowField,
    params: &FusionParams,
) -> Result<ConditionFlags> {
    let (d_frame, m_frame) = flow_distance_map(of_frame, of_event_t)?;
    let (d_event, m_event) = flow_distance_map(of_event_t, of_event_prev)?;
    let shape = of_event_t.shape();
    let mut err_frame = BinaryMap::zeros(shape);
    let mut err_event = BinaryMap::zeros(shape);
    for i in 0..shape.len() {
        if !of_event_t.valid()[i] {
            continue;
        }
        err_frame.bits_mut()[i] =
            m_frame.bits()[i] && d_frame.values()[i] > params.thresh_farneback;
        err_event.bits_mut()[i] = m_event.bits()[i] && d_event.values()[i] < params.thresh_leakycnn;
    }
    Ok(ConditionFlags {
        err_frame,
        err_event,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFlow {
    pub flow: FlowField,
    /// Pixels taken from the event flow.
    pub source_mask: BinaryMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    shape: GridShape,
    of_frame: FlowField,
    of_event_prev: FlowField,
    belief_prev: ScalarMap,
    confidence: ScalarMap,
}

impl FusionState {
    pub fn new(shape: GridShape) -> Self {
        Self {
            shape,
            of_frame: FlowField::invalid(shape),
            of_event_prev: FlowField::invalid(shape),
            belief_prev: ScalarMap::zeros(shape),
            confidence: ScalarMap::zeros(shape),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn frame_flow(&self) -> &FlowField {
        &self.of_frame
    }

    pub fn previous_event_flow(&self) -> &FlowField {
        &self.of_event_prev
    }

    pub fn belief(&self) -> &ScalarMap {
        &self.belief_prev
    }

    pub fn confidence(&self) -> &ScalarMap {
        &self.confidence
    }

    /// Installs a new frame flow and scales belief and confidence by `rho`.
    pub fn on_new_frame_inference(
        &mut self,
        of_frame_new: FlowField,
        params: &FusionParams,
    ) -> Result<()> {
        self.shape.check_same(&of_frame_new.shape())?;
        self.of_frame = of_frame_new;
        self.belief_prev.scale(params.rho);
        self.confidence.scale(params.rho);
        Ok(())
    }

    pub fn update_confidence(
        &mut self,
        flags: &ConditionFlags,
        accumulation: Accumulation,
    ) -> Result<()> {
        self.shape.check_same(&flags.err_frame.shape())?;
        self.shape.check_same(&flags.err_event.shape())?;
        let f = flags.err_frame.bits();
        let e = flags.err_event.bits();
        let belief = self.belief_prev.values_mut();
        let conf = self.confidence.values_mut();
        for i in 0..self.shape.len() {
            let b = if f[i] && e[i] { 1.0 } else { 0.0 };
            belief[i] += b;
            conf[i] += match accumulation {
                Accumulation::Literal => belief[i],
                Accumulation::Single => b,
            };
        }
        Ok(())
    }

    /// Composes the output and then records `of_event_t` as the previous
    /// event flow.
    pub fn fuse(&mut self, of_event_t: &FlowField, params: &FusionParams) -> Result<FusedFlow> {
        self.shape.check_same(&of_event_t.shape())?;
        let mut flow = FlowField::invalid(self.shape);
        let mut source_mask = BinaryMap::zeros(self.shape);
        for i in 0..self.shape.len() {
            let from_events =
                of_event_t.valid()[i] && self.confidence.values()[i] > params.thresh_confidence;
            if from_events {
                flow.copy_pixel_from(of_event_t, i);
                source_mask.bits_mut()[i] = true;
            } else {
                flow.copy_pixel_from(&self.of_frame, i);
            }
        }
        self.of_event_prev = of_event_t.clone();
        Ok(FusedFlow { flow, source_mask })
    }

    /// Conditions, confidence update and composition for one event inference.
    pub fn step(&mut self, of_event_t: &FlowField, params: &FusionParams) -> Result<FusedFlow> {
        let flags = condition_flags(&self.of_frame, of_event_t, &self.of_event_prev, params)?;
        self.update_confidence(&flags, params.accumulation)?;
        self.fuse(of_event_t, params)
    }
}
