//! Analytic arithmetic-operation count for one event-pipeline prediction
//! (leaky filter plus fusion; the frame flow is assumed to arrive from
//! elsewhere).
//!
//! Per-unit costs:
//!
//! | stage       | unit                    | ops                        |
//! |-------------|-------------------------|----------------------------|
//! | accumulate  | event                   | `3 + EXP_EXTRA_OPS`        |
//! | snapshot    | active pixel            | `3 + EXP_EXTRA_OPS`        |
//! | differences | pixel × 2 maps          | 2                          |
//! | smoothing   | active pixel × 2 maps   | `2k² + 1`                  |
//! | gain        | active pixel × 2 maps   | 1                          |
//! | fusion      | pixel                   | 17 (literal) / 16 (single) |
//!
//! An `exp` is charged as one op plus `EXP_EXTRA_OPS`. Fusion per pixel is
//! two squared distances (5 each), two compares, one AND, one or two
//! accumulations, one confidence compare and one select.

use crate::fusion::{Accumulation, FusionParams};
use crate::grid::GridShape;
use crate::leaky::LeakyParams;

pub const EXP_EXTRA_OPS: u64 = 8;
pub const ACCUMULATE_OPS_PER_EVENT: u64 = 3 + EXP_EXTRA_OPS;
pub const SNAPSHOT_OPS_PER_ACTIVE: u64 = 3 + EXP_EXTRA_OPS;
pub const DIFF_OPS_PER_PIXEL_PER_MAP: u64 = 2;

pub fn fusion_ops_per_pixel(accumulation: Accumulation) -> u64 {
    match accumulation {
        Accumulation::Literal => 17,
        Accumulation::Single => 16,
    }
}

pub fn smooth_ops_per_active(k: usize) -> u64 {
    let k = k as u64;
    2 * k * k + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpsBreakdown {
    pub accumulate: u64,
    pub snapshot: u64,
    pub diff: u64,
    pub smooth: u64,
    pub gain: u64,
    pub fusion: u64,
}

impl OpsBreakdown {
    pub fn total(&self) -> u64 {
        self.accumulate + self.snapshot + self.diff + self.smooth + self.gain + self.fusion
    }
}

pub fn ops_breakdown(
    leaky: &LeakyParams,
    shape: GridShape,
    n_events: u64,
    n_active: u64,
    fusion: &FusionParams,
) -> OpsBreakdown {
    let pixels = shape.len() as u64;
    OpsBreakdown {
        accumulate: n_events * ACCUMULATE_OPS_PER_EVENT,
        snapshot: n_active * SNAPSHOT_OPS_PER_ACTIVE,
        diff: pixels * 2 * DIFF_OPS_PER_PIXEL_PER_MAP,
        smooth: n_active * 2 * smooth_ops_per_active(leaky.smooth_k),
        gain: n_active * 2,
        fusion: pixels * fusion_ops_per_pixel(fusion.accumulation),
    }
}

/// Count with the active-pixel total bounded by `min(n_events, pixels)`.
pub fn ops_count(
    leaky: &LeakyParams,
    shape: GridShape,
    n_events: u64,
    fusion: &FusionParams,
) -> u64 {
    let n_active = n_events.min(shape.len() as u64);
    ops_breakdown(leaky, shape, n_events, n_active, fusion).total()
}
