//! Dual-pipeline optical flow: a leaky event-driven filter for fast, noisy
//! flow, a polynomial-expansion (Farneback) frame flow for slow, accurate
//! flow, and per-pixel confidence fusion of the two.

pub mod cli;
pub mod color;
pub mod config;
pub mod error;
pub mod farneback;
pub mod fusion;
pub mod grid;
pub mod harness;
pub mod io;
pub mod leaky;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{BinaryMap, FlowField, GridShape, ScalarMap};
