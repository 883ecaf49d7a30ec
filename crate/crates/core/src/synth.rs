//! Synthetic scenes with exact ground-truth flow, and a DVS event model.
//!
//! Patterns move rigidly and are sampled bilinearly, so rendered intensity
//! is continuous in time. The event model follows the usual contrast-
//! threshold rule on log intensity with linear interpolation of crossing
//! times inside each simulation substep.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, FlowField, GridShape, ScalarMap};
use crate::io::{Event, EventStream, Frame, FrameSequence, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    /// Band-limited texture translating as a whole.
    TranslatingTexture,
    /// Straight vertical step edge; the bright side trails the motion.
    TranslatingEdge,
    /// Bright uniform square moving over a dark uniform background.
    MovingSquare,
    /// Bright square at `velocity` over a texture moving at `bg_velocity`.
    TwoSpeed,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::TranslatingTexture => "translating_texture",
            SceneKind::TranslatingEdge => "translating_edge",
            SceneKind::MovingSquare => "moving_square",
            SceneKind::TwoSpeed => "two_speed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SceneKind::TranslatingTexture,
            SceneKind::TranslatingEdge,
            SceneKind::MovingSquare,
            SceneKind::TwoSpeed,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub shape: GridShape,
    pub kind: SceneKind,
    /// Pattern (or foreground) velocity, px/s.
    pub velocity: [f64; 2],
    /// Background velocity for `TwoSpeed`, px/s.
    pub bg_velocity: [f64; 2],
    pub seed: u64,
    pub frame_rate: f64,
    pub duration_s: f64,
    /// Event-simulation substeps per frame interval.
    pub sim_substeps: usize,
    /// Square side for `MovingSquare` / `TwoSpeed`, px.
    pub fg_size: usize,
}

/// Substeps for the square scenes. Their sharp edges cross a pixel within a
/// few milliseconds, so with the default refractory period the event count
/// only settles (changes < 5% on doubling) from about 80 substeps up.
pub const SQUARE_SCENE_SUBSTEPS: usize = 80;

impl SceneConfig {
    /// The standard two-speed scene used by the benchmark harness.
    pub fn standard_two_speed(seed: u64) -> Self {
        Self {
            shape: GridShape::new(160, 120).expect("static shape"),
            kind: SceneKind::TwoSpeed,
            velocity: [400.0, 0.0],
            bg_velocity: [20.0, 0.0],
            seed,
            frame_rate: 10.0,
            duration_s: 0.3,
            sim_substeps: SQUARE_SCENE_SUBSTEPS,
            fg_size: 24,
        }
    }

    /// Reference configuration for each scene kind.
    pub fn standard(kind: SceneKind, seed: u64) -> Self {
        match kind {
            SceneKind::TwoSpeed => Self::standard_two_speed(seed),
            SceneKind::TranslatingEdge => Self::translating_edge(100.0, seed),
            SceneKind::TranslatingTexture => Self {
                shape: GridShape::new(128, 96).expect("static shape"),
                kind,
                velocity: [40.0, -20.0],
                bg_velocity: [0.0, 0.0],
                seed,
                frame_rate: 10.0,
                duration_s: 0.4,
                sim_substeps: 20,
                fg_size: 0,
            },
            SceneKind::MovingSquare => Self {
                velocity: [200.0, 0.0],
                bg_velocity: [0.0, 0.0],
                kind,
                ..Self::standard_two_speed(seed)
            },
        }
    }

    pub fn translating_edge(speed_px_s: f64, seed: u64) -> Self {
        Self {
            shape: GridShape::new(96, 64).expect("static shape"),
            kind: SceneKind::TranslatingEdge,
            velocity: [speed_px_s, 0.0],
            bg_velocity: [0.0, 0.0],
            seed,
            frame_rate: 10.0,
            duration_s: 0.4,
            sim_substeps: 20,
            fg_size: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .velocity
            .iter()
            .chain(&self.bg_velocity)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParam(
                "scene velocities must be finite".into(),
            ));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.sim_substeps < 4 {
            return Err(Error::InvalidParam(format!(
                "sim_substeps must be >= 4, got {}",
                self.sim_substeps
            )));
        }
        if matches!(self.kind, SceneKind::MovingSquare | SceneKind::TwoSpeed) && self.fg_size == 0 {
            return Err(Error::InvalidParam(
                "fg_size must be positive for square scenes".into(),
            ));
        }
        Ok(())
    }

    /// Frame period in µs (rounded).
    pub fn frame_interval_us(&self) -> u64 {
        (1e6 / self.frame_rate).round() as u64
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn frame_time_us(&self, k: usize) -> u64 {
        k as u64 * self.frame_interval_us()
    }

    pub fn duration_us(&self) -> u64 {
        self.frame_time_us(self.frame_count() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvsParams {
    /// Log-intensity step per event.
    pub contrast_threshold: f64,
    pub refractory_us: u64,
    pub log_eps: f64,
}

impl Default for DvsParams {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.2,
            refractory_us: 500,
            log_eps: 1e-3,
        }
    }
}

impl DvsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "contrast threshold must be positive, got {}",
                self.contrast_threshold
            )));
        }
        if !(self.log_eps > 0.0 && self.log_eps.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "log_eps must be positive, got {}",
                self.log_eps
            )));
        }
        Ok(())
    }
}

const TEXTURE_PERIOD: usize = 256;
const TEXTURE_OVERSAMPLE: usize = 4;
const TEXTURE_WAVES: usize = 48;
const TEXTURE_MIN_WAVELENGTH: f64 = 6.0;

/// Periodic band-limited noise, stored oversampled and read bilinearly.
#[derive(Debug, Clone)]
pub struct Texture {
    side: usize,
    grid: Vec<f32>,
}

impl Texture {
    /// Sum of seeded random plane waves with 1/|k| amplitudes, rescaled to `[lo, hi]`.
    pub fn new(seed: u64, lo: f64, hi: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kmax = (TEXTURE_PERIOD as f64 / TEXTURE_MIN_WAVELENGTH).floor() as i64;
        let mut waves = Vec::with_capacity(TEXTURE_WAVES);
        while waves.len() < TEXTURE_WAVES {
            let kx = rng.gen_range(-kmax..=kmax);
            let ky = rng.gen_range(-kmax..=kmax);
            let k = ((kx * kx + ky * ky) as f64).sqrt();
            if !(2.0..=kmax as f64).contains(&k) {
                continue;
            }
            let phase = rng.gen_range(0.0..2.0 * PI);
            waves.push((kx as f64, ky as f64, phase, 1.0 / k));
        }
        let side = TEXTURE_PERIOD * TEXTURE_OVERSAMPLE;
        let step = 2.0 * PI / side as f64;
        let mut acc = vec![0.0f64; side * side];
        // sin(a + b) = sin a cos b + cos a sin b, with a along x, b along y
        for &(kx, ky, phase, amp) in &waves {
            let (sx, cx): (Vec<f64>, Vec<f64>) =
                (0..side).map(|i| (kx * step * i as f64).sin_cos()).unzip();
            let (sy, cy): (Vec<f64>, Vec<f64>) = (0..side)
                .map(|j| (ky * step * j as f64 + phase).sin_cos())
                .unzip();
            for j in 0..side {
                let row = &mut acc[j * side..(j + 1) * side];
                for i in 0..side {
                    row[i] += amp * (sx[i] * cy[j] + cx[i] * sy[j]);
                }
            }
        }
        let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
        let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = acc
            .iter()
            .map(|&v| (lo + (hi - lo) * (v - min) / (max - min)) as f32)
            .collect();
        Self { side, grid }
    }

    /// Value at pixel coordinates `(x, y)`, periodic with period 256 px.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let s = TEXTURE_OVERSAMPLE as f64;
        let fx = (x * s).rem_euclid(self.side as f64);
        let fy = (y * s).rem_euclid(self.side as f64);
        let x0 = fx.floor() as usize % self.side;
        let y0 = fy.floor() as usize % self.side;
        let x1 = (x0 + 1) % self.side;
        let y1 = (y0 + 1) % self.side;
        let ax = fx - fx.floor();
        let ay = fy - fy.floor();
        let g = |x: usize, y: usize| self.grid[y * self.side + x] as f64;
        let top = g(x0, y0) + (g(x1, y0) - g(x0, y0)) * ax;
        let bot = g(x0, y1) + (g(x1, y1) - g(x0, y1)) * ax;
        top + (bot - top) * ay
    }
}

/// Linear interpolation of a 1-D indicator sampled on integers:
/// 1 on `[0, len)`, 0 elsewhere.
fn box_profile(xi: f64, len: usize) -> f64 {
    let k0 = xi.floor();
    let a = xi - k0;
    let ind = |k: f64| if k >= 0.0 && k < len as f64 { 1.0 } else { 0.0 };
    ind(k0) * (1.0 - a) + ind(k0 + 1.0) * a
}

/// Step sampled on integers: 1 for `k < 0`, 0 for `k >= 0`, linear between.
fn step_profile(xi: f64) -> f64 {
    let k0 = xi.floor();
    let a = xi - k0;
    let ind = |k: f64| if k < 0.0 { 1.0 } else { 0.0 };
    ind(k0) * (1.0 - a) + ind(k0 + 1.0) * a
}

const EDGE_BRIGHT: f64 = 0.8;
const EDGE_DARK: f64 = 0.2;
const SQUARE_BRIGHT: f64 = 0.95;
const SQUARE_DARK: f64 = 0.15;

/// A renderable scene.
#[derive(Debug, Clone)]
pub struct Scene {
    config: SceneConfig,
    texture: Option<Texture>,
}

impl Scene {
    pub fn new(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let texture = match config.kind {
            SceneKind::TranslatingTexture => Some(Texture::new(config.seed, 0.1, 0.9)),
            SceneKind::TwoSpeed => Some(Texture::new(config.seed, 0.1, 0.6)),
            _ => None,
        };
        Ok(Self { config, texture })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    fn check_time(&self, t_s: f64) -> Result<()> {
        let end = self.config.duration_us() as f64 * 1e-6;
        if !(0.0..=end + 1e-9).contains(&t_s) {
            return Err(Error::InvalidParam(format!(
                "time {t_s} s outside [0, {end}] s"
            )));
        }
        Ok(())
    }

    fn edge_origin(&self) -> f64 {
        let w = self.config.shape.width as f64;
        if self.config.velocity[0] >= 0.0 {
            (w / 4.0).floor()
        } else {
            w - 1.0 - (w / 4.0).floor()
        }
    }

    fn square_origin(&self) -> [f64; 2] {
        let s = self.config.shape;
        let size = self.config.fg_size as f64;
        let x = if self.config.velocity[0] >= 0.0 {
            (s.width as f64 / 8.0).floor()
        } else {
            s.width as f64 - (s.width as f64 / 8.0).floor() - size
        };
        [x, ((s.height as f64 - size) / 2.0).floor()]
    }

    /// Position offset of the square's top-left corner at time `t_s`.
    fn square_corner(&self, t_s: f64) -> [f64; 2] {
        let o = self.square_origin();
        [
            o[0] + self.config.velocity[0] * t_s,
            o[1] + self.config.velocity[1] * t_s,
        ]
    }

    fn intensity_at(&self, x: f64, y: f64, t_s: f64) -> f64 {
        let c = &self.config;
        match c.kind {
            SceneKind::TranslatingTexture => {
                let tex = self.texture.as_ref().expect("texture scene");
                tex.sample(x - c.velocity[0] * t_s, y - c.velocity[1] * t_s)
            }
            SceneKind::TranslatingEdge => {
                let xi = x - (self.edge_origin() + c.velocity[0] * t_s);
                // the bright side trails the motion
                let behind = if c.velocity[0] >= 0.0 {
                    step_profile(xi)
                } else {
                    step_profile(-xi)
                };
                EDGE_DARK + (EDGE_BRIGHT - EDGE_DARK) * behind
            }
            SceneKind::MovingSquare | SceneKind::TwoSpeed => {
                let corner = self.square_corner(t_s);
                let cover =
                    box_profile(x - corner[0], c.fg_size) * box_profile(y - corner[1], c.fg_size);
                let bg = match &self.texture {
                    Some(tex) => tex.sample(x - c.bg_velocity[0] * t_s, y - c.bg_velocity[1] * t_s),
                    None => SQUARE_DARK,
                };
                bg + (SQUARE_BRIGHT - bg) * cover
            }
        }
    }

    fn render_unchecked(&self, t_s: f64) -> ScalarMap {
        ScalarMap::from_fn(self.config.shape, |x, y| {
            self.intensity_at(x as f64, y as f64, t_s)
        })
    }

    /// Intensity frame at `t_us`.
    pub fn render(&self, t_us: u64) -> Result<ScalarMap> {
        let t_s = t_us as f64 * 1e-6;
        self.check_time(t_s)?;
        Ok(self.render_unchecked(t_s))
    }

    /// Pixels whose centre lies inside the moving square at `t_us`.
    pub fn foreground_mask(&self, t_us: u64) -> Result<BinaryMap> {
        let t_s = t_us as f64 * 1e-6;
        self.check_time(t_s)?;
        let c = &self.config;
        if !matches!(c.kind, SceneKind::MovingSquare | SceneKind::TwoSpeed) {
            return Ok(BinaryMap::zeros(c.shape));
        }
        let corner = self.square_corner(t_s);
        let size = c.fg_size as f64;
        Ok(BinaryMap::from_fn(c.shape, |x, y| {
            let dx = x as f64 - corner[0];
            let dy = y as f64 - corner[1];
            dx > -0.5 && dx < size - 0.5 && dy > -0.5 && dy < size - 0.5
        }))
    }

    /// True flow at `t_us` in pixels per frame interval.
    pub fn gt_flow(&self, t_us: u64) -> Result<FlowField> {
        let c = &self.config;
        let per_frame = |v: [f64; 2]| ((v[0] / c.frame_rate) as f32, (v[1] / c.frame_rate) as f32);
        let fg = per_frame(c.velocity);
        match c.kind {
            SceneKind::TranslatingTexture | SceneKind::TranslatingEdge => {
                self.check_time(t_us as f64 * 1e-6)?;
                Ok(FlowField::uniform(c.shape, fg.0, fg.1))
            }
            SceneKind::MovingSquare | SceneKind::TwoSpeed => {
                let mask = self.foreground_mask(t_us)?;
                let bg = if c.kind == SceneKind::TwoSpeed {
                    per_frame(c.bg_velocity)
                } else {
                    (0.0, 0.0)
                };
                Ok(FlowField::from_fn(c.shape, |x, y| {
                    Some(if mask.get(x, y) { fg } else { bg })
                }))
            }
        }
    }

    /// Frames at the configured frame rate over the whole duration.
    pub fn frames(&self) -> FrameSequence {
        let frames = (0..self.config.frame_count())
            .map(|k| {
                let t = self.config.frame_time_us(k);
                Frame {
                    t,
                    image: self.render_unchecked(t as f64 * 1e-6),
                }
            })
            .collect();
        FrameSequence::new(self.config.shape, frames).expect("uniform synthetic frames")
    }

    /// Log intensity `ln(I + eps)` at substep sample times.
    fn log_frame(&self, t_s: f64, eps: f64) -> Vec<f64> {
        self.render_unchecked(t_s)
            .values()
            .iter()
            .map(|&i| (i + eps).ln())
            .collect()
    }
}

/// Contrast-threshold event generation from log-intensity samples.
///
/// `times_us[j]` are sample instants and `log_at(j)` the row-major log
/// intensity there. Between samples the log intensity is taken to be linear.
/// Output is sorted by `(t, row-major pixel)`, keeping per-pixel order.
pub fn simulate_log_samples(
    shape: GridShape,
    times_us: &[f64],
    mut log_at: impl FnMut(usize) -> Vec<f64>,
    params: &DvsParams,
) -> Result<Vec<Event>> {
    params.validate()?;
    if times_us.is_empty() {
        return Ok(Vec::new());
    }
    let c = params.contrast_threshold;
    let mut reference = log_at(0);
    if reference.len() != shape.len() {
        return Err(Error::LengthMismatch {
            shape,
            len: reference.len(),
        });
    }
    let mut prev = reference.clone();
    let mut last_fire: Vec<Option<u64>> = vec![None; shape.len()];
    let mut tagged: Vec<(u64, usize, Polarity)> = Vec::new();
    for j in 1..times_us.len() {
        let cur = log_at(j);
        let (t0, t1) = (times_us[j - 1], times_us[j]);
        for (p, (&lp, &lc)) in prev.iter().zip(&cur).enumerate() {
            loop {
                let diff = lc - reference[p];
                if diff.abs() < c {
                    break;
                }
                let (target, polarity) = if diff > 0.0 {
                    (reference[p] + c, Polarity::On)
                } else {
                    (reference[p] - c, Polarity::Off)
                };
                let theta = if lc != lp {
                    ((target - lp) / (lc - lp)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let ts = (t0 + theta * (t1 - t0)).round() as u64;
                let allowed = last_fire[p].is_none_or(|lt| ts >= lt + params.refractory_us);
                if allowed {
                    tagged.push((ts, p, polarity));
                    last_fire[p] = Some(ts);
                }
                reference[p] = target;
            }
        }
        prev = cur;
    }
    tagged.sort_by_key(|&(t, p, _)| (t, p));
    Ok(tagged
        .into_iter()
        .map(|(t, p, polarity)| {
            Event::new(
                t,
                (p % shape.width) as u16,
                (p / shape.width) as u16,
                polarity,
            )
        })
        .collect())
}

/// DVS events for the whole scene duration.
pub fn dvs_simulate(scene: &Scene, params: &DvsParams) -> Result<EventStream> {
    let c = scene.config();
    let substeps = c.sim_substeps;
    let interval = c.frame_interval_us() as f64;
    let total = (c.frame_count() - 1) * substeps;
    let times: Vec<f64> = (0..=total)
        .map(|j| j as f64 * interval / substeps as f64)
        .collect();
    let events = simulate_log_samples(
        c.shape,
        &times,
        |j| scene.log_frame(times[j] * 1e-6, params.log_eps),
        params,
    )?;
    EventStream::new(c.shape, events)
}
