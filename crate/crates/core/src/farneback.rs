//! Dense two-frame flow by polynomial expansion (Farneback).
//!
//! Each frame is locally approximated by `f(p) ≈ pᵀAp + bᵀp + c` using a
//! Gaussian-weighted least-squares fit over a `poly_n`×`poly_n` window. For a
//! pure translation `d`, `A` is unchanged and `b₂ = b₁ − 2A d`, so `d` follows
//! from a small linear solve; the solve is pooled over a window and refined
//! coarse-to-fine on an image pyramid.
//!
//! Coordinates: `x` is the column, `y` the row, flow `(u, v)` moves a pixel
//! of the first frame to `(x + u, y + v)` in the second.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FlowField, GridShape, ScalarMap, MIN_PIPELINE_SIDE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarnebackParams {
    pub pyramid_levels: usize,
    pub pyr_scale: f64,
    pub poly_n: usize,
    pub poly_sigma: f64,
    pub avg_window: usize,
    pub iterations: usize,
    /// Pixels whose pooled system has `det(G) <= det_eps` are left invalid.
    pub det_eps: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyr_scale: 0.5,
            poly_n: 7,
            poly_sigma: 1.5,
            avg_window: 15,
            iterations: 3,
            det_eps: 1e-6,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if !(self.pyr_scale > 0.0 && self.pyr_scale < 1.0) {
            return bad(format!(
                "pyr_scale must be in (0, 1), got {}",
                self.pyr_scale
            ));
        }
        if self.poly_n < 3 || self.poly_n.is_multiple_of(2) {
            return bad(format!("poly_n must be odd and >= 3, got {}", self.poly_n));
        }
        if !(self.poly_sigma > 0.0 && self.poly_sigma.is_finite()) {
            return bad(format!(
                "poly_sigma must be positive, got {}",
                self.poly_sigma
            ));
        }
        if self.avg_window == 0 {
            return bad("avg_window must be positive".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.det_eps > 0.0 && self.det_eps.is_finite()) {
            return bad(format!("det_eps must be positive, got {}", self.det_eps));
        }
        Ok(())
    }

    /// Width of the border computed from replicated pixels.
    pub fn border_width(&self) -> usize {
        self.poly_n.max(self.avg_window) / 2
    }
}

/// Per-pixel quadratic model `pᵀAp + bᵀp + c` with `A = [[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpField {
    shape: GridShape,
    /// Coefficients per pixel: `[a11, a12, a22, b1, b2, c]`.
    coeffs: Vec<[f64; 6]>,
    border: usize,
}

impl PolyExpField {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn at(&self, x: usize, y: usize) -> PolyCoeffs {
        let c = self.coeffs[self.shape.index(x, y)];
        PolyCoeffs {
            a11: c[0],
            a12: c[1],
            a22: c[2],
            b1: c[3],
            b2: c[4],
            c: c[5],
        }
    }

    /// Pixels closer than this to the edge were fitted on replicated data.
    pub fn border(&self) -> usize {
        self.border
    }

    pub fn is_reliable(&self, x: usize, y: usize) -> bool {
        let b = self.border;
        x >= b && y >= b && x + b < self.shape.width && y + b < self.shape.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyCoeffs {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

fn gaussian_weights(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as i64;
    let mut g: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Weighted least-squares quadratic fit at every pixel, computed separably.
pub fn poly_expansion(frame: &ScalarMap, params: &FarnebackParams) -> PolyExpField {
    let shape = frame.shape();
    let (w, h) = (shape.width, shape.height);
    let n = params.poly_n / 2;
    let g = gaussian_weights(n, params.poly_sigma);
    let offs: Vec<f64> = (-(n as i64)..=n as i64).map(|i| i as f64).collect();

    // Moments of the 1-D applicability.
    let m0: f64 = g.iter().sum();
    let m2: f64 = g.iter().zip(&offs).map(|(g, o)| g * o * o).sum();
    let m4: f64 = g.iter().zip(&offs).map(|(g, o)| g * o * o * o * o).sum();

    // Gram block for the even basis functions {1, x², y²}.
    let gram = [
        [m0 * m0, m2 * m0, m2 * m0],
        [m2 * m0, m4 * m0, m2 * m2],
        [m2 * m0, m2 * m2, m4 * m0],
    ];
    let inv = invert3(&gram);

    // Vertical pass: y-moments of order 0..2 for every pixel.
    let vals = frame.values();
    let mut vert = vec![[0.0f64; 3]; shape.len()];
    vert.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = [0.0f64; 3];
            for (k, (&gk, &o)) in g.iter().zip(&offs).enumerate() {
                let yy = clamp_index(y as i64 + k as i64 - n as i64, h);
                let f = vals[yy * w + x] * gk;
                acc[0] += f;
                acc[1] += f * o;
                acc[2] += f * o * o;
            }
            *out = acc;
        }
    });

    let mut coeffs = vec![[0.0f64; 6]; shape.len()];
    coeffs.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let (mut s00, mut s10, mut s20, mut s01, mut s11, mut s02) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (k, (&gk, &o)) in g.iter().zip(&offs).enumerate() {
                let xx = clamp_index(x as i64 + k as i64 - n as i64, w);
                let v = vert[y * w + xx];
                s00 += gk * v[0];
                s10 += gk * o * v[0];
                s20 += gk * o * o * v[0];
                s01 += gk * v[1];
                s11 += gk * o * v[1];
                s02 += gk * v[2];
            }
            let c0 = inv[0][0] * s00 + inv[0][1] * s20 + inv[0][2] * s02;
            let cxx = inv[1][0] * s00 + inv[1][1] * s20 + inv[1][2] * s02;
            let cyy = inv[2][0] * s00 + inv[2][1] * s20 + inv[2][2] * s02;
            let cx = s10 / (m2 * m0);
            let cy = s01 / (m2 * m0);
            let cxy = s11 / (m2 * m2);
            *out = [cxx, cxy / 2.0, cyy, cx, cy, c0];
        }
    });

    PolyExpField {
        shape,
        coeffs,
        border: n,
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c =
        |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [
            c(1, 1, 2, 2) / det,
            -c(0, 1, 2, 2) / det,
            c(0, 1, 1, 2) / det,
        ],
        [
            -c(1, 0, 2, 2) / det,
            c(0, 0, 2, 2) / det,
            -c(0, 0, 1, 2) / det,
        ],
        [
            c(1, 0, 2, 1) / det,
            -c(0, 0, 2, 1) / det,
            c(0, 0, 1, 1) / det,
        ],
    ]
}

/// Dense displacement estimate, finite everywhere, plus solve validity.
#[derive(Debug, Clone)]
struct DenseFlow {
    shape: GridShape,
    uv: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl DenseFlow {
    fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            uv: vec![[0.0; 2]; shape.len()],
            valid: vec![true; shape.len()],
        }
    }

    fn from_field(flow: &FlowField) -> Self {
        let shape = flow.shape();
        let uv = (0..shape.len())
            .map(|i| {
                flow.get_index(i)
                    .map_or([0.0; 2], |(u, v)| [u as f64, v as f64])
            })
            .collect();
        Self {
            shape,
            uv,
            valid: flow.valid().to_vec(),
        }
    }

    fn to_field(&self) -> FlowField {
        let mut f = FlowField::invalid(self.shape);
        for (i, (uv, &ok)) in self.uv.iter().zip(&self.valid).enumerate() {
            if ok {
                f.set_index(i, uv[0] as f32, uv[1] as f32);
            }
        }
        f
    }

    /// Bilinear resample to `shape`, scaling vectors by the size ratio.
    fn resized(&self, shape: GridShape) -> Self {
        let sx = self.shape.width as f64 / shape.width as f64;
        let sy = self.shape.height as f64 / shape.height as f64;
        let mut uv = vec![[0.0; 2]; shape.len()];
        for y in 0..shape.height {
            for x in 0..shape.width {
                let fx = (x as f64 + 0.5) * sx - 0.5;
                let fy = (y as f64 + 0.5) * sy - 0.5;
                let s = bilinear(self.shape, fx, fy, |i| self.uv[i]);
                uv[shape.index(x, y)] = [s[0] / sx, s[1] / sy];
            }
        }
        Self {
            shape,
            uv,
            valid: vec![true; shape.len()],
        }
    }
}

fn bilinear<const K: usize>(
    shape: GridShape,
    fx: f64,
    fy: f64,
    at: impl Fn(usize) -> [f64; K],
) -> [f64; K] {
    let fx = fx.clamp(0.0, (shape.width - 1) as f64);
    let fy = fy.clamp(0.0, (shape.height - 1) as f64);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(shape.width - 1);
    let y1 = (y0 + 1).min(shape.height - 1);
    let ax = fx - x0 as f64;
    let ay = fy - y0 as f64;
    let p00 = at(shape.index(x0, y0));
    let p10 = at(shape.index(x1, y0));
    let p01 = at(shape.index(x0, y1));
    let p11 = at(shape.index(x1, y1));
    let mut out = [0.0; K];
    for k in 0..K {
        let top = p00[k] + (p10[k] - p00[k]) * ax;
        let bot = p01[k] + (p11[k] - p01[k]) * ax;
        out[k] = top + (bot - top) * ay;
    }
    out
}

/// Sum over a `win`×`win` box with replicated edges, rows then columns.
fn box_sum<const K: usize>(shape: GridShape, data: &[[f64; K]], win: usize) -> Vec<[f64; K]> {
    let (w, h) = (shape.width, shape.height);
    let r = (win / 2) as i64;
    let mut rows = vec![[0.0f64; K]; shape.len()];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = [0.0f64; K];
            for j in -r..=r {
                let v = data[y * w + clamp_index(x as i64 + j, w)];
                for k in 0..K {
                    acc[k] += v[k];
                }
            }
            *out = acc;
        }
    });
    let mut out = vec![[0.0f64; K]; shape.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = [0.0f64; K];
            for j in -r..=r {
                let v = rows[clamp_index(y as i64 + j, h) * w + x];
                for k in 0..K {
                    acc[k] += v[k];
                }
            }
            *o = acc;
        }
    });
    out
}

fn displacement_dense(
    p1: &PolyExpField,
    p2: &PolyExpField,
    prior: &DenseFlow,
    avg_window: usize,
    det_eps: f64,
) -> DenseFlow {
    let shape = p1.shape;
    let (w, h) = (shape.width, shape.height);
    // Per pixel: [G11, G12, G22, h1, h2] before pooling.
    let mut terms = vec![[0.0f64; 5]; shape.len()];
    terms.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let [pu, pv] = prior.uv[i];
            let (ru, rv) = (pu.round(), pv.round());
            let sx = clamp_index(x as i64 + ru as i64, w);
            let sy = clamp_index(y as i64 + rv as i64, h);
            let c1 = p1.coeffs[i];
            let c2 = p2.coeffs[sy * w + sx];
            let a11 = (c1[0] + c2[0]) / 2.0;
            let a12 = (c1[1] + c2[1]) / 2.0;
            let a22 = (c1[2] + c2[2]) / 2.0;
            let db1 = -(c2[3] - c1[3]) / 2.0 + a11 * ru + a12 * rv;
            let db2 = -(c2[4] - c1[4]) / 2.0 + a12 * ru + a22 * rv;
            *out = [
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * db1 + a12 * db2,
                a12 * db1 + a22 * db2,
            ];
        }
    });
    let pooled = box_sum(shape, &terms, avg_window);
    let mut uv = prior.uv.clone();
    let mut valid = vec![false; shape.len()];
    for (i, t) in pooled.iter().enumerate() {
        let [g11, g12, g22, h1, h2] = *t;
        let det = g11 * g22 - g12 * g12;
        if det > det_eps {
            uv[i] = [(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det];
            valid[i] = true;
        }
    }
    DenseFlow { shape, uv, valid }
}

/// One pooled displacement solve around `prior`.
///
/// `p2` is sampled at the prior displacement rounded to whole pixels; the
/// same rounded displacement enters the right-hand side, so the result is an
/// absolute displacement. Pixels with `det(G) <= det_eps` come back invalid.
pub fn displacement_step(
    p1: &PolyExpField,
    p2: &PolyExpField,
    prior: &FlowField,
    avg_window: usize,
    det_eps: f64,
) -> Result<FlowField> {
    p1.shape.check_same(&p2.shape)?;
    p1.shape.check_same(&prior.shape())?;
    let dense = displacement_dense(p1, p2, &DenseFlow::from_field(prior), avg_window, det_eps);
    Ok(dense.to_field())
}

pub fn gaussian_blur(img: &ScalarMap, sigma: f64) -> ScalarMap {
    let shape = img.shape();
    let (w, h) = (shape.width, shape.height);
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let g = gaussian_weights(radius, sigma);
    let r = radius as i64;
    let src = img.values();
    let mut tmp = vec![0.0f64; shape.len()];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = (-r..=r)
                .zip(&g)
                .map(|(j, gk)| gk * src[y * w + clamp_index(x as i64 + j, w)])
                .sum();
        }
    });
    let mut out = vec![0.0f64; shape.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = (-r..=r)
                .zip(&g)
                .map(|(j, gk)| gk * tmp[clamp_index(y as i64 + j, h) * w + x])
                .sum();
        }
    });
    ScalarMap::from_vec(shape, out).expect("finite blur")
}

fn resize_bilinear(img: &ScalarMap, shape: GridShape) -> ScalarMap {
    let src = img.shape();
    let sx = src.width as f64 / shape.width as f64;
    let sy = src.height as f64 / shape.height as f64;
    ScalarMap::from_fn(shape, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        bilinear(src, fx, fy, |i| [img.values()[i]])[0]
    })
}

/// Pyramid level shapes, finest first. Levels that would fall below the
/// minimum side are dropped.
pub fn pyramid_shapes(shape: GridShape, params: &FarnebackParams) -> Vec<GridShape> {
    let mut shapes = vec![shape];
    for k in 1..params.pyramid_levels {
        let s = params.pyr_scale.powi(k as i32);
        let w = (shape.width as f64 * s).round() as usize;
        let h = (shape.height as f64 * s).round() as usize;
        if w < MIN_PIPELINE_SIDE || h < MIN_PIPELINE_SIDE {
            warn!(
                "pyramid reduced from {} to {} levels for a {shape} frame",
                params.pyramid_levels,
                shapes.len()
            );
            break;
        }
        shapes.push(GridShape::new(w, h).expect("positive level size"));
    }
    shapes
}

/// Two-frame coarse-to-fine flow in pixels per frame interval.
pub fn farneback_flow(
    f1: &ScalarMap,
    f2: &ScalarMap,
    params: &FarnebackParams,
) -> Result<FlowField> {
    params.validate()?;
    let shape = f1.shape();
    shape.check_same(&f2.shape())?;
    shape.require_pipeline()?;
    let shapes = pyramid_shapes(shape, params);

    let level_image = |img: &ScalarMap, level: usize| -> ScalarMap {
        if level == 0 {
            return img.clone();
        }
        let scale = params.pyr_scale.powi(level as i32);
        let sigma = (1.0 / scale - 1.0) * 0.5;
        resize_bilinear(&gaussian_blur(img, sigma), shapes[level])
    };

    let mut flow: Option<DenseFlow> = None;
    for level in (0..shapes.len()).rev() {
        let ls = shapes[level];
        let p1 = poly_expansion(&level_image(f1, level), params);
        let p2 = poly_expansion(&level_image(f2, level), params);
        let mut cur = match flow.take() {
            None => DenseFlow::zeros(ls),
            Some(prev) => prev.resized(ls),
        };
        for _ in 0..params.iterations {
            cur = displacement_dense(&p1, &p2, &cur, params.avg_window, params.det_eps);
        }
        flow = Some(cur);
    }
    Ok(flow.expect("at least one level").to_field())
}
