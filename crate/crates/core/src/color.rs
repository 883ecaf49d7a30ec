//! Flow visualisation on an HSV color wheel.
//!
//! Hue is the flow angle `atan2(v, u)` in degrees (0° red, 120° green,
//! 240° blue; `v` points down the image), saturation is
//! `min(|flow| / max_mag, 1)` and value is fixed at 1, so zero flow renders
//! white. Invalid pixels are black.

use crate::error::{Error, Result};
use crate::grid::FlowField;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

fn hsv_to_rgb(hue_deg: f64, sat: f64) -> [u8; 3] {
    let h = hue_deg / 60.0;
    let c = sat;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = 1.0 - c;
    let q = |ch: f64| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

pub fn flow_color(u: f32, v: f32, max_mag: f64) -> [u8; 3] {
    let (u, v) = (u as f64, v as f64);
    let mag = u.hypot(v);
    let sat = (mag / max_mag).min(1.0);
    let mut hue = v.atan2(u).to_degrees();
    if hue < 0.0 {
        hue += 360.0;
    }
    if hue >= 360.0 {
        hue -= 360.0;
    }
    hsv_to_rgb(hue, sat)
}

pub fn flow_to_color(flow: &FlowField, max_mag: f64) -> Result<RgbImage> {
    if max_mag.is_nan() || max_mag <= 0.0 || !max_mag.is_finite() {
        return Err(Error::InvalidParam(format!(
            "max_mag must be positive, got {max_mag}"
        )));
    }
    let shape = flow.shape();
    let mut data = Vec::with_capacity(shape.len() * 3);
    for i in 0..shape.len() {
        let rgb = match flow.get_index(i) {
            Some((u, v)) => flow_color(u, v, max_mag),
            None => [0, 0, 0],
        };
        data.extend_from_slice(&rgb);
    }
    Ok(RgbImage {
        width: shape.width,
        height: shape.height,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    #[test]
    fn wheel_conventions() {
        assert_eq!(flow_color(0.0, 0.0, 2.0), [255, 255, 255]);
        assert_eq!(flow_color(2.0, 0.0, 2.0), [255, 0, 0]);
        assert_eq!(flow_color(20.0, 0.0, 2.0), flow_color(2.0, 0.0, 2.0));
        assert_eq!(flow_color(-3.0, 0.0, 3.0), [0, 255, 255]);
        assert_eq!(flow_color(0.0, 1.0, 1.0), [128, 255, 0]);
    }

    #[test]
    fn invalid_is_black_and_max_mag_checked() {
        let s = GridShape::new(2, 1).unwrap();
        let mut f = FlowField::uniform(s, 0.0, 0.0);
        f.invalidate(1, 0);
        let img = flow_to_color(&f, 1.0).unwrap();
        assert_eq!(img.pixel(0, 0), [255, 255, 255]);
        assert_eq!(img.pixel(1, 0), [0, 0, 0]);
        assert!(flow_to_color(&f, 0.0).is_err());
        assert!(flow_to_color(&f, -1.0).is_err());
    }
}
