//! Dense per-pixel maps shared by every stage of the system.
//!
//! All maps are stored row-major (`index = y * width + x`). Flow vectors are
//! expressed in pixels per frame interval; the event pipeline rescales into
//! that unit so the two pipelines can be compared directly.

use std::fmt;

use crate::error::{Error, Result};

/// Magnitude written into the components of an invalid flow pixel.
pub const UNKNOWN_FLOW: f32 = 1e10;

/// Smallest side accepted by the dense flow pipelines.
pub const MIN_PIPELINE_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
}

impl GridShape {
    /// Any non-empty grid. Pipelines additionally call [`GridShape::require_pipeline`].
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(Error::InvalidShape { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn require_pipeline(&self) -> Result<()> {
        if self.width < MIN_PIPELINE_SIDE || self.height < MIN_PIPELINE_SIDE {
            return Err(Error::InvalidShape {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub(crate) fn check_same(&self, other: &GridShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                left: *self,
                right: *other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Real-valued map (activations, distances, beliefs, intensities).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    shape: GridShape,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn zeros(shape: GridShape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: GridShape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                shape,
                len: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(
                "scalar map contains non-finite values".into(),
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                values.push(f(x, y));
            }
        }
        Self { shape, values }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.shape.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.shape.index(x, y);
        self.values[i] = value;
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Per-pixel {0, 1} map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    shape: GridShape,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn zeros(shape: GridShape) -> Self {
        Self::filled(shape, false)
    }

    pub fn ones(shape: GridShape) -> Self {
        Self::filled(shape, true)
    }

    pub fn filled(shape: GridShape, bit: bool) -> Self {
        Self {
            shape,
            bits: vec![bit; shape.len()],
        }
    }

    pub fn from_vec(shape: GridShape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::LengthMismatch {
                shape,
                len: bits.len(),
            });
        }
        Ok(Self { shape, bits })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                bits.push(f(x, y));
            }
        }
        Self { shape, bits }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[self.shape.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, bit: bool) {
        let i = self.shape.index(x, y);
        self.bits[i] = bit;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &BinaryMap) -> Result<BinaryMap> {
        self.shape.check_same(&other.shape)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(BinaryMap {
            shape: self.shape,
            bits,
        })
    }

    pub fn or(&self, other: &BinaryMap) -> Result<BinaryMap> {
        self.shape.check_same(&other.shape)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(BinaryMap {
            shape: self.shape,
            bits,
        })
    }

    /// 0.0 / 1.0 view, handy for element-wise arithmetic.
    pub fn to_scalar(&self) -> ScalarMap {
        ScalarMap {
            shape: self.shape,
            values: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Dense flow with a validity mask.
///
/// Invalid pixels always hold [`UNKNOWN_FLOW`] in both components; valid
/// pixels always hold finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    shape: GridShape,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    /// All pixels invalid.
    pub fn invalid(shape: GridShape) -> Self {
        Self {
            shape,
            u: vec![UNKNOWN_FLOW; shape.len()],
            v: vec![UNKNOWN_FLOW; shape.len()],
            valid: vec![false; shape.len()],
        }
    }

    /// All pixels valid with the same vector.
    pub fn uniform(shape: GridShape, u: f32, v: f32) -> Self {
        let mut flow = Self::invalid(shape);
        for i in 0..shape.len() {
            flow.set_index(i, u, v);
        }
        flow
    }

    pub fn from_fn(
        shape: GridShape,
        mut f: impl FnMut(usize, usize) -> Option<(f32, f32)>,
    ) -> Self {
        let mut flow = Self::invalid(shape);
        for y in 0..shape.height {
            for x in 0..shape.width {
                if let Some((u, v)) = f(x, y) {
                    flow.set(x, y, u, v);
                }
            }
        }
        flow
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mask(&self) -> BinaryMap {
        BinaryMap {
            shape: self.shape,
            bits: self.valid.clone(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        self.get_index(self.shape.index(x, y))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<(f32, f32)> {
        if self.valid[i] {
            Some((self.u[i], self.v[i]))
        } else {
            None
        }
    }

    /// Stores a vector; non-finite components make the pixel invalid.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = self.shape.index(x, y);
        self.set_index(i, u, v);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, u: f32, v: f32) {
        if u.is_finite() && v.is_finite() {
            self.u[i] = u;
            self.v[i] = v;
            self.valid[i] = true;
        } else {
            self.invalidate_index(i);
        }
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.shape.index(x, y);
        self.invalidate_index(i);
    }

    #[inline]
    pub fn invalidate_index(&mut self, i: usize) {
        self.u[i] = UNKNOWN_FLOW;
        self.v[i] = UNKNOWN_FLOW;
        self.valid[i] = false;
    }

    /// Copies pixel `i` of `src` (value and validity) into `self`.
    #[inline]
    pub(crate) fn copy_pixel_from(&mut self, src: &FlowField, i: usize) {
        self.u[i] = src.u[i];
        self.v[i] = src.v[i];
        self.valid[i] = src.valid[i];
    }

    /// Largest vector magnitude over valid pixels (0 when none are valid).
    pub fn max_magnitude(&self) -> f64 {
        (0..self.shape.len())
            .filter_map(|i| self.get_index(i))
            .map(|(u, v)| (u as f64).hypot(v as f64))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rejects_empty() {
        assert!(GridShape::new(0, 4).is_err());
        assert!(GridShape::new(4, 0).is_err());
        let s = GridShape::new(4, 3).unwrap();
        assert_eq!(s.len(), 12);
        assert!(s.require_pipeline().is_err());
        assert!(GridShape::new(8, 8).unwrap().require_pipeline().is_ok());
    }

    #[test]
    fn invalid_pixels_carry_sentinel() {
        let s = GridShape::new(3, 2).unwrap();
        let mut f = FlowField::uniform(s, 1.0, 2.0);
        f.invalidate(1, 1);
        let i = s.index(1, 1);
        assert_eq!(f.u()[i], UNKNOWN_FLOW);
        assert_eq!(f.v()[i], UNKNOWN_FLOW);
        assert_eq!(f.get(1, 1), None);
        f.set(0, 0, f32::NAN, 0.0);
        assert_eq!(f.get(0, 0), None);
        assert_eq!(f.valid_count(), 4);
    }

    #[test]
    fn scalar_map_rejects_nan() {
        let s = GridShape::new(2, 1).unwrap();
        assert!(ScalarMap::from_vec(s, vec![0.0, f64::NAN]).is_err());
        assert!(ScalarMap::from_vec(s, vec![0.0]).is_err());
    }
}
