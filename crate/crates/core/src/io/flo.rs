use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FlowField, GridShape, UNKNOWN_FLOW};

pub const FLO_MAGIC: f32 = 202021.25;

/// Components above this magnitude decode as invalid.
const UNKNOWN_THRESHOLD: f32 = 1e9;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let shape = flow.shape();
    let mut out = Vec::with_capacity(12 + 8 * shape.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(shape.width as i32).to_le_bytes());
    out.extend_from_slice(&(shape.height as i32).to_le_bytes());
    for i in 0..shape.len() {
        let (u, v) = flow.get_index(i).unwrap_or((UNKNOWN_FLOW, UNKNOWN_FLOW));
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], name: &str) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(name, "truncated .flo header"));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::format(
            name,
            format!("bad magic {magic}, expected {FLO_MAGIC}"),
        ));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::format(name, format!("invalid size {w}x{h}")));
    }
    let shape = GridShape::new(w as usize, h as usize)
        .map_err(|_| Error::format(name, format!("invalid size {w}x{h}")))?;
    let payload = &bytes[12..];
    let expected = shape.len() * 8;
    if payload.len() != expected {
        return Err(Error::format(
            name,
            format!(
                "size mismatch: header {w}x{h} needs {expected} payload bytes, found {}",
                payload.len()
            ),
        ));
    }
    let mut flow = FlowField::invalid(shape);
    for (i, px) in payload.chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(px[0..4].try_into().unwrap());
        let v = f32::from_le_bytes(px[4..8].try_into().unwrap());
        let unknown = !(u.abs() <= UNKNOWN_THRESHOLD && v.abs() <= UNKNOWN_THRESHOLD);
        if !unknown {
            flow.set_index(i, u, v);
        }
    }
    Ok(flow)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    super::write_bytes(path, &encode_flo(flow))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = super::read_bytes(path)?;
    decode_flo(&bytes, &path.display().to_string())
}
