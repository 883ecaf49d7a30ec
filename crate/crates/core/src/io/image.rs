use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::color::RgbImage;
use crate::error::{Error, Result};
use crate::grid::{GridShape, ScalarMap};

/// Allowed deviation of each frame interval from the first one.
pub const FRAME_SPACING_TOLERANCE_US: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: u64,
    /// Intensities in [0, 1].
    pub image: ScalarMap,
}

/// Grayscale frames with strictly increasing, uniformly spaced timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    shape: GridShape,
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(shape: GridShape, frames: Vec<Frame>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.image.shape() != shape {
                return Err(Error::format(
                    format!("frame {i}"),
                    format!("shape {} differs from {shape}", f.image.shape()),
                ));
            }
        }
        check_timing(frames.iter().map(|f| f.t), |i| format!("frame {i}"))?;
        Ok(Self { shape, frames })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame period in µs (`None` with fewer than two frames).
    pub fn interval_us(&self) -> Option<u64> {
        match self.frames.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }
}

fn check_timing(times: impl Iterator<Item = u64>, loc: impl Fn(usize) -> String) -> Result<()> {
    let mut prev: Option<u64> = None;
    let mut spacing: Option<u64> = None;
    for (i, t) in times.enumerate() {
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::format(
                    loc(i),
                    format!("timestamp {t} not after previous {p}"),
                ));
            }
            let d = t - p;
            match spacing {
                None => spacing = Some(d),
                Some(s) if d.abs_diff(s) > FRAME_SPACING_TOLERANCE_US => {
                    return Err(Error::format(
                        loc(i),
                        format!("frame interval {d} µs deviates from {s} µs"),
                    ))
                }
                _ => {}
            }
        }
        prev = Some(t);
    }
    Ok(())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(image: &ScalarMap) -> Vec<u8> {
    let shape = image.shape();
    let mut out = format!("P5\n{} {}\n255\n", shape.width, shape.height).into_bytes();
    out.extend(image.values().iter().map(|&v| quantize(v)));
    out
}

/// Binary 8-bit PGM (P5, maxval 255) → intensities divided by 255.
pub fn decode_pgm(bytes: &[u8], name: &str) -> Result<ScalarMap> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(name, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(Error::format(
            name,
            format!("expected P5 PGM, found {:?}", tokens[0]),
        ));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format(name, format!("bad {what} {s:?}")))
    };
    let w = parse(&tokens[1], "width")?;
    let h = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            name,
            format!("maxval {maxval} unsupported, need 255"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let shape =
        GridShape::new(w, h).map_err(|_| Error::format(name, format!("invalid size {w}x{h}")))?;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != shape.len() {
        return Err(Error::format(
            name,
            format!(
                "raster has {} bytes, expected {}",
                raster.len(),
                shape.len()
            ),
        ));
    }
    let values = raster.iter().map(|&b| b as f64 / 255.0).collect();
    ScalarMap::from_vec(shape, values)
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    super::write_bytes(path, &out)
}

/// Reads an index of `timestamp_us filename` lines; filenames resolve
/// relative to the index file's directory.
pub fn read_frames(index: &Path) -> Result<FrameSequence> {
    let dir = index.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = String::from_utf8(super::read_bytes(index)?)
        .map_err(|_| Error::format(index.display().to_string(), "index is not UTF-8"))?;
    let mut frames = Vec::new();
    let mut shape: Option<(GridShape, PathBuf)> = None;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = format!("{}: line {}", index.display(), n + 1);
        let mut parts = line.split_whitespace();
        let (Some(ts), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(
                loc,
                format!("expected `timestamp filename`, got {line:?}"),
            ));
        };
        let t: u64 = ts
            .parse()
            .map_err(|_| Error::format(&loc, format!("bad timestamp {ts:?}")))?;
        entries.push((t, dir.join(file), loc));
    }
    check_timing(entries.iter().map(|e| e.0), |i| entries[i].2.clone())?;
    for (t, path, _) in entries {
        let image = decode_pgm(&super::read_bytes(&path)?, &path.display().to_string())?;
        match &shape {
            None => shape = Some((image.shape(), path.clone())),
            Some((s, first)) if *s != image.shape() => {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("frame is {} but {} is {s}", image.shape(), first.display()),
                ))
            }
            _ => {}
        }
        frames.push(Frame { t, image });
    }
    let (shape, _) =
        shape.ok_or_else(|| Error::format(index.display().to_string(), "index lists no frames"))?;
    FrameSequence::new(shape, frames)
}

/// Writes `frame_NNNN.pgm` files plus an index; returns the index path.
pub fn write_frames(dir: &Path, index_name: &str, seq: &FrameSequence) -> Result<PathBuf> {
    let mut index = String::new();
    for (i, f) in seq.frames().iter().enumerate() {
        let name = format!("frame_{i:04}.pgm");
        super::write_bytes(&dir.join(&name), &encode_pgm(&f.image))?;
        let _ = writeln!(index, "{} {}", f.t, name);
    }
    let path = dir.join(index_name);
    super::write_bytes(&path, index.as_bytes())?;
    Ok(path)
}
