//! File formats: EVT1/CSV event streams, `.flo` flow fields, PGM frame
//! sequences and PPM color renders.
//!
//! Every reader reports malformed input with a location (file, line or
//! record index); nothing is silently repaired.

mod events;
mod flo;
mod image;

pub use events::{
    decode_events_bin, decode_events_csv, encode_events_bin, encode_events_csv, read_events,
    read_events_bin, read_events_csv, write_events, write_events_bin, write_events_csv, Event,
    EventFormat, EventStream, Polarity, EVT1_HEADER_LEN, EVT1_MAGIC, EVT1_RECORD_LEN,
};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use image::{
    decode_pgm, encode_pgm, read_frames, write_frames, write_ppm, Frame, FrameSequence,
    FRAME_SPACING_TOLERANCE_US,
};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
