use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridShape;

pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
pub const EVT1_HEADER_LEN: usize = 16;
pub const EVT1_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_i8(p: i8) -> Option<Self> {
        match p {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// One brightness-change record. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

/// Time-ordered events on a fixed sensor grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    shape: GridShape,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates coordinates and non-decreasing timestamps.
    pub fn new(shape: GridShape, events: Vec<Event>) -> Result<Self> {
        let mut last = 0u64;
        for (i, e) in events.iter().enumerate() {
            check_event(shape, e, last, || format!("event {i}"))?;
            last = e.t;
        }
        Ok(Self { shape, events })
    }

    pub fn empty(shape: GridShape) -> Self {
        Self {
            shape,
            events: Vec::new(),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t0 <= t < t1`.
    pub fn slice(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }

    /// Horizontal mirror `x -> W-1-x`.
    pub fn mirrored_x(&self) -> Self {
        let w = self.shape.width as u16;
        Self {
            shape: self.shape,
            events: self
                .events
                .iter()
                .map(|e| Event {
                    x: w - 1 - e.x,
                    ..*e
                })
                .collect(),
        }
    }
}

fn check_event(
    shape: GridShape,
    e: &Event,
    last_t: u64,
    location: impl Fn() -> String,
) -> Result<()> {
    if e.x as usize >= shape.width || e.y as usize >= shape.height {
        return Err(Error::format(
            location(),
            format!("coordinate ({}, {}) outside {shape}", e.x, e.y),
        ));
    }
    if e.t < last_t {
        return Err(Error::format(
            location(),
            format!("timestamp {} precedes previous {last_t}", e.t),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// `.csv` → CSV, anything else → EVT1 binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Bin,
        }
    }
}

pub fn encode_events_bin(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVT1_HEADER_LEN + EVT1_RECORD_LEN * stream.len());
    out.extend_from_slice(EVT1_MAGIC);
    out.extend_from_slice(&(stream.shape.width as u16).to_le_bytes());
    out.extend_from_slice(&(stream.shape.height as u16).to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.as_i8() as u8);
    }
    out
}

pub fn decode_events_bin(bytes: &[u8], name: &str) -> Result<EventStream> {
    if bytes.len() < EVT1_HEADER_LEN {
        return Err(Error::format(name, "truncated EVT1 header"));
    }
    if &bytes[0..4] != EVT1_MAGIC {
        return Err(Error::format(name, "bad magic, expected EVT1"));
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let h = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let shape = GridShape::new(w, h)
        .map_err(|_| Error::format(name, format!("invalid sensor size {w}x{h}")))?;
    let payload = &bytes[EVT1_HEADER_LEN..];
    let expected = (count as u128) * EVT1_RECORD_LEN as u128;
    if payload.len() as u128 != expected {
        return Err(Error::format(
            name,
            format!(
                "header declares {count} events ({expected} bytes) but payload has {} bytes",
                payload.len()
            ),
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut last = 0u64;
    for (i, rec) in payload.chunks_exact(EVT1_RECORD_LEN).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = rec[12] as i8;
        let polarity = Polarity::from_i8(p)
            .ok_or_else(|| Error::format(format!("{name}: record {i}"), format!("polarity {p}")))?;
        let e = Event { t, x, y, polarity };
        check_event(shape, &e, last, || format!("{name}: record {i}"))?;
        last = t;
        events.push(e);
    }
    Ok(EventStream { shape, events })
}

pub fn encode_events_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 16);
    for e in &stream.events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_i8());
    }
    out
}

pub fn decode_events_csv(text: &str, shape: GridShape, name: &str) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut last = 0u64;
    for (n, line) in text.lines().enumerate() {
        let loc = || format!("{name}: line {}", n + 1);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::format(
                loc(),
                format!("expected t,x,y,p, got {line:?}"),
            ));
        }
        let t: u64 = fields[0]
            .parse()
            .map_err(|_| Error::format(loc(), format!("bad timestamp {:?}", fields[0])))?;
        let x: u16 = fields[1]
            .parse()
            .map_err(|_| Error::format(loc(), format!("bad x {:?}", fields[1])))?;
        let y: u16 = fields[2]
            .parse()
            .map_err(|_| Error::format(loc(), format!("bad y {:?}", fields[2])))?;
        let polarity = fields[3]
            .parse::<i8>()
            .ok()
            .and_then(Polarity::from_i8)
            .ok_or_else(|| {
                Error::format(
                    loc(),
                    format!("polarity must be 1 or -1, got {:?}", fields[3]),
                )
            })?;
        let e = Event { t, x, y, polarity };
        check_event(shape, &e, last, loc)?;
        last = t;
        events.push(e);
    }
    Ok(EventStream { shape, events })
}

pub fn write_events_bin(path: &Path, stream: &EventStream) -> Result<()> {
    super::write_bytes(path, &encode_events_bin(stream))
}

pub fn read_events_bin(path: &Path) -> Result<EventStream> {
    let bytes = super::read_bytes(path)?;
    decode_events_bin(&bytes, &path.display().to_string())
}

pub fn write_events_csv(path: &Path, stream: &EventStream) -> Result<()> {
    super::write_bytes(path, encode_events_csv(stream).as_bytes())
}

/// CSV carries no sensor size, so the grid must be supplied.
pub fn read_events_csv(path: &Path, shape: GridShape) -> Result<EventStream> {
    let bytes = super::read_bytes(path)?;
    let name = path.display().to_string();
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(&name, "not UTF-8"))?;
    decode_events_csv(text, shape, &name)
}

pub fn write_events(path: &Path, format: EventFormat, stream: &EventStream) -> Result<()> {
    match format {
        EventFormat::Csv => write_events_csv(path, stream),
        EventFormat::Bin => write_events_bin(path, stream),
    }
}

pub fn read_events(
    path: &Path,
    format: EventFormat,
    shape: Option<GridShape>,
) -> Result<EventStream> {
    match format {
        EventFormat::Bin => read_events_bin(path),
        EventFormat::Csv => {
            let shape = shape.ok_or_else(|| {
                Error::format(
                    path.display().to_string(),
                    "CSV events need an explicit sensor size",
                )
            })?;
            read_events_csv(path, shape)
        }
    }
}
