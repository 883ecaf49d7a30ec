use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, FlowField};
use crate::io::read_flo;
use crate::synth::Scene;

/// Source of reference flow for evaluating one sub-slice.
pub trait GroundTruth: Sync {
    /// Reference flow for the sub-slice `[t0, t1)` with midpoint `t_mid`,
    /// or `None` when no reference exists for it.
    fn flow_for(&self, t0: u64, t1: u64, t_mid: u64) -> Result<Option<FlowField>>;

    /// Pixels of the fast-moving region at `t_mid`, if the source knows it.
    fn region_for(&self, _t_mid: u64) -> Result<Option<BinaryMap>> {
        Ok(None)
    }
}

/// Exact flow from a synthetic scene, sampled at the sub-slice midpoint.
pub struct SceneTruth<'a> {
    pub scene: &'a Scene,
}

impl GroundTruth for SceneTruth<'_> {
    fn flow_for(&self, _t0: u64, _t1: u64, t_mid: u64) -> Result<Option<FlowField>> {
        self.scene.gt_flow(t_mid).map(Some)
    }

    fn region_for(&self, t_mid: u64) -> Result<Option<BinaryMap>> {
        use crate::synth::SceneKind;
        match self.scene.config().kind {
            SceneKind::TwoSpeed | SceneKind::MovingSquare => {
                self.scene.foreground_mask(t_mid).map(Some)
            }
            _ => Ok(None),
        }
    }
}

/// `.flo` files listed in an index of `timestamp_us filename` lines.
///
/// A sub-slice uses the entry inside `[t0, t1)` nearest to its midpoint.
#[derive(Debug, Clone)]
pub struct FileTruth {
    entries: Vec<(u64, PathBuf)>,
}

impl FileTruth {
    pub fn load(index: &Path) -> Result<Self> {
        let dir = index.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = std::fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{}: line {}", index.display(), n + 1);
            let mut parts = line.split_whitespace();
            let (Some(ts), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::format(
                    loc(),
                    format!("expected `timestamp filename`, got {line:?}"),
                ));
            };
            let t: u64 = ts
                .parse()
                .map_err(|_| Error::format(loc(), format!("bad timestamp {ts:?}")))?;
            if let Some((prev, _)) = entries.last() {
                if t <= *prev {
                    return Err(Error::format(
                        loc(),
                        format!("timestamp {t} not after {prev}"),
                    ));
                }
            }
            entries.push((t, dir.join(file)));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u64, PathBuf)] {
        &self.entries
    }
}

impl GroundTruth for FileTruth {
    fn flow_for(&self, t0: u64, t1: u64, t_mid: u64) -> Result<Option<FlowField>> {
        let lo = self.entries.partition_point(|e| e.0 < t0);
        let hi = self.entries.partition_point(|e| e.0 < t1);
        let best = self.entries[lo..hi.max(lo)]
            .iter()
            .min_by_key(|e| (e.0.abs_diff(t_mid), e.0));
        best.map(|(_, path)| read_flo(path)).transpose()
    }
}

/// No reference flow: every row is reported unevaluated.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoTruth;

impl GroundTruth for NoTruth {
    fn flow_for(&self, _t0: u64, _t1: u64, _t_mid: u64) -> Result<Option<FlowField>> {
        Ok(None)
    }
}
