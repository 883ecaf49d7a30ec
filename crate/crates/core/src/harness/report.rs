use std::fmt::Write as _;
use std::path::Path;

use super::{MetricsRow, SweepPoint};
use crate::error::Result;
use crate::io::write_bytes;

pub const METRICS_HEADER: &str = "frame_index,slice_index,t0_us,t1_us,t_us,evaluated,\
aee_fused,aee_frame_only,aee_event_only,\
aee_fused_active,aee_frame_only_active,\
aee_fused_region,aee_frame_only_region,aee_event_only_region,\
event_percent,n_events,active_pixels,op_count";

pub const SWEEP_HEADER: &str = "thresh_farneback,thresh_leakycnn,rate_multiplier,evaluated_rows,\
mean_aee_fused,mean_aee_frame_only,mean_aee_event_only,\
mean_region_aee_fused,mean_region_aee_frame_only,mean_event_percent,mean_op_count";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{}",
            r.frame_index,
            r.slice_index,
            r.t0_us,
            r.t1_us,
            r.t_us,
            r.evaluated as u8,
            opt(r.all_gt.fused),
            opt(r.all_gt.frame_only),
            opt(r.all_gt.event_only),
            opt(r.event_active.fused),
            opt(r.event_active.frame_only),
            opt(r.region.fused),
            opt(r.region.frame_only),
            opt(r.region.event_only),
            r.event_percent,
            r.n_events,
            r.active_pixels,
            r.op_count,
        );
    }
    out
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        let s = &p.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.6},{:.1}",
            p.thresh_farneback,
            p.thresh_leakycnn,
            p.rate_multiplier,
            s.evaluated_rows,
            opt(s.mean_aee_fused),
            opt(s.mean_aee_frame_only),
            opt(s.mean_aee_event_only),
            opt(s.mean_region_aee_fused),
            opt(s.mean_region_aee_frame_only),
            s.mean_event_percent,
            s.mean_op_count,
        );
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_bytes(path, metrics_csv(rows).as_bytes())
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    write_bytes(path, sweep_csv(points).as_bytes())
}
