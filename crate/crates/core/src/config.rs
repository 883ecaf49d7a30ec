//! Plain-text `key = value` configuration with a fixed schema.
//!
//! Values resolve as command-line override > config file > built-in
//! default. Every key is checked against [`SCHEMA`]; unknown keys and
//! malformed values are [`Error::Config`] errors naming the source.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::farneback::FarnebackParams;
use crate::fusion::{Accumulation, FusionParams};
use crate::grid::GridShape;
use crate::harness::{EvalMode, RunConfig};
use crate::leaky::{LeakyParams, DEFAULT_GAIN};
use crate::synth::{DvsParams, SceneConfig, SceneKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Float,
    Uint,
    Bool,
    Text,
    /// One of a fixed set of names.
    Choice(&'static [&'static str]),
    /// Comma-separated floats.
    FloatList,
    /// Comma-separated unsigned integers.
    UintList,
    /// `x,y` pair of floats.
    Vec2,
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub kind: ValueKind,
    /// Empty means "unset" (scene keys then follow the scene kind's
    /// reference configuration; paths are absent).
    pub default: &'static str,
    pub help: &'static str,
}

const SCENES: &[&str] = &[
    "translating_texture",
    "translating_edge",
    "moving_square",
    "two_speed",
];
const ACCUMULATIONS: &[&str] = &["literal", "single"];
const EVAL_MODES: &[&str] = &["event_active_pixels", "all_gt_pixels"];
const EVENT_FORMATS: &[&str] = &["bin", "csv"];

macro_rules! key {
    ($k:expr, $kind:expr, $d:expr, $h:expr) => {
        KeySpec {
            key: $k,
            kind: $kind,
            default: $d,
            help: $h,
        }
    };
}

use ValueKind::*;

pub const SCHEMA: &[KeySpec] = &[
    key!("seed", Uint, "1", "seed for every random choice"),
    key!("threads", Uint, "0", "worker threads; 0 uses all cores"),
    key!(
        "events",
        Text,
        "",
        "event file (.csv or EVT1 binary); empty synthesizes from scene.*"
    ),
    key!("events.width", Uint, "", "sensor width for CSV event files"),
    key!(
        "events.height",
        Uint,
        "",
        "sensor height for CSV event files"
    ),
    key!(
        "events.slice_us",
        Uint,
        "25000",
        "slice length for flow-events"
    ),
    key!("frames", Text, "", "frame index file"),
    key!("gt", Text, "", "ground-truth .flo index file"),
    key!("out", Text, "out", "output directory"),
    key!("scene.kind", Choice(SCENES), "two_speed", "synthetic scene"),
    key!("scene.width", Uint, "", "scene width, px"),
    key!("scene.height", Uint, "", "scene height, px"),
    key!("scene.velocity", Vec2, "", "foreground velocity, px/s"),
    key!("scene.bg_velocity", Vec2, "", "background velocity, px/s"),
    key!("scene.frame_rate", Float, "", "frame rate, Hz"),
    key!("scene.duration_s", Float, "", "duration, s"),
    key!(
        "scene.substeps",
        Uint,
        "",
        "event-simulation substeps per frame interval"
    ),
    key!("scene.fg_size", Uint, "", "foreground square side, px"),
    key!(
        "synth.format",
        Choice(EVENT_FORMATS),
        "bin",
        "event file format written by synth"
    ),
    key!(
        "synth.gt_per_interval",
        Uint,
        "16",
        "ground-truth fields per frame interval"
    ),
    key!(
        "dvs.contrast_threshold",
        Float,
        "0.2",
        "log-intensity step per event"
    ),
    key!(
        "dvs.refractory_us",
        Uint,
        "500",
        "per-pixel refractory period"
    ),
    key!("dvs.log_eps", Float, "0.001", "offset inside the logarithm"),
    key!("leaky.tau_us", Float, "30000", "activation decay constant"),
    key!("leaky.smooth_k", Uint, "5", "smoothing kernel side (odd)"),
    key!(
        "leaky.act_threshold",
        Float,
        "0.1",
        "activation cutoff for active pixels"
    ),
    key!(
        "leaky.gain",
        Float,
        "",
        "activation difference to px/frame; empty uses the calibrated default"
    ),
    key!("farneback.pyramid_levels", Uint, "3", "pyramid levels"),
    key!(
        "farneback.pyr_scale",
        Float,
        "0.5",
        "scale between pyramid levels"
    ),
    key!("farneback.poly_n", Uint, "7", "polynomial-expansion window"),
    key!(
        "farneback.poly_sigma",
        Float,
        "1.5",
        "polynomial-expansion Gaussian sigma"
    ),
    key!("farneback.avg_window", Uint, "15", "pooling window"),
    key!("farneback.iterations", Uint, "3", "iterations per level"),
    key!(
        "farneback.det_eps",
        Float,
        "1e-6",
        "determinant cutoff for valid pixels"
    ),
    key!(
        "fusion.thresh_farneback",
        Float,
        "4",
        "condition 1 distance threshold"
    ),
    key!(
        "fusion.thresh_leakycnn",
        Float,
        "8",
        "condition 2 distance threshold"
    ),
    key!(
        "fusion.thresh_confidence",
        Float,
        "2",
        "confidence cutoff (strict)"
    ),
    key!(
        "fusion.rho",
        Float,
        "0",
        "confidence carry-over at a new frame flow"
    ),
    key!(
        "fusion.accumulation",
        Choice(ACCUMULATIONS),
        "literal",
        "confidence recurrence"
    ),
    key!(
        "run.rate_multiplier",
        Uint,
        "4",
        "event inferences per frame interval"
    ),
    key!(
        "run.eval_mode",
        Choice(EVAL_MODES),
        "all_gt_pixels",
        "evaluation set for summary AEE"
    ),
    key!(
        "run.event_pipeline",
        Bool,
        "true",
        "disable to get the frame-only baseline"
    ),
    key!(
        "sweep.thresh_farneback",
        FloatList,
        "1,2,4,8,16",
        "threshold sweep axis"
    ),
    key!(
        "sweep.thresh_leakycnn",
        FloatList,
        "0.5,1,2,4,8",
        "threshold sweep axis"
    ),
    key!("sweep.rates", UintList, "1,2,4,8", "rate sweep values"),
    key!(
        "viz.enabled",
        Bool,
        "false",
        "write PPM renders next to fused flow"
    ),
    key!(
        "viz.max_mag",
        Float,
        "0",
        "magnitude at full saturation; 0 uses the field maximum"
    ),
];

pub fn spec_for(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

fn bad(source: &str, key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{source}: {key} = {value:?}: expected {what}"))
}

fn check_value(spec: &KeySpec, value: &str, source: &str) -> Result<()> {
    if value.is_empty() {
        return if spec.default.is_empty() {
            Ok(())
        } else {
            Err(bad(source, spec.key, value, "a value"))
        };
    }
    let float = |s: &str| s.trim().parse::<f64>().ok().filter(|v| !v.is_nan());
    let uint = |s: &str| s.trim().parse::<u64>().ok();
    let ok = match spec.kind {
        Float => float(value).is_some(),
        Uint => uint(value).is_some(),
        Bool => matches!(value, "true" | "false"),
        Text => true,
        Choice(names) => names.contains(&value),
        FloatList => value.split(',').all(|s| float(s).is_some()),
        UintList => value.split(',').all(|s| uint(s).is_some()),
        Vec2 => {
            let parts: Vec<_> = value.split(',').collect();
            parts.len() == 2 && parts.iter().all(|s| float(s).is_some_and(f64::is_finite))
        }
    };
    if ok {
        Ok(())
    } else {
        let what = match spec.kind {
            Float => "a number".to_string(),
            Uint => "a non-negative integer".to_string(),
            Bool => "true or false".to_string(),
            Text => unreachable!(),
            Choice(names) => format!("one of {}", names.join(", ")),
            FloatList => "comma-separated numbers".to_string(),
            UintList => "comma-separated non-negative integers".to_string(),
            Vec2 => "two comma-separated numbers".to_string(),
        };
        Err(bad(source, spec.key, value, &what))
    }
}

/// Splits `key = value` (or `key=value`), trimming both sides.
pub fn parse_assignment(text: &str) -> Option<(String, String)> {
    let (k, v) = text.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
}

/// Fully resolved configuration: one value for every schema key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: SCHEMA
                .iter()
                .map(|s| (s.key, s.default.to_string()))
                .collect(),
        }
    }
}

impl Config {
    /// Parses config-file text; `name` labels error locations.
    pub fn parse_file_text(text: &str, name: &str) -> Result<Vec<(String, String, String)>> {
        let mut out = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let source = format!("{name}: line {}", n + 1);
            let Some((k, v)) = parse_assignment(line) else {
                return Err(Error::Config(format!(
                    "{source}: expected `key = value`, got {line:?}"
                )));
            };
            out.push((k, v, source));
        }
        Ok(out)
    }

    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v, source) in Self::parse_file_text(&text, &path.display().to_string())? {
                cfg.set_from(&k, &v, &source)?;
            }
        }
        for (k, v) in overrides {
            cfg.set_from(k, v, "command line")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_from(key, value, "override")
    }

    fn set_from(&mut self, key: &str, value: &str, source: &str) -> Result<()> {
        let spec =
            spec_for(key).ok_or_else(|| Error::Config(format!("{source}: unknown key {key:?}")))?;
        check_value(spec, value, source)?;
        self.values.insert(spec.key, value.to_string());
        Ok(())
    }

    /// Builds every parameter struct once so range errors surface at load
    /// time as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParam(m) => Error::Config(m),
            other => other,
        };
        let scene = self.scene_config().map_err(as_config)?;
        scene.validate().map_err(as_config)?;
        self.dvs_params().validate().map_err(as_config)?;
        self.run_config().validate().map_err(as_config)?;
        self.event_shape()?;
        if self.float_list("sweep.thresh_farneback").is_empty()
            || self.float_list("sweep.thresh_leakycnn").is_empty()
        {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if self.uint_list("sweep.rates").contains(&0) {
            return Err(Error::Config("sweep.rates must be at least 1".into()));
        }
        if self.uint("synth.gt_per_interval") == 0 {
            return Err(Error::Config(
                "synth.gt_per_interval must be at least 1".into(),
            ));
        }
        if self.uint("events.slice_us") == 0 {
            return Err(Error::Config("events.slice_us must be positive".into()));
        }
        let max_mag = self.float("viz.max_mag");
        if max_mag.is_nan() || max_mag < 0.0 {
            return Err(Error::Config("viz.max_mag must be non-negative".into()));
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} not in schema"))
    }

    fn opt(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    // Values were checked against the schema on insertion, so the parses
    // below only fail on schema bugs.
    pub fn float(&self, key: &str) -> f64 {
        self.raw(key).trim().parse().expect("validated float")
    }

    pub fn uint(&self, key: &str) -> u64 {
        self.raw(key).trim().parse().expect("validated integer")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    pub fn float_list(&self, key: &str) -> Vec<f64> {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().expect("validated float"))
            .collect()
    }

    pub fn uint_list(&self, key: &str) -> Vec<u64> {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().expect("validated integer"))
            .collect()
    }

    fn opt_float(&self, key: &str) -> Option<f64> {
        self.opt(key)
            .map(|v| v.trim().parse().expect("validated float"))
    }

    fn opt_uint(&self, key: &str) -> Option<u64> {
        self.opt(key)
            .map(|v| v.trim().parse().expect("validated integer"))
    }

    fn opt_vec2(&self, key: &str) -> Option<[f64; 2]> {
        self.opt(key).map(|v| {
            let mut it = v
                .split(',')
                .map(|s| s.trim().parse().expect("validated float"));
            [it.next().unwrap(), it.next().unwrap()]
        })
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.opt(key).map(PathBuf::from)
    }

    pub fn seed(&self) -> u64 {
        self.uint("seed")
    }

    pub fn threads(&self) -> usize {
        self.uint("threads") as usize
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        let kind = SceneKind::parse(self.raw("scene.kind")).expect("validated choice");
        let mut c = SceneConfig::standard(kind, self.seed());
        let w = self
            .opt_uint("scene.width")
            .map_or(c.shape.width, |v| v as usize);
        let h = self
            .opt_uint("scene.height")
            .map_or(c.shape.height, |v| v as usize);
        c.shape = GridShape::new(w, h)?;
        if let Some(v) = self.opt_vec2("scene.velocity") {
            c.velocity = v;
        }
        if let Some(v) = self.opt_vec2("scene.bg_velocity") {
            c.bg_velocity = v;
        }
        if let Some(v) = self.opt_float("scene.frame_rate") {
            c.frame_rate = v;
        }
        if let Some(v) = self.opt_float("scene.duration_s") {
            c.duration_s = v;
        }
        if let Some(v) = self.opt_uint("scene.substeps") {
            c.sim_substeps = v as usize;
        }
        if let Some(v) = self.opt_uint("scene.fg_size") {
            c.fg_size = v as usize;
        }
        Ok(c)
    }

    /// Sensor shape for CSV event input, if both dimensions are given.
    pub fn event_shape(&self) -> Result<Option<GridShape>> {
        match (
            self.opt_uint("events.width"),
            self.opt_uint("events.height"),
        ) {
            (None, None) => Ok(None),
            (Some(w), Some(h)) => GridShape::new(w as usize, h as usize)
                .map(Some)
                .map_err(|e| Error::Config(e.to_string())),
            _ => Err(Error::Config(
                "events.width and events.height must be given together".into(),
            )),
        }
    }

    pub fn dvs_params(&self) -> DvsParams {
        DvsParams {
            contrast_threshold: self.float("dvs.contrast_threshold"),
            refractory_us: self.uint("dvs.refractory_us"),
            log_eps: self.float("dvs.log_eps"),
        }
    }

    pub fn leaky_params(&self) -> LeakyParams {
        LeakyParams {
            tau_us: self.float("leaky.tau_us"),
            smooth_k: self.uint("leaky.smooth_k") as usize,
            act_threshold: self.float("leaky.act_threshold"),
            gain: self.opt_float("leaky.gain").unwrap_or(DEFAULT_GAIN),
        }
    }

    pub fn farneback_params(&self) -> FarnebackParams {
        FarnebackParams {
            pyramid_levels: self.uint("farneback.pyramid_levels") as usize,
            pyr_scale: self.float("farneback.pyr_scale"),
            poly_n: self.uint("farneback.poly_n") as usize,
            poly_sigma: self.float("farneback.poly_sigma"),
            avg_window: self.uint("farneback.avg_window") as usize,
            iterations: self.uint("farneback.iterations") as usize,
            det_eps: self.float("farneback.det_eps"),
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            thresh_farneback: self.float("fusion.thresh_farneback"),
            thresh_leakycnn: self.float("fusion.thresh_leakycnn"),
            thresh_confidence: self.float("fusion.thresh_confidence"),
            rho: self.float("fusion.rho"),
            accumulation: Accumulation::parse(self.raw("fusion.accumulation"))
                .expect("validated choice"),
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            leaky: self.leaky_params(),
            farneback: self.farneback_params(),
            fusion: self.fusion_params(),
            rate_multiplier: self.uint("run.rate_multiplier") as usize,
            eval_mode: EvalMode::parse(self.raw("run.eval_mode")).expect("validated choice"),
            event_pipeline: self.flag("run.event_pipeline"),
        }
    }

    /// Every key in sorted order, preceded by a `# command:` comment.
    /// Loading the result with [`Config::resolve`] gives back `self`.
    pub fn to_manifest(&self, command: &str) -> String {
        let mut out = format!("# command: {command}\n");
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_validate() {
        let c = Config::resolve(None, &[]).unwrap();
        assert_eq!(c.run_config(), RunConfig::default());
        assert_eq!(
            c.scene_config().unwrap(),
            SceneConfig::standard_two_speed(1)
        );
    }

    #[test]
    fn unknown_key_rejected() {
        let e = Config::resolve(None, &set(&[("fusion.thresh", "1")])).unwrap_err();
        assert!(matches!(e, Error::Config(m) if m.contains("fusion.thresh")));
    }

    #[test]
    fn bad_values_rejected() {
        for (k, v) in [
            ("seed", "-1"),
            ("leaky.tau_us", "abc"),
            ("run.event_pipeline", "yes"),
            ("scene.kind", "spiral"),
            ("scene.velocity", "1"),
            ("leaky.smooth_k", "4"),
            ("run.rate_multiplier", "0"),
            ("sweep.rates", "1,0"),
            ("fusion.rho", "2"),
        ] {
            let e = Config::resolve(None, &set(&[(k, v)])).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{k}={v}: {e}");
        }
    }

    #[test]
    fn file_then_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nseed = 5\nfusion.rho=0.5  # trailing\n\nrun.rate_multiplier = 2\n",
        )
        .unwrap();
        let c = Config::resolve(Some(&path), &set(&[("seed", "9")])).unwrap();
        assert_eq!(c.seed(), 9);
        assert_eq!(c.fusion_params().rho, 0.5);
        assert_eq!(c.run_config().rate_multiplier, 2);
    }

    #[test]
    fn file_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "seed = 1\nnot an assignment\n").unwrap();
        let e = Config::resolve(Some(&path), &[]).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = Config::resolve(None, &set(&[("seed", "3"), ("scene.velocity", "10,-2")])).unwrap();
        let path = dir.path().join("manifest.txt");
        std::fs::write(&path, c.to_manifest("fuseflow synth")).unwrap();
        assert_eq!(Config::resolve(Some(&path), &[]).unwrap(), c);
    }

    #[test]
    fn scene_overrides_apply_on_top_of_kind() {
        let c = Config::resolve(
            None,
            &set(&[
                ("scene.kind", "translating_edge"),
                ("scene.velocity", "-50,0"),
            ]),
        )
        .unwrap();
        let s = c.scene_config().unwrap();
        assert_eq!(s.kind, SceneKind::TranslatingEdge);
        assert_eq!(s.velocity, [-50.0, 0.0]);
        assert_eq!(s.shape, SceneConfig::translating_edge(100.0, 1).shape);
    }
}
