//! Command-line front end. [`run_command`] returns the process exit code:
//! 0 on success, 1 on usage or configuration errors, 2 on data errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::color::flow_to_color;
use crate::config::{parse_assignment, Config};
use crate::error::{Error, Result};
use crate::grid::FlowField;
use crate::harness::{
    calibrate_thresholds, frame_flows, rate_sweep, summarize, sweep_csv, threshold_sweep,
    write_metrics_csv, Dataset, FileTruth, GroundTruth, NoTruth, PreparedRun, SceneTruth,
    METRICS_HEADER,
};
use crate::io::{
    read_events, read_flo, read_frames, write_bytes, write_events, write_flo, write_frames,
    write_ppm, EventFormat, EventStream, FrameSequence,
};
use crate::leaky::LeakyFilter;
use crate::metrics::aee;
use crate::synth::{dvs_simulate, Scene};

#[derive(Parser, Debug)]
#[command(
    name = "fuseflow",
    version,
    about = "Event/frame dual-pipeline optical flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct Inputs {
    /// Event file (.csv or EVT1 binary). Without it a scene is synthesized.
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
    /// Frame index file.
    #[arg(long, value_name = "FILE")]
    frames: Option<PathBuf>,
    /// Ground-truth .flo index file.
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
    /// Synthetic scene kind.
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene: events, frames and ground-truth flow.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<String>,
        /// Event file format: bin or csv.
        #[arg(long)]
        format: Option<String>,
    },
    /// Event-only flow over fixed-length slices, one .flo per slice.
    FlowEvents {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_name = "US")]
        slice_us: Option<u64>,
    },
    /// Frame-only flow for every consecutive frame pair.
    FlowFrames {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Full dual-rate pipeline with fusion and metrics.
    FuseRun {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Event inferences per frame interval.
        #[arg(long)]
        rate: Option<usize>,
        /// Also write PPM color renders of the fused flow.
        #[arg(long)]
        viz: bool,
    },
    /// Event percentage and AEE over a threshold grid.
    SweepThresholds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        rate: Option<usize>,
    },
    /// Event percentage and AEE for several rate multipliers.
    SweepRate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Average endpoint error between two .flo files.
    EvalAee { a: PathBuf, b: PathBuf },
    /// Render a .flo file as a PPM color image.
    Viz {
        input: PathBuf,
        output: PathBuf,
        /// Magnitude at full saturation (default: the field maximum).
        #[arg(long)]
        max_mag: Option<f64>,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn push(overrides: &mut Vec<(String, String)>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        overrides.push((key.to_string(), v));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn resolve(common: &Common, extra: Vec<(String, String)>) -> Result<Config> {
    let mut overrides = Vec::new();
    for s in &common.set {
        let kv = parse_assignment(s)
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        overrides.push(kv);
    }
    push(&mut overrides, "seed", common.seed.map(|v| v.to_string()));
    push(
        &mut overrides,
        "threads",
        common.threads.map(|v| v.to_string()),
    );
    push(&mut overrides, "out", path_str(&common.out));
    overrides.extend(extra);
    Config::resolve(common.config.as_deref(), &overrides)
}

fn input_overrides(inputs: &Inputs) -> Vec<(String, String)> {
    let mut o = Vec::new();
    push(&mut o, "events", path_str(&inputs.events));
    push(&mut o, "frames", path_str(&inputs.frames));
    push(&mut o, "gt", path_str(&inputs.gt));
    push(&mut o, "scene.kind", inputs.scene.clone());
    o
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn with_threads<T: Send>(cfg: &Config, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn out_dir(cfg: &Config) -> PathBuf {
    cfg.path("out").unwrap_or_else(|| PathBuf::from("out"))
}

fn write_manifest(cfg: &Config, dir: &Path) -> Result<()> {
    write_bytes(
        &dir.join("manifest.txt"),
        cfg.to_manifest(&command_line()).as_bytes(),
    )
}

fn write_index(path: &Path, entries: &[(u64, String)]) -> Result<()> {
    let mut text = String::new();
    for (t, name) in entries {
        let _ = writeln!(text, "{t} {name}");
    }
    write_bytes(path, text.as_bytes())
}

fn load_events(cfg: &Config, path: &Path) -> Result<EventStream> {
    let format = EventFormat::from_path(path);
    let shape = cfg.event_shape()?;
    if format == EventFormat::Csv && shape.is_none() {
        return Err(Error::Config(format!(
            "{}: CSV events need events.width and events.height",
            path.display()
        )));
    }
    read_events(path, format, shape)
}

/// Synthesized or file-backed inputs for one run.
enum Source {
    Synthetic {
        scene: Scene,
        events: EventStream,
        frames: FrameSequence,
    },
    Files {
        events: Option<EventStream>,
        frames: Option<FrameSequence>,
        truth: Option<FileTruth>,
    },
}

impl Source {
    fn load(cfg: &Config, need_events: bool, need_frames: bool) -> Result<Self> {
        match cfg.path("events") {
            None if cfg.path("frames").is_none() => {
                let scene = Scene::new(cfg.scene_config()?)?;
                let events = dvs_simulate(&scene, &cfg.dvs_params())?;
                let frames = scene.frames();
                Ok(Source::Synthetic {
                    scene,
                    events,
                    frames,
                })
            }
            events_path => {
                let events = match events_path {
                    Some(p) => Some(load_events(cfg, &p)?),
                    None if need_events => {
                        return Err(Error::Config("an event file is required".into()))
                    }
                    None => None,
                };
                let frames = match cfg.path("frames") {
                    Some(p) => Some(read_frames(&p)?),
                    None if need_frames => {
                        return Err(Error::Config("a frame index is required".into()))
                    }
                    None => None,
                };
                let truth = cfg.path("gt").map(|p| FileTruth::load(&p)).transpose()?;
                Ok(Source::Files {
                    events,
                    frames,
                    truth,
                })
            }
        }
    }

    fn events(&self) -> &EventStream {
        match self {
            Source::Synthetic { events, .. } => events,
            Source::Files { events, .. } => events.as_ref().expect("events checked on load"),
        }
    }

    fn frames(&self) -> &FrameSequence {
        match self {
            Source::Synthetic { frames, .. } => frames,
            Source::Files { frames, .. } => frames.as_ref().expect("frames checked on load"),
        }
    }

    fn with_dataset<T>(&self, f: impl FnOnce(&Dataset<'_>) -> Result<T>) -> Result<T> {
        let scene_truth;
        let truth: &dyn GroundTruth = match self {
            Source::Synthetic { scene, .. } => {
                scene_truth = SceneTruth { scene };
                &scene_truth
            }
            Source::Files { truth: Some(t), .. } => t,
            Source::Files { truth: None, .. } => &NoTruth,
        };
        f(&Dataset {
            events: self.events(),
            frames: self.frames(),
            truth,
        })
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            common,
            scene,
            format,
        } => {
            let mut extra = Vec::new();
            push(&mut extra, "scene.kind", scene);
            push(&mut extra, "synth.format", format);
            let cfg = resolve(&common, extra)?;
            with_threads(&cfg, || synth(&cfg))
        }
        Command::FlowEvents {
            common,
            inputs,
            slice_us,
        } => {
            let mut extra = input_overrides(&inputs);
            push(
                &mut extra,
                "events.slice_us",
                slice_us.map(|v| v.to_string()),
            );
            let cfg = resolve(&common, extra)?;
            with_threads(&cfg, || flow_events(&cfg))
        }
        Command::FlowFrames { common, inputs } => {
            let cfg = resolve(&common, input_overrides(&inputs))?;
            with_threads(&cfg, || flow_frames(&cfg))
        }
        Command::FuseRun {
            common,
            inputs,
            rate,
            viz,
        } => {
            let mut extra = input_overrides(&inputs);
            push(
                &mut extra,
                "run.rate_multiplier",
                rate.map(|v| v.to_string()),
            );
            if viz {
                extra.push(("viz.enabled".into(), "true".into()));
            }
            let cfg = resolve(&common, extra)?;
            with_threads(&cfg, || fuse_run(&cfg))
        }
        Command::SweepThresholds {
            common,
            inputs,
            rate,
        } => {
            let mut extra = input_overrides(&inputs);
            push(
                &mut extra,
                "run.rate_multiplier",
                rate.map(|v| v.to_string()),
            );
            let cfg = resolve(&common, extra)?;
            with_threads(&cfg, || sweep_thresholds(&cfg))
        }
        Command::SweepRate { common, inputs } => {
            let cfg = resolve(&common, input_overrides(&inputs))?;
            with_threads(&cfg, || sweep_rate(&cfg))
        }
        Command::EvalAee { a, b } => {
            let report = aee(&read_flo(&a)?, &read_flo(&b)?)?;
            println!("{:?}", report.mean);
            Ok(())
        }
        Command::Viz {
            input,
            output,
            max_mag,
        } => {
            let flow = read_flo(&input)?;
            let mag = match max_mag {
                Some(m) if m > 0.0 && m.is_finite() => m,
                Some(m) => {
                    return Err(Error::Config(format!(
                        "--max-mag must be positive, got {m}"
                    )))
                }
                None => auto_max(&flow),
            };
            write_ppm(&output, &flow_to_color(&flow, mag)?)
        }
    }
}

fn auto_max(flow: &FlowField) -> f64 {
    let m = flow.max_magnitude();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn synth(cfg: &Config) -> Result<()> {
    let scene = Scene::new(cfg.scene_config()?)?;
    let events = dvs_simulate(&scene, &cfg.dvs_params())?;
    let frames = scene.frames();
    let out = out_dir(cfg);

    let (format, name) = match cfg.raw("synth.format") {
        "csv" => (EventFormat::Csv, "events.csv"),
        _ => (EventFormat::Bin, "events.evt1"),
    };
    write_events(&out.join(name), format, &events)?;
    write_frames(&out.join("frames"), "index.txt", &frames)?;

    let per = cfg.uint("synth.gt_per_interval");
    let interval = scene.config().frame_interval_us();
    let mut index = Vec::new();
    for k in 0..frames.len() - 1 {
        let t_k = frames.frames()[k].t;
        for j in 0..per {
            let t = t_k + interval * j / per;
            let file = format!("gt_{:05}.flo", index.len());
            write_flo(&out.join("gt").join(&file), &scene.gt_flow(t)?)?;
            index.push((t, file));
        }
    }
    write_index(&out.join("gt").join("index.txt"), &index)?;
    write_manifest(cfg, &out)?;
    println!(
        "{} events, {} frames, {} ground-truth fields -> {}",
        events.len(),
        frames.len(),
        index.len(),
        out.display()
    );
    Ok(())
}

fn flow_events(cfg: &Config) -> Result<()> {
    let source = Source::load(cfg, true, false)?;
    let events = source.events();
    let out = out_dir(cfg);
    let slice = cfg.uint("events.slice_us");
    let end = events.events().last().map_or(0, |e| e.t + 1);
    let mut filter = LeakyFilter::new(events.shape(), cfg.leaky_params())?;
    let mut index = Vec::new();
    let mut t0 = 0;
    while t0 < end {
        let t1 = t0 + slice;
        let flow = filter.event_flow(events.slice(t0, t1), t0, t1)?;
        let file = format!("flow_{:05}.flo", index.len());
        write_flo(&out.join(&file), &flow)?;
        index.push((t1, file));
        t0 = t1;
    }
    write_index(&out.join("index.txt"), &index)?;
    write_manifest(cfg, &out)?;
    println!("{} event flows -> {}", index.len(), out.display());
    Ok(())
}

fn flow_frames(cfg: &Config) -> Result<()> {
    let source = Source::load(cfg, false, true)?;
    let frames = source.frames();
    let out = out_dir(cfg);
    let flows = frame_flows(frames, &cfg.farneback_params())?;
    let mut index = Vec::new();
    for (k, flow) in flows.iter().enumerate() {
        let file = format!("flow_{k:05}.flo");
        write_flo(&out.join(&file), flow)?;
        index.push((frames.frames()[k].t, file));
    }
    write_index(&out.join("index.txt"), &index)?;
    write_manifest(cfg, &out)?;
    println!("{} frame flows -> {}", index.len(), out.display());
    Ok(())
}

fn fuse_run(cfg: &Config) -> Result<()> {
    let source = Source::load(cfg, true, true)?;
    let out = out_dir(cfg);
    let run = cfg.run_config();
    let viz = cfg.flag("viz.enabled");
    let max_mag = cfg.float("viz.max_mag");
    let rows = source.with_dataset(|ds| {
        let prepared = PreparedRun::new(ds, &run)?;
        let mut index = Vec::new();
        let rows = prepared.fuse_with(&run.fusion, |step| {
            let stem = format!("flow_{:05}", index.len());
            write_flo(
                &out.join("fused").join(format!("{stem}.flo")),
                &step.fused.flow,
            )?;
            if viz {
                let mag = if max_mag > 0.0 {
                    max_mag
                } else {
                    auto_max(&step.fused.flow)
                };
                write_ppm(
                    &out.join("fused").join(format!("{stem}.ppm")),
                    &flow_to_color(&step.fused.flow, mag)?,
                )?;
            }
            index.push((step.row.t_us, format!("{stem}.flo")));
            Ok(())
        })?;
        write_index(&out.join("fused").join("index.txt"), &index)?;
        Ok(rows)
    })?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    write_manifest(cfg, &out)?;

    let s = summarize(&rows, run.eval_mode);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} rows ({} evaluated), mean AEE fused {} frame-only {} event-only {}, mean event% {:.3} -> {}",
        rows.len(),
        s.evaluated_rows,
        fmt(s.mean_aee_fused),
        fmt(s.mean_aee_frame_only),
        fmt(s.mean_aee_event_only),
        s.mean_event_percent,
        out.join("metrics.csv").display()
    );
    debug_assert!(METRICS_HEADER.starts_with("frame_index"));
    Ok(())
}

fn sweep_thresholds(cfg: &Config) -> Result<()> {
    let source = Source::load(cfg, true, true)?;
    let out = out_dir(cfg);
    let run = cfg.run_config();
    let points = source.with_dataset(|ds| {
        let prepared = PreparedRun::new(ds, &run)?;
        threshold_sweep(
            &prepared,
            &run.fusion,
            run.rate_multiplier,
            &cfg.float_list("sweep.thresh_farneback"),
            &cfg.float_list("sweep.thresh_leakycnn"),
        )
    })?;
    let table = sweep_csv(&points);
    write_bytes(&out.join("sweep_thresholds.csv"), table.as_bytes())?;
    write_manifest(cfg, &out)?;
    print!("{table}");
    if let Ok(best) = calibrate_thresholds(&points) {
        println!(
            "calibrated: fusion.thresh_farneback = {} fusion.thresh_leakycnn = {}",
            best.thresh_farneback, best.thresh_leakycnn
        );
    }
    Ok(())
}

fn sweep_rate(cfg: &Config) -> Result<()> {
    let source = Source::load(cfg, true, true)?;
    let out = out_dir(cfg);
    let run = cfg.run_config();
    let rates: Vec<usize> = cfg
        .uint_list("sweep.rates")
        .into_iter()
        .map(|n| n as usize)
        .collect();
    let points = source.with_dataset(|ds| rate_sweep(ds, &run, &rates))?;
    let table = sweep_csv(&points);
    write_bytes(&out.join("sweep_rate.csv"), table.as_bytes())?;
    write_manifest(cfg, &out)?;
    print!("{table}");
    let base = points
        .iter()
        .find(|p| p.rate_multiplier == 1)
        .and_then(|p| p.summary.mean_aee_fused);
    if let Some(base) = base {
        for p in &points {
            if let Some(a) = p.summary.mean_aee_fused {
                println!(
                    "relative fps {}: AEE ratio {:.4}",
                    p.rate_multiplier,
                    a / base
                );
            }
        }
    }
    Ok(())
}
