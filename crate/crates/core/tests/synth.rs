use fuseflow::io::Polarity;
use fuseflow::synth::{
    dvs_simulate, simulate_log_samples, DvsParams, Scene, SceneConfig, SceneKind,
};
use fuseflow::GridShape;

fn event_count(cfg: SceneConfig) -> usize {
    dvs_simulate(&Scene::new(cfg).unwrap(), &DvsParams::default())
        .unwrap()
        .len()
}

fn within(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

#[test]
fn doubling_edge_speed_doubles_event_count() {
    let slow = event_count(SceneConfig::translating_edge(50.0, 1)) as f64;
    let fast = event_count(SceneConfig::translating_edge(100.0, 1)) as f64;
    assert!(slow > 0.0);
    assert!(within(fast, 2.0 * slow, 0.10), "slow {slow}, fast {fast}");
}

#[test]
fn event_count_scales_with_edge_length() {
    let short = SceneConfig::translating_edge(100.0, 1);
    let long = SceneConfig {
        shape: GridShape::new(short.shape.width, 2 * short.shape.height).unwrap(),
        ..short.clone()
    };
    let (a, b) = (event_count(short) as f64, event_count(long) as f64);
    assert!(within(b, 2.0 * a, 0.10), "{a} vs {b}");
}

#[test]
fn doubling_substeps_changes_counts_little() {
    for kind in [
        SceneKind::TranslatingTexture,
        SceneKind::TranslatingEdge,
        SceneKind::MovingSquare,
        SceneKind::TwoSpeed,
    ] {
        let coarse = SceneConfig::standard(kind, 3);
        let fine = SceneConfig {
            sim_substeps: 2 * coarse.sim_substeps,
            ..coarse.clone()
        };
        let (a, b) = (event_count(coarse) as f64, event_count(fine) as f64);
        assert!(within(a, b, 0.05), "{}: {a} vs {b}", kind.name());
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let cfg = SceneConfig::standard(SceneKind::TranslatingTexture, 8);
    let a = dvs_simulate(&Scene::new(cfg.clone()).unwrap(), &DvsParams::default()).unwrap();
    let b = dvs_simulate(&Scene::new(cfg.clone()).unwrap(), &DvsParams::default()).unwrap();
    assert_eq!(a, b);
    let other = SceneConfig { seed: 9, ..cfg };
    let c = dvs_simulate(&Scene::new(other).unwrap(), &DvsParams::default()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn events_respect_refractory_period_and_time_order() {
    let params = DvsParams {
        refractory_us: 2_000,
        ..DvsParams::default()
    };
    let scene = Scene::new(SceneConfig::standard_two_speed(2)).unwrap();
    let stream = dvs_simulate(&scene, &params).unwrap();
    let shape = stream.shape();
    let mut last = vec![None::<u64>; shape.len()];
    let mut prev_t = 0;
    for e in stream.events() {
        assert!(e.t >= prev_t);
        prev_t = e.t;
        let q = shape.index(e.x as usize, e.y as usize);
        if let Some(t) = last[q] {
            assert!(
                e.t >= t + params.refractory_us,
                "pixel ({}, {}) fired at {t} and {}",
                e.x,
                e.y,
                e.t
            );
        }
        last[q] = Some(e.t);
    }
}

#[test]
fn linear_log_ramp_fires_at_threshold_crossings() {
    let shape = GridShape::new(1, 1).unwrap();
    let params = DvsParams {
        contrast_threshold: 0.25,
        refractory_us: 0,
        log_eps: 1e-3,
    };
    // log intensity rises by 1.0 over 1000 µs, then falls back
    let times = [0.0, 1000.0, 2000.0];
    let logs = [0.0, 1.0, 0.0];
    let ev = simulate_log_samples(shape, &times, |j| vec![logs[j]], &params).unwrap();
    let got: Vec<(u64, Polarity)> = ev.iter().map(|e| (e.t, e.polarity)).collect();
    let mut expect: Vec<(u64, Polarity)> = (1..=4).map(|k| (k * 250, Polarity::On)).collect();
    expect.extend((1..=4).map(|k| (1000 + k * 250, Polarity::Off)));
    assert_eq!(got, expect);
}

#[test]
fn ground_truth_matches_configured_velocities() {
    let cfg = SceneConfig::standard_two_speed(1);
    let scene = Scene::new(cfg.clone()).unwrap();
    let t = cfg.frame_time_us(1);
    let gt = scene.gt_flow(t).unwrap();
    let mask = scene.foreground_mask(t).unwrap();
    assert_eq!(mask.count_ones(), cfg.fg_size * cfg.fg_size);
    let fg = (
        (cfg.velocity[0] / cfg.frame_rate) as f32,
        (cfg.velocity[1] / cfg.frame_rate) as f32,
    );
    let bg = (
        (cfg.bg_velocity[0] / cfg.frame_rate) as f32,
        (cfg.bg_velocity[1] / cfg.frame_rate) as f32,
    );
    for y in 0..cfg.shape.height {
        for x in 0..cfg.shape.width {
            assert_eq!(gt.get(x, y), Some(if mask.get(x, y) { fg } else { bg }));
        }
    }
    // the square moves by its per-frame flow between frames
    let next = scene.foreground_mask(cfg.frame_time_us(2)).unwrap();
    let dx = fg.0 as usize;
    for y in 0..cfg.shape.height {
        for x in 0..cfg.shape.width - dx {
            assert_eq!(mask.get(x, y), next.get(x + dx, y));
        }
    }
}

#[test]
fn frames_cover_the_duration() {
    let cfg = SceneConfig::standard_two_speed(1);
    let frames = Scene::new(cfg.clone()).unwrap().frames();
    assert_eq!(frames.len(), cfg.frame_count());
    assert_eq!(frames.interval_us(), Some(cfg.frame_interval_us()));
    assert_eq!(frames.frames().last().unwrap().t, cfg.duration_us());
}

#[test]
fn invalid_configurations_are_rejected() {
    let base = SceneConfig::standard_two_speed(1);
    for bad in [
        SceneConfig {
            frame_rate: 0.0,
            ..base.clone()
        },
        SceneConfig {
            duration_s: -1.0,
            ..base.clone()
        },
        SceneConfig {
            sim_substeps: 2,
            ..base.clone()
        },
        SceneConfig {
            fg_size: 0,
            ..base.clone()
        },
        SceneConfig {
            velocity: [f64::NAN, 0.0],
            ..base.clone()
        },
    ] {
        assert!(Scene::new(bad).is_err());
    }
    let scene = Scene::new(base.clone()).unwrap();
    assert!(scene.render(base.duration_us() + 1).is_err());
}
