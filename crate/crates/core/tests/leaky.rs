use fuseflow::io::{Event, EventStream, Polarity};
use fuseflow::leaky::{LeakyFilter, LeakyParams};
use fuseflow::synth::{dvs_simulate, DvsParams, Scene, SceneConfig, SceneKind};
use fuseflow::{Error, FlowField, GridShape};
use proptest::prelude::*;

/// Activation at `t_q` as a plain sum of decayed unit impulses.
fn oracle_activation(events: &[Event], shape: GridShape, tau: f64, t_q: u64) -> Vec<f64> {
    let mut a = vec![0.0; shape.len()];
    for e in events {
        a[shape.index(e.x as usize, e.y as usize)] += (-((t_q - e.t) as f64) / tau).exp();
    }
    a
}

/// Central differences, windowed mean over active pixels and gain, written
/// out pixel by pixel.
fn oracle_flow(events: &[Event], shape: GridShape, p: &LeakyParams, t_q: u64) -> FlowField {
    let a = oracle_activation(events, shape, p.tau_us, t_q);
    let (w, h) = (shape.width, shape.height);
    let at = |x: usize, y: usize| a[y * w + x];
    let interior = |x: usize, y: usize| x >= 1 && y >= 1 && x + 1 < w && y + 1 < h;
    let active = |x: usize, y: usize| interior(x, y) && at(x, y) >= p.act_threshold;
    let r = (p.smooth_k / 2) as i64;
    FlowField::from_fn(shape, |x, y| {
        if !active(x, y) {
            return None;
        }
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                    continue;
                }
                let (xx, yy) = (xx as usize, yy as usize);
                if active(xx, yy) {
                    sx += (at(xx + 1, yy) - at(xx - 1, yy)) / 2.0;
                    sy += (at(xx, yy + 1) - at(xx, yy - 1)) / 2.0;
                    n += 1;
                }
            }
        }
        Some((
            (p.gain * sx / n as f64) as f32,
            (p.gain * sy / n as f64) as f32,
        ))
    })
}

fn arb_events(w: u16, h: u16) -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..3000, 0..w, 0..h, any::<bool>()), 0..200).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(dt, x, y, on)| {
                t += dt;
                Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursive_decay_matches_impulse_sum(events in arb_events(12, 10), extra in 0u64..50_000) {
        let shape = GridShape::new(12, 10).unwrap();
        let mut filter = LeakyFilter::new(shape, LeakyParams::default()).unwrap();
        filter.ingest(&events).unwrap();
        let t_q = events.last().map_or(0, |e| e.t) + extra;
        let snap = filter.state().snapshot(t_q).unwrap();
        let expect = oracle_activation(&events, shape, LeakyParams::default().tau_us, t_q);
        for (got, want) in snap.values().iter().zip(&expect) {
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn event_flow_matches_direct_oracle(events in arb_events(14, 11), k in prop::sample::select(vec![3usize, 5])) {
        let shape = GridShape::new(14, 11).unwrap();
        let params = LeakyParams { smooth_k: k, ..LeakyParams::default() };
        let t1 = events.last().map_or(0, |e| e.t) + 1;
        let mut filter = LeakyFilter::new(shape, params).unwrap();
        let flow = filter.event_flow(&events, 0, t1).unwrap();
        let expect = oracle_flow(&events, shape, &params, t1);
        for i in 0..shape.len() {
            match (flow.get_index(i), expect.get_index(i)) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    prop_assert!((a.0 - b.0).abs() <= 1e-4 * b.0.abs().max(1.0));
                    prop_assert!((a.1 - b.1).abs() <= 1e-4 * b.1.abs().max(1.0));
                }
                (a, b) => prop_assert!(false, "pixel {i}: {a:?} vs {b:?}"),
            }
        }
    }
}

fn mean_flow(cfg: SceneConfig) -> (f64, f64) {
    let scene = Scene::new(cfg.clone()).unwrap();
    let events = dvs_simulate(&scene, &DvsParams::default()).unwrap();
    let mut filter = LeakyFilter::new(cfg.shape, LeakyParams::default()).unwrap();
    let slice = cfg.frame_interval_us() / 4;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    let mut t0 = 0;
    while t0 + slice <= cfg.duration_us() {
        let t1 = t0 + slice;
        let flow = filter.event_flow(events.slice(t0, t1), t0, t1).unwrap();
        if t1 >= 100_000 {
            for i in 0..cfg.shape.len() {
                if let Some((u, v)) = flow.get_index(i) {
                    su += u as f64;
                    sv += v as f64;
                    n += 1;
                }
            }
        }
        t0 = t1;
    }
    assert!(n > 0);
    (su / n as f64, sv / n as f64)
}

#[test]
fn flow_direction_follows_motion() {
    for velocity in [[60.0, 0.0], [-60.0, 0.0], [0.0, 60.0], [0.0, -60.0]] {
        let cfg = SceneConfig {
            velocity,
            ..SceneConfig::standard(SceneKind::TranslatingTexture, 2)
        };
        let (u, v) = mean_flow(cfg);
        let (along, across) = if velocity[0] != 0.0 { (u, v) } else { (v, u) };
        let sign = (velocity[0] + velocity[1]).signum();
        assert!(along * sign > 0.0, "{velocity:?}: mean ({u}, {v})");
        assert!(along.abs() > across.abs(), "{velocity:?}: mean ({u}, {v})");
    }
}

#[test]
fn mirrored_stream_mirrors_the_flow() {
    let cfg = SceneConfig::translating_edge(100.0, 4);
    let scene = Scene::new(cfg.clone()).unwrap();
    let events = dvs_simulate(&scene, &DvsParams::default()).unwrap();
    let mirrored = events.mirrored_x();
    let (t0, t1) = (150_000, 175_000);
    let mut a = LeakyFilter::new(cfg.shape, LeakyParams::default()).unwrap();
    let mut b = LeakyFilter::new(cfg.shape, LeakyParams::default()).unwrap();
    a.ingest(events.slice(0, t0)).unwrap();
    b.ingest(mirrored.slice(0, t0)).unwrap();
    let fa = a.event_flow(events.slice(t0, t1), t0, t1).unwrap();
    let fb = b.event_flow(mirrored.slice(t0, t1), t0, t1).unwrap();
    assert!(fa.valid_count() > 0);
    let w = cfg.shape.width;
    for y in 0..cfg.shape.height {
        for x in 0..w {
            let m = fb.get(w - 1 - x, y).map(|(u, v)| (-u, v));
            assert_eq!(fa.get(x, y), m, "({x}, {y})");
        }
    }
}

#[test]
fn out_of_order_batch_is_rejected_atomically() {
    let shape = GridShape::new(8, 8).unwrap();
    let mut filter = LeakyFilter::new(shape, LeakyParams::default()).unwrap();
    filter
        .ingest(&[Event::new(100, 2, 2, Polarity::On)])
        .unwrap();
    let before = filter.state().clone();
    let batch = [
        Event::new(150, 3, 3, Polarity::On),
        Event::new(120, 4, 4, Polarity::On),
        Event::new(90, 2, 2, Polarity::Off),
    ];
    match filter.ingest(&batch) {
        Err(Error::EventOutOfOrder { index, t, last, .. }) => {
            assert_eq!((index, t, last), (2, 90, 100))
        }
        other => panic!("expected ordering error, got {other:?}"),
    }
    assert_eq!(filter.state(), &before);
    // different pixels may interleave in time
    filter.ingest(&batch[..2]).unwrap();
}

#[test]
fn slice_bounds_and_past_queries_are_errors() {
    let shape = GridShape::new(8, 8).unwrap();
    let mut filter = LeakyFilter::new(shape, LeakyParams::default()).unwrap();
    let ev = [Event::new(500, 1, 1, Polarity::On)];
    assert!(filter.event_flow(&ev, 0, 500).is_err());
    assert!(filter.event_flow(&ev, 600, 600).is_err());
    filter.event_flow(&ev, 0, 1000).unwrap();
    assert!(matches!(
        filter.state().snapshot(100),
        Err(Error::QueryInPast { .. })
    ));
}

#[test]
fn empty_stream_gives_empty_flow() {
    let stream = EventStream::empty(GridShape::new(16, 16).unwrap());
    let mut filter = LeakyFilter::new(stream.shape(), LeakyParams::default()).unwrap();
    let flow = filter.event_flow(stream.events(), 0, 25_000).unwrap();
    assert_eq!(flow.valid_count(), 0);
}
