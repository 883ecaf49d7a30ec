use fuseflow::farneback::{farneback_flow, poly_expansion, FarnebackParams};
use fuseflow::metrics::aee_masked;
use fuseflow::synth::Texture;
use fuseflow::{BinaryMap, FlowField, GridShape, ScalarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves the 6x6 normal equations by Gauss-Jordan elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve6(mut m: [[f64; 7]; 6]) -> [f64; 6] {
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in 0..6 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..7 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    std::array::from_fn(|i| m[i][6] / m[i][i])
}

/// Direct weighted least-squares fit of `[1, x, y, x², y², xy]` with a
/// separable Gaussian applicability, evaluated at one pixel.
fn oracle_fit(img: &ScalarMap, x0: usize, y0: usize, n: usize, sigma: f64) -> [f64; 6] {
    let r = (n / 2) as i64;
    let mut m = [[0.0; 7]; 6];
    for dy in -r..=r {
        for dx in -r..=r {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let (x, y) = (dx as f64, dy as f64);
            let basis = [1.0, x, y, x * x, y * y, x * y];
            let f = img.get((x0 as i64 + dx) as usize, (y0 as i64 + dy) as usize);
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] += w * basis[i] * basis[j];
                }
                m[i][6] += w * basis[i] * f;
            }
        }
    }
    solve6(m)
}

fn random_image(shape: GridShape, seed: u64) -> ScalarMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarMap::from_fn(shape, |_, _| rng.gen_range(0.0..1.0))
}

fn interior(shape: GridShape, m: usize) -> BinaryMap {
    BinaryMap::from_fn(shape, |x, y| {
        x >= m && y >= m && x + m < shape.width && y + m < shape.height
    })
}

fn texture_pair(
    shape: GridShape,
    seed: u64,
    offset: (f64, f64),
    d: (f64, f64),
) -> (ScalarMap, ScalarMap) {
    let tex = Texture::new(seed, 0.1, 0.9);
    let f1 = ScalarMap::from_fn(shape, |x, y| {
        tex.sample(x as f64 + offset.0, y as f64 + offset.1)
    });
    let f2 = ScalarMap::from_fn(shape, |x, y| {
        tex.sample(x as f64 + offset.0 - d.0, y as f64 + offset.1 - d.1)
    });
    (f1, f2)
}

#[test]
fn poly_expansion_matches_direct_weighted_fit() {
    let shape = GridShape::new(40, 32).unwrap();
    let img = random_image(shape, 11);
    for (poly_n, poly_sigma) in [(5, 1.1), (7, 1.5)] {
        let params = FarnebackParams {
            poly_n,
            poly_sigma,
            ..FarnebackParams::default()
        };
        let pe = poly_expansion(&img, &params);
        for y in 0..shape.height {
            for x in 0..shape.width {
                if !pe.is_reliable(x, y) {
                    continue;
                }
                let r = oracle_fit(&img, x, y, poly_n, poly_sigma);
                let c = pe.at(x, y);
                let expect = [r[3], r[5] / 2.0, r[4], r[1], r[2], r[0]];
                let got = [c.a11, c.a12, c.a22, c.b1, c.b2, c.c];
                for (g, e) in got.iter().zip(expect) {
                    assert!(
                        (g - e).abs() < 1e-9,
                        "({x},{y}) n={poly_n}: {got:?} vs {expect:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn recovers_subpixel_translations() {
    let shape = GridShape::new(96, 96).unwrap();
    let params = FarnebackParams::default();
    let mask = interior(shape, params.border_width() + 2);
    for (i, d) in [(0.5, 0.0), (0.0, -1.5), (-2.0, 1.0), (1.75, 1.25)]
        .into_iter()
        .enumerate()
    {
        let (f1, f2) = texture_pair(shape, 20 + i as u64, (0.0, 0.0), d);
        let flow = farneback_flow(&f1, &f2, &params).unwrap();
        let gt = FlowField::uniform(shape, d.0 as f32, d.1 as f32);
        let r = aee_masked(&flow, &gt, Some(&mask)).unwrap();
        assert!(r.mean < 0.15, "shift {d:?}: mean EE {}", r.mean);
    }
}

#[test]
fn swapping_frames_negates_the_flow() {
    let shape = GridShape::new(96, 96).unwrap();
    let params = FarnebackParams::default();
    let d = (1.25, -0.5);
    let (f1, f2) = texture_pair(shape, 5, (0.0, 0.0), d);
    let fwd = farneback_flow(&f1, &f2, &params).unwrap();
    let bwd = farneback_flow(&f2, &f1, &params).unwrap();
    let neg = FlowField::from_fn(shape, |x, y| bwd.get(x, y).map(|(u, v)| (-u, -v)));
    let r = aee_masked(
        &fwd,
        &neg,
        Some(&interior(shape, params.border_width() + 2)),
    )
    .unwrap();
    assert!(
        r.mean < 0.1,
        "forward vs negated backward differ by {}",
        r.mean
    );
}

#[test]
fn shifting_the_scene_shifts_the_flow() {
    let shape = GridShape::new(96, 96).unwrap();
    let params = FarnebackParams::default();
    let d = (0.75, 0.5);
    let (s, t) = (8usize, 4usize);
    let (a1, a2) = texture_pair(shape, 9, (0.0, 0.0), d);
    let (b1, b2) = texture_pair(shape, 9, (s as f64, t as f64), d);
    let fa = farneback_flow(&a1, &a2, &params).unwrap();
    let fb = farneback_flow(&b1, &b2, &params).unwrap();
    // pixel (x, y) of the shifted pair sees the content of (x + s, y + t)
    let moved = FlowField::from_fn(shape, |x, y| {
        if x + s < shape.width && y + t < shape.height {
            fa.get(x + s, y + t)
        } else {
            None
        }
    });
    let m = params.border_width() + 2 + s;
    let r = aee_masked(&fb, &moved, Some(&interior(shape, m))).unwrap();
    assert!(r.mean < 0.05, "shifted flows differ by {}", r.mean);
}

#[test]
fn identical_frames_give_zero_flow() {
    let shape = GridShape::new(64, 48).unwrap();
    let (f1, _) = texture_pair(shape, 3, (0.0, 0.0), (0.0, 0.0));
    let flow = farneback_flow(&f1, &f1, &FarnebackParams::default()).unwrap();
    assert!(flow.valid_count() > 0);
    assert!(flow.max_magnitude() < 1e-9, "{}", flow.max_magnitude());
}

#[test]
fn rejects_mismatched_frames_and_bad_params() {
    let a = ScalarMap::zeros(GridShape::new(32, 32).unwrap());
    let b = ScalarMap::zeros(GridShape::new(32, 24).unwrap());
    assert!(farneback_flow(&a, &b, &FarnebackParams::default()).is_err());
    let bad = FarnebackParams {
        poly_n: 4,
        ..FarnebackParams::default()
    };
    assert!(farneback_flow(&a, &a, &bad).is_err());
}
