//! Endpoint error, flow-to-flow distance and event-percent metrics.

use crate::error::{Error, Result};
use crate::grid::{BinaryMap, FlowField, ScalarMap};

#[derive(Debug, Clone, PartialEq)]
pub struct AeeReport {
    /// Arithmetic mean endpoint error over the evaluation set.
    pub mean: f64,
    /// Endpoint error at evaluated pixels, 0 elsewhere.
    pub ee_map: ScalarMap,
    pub evaluated: BinaryMap,
}

impl AeeReport {
    pub fn count(&self) -> usize {
        self.evaluated.count_ones()
    }
}

#[inline]
fn endpoint_error(a: (f32, f32), b: (f32, f32)) -> f64 {
    let du = a.0 as f64 - b.0 as f64;
    let dv = a.1 as f64 - b.1 as f64;
    (du * du + dv * dv).sqrt()
}

/// Average endpoint error over pixels valid in both fields.
pub fn aee(flow: &FlowField, gt: &FlowField) -> Result<AeeReport> {
    aee_masked(flow, gt, None)
}

/// Average endpoint error restricted to `mask` (in addition to joint validity).
///
/// The sum runs row-major in a single sequential pass.
pub fn aee_masked(flow: &FlowField, gt: &FlowField, mask: Option<&BinaryMap>) -> Result<AeeReport> {
    let shape = flow.shape();
    shape.check_same(&gt.shape())?;
    if let Some(m) = mask {
        shape.check_same(&m.shape())?;
    }
    let mut ee_map = ScalarMap::zeros(shape);
    let mut evaluated = BinaryMap::zeros(shape);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 0..shape.len() {
        if let Some(m) = mask {
            if !m.bits()[i] {
                continue;
            }
        }
        if let (Some(a), Some(b)) = (flow.get_index(i), gt.get_index(i)) {
            let e = endpoint_error(a, b);
            ee_map.values_mut()[i] = e;
            evaluated.bits_mut()[i] = true;
            sum += e;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(AeeReport {
        mean: sum / count as f64,
        ee_map,
        evaluated,
    })
}

/// Per-pixel Euclidean distance between two flows.
///
/// Pixels invalid in either input get distance 0 and a 0 in the returned
/// mask, so thresholding on the distance alone never fires on missing data.
pub fn flow_distance_map(a: &FlowField, b: &FlowField) -> Result<(ScalarMap, BinaryMap)> {
    let shape = a.shape();
    shape.check_same(&b.shape())?;
    let mut dist = ScalarMap::zeros(shape);
    let mut mask = BinaryMap::zeros(shape);
    for i in 0..shape.len() {
        if let (Some(p), Some(q)) = (a.get_index(i), b.get_index(i)) {
            dist.values_mut()[i] = endpoint_error(p, q);
            mask.bits_mut()[i] = true;
        }
    }
    Ok((dist, mask))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPercent {
    pub percent: f64,
    /// Set when `fused_valid` had no pixels and the percentage defaulted to 0.
    pub empty: bool,
}

pub fn event_percent(source_mask: &BinaryMap, fused_valid: &BinaryMap) -> Result<EventPercent> {
    source_mask.shape().check_same(&fused_valid.shape())?;
    let mut from_events = 0usize;
    let mut total = 0usize;
    for (&s, &f) in source_mask.bits().iter().zip(fused_valid.bits()) {
        if f {
            total += 1;
            if s {
                from_events += 1;
            }
        }
    }
    if total == 0 {
        return Ok(EventPercent {
            percent: 0.0,
            empty: true,
        });
    }
    Ok(EventPercent {
        percent: 100.0 * from_events as f64 / total as f64,
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use proptest::prelude::*;

    fn shape(w: usize, h: usize) -> GridShape {
        GridShape::new(w, h).unwrap()
    }

    #[test]
    fn identical_flow_has_zero_aee() {
        let s = shape(5, 4);
        let f = FlowField::from_fn(s, |x, y| Some((x as f32 * 0.5, -(y as f32))));
        let r = aee(&f, &f).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.count(), 20);
    }

    #[test]
    fn three_four_five() {
        let s = shape(3, 3);
        let mut f = FlowField::invalid(s);
        let mut g = FlowField::invalid(s);
        f.set(1, 1, 3.0, 4.0);
        g.set(1, 1, 0.0, 0.0);
        g.set(0, 0, 1.0, 1.0);
        assert_eq!(aee(&f, &g).unwrap().mean, 5.0);
    }

    #[test]
    fn mean_of_two() {
        let s = shape(2, 1);
        let f = FlowField::from_fn(s, |x, _| Some(if x == 0 { (1.0, 0.0) } else { (0.0, 3.0) }));
        let g = FlowField::uniform(s, 0.0, 0.0);
        assert_eq!(aee(&f, &g).unwrap().mean, 2.0);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let s = shape(2, 2);
        let f = FlowField::invalid(s);
        let g = FlowField::uniform(s, 0.0, 0.0);
        assert!(matches!(aee(&f, &g), Err(Error::NoOverlap)));
        let mask = BinaryMap::zeros(s);
        assert!(matches!(
            aee_masked(&g, &g, Some(&mask)),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn shape_mismatch() {
        let f = FlowField::invalid(shape(2, 2));
        let g = FlowField::invalid(shape(3, 2));
        assert!(matches!(aee(&f, &g), Err(Error::ShapeMismatch { .. })));
        assert!(flow_distance_map(&f, &g).is_err());
    }

    #[test]
    fn distance_examples() {
        let s = shape(2, 1);
        let mut a = FlowField::uniform(s, 1.0, 0.0);
        let b = FlowField::uniform(s, 0.0, 1.0);
        let (d, m) = flow_distance_map(&a, &a).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
        assert_eq!(m.count_ones(), 2);
        let (d, _) = flow_distance_map(&a, &b).unwrap();
        assert!((d.get(0, 0) - std::f64::consts::SQRT_2).abs() < 1e-12);
        a.invalidate(1, 0);
        let (d, m) = flow_distance_map(&a, &b).unwrap();
        assert_eq!(d.get(1, 0), 0.0);
        assert!(!m.get(1, 0));
        assert!(m.get(0, 0));
    }

    #[test]
    fn event_percent_examples() {
        let s = shape(10, 10);
        let ones = BinaryMap::ones(s);
        let zeros = BinaryMap::zeros(s);
        assert_eq!(event_percent(&ones, &ones).unwrap().percent, 100.0);
        assert_eq!(event_percent(&zeros, &ones).unwrap().percent, 0.0);
        let q = BinaryMap::from_fn(s, |x, y| y * 10 + x < 25);
        assert_eq!(event_percent(&q, &ones).unwrap().percent, 25.0);
        let empty = event_percent(&ones, &zeros).unwrap();
        assert_eq!(empty.percent, 0.0);
        assert!(empty.empty);
    }

    fn arb_flow(w: usize, h: usize) -> impl Strategy<Value = FlowField> {
        prop::collection::vec(
            prop::option::weighted(0.8, (-50.0f32..50.0, -50.0f32..50.0)),
            w * h,
        )
        .prop_map(move |px| {
            let s = GridShape::new(w, h).unwrap();
            let mut f = FlowField::invalid(s);
            for (i, p) in px.into_iter().enumerate() {
                if let Some((u, v)) = p {
                    f.set_index(i, u, v);
                }
            }
            f
        })
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_flow(6, 5), b in arb_flow(6, 5)) {
            let (d1, m1) = flow_distance_map(&a, &b).unwrap();
            let (d2, m2) = flow_distance_map(&b, &a).unwrap();
            prop_assert_eq!(d1, d2);
            prop_assert_eq!(m1, m2);
        }

        #[test]
        fn aee_translation_invariant(a in arb_flow(6, 5), b in arb_flow(6, 5),
                                     cu in -4.0f32..4.0, cv in -4.0f32..4.0) {
            let shift = |f: &FlowField| {
                let mut g = f.clone();
                for i in 0..f.shape().len() {
                    if let Some((u, v)) = f.get_index(i) {
                        g.set_index(i, u + cu, v + cv);
                    }
                }
                g
            };
            match (aee(&a, &b), aee(&shift(&a), &shift(&b))) {
                (Ok(r1), Ok(r2)) => prop_assert!((r1.mean - r2.mean).abs() < 1e-4),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "overlap changed under translation"),
            }
        }

        #[test]
        fn aee_matches_brute_force_bitwise(a in arb_flow(7, 4), b in arb_flow(7, 4)) {
            if let Ok(r) = aee(&a, &b) {
                let mut sum = 0.0f64;
                let mut n = 0usize;
                for y in 0..4 {
                    for x in 0..7 {
                        if let (Some(p), Some(q)) = (a.get(x, y), b.get(x, y)) {
                            let du = p.0 as f64 - q.0 as f64;
                            let dv = p.1 as f64 - q.1 as f64;
                            sum += (du * du + dv * dv).sqrt();
                            n += 1;
                        }
                    }
                }
                prop_assert_eq!(r.mean.to_bits(), (sum / n as f64).to_bits());
            }
        }

        #[test]
        fn event_percent_bounded(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 64)) {
            let s = GridShape::new(8, 8).unwrap();
            let src = BinaryMap::from_vec(s, bits.iter().map(|b| b.0).collect()).unwrap();
            let val = BinaryMap::from_vec(s, bits.iter().map(|b| b.1).collect()).unwrap();
            let p = event_percent(&src, &val).unwrap().percent;
            prop_assert!((0.0..=100.0).contains(&p));
        }
    }
}
