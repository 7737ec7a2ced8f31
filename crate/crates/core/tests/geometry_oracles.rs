mod common;

use common::{clip_intersects, random_rect, sampled_min_distance};
use dtot::geometry::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sat_agrees_with_clipping() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = 0;
    for _ in 0..20_000 {
        let a = random_rect(&mut rng, 4.0);
        let b = random_rect(&mut rng, 4.0);
        let sat = rect_overlap(&a, &b);
        assert_eq!(sat, clip_intersects(&a, &b), "{a:?} {b:?}");
        hits += sat as usize;
    }
    assert!(hits > 2_000 && hits < 18_000, "degenerate sample: {hits}");
}

#[test]
fn min_distance_matches_sampling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 5_000 {
        let a = random_rect(&mut rng, 6.0);
        let b = random_rect(&mut rng, 6.0);
        let d = rect_min_distance(&a, &b);
        if rect_overlap(&a, &b) {
            assert_eq!(d, 0.0);
            continue;
        }
        let o = sampled_min_distance(&a, &b);
        assert!((d - o).abs() < 1e-6, "{d} vs {o}");
        checked += 1;
    }
}

fn arb_rect() -> impl Strategy<Value = OrientedRect> {
    (-5.0..5.0f64, -5.0..5.0f64, -4.0..4.0f64, 0.5..6.0f64, 0.1..1.0f64)
        .prop_map(|(x, y, th, l, wf)| footprint(Pose::new(x, y, th), l, l * wf).unwrap())
}

proptest! {
    #[test]
    fn overlap_symmetric_and_reflexive(a in arb_rect(), b in arb_rect()) {
        prop_assert_eq!(rect_overlap(&a, &b), rect_overlap(&b, &a));
        prop_assert!(rect_overlap(&a, &a));
    }

    #[test]
    fn distance_zero_iff_overlap(a in arb_rect(), b in arb_rect()) {
        let d = rect_min_distance(&a, &b);
        prop_assert_eq!(d == 0.0, rect_overlap(&a, &b));
        prop_assert!((d - rect_min_distance(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn distance_shrinks_when_approaching(a in arb_rect(), b in arb_rect(), f in 0.05..0.95f64) {
        let (dx, dy) = (b.center.x - a.center.x, b.center.y - a.center.y);
        let moved = footprint(
            Pose::new(a.center.x + dx * f, a.center.y + dy * f, b.center.theta),
            b.length,
            b.width,
        ).unwrap();
        prop_assert!(rect_min_distance(&a, &moved) <= rect_min_distance(&a, &b) + 1e-9);
    }
}

fn presets() -> Vec<std::sync::Arc<Intersection>> {
    vec![Intersection::standard(Preset::TwoInOneOut), Intersection::standard(Preset::ThreeInTwoOut)]
}

#[test]
fn arc_length_fidelity() {
    for ix in presets() {
        for r in &ix.routes {
            let n = 20_000;
            let step = r.total_length / n as f64;
            let mut path = 0.0;
            let mut prev = pose_at_arclength(r, 0.0).unwrap();
            for i in 1..=n {
                let p = pose_at_arclength(r, (i as f64 * step).min(r.total_length)).unwrap();
                path += prev.dist(&p);
                prev = p;
            }
            assert!((path - r.total_length).abs() < 1e-6, "{}: {path} vs {}", r.id, r.total_length);
        }
    }
}

#[test]
fn joints_are_continuous_with_tangent_headings() {
    for ix in presets() {
        for r in &ix.routes {
            let mut s = 0.0;
            for seg in &r.segments {
                s += seg.len();
                if s >= r.total_length {
                    break;
                }
                let before = r.pose_at(s - 1e-7);
                let after = r.pose_at(s + 1e-7);
                assert!(before.dist(&after) < 1e-6);
                // heading from a finite-difference chord on each side
                let fd = |a: Pose, b: Pose| (b.y - a.y).atan2(b.x - a.x);
                let h0 = fd(r.pose_at(s - 2e-4), r.pose_at(s - 1e-4));
                let h1 = fd(r.pose_at(s + 1e-4), r.pose_at(s + 2e-4));
                let jump = normalize_angle(after.theta - before.theta);
                assert!((normalize_angle(h1 - h0) - jump).abs() < 1e-3, "{}", r.id);
            }
        }
    }
}

#[test]
fn conflict_ranges_are_conservative() {
    // A finer grid offset from the sweep grid must find no overlap outside the
    // tabulated ranges.
    let step = 0.1;
    for ix in presets() {
        let (l, w) = (ix.params.veh_length, ix.params.veh_width);
        let samples = |r: &CrossingRoute| -> Vec<(f64, OrientedRect)> {
            let end = r.total_length + l;
            let n = (end / step) as usize;
            (0..=n)
                .map(|i| (0.05 + i as f64 * step).min(end))
                .map(|p| (p, r.footprint_at(p, l, w)))
                .collect()
        };
        let all: Vec<_> = ix.routes.iter().map(samples).collect();
        for a in 0..ix.routes.len() {
            for b in 0..ix.routes.len() {
                let cr = ix.conflict(a, b);
                assert_eq!(*cr, ix.conflict(b, a).mirrored());
                for (pa, ra) in &all[a] {
                    let inside = cr.range_a.is_some_and(|r| r.contains(*pa));
                    if inside {
                        continue;
                    }
                    for (_, rb) in &all[b] {
                        assert!(!rect_overlap(ra, rb), "{} at {pa} hits {}", ix.routes[a].id, ix.routes[b].id);
                    }
                }
            }
        }
    }
}

#[test]
fn conflict_range_examples() {
    let ix = Intersection::standard(Preset::ThreeInTwoOut);
    let l = ix.params.veh_length;
    let st = ix.route_for(Approach::South, 1, Movement::Through).unwrap();
    let same = ix.conflict(st, st);
    let full = ix.route(st).total_length + l;
    assert_eq!(same.range_a, Some(Interval { lo: 0.0, hi: full }));

    let sr = ix.route_for(Approach::South, 2, Movement::Right).unwrap();
    let nr = ix.route_for(Approach::North, 2, Movement::Right).unwrap();
    assert!(ix.conflict(sr, nr).is_compatible());

    let et = ix.route_for(Approach::East, 1, Movement::Through).unwrap();
    let c = ix.conflict(st, et);
    let (ra, rb) = (c.range_a.unwrap(), c.range_b.unwrap());
    assert!(ra.lo > 0.0 && ra.hi < ix.route(st).total_length);
    assert!(rb.lo > 0.0 && rb.hi < ix.route(et).total_length);
}

#[test]
fn conflict_free_signal_phases() {
    // Routes served by one signal phase never conflict unless they share an in-lane.
    let ix = Intersection::standard(Preset::ThreeInTwoOut);
    let phase = |i: usize| {
        let id = ix.route(i).id;
        (id.approach.is_north_south(), id.movement == Movement::Left)
    };
    for a in 0..ix.routes.len() {
        for b in 0..ix.routes.len() {
            if phase(a) == phase(b) && ix.in_lane_of(a) != ix.in_lane_of(b) {
                assert!(ix.compatible(a, b), "{} vs {}", ix.route(a).id, ix.route(b).id);
            }
        }
    }
}
