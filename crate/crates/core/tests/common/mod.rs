//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dtot::dica::{process_request, ConfirmedSet, CrossingPlan, Detector, FrontConfig};
use dtot::geometry::{footprint, Intersection, OrientedRect, Pose};
use dtot::kinematics::{Dtot, VehicleSpec};
use rand::Rng;

pub fn random_rect<R: Rng>(rng: &mut R, spread: f64) -> OrientedRect {
    let l = rng.gen_range(0.2..6.0);
    let w = rng.gen_range(0.1..l);
    footprint(
        Pose::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-4.0..4.0)),
        l,
        w,
    )
    .unwrap()
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Sutherland-Hodgman clip of one convex polygon by another; closed sets.
pub fn clip_intersects(a: &OrientedRect, b: &OrientedRect) -> bool {
    let mut poly: Vec<Pt> = a.corners().to_vec();
    let mut clip = b.corners().to_vec();
    // clockwise corner order; flip so the interior lies to the left
    clip.reverse();
    for i in 0..clip.len() {
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let inside = |p: Pt| cross(e0, e1, p) >= 0.0;
        let mut out = Vec::new();
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let (d0, d1) = (cross(e0, e1, prev), cross(e0, e1, cur));
                let t = d0 / (d0 - d1);
                out.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
        if poly.is_empty() {
            return false;
        }
    }
    true
}

fn ternary_min(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

/// Boundary-sampling distance oracle: every corner of one rectangle against
/// a sampled and then refined parameterisation of each edge of the other.
pub fn sampled_min_distance(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let mut best = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        let pc = p.corners();
        let qc = q.corners();
        for i in 0..4 {
            let (e0, e1) = (qc[i], qc[(i + 1) % 4]);
            let at = |t: f64| (e0.0 + t * (e1.0 - e0.0), e0.1 + t * (e1.1 - e0.1));
            for c in pc {
                let d = |t: f64| {
                    let x = at(t);
                    (x.0 - c.0).hypot(x.1 - c.1)
                };
                for k in 0..=64 {
                    best = best.min(d(k as f64 / 64.0));
                }
                best = best.min(ternary_min(d));
            }
        }
    }
    best
}

/// Exhaustive occupancy-time interval by scanning in both directions.
pub fn brute_oti(rects: &[OrientedRect], first_tick: i64, k: usize) -> (i64, i64) {
    let mut lb = first_tick;
    for j in (0..k).rev() {
        if !touches(&rects[j], &rects[k]) {
            lb = first_tick + j as i64;
            break;
        }
    }
    let mut ub = first_tick + rects.len() as i64 - 1;
    for j in k + 1..rects.len() {
        if !touches(&rects[j], &rects[k]) {
            ub = first_tick + j as i64;
            break;
        }
    }
    (lb, ub)
}

/// Clipping-based overlap with a cheap circumcircle reject.
pub fn touches(a: &OrientedRect, b: &OrientedRect) -> bool {
    let r = 0.5 * a.length.hypot(a.width) + 0.5 * b.length.hypot(b.width);
    if (a.center.x - b.center.x).hypot(a.center.y - b.center.y) > r + 1e-9 {
        return false;
    }
    clip_intersects(a, b)
}

/// Reference conflict scan: for every confirmed vehicle, the first of its
/// occupancies (then the first requester occupancy) that overlaps in space
/// and in OTI. Returns (vin, confirmed lb, kj, ki).
pub fn brute_conflicts(set: &ConfirmedSet, d: &Dtot) -> Vec<(u64, i64, usize, usize)> {
    let mut out = Vec::new();
    for e in set.iter() {
        'veh: for kj in 0..e.dtot.len() {
            for ki in 0..d.len() {
                if !touches(&e.dtot.rects[kj], &d.rects[ki]) {
                    continue;
                }
                let (jl, ju) = brute_oti(&e.dtot.rects, e.dtot.start_tick, kj);
                let (il, iu) = brute_oti(&d.rects, d.start_tick, ki);
                if jl <= iu && il <= ju {
                    out.push((e.vin, jl, kj, ki));
                    break 'veh;
                }
            }
        }
    }
    out.sort_by_key(|c| (c.1, c.0));
    out
}

/// Occupancy pairs of two DTOTs that overlap at the same tick.
pub fn same_tick_overlaps(a: &Dtot, b: &Dtot) -> usize {
    let lo = a.start_tick.max(b.start_tick);
    let hi = a.end_tick().min(b.end_tick());
    (lo..=hi)
        .filter(|&t| touches(&a.rects[(t - a.start_tick) as usize], &b.rects[(t - b.start_tick) as usize]))
        .count()
}

pub fn random_plan<R: Rng>(rng: &mut R, ix: &Intersection, window: i64) -> CrossingPlan {
    let route = rng.gen_range(0..ix.routes.len());
    let cap = VehicleSpec::standard(0).v_caps.for_movement(ix.route(route).id.movement);
    CrossingPlan { route, start_tick: rng.gen_range(0..window), v_enter: rng.gen_range(0.0..cap), cap: None }
}

/// Confirmed set built by pushing `n` random requests through the
/// exhaustive pipeline.
pub fn random_set<R: Rng>(rng: &mut R, ix: &Intersection, n: usize, window: i64) -> ConfirmedSet {
    let mut set = ConfirmedSet::new();
    let fv = FrontConfig::new(1.0, 0.05);
    for v in 0..n {
        let spec = VehicleSpec::standard(v as u64 + 1);
        let plan = random_plan(rng, ix, window);
        process_request(&mut set, ix, &spec, plan, &Detector::Exhaustive, &fv, 0.05, 0).unwrap();
    }
    set
}
