use super::layout::{Approach, Movement};
use super::rect::{footprint, rect_overlap, OrientedRect};
use super::{normalize_angle, Pose};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

/// Arc-length step of the offline conflict sweep.
pub const SWEEP_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteId {
    pub approach: Approach,
    pub movement: Movement,
    pub in_lane: u8,
    pub out_lane: u8,
}

impl fmt::Display for RouteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}-{}",
            self.approach.code(),
            self.movement.code(),
            self.in_lane,
            self.out_lane
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Line { x0: f64, y0: f64, theta: f64, len: f64 },
    /// Circular arc; `phi0` is the polar angle of the start point about the centre.
    Arc { cx: f64, cy: f64, radius: f64, phi0: f64, ccw: bool, len: f64 },
}

impl Segment {
    pub fn len(&self) -> f64 {
        match *self {
            Segment::Line { len, .. } | Segment::Arc { len, .. } => len,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match *self {
            Segment::Line { .. } => None,
            Segment::Arc { radius, .. } => Some(radius),
        }
    }

    /// Pose at local arc length `s`; lines extrapolate beyond their ends.
    pub fn pose_at(&self, s: f64) -> Pose {
        match *self {
            Segment::Line { x0, y0, theta, .. } => {
                Pose::new(x0 + s * theta.cos(), y0 + s * theta.sin(), theta)
            }
            Segment::Arc { cx, cy, radius, phi0, ccw, .. } => {
                let dir = if ccw { 1.0 } else { -1.0 };
                let phi = phi0 + dir * s / radius;
                Pose::new(
                    cx + radius * phi.cos(),
                    cy + radius * phi.sin(),
                    phi + dir * FRAC_PI_2,
                )
            }
        }
    }

    pub fn rotated(&self, quarter_turns: u8) -> Segment {
        let rot = |x: f64, y: f64| rotate_quarter(x, y, quarter_turns);
        let dth = quarter_turns as f64 * FRAC_PI_2;
        match *self {
            Segment::Line { x0, y0, theta, len } => {
                let (x, y) = rot(x0, y0);
                Segment::Line { x0: x, y0: y, theta: normalize_angle(theta + dth), len }
            }
            Segment::Arc { cx, cy, radius, phi0, ccw, len } => {
                let (x, y) = rot(cx, cy);
                Segment::Arc { cx: x, cy: y, radius, phi0: normalize_angle(phi0 + dth), ccw, len }
            }
        }
    }
}

/// Exact rotation by a multiple of 90 degrees, free of rounding noise.
pub(crate) fn rotate_quarter(x: f64, y: f64, quarter_turns: u8) -> (f64, f64) {
    match quarter_turns % 4 {
        0 => (x, y),
        1 => (-y, x),
        2 => (-x, -y),
        _ => (y, -x),
    }
}

/// Centreline of one crossing movement, parameterised by arc length from the
/// intersection enter line to the exit line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRoute {
    pub id: RouteId,
    pub segments: Vec<Segment>,
    pub total_length: f64,
    #[serde(skip)]
    starts: Vec<f64>,
}

impl CrossingRoute {
    pub fn new(id: RouteId, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument(format!("route {id} has no segments")));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.len() > 0.0) {
                return Err(Error::InvalidArgument(format!("route {id} segment {i} has no length")));
            }
            if i > 0 {
                let prev = &segments[i - 1];
                let gap = prev.pose_at(prev.len()).dist(&seg.pose_at(0.0));
                if gap > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "route {id} is discontinuous at segment {i} (gap {gap})"
                    )));
                }
            }
            starts.push(acc);
            acc += seg.len();
        }
        Ok(CrossingRoute { id, segments, total_length: acc, starts })
    }

    fn locate(&self, s: f64) -> usize {
        match self.starts.iter().rposition(|&st| st <= s) {
            Some(i) => i,
            None => 0,
        }
    }

    /// Pose at arc length `s`; outside `[0, total_length]` the pose is
    /// extrapolated along the end tangents.
    pub fn pose_at(&self, s: f64) -> Pose {
        if s <= 0.0 {
            let p = self.segments[0].pose_at(0.0);
            return Pose::new(p.x + s * p.theta.cos(), p.y + s * p.theta.sin(), p.theta);
        }
        if s >= self.total_length {
            let last = self.segments.last().expect("non-empty");
            let p = last.pose_at(last.len());
            let e = s - self.total_length;
            return Pose::new(p.x + e * p.theta.cos(), p.y + e * p.theta.sin(), p.theta);
        }
        let i = self.locate(s);
        self.segments[i].pose_at(s - self.starts[i])
    }

    /// Index range of segments touching `[s0, s1]`.
    pub fn segments_between(&self, s0: f64, s1: f64) -> std::ops::RangeInclusive<usize> {
        let a = self.locate(s0.max(0.0));
        let b = self.locate(s1.min(self.total_length));
        a..=b.max(a)
    }

    /// Footprint of a vehicle whose front bumper is at progress `p`.
    pub fn footprint_at(&self, p: f64, length: f64, width: f64) -> OrientedRect {
        footprint(self.pose_at(p - length / 2.0), length, width).expect("positive dimensions")
    }
}

pub fn pose_at_arclength(route: &CrossingRoute, s: f64) -> Result<Pose> {
    if !(s >= -1e-9 && s <= route.total_length + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "arc length {s} outside [0, {}] on route {}",
            route.total_length, route.id
        )));
    }
    Ok(route.pose_at(s.clamp(0.0, route.total_length)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Front-bumper progress ranges in which two routes can interact.
/// Both ranges are `None` when the routes are compatible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictRange {
    pub route_a: RouteId,
    pub route_b: RouteId,
    pub range_a: Option<Interval>,
    pub range_b: Option<Interval>,
}

impl ConflictRange {
    pub fn is_compatible(&self) -> bool {
        self.range_a.is_none()
    }

    pub fn mirrored(&self) -> ConflictRange {
        ConflictRange {
            route_a: self.route_b,
            route_b: self.route_a,
            range_a: self.range_b,
            range_b: self.range_a,
        }
    }
}

pub(crate) fn sweep_samples(route: &CrossingRoute, veh_length: f64, step: f64) -> Vec<f64> {
    let end = route.total_length + veh_length;
    let n = (end / step).ceil() as usize;
    (0..=n).map(|i| (i as f64 * step).min(end)).collect()
}

/// Offline sweep over front-bumper progress in `[0, length + veh_length]`.
pub fn conflict_ranges(
    route_a: &CrossingRoute,
    route_b: &CrossingRoute,
    veh_length: f64,
    veh_width: f64,
) -> ConflictRange {
    let sa = sweep_samples(route_a, veh_length, SWEEP_STEP);
    let sb = sweep_samples(route_b, veh_length, SWEEP_STEP);
    let ra: Vec<_> = sa.iter().map(|&p| route_a.footprint_at(p, veh_length, veh_width)).collect();
    let rb: Vec<_> = sb.iter().map(|&p| route_b.footprint_at(p, veh_length, veh_width)).collect();
    let mut hit_b = vec![false; rb.len()];
    let (mut a_lo, mut a_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, a) in ra.iter().enumerate() {
        let mut any = false;
        for (j, b) in rb.iter().enumerate() {
            if rect_overlap(a, b) {
                any = true;
                hit_b[j] = true;
            }
        }
        if any {
            a_lo = a_lo.min(sa[i]);
            a_hi = a_hi.max(sa[i]);
        }
    }
    let dilate = |lo: f64, hi: f64, end: f64| Interval {
        lo: (lo - SWEEP_STEP).max(0.0),
        hi: (hi + SWEEP_STEP).min(end),
    };
    if a_lo > a_hi {
        return ConflictRange { route_a: route_a.id, route_b: route_b.id, range_a: None, range_b: None };
    }
    let (mut b_lo, mut b_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (j, &hit) in hit_b.iter().enumerate() {
        if hit {
            b_lo = b_lo.min(sb[j]);
            b_hi = b_hi.max(sb[j]);
        }
    }
    ConflictRange {
        route_a: route_a.id,
        route_b: route_b.id,
        range_a: Some(dilate(a_lo, a_hi, route_a.total_length + veh_length)),
        range_b: Some(dilate(b_lo, b_hi, route_b.total_length + veh_length)),
    }
}

/// Extra arc distance, beyond the vehicle length, that separates two
/// footprints following a circle of the given radius.
pub fn arc_separation_excess(radius: f64, length: f64, width: f64) -> f64 {
    let at = |s: f64| {
        let phi = s / radius;
        footprint(
            Pose::new(radius * phi.cos(), radius * phi.sin(), phi + FRAC_PI_2),
            length,
            width,
        )
        .expect("positive dimensions")
    };
    let base = at(0.0);
    let (mut lo, mut hi) = (length, length + 2.0 * width);
    if !rect_overlap(&base, &at(lo)) {
        return 0.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rect_overlap(&base, &at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi - length
}
