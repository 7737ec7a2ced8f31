//! Planar geometry: poses, oriented rectangles, crossing routes and the
//! built-in intersection layouts with their conflict-range tables.

mod layout;
mod rect;
mod route;

pub use layout::{
    Approach, ExitLane, InLane, Intersection, LayoutParams, Movement, Preset, RouteIdx,
};
pub use rect::{footprint, rect_min_distance, rect_overlap, OrientedRect};
pub use route::{
    arc_separation_excess, conflict_ranges, pose_at_arclength, ConflictRange, CrossingRoute,
    Interval, RouteId, Segment, SWEEP_STEP,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `[-PI, PI)`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading, counter-clockwise from +x.
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose { x, y, theta: normalize_angle(theta) }
    }

    pub fn dist(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}
