use super::Pose;
use crate::error::{Error, Result};

/// Rectangle with its long axis along the pose heading.
///
/// Corner order is front-left, front-right, rear-right, rear-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Pose,
    pub length: f64,
    pub width: f64,
    cos: f64,
    sin: f64,
    radius: f64,
}

impl OrientedRect {
    pub fn new(center: Pose, length: f64, width: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0) || !length.is_finite() || !width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rectangle dimensions must be positive, got {length} x {width}"
            )));
        }
        let center = Pose::new(center.x, center.y, center.theta);
        let (sin, cos) = center.theta.sin_cos();
        Ok(OrientedRect {
            center,
            length,
            width,
            cos,
            sin,
            radius: 0.5 * length.hypot(width),
        })
    }

    /// Unit vector along the heading.
    pub fn axis(&self) -> (f64, f64) {
        (self.cos, self.sin)
    }

    /// Unit vector pointing to the left of the heading.
    pub fn normal(&self) -> (f64, f64) {
        (-self.sin, self.cos)
    }

    /// Half-diagonal, the radius of the bounding circle.
    pub fn bounding_radius(&self) -> f64 {
        self.radius
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (ux, uy) = (self.cos * self.length / 2.0, self.sin * self.length / 2.0);
        let (nx, ny) = (-self.sin * self.width / 2.0, self.cos * self.width / 2.0);
        let (cx, cy) = (self.center.x, self.center.y);
        [
            (cx + ux + nx, cy + uy + ny),
            (cx + ux - nx, cy + uy - ny),
            (cx - ux - nx, cy - uy - ny),
            (cx - ux + nx, cy - uy + ny),
        ]
    }

    fn half_extent_on(&self, ax: f64, ay: f64) -> f64 {
        0.5 * self.length * (self.cos * ax + self.sin * ay).abs()
            + 0.5 * self.width * (-self.sin * ax + self.cos * ay).abs()
    }
}

pub fn footprint(pose: Pose, length: f64, width: f64) -> Result<OrientedRect> {
    OrientedRect::new(pose, length, width)
}

/// Closed-set intersection test; touching boundaries count as overlap.
pub fn rect_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let dx = b.center.x - a.center.x;
    let dy = b.center.y - a.center.y;
    let r = a.radius + b.radius;
    if dx * dx + dy * dy > r * r {
        return false;
    }
    let axes = [
        (a.cos, a.sin),
        (-a.sin, a.cos),
        (b.cos, b.sin),
        (-b.sin, b.cos),
    ];
    for (ax, ay) in axes {
        let d = (dx * ax + dy * ay).abs();
        if d > a.half_extent_on(ax, ay) + b.half_extent_on(ax, ay) {
            return false;
        }
    }
    true
}

fn point_segment_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (wx - t * vx).hypot(wy - t * vy)
}

/// Zero when the rectangles overlap, otherwise the minimum edge-to-edge distance.
pub fn rect_min_distance(a: &OrientedRect, b: &OrientedRect) -> f64 {
    if rect_overlap(a, b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a0, a1) = (ca[i], ca[(i + 1) % 4]);
        for j in 0..4 {
            let (b0, b1) = (cb[j], cb[(j + 1) % 4]);
            best = best
                .min(point_segment_dist(a0, b0, b1))
                .min(point_segment_dist(a1, b0, b1))
                .min(point_segment_dist(b0, a0, a1))
                .min(point_segment_dist(b1, a0, a1));
        }
    }
    best
}
