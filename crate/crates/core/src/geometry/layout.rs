use super::route::{
    arc_separation_excess, conflict_ranges, ConflictRange, CrossingRoute, RouteId, Segment,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, OnceLock};

pub type RouteIdx = usize;

/// Upper bound on the curvature allowance added to the vehicle length.
const MAX_ALLOWANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    South,
    East,
    North,
    West,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::South, Approach::East, Approach::North, Approach::West];

    /// Counter-clockwise quarter turns from the south approach.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Approach {
        Approach::ALL[i % 4]
    }

    pub fn code(self) -> char {
        match self {
            Approach::South => 'S',
            Approach::East => 'E',
            Approach::North => 'N',
            Approach::West => 'W',
        }
    }

    pub fn is_north_south(self) -> bool {
        matches!(self, Approach::South | Approach::North)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Left,
    Through,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Left, Movement::Through, Movement::Right];

    pub fn code(self) -> char {
        match self {
            Movement::Left => 'L',
            Movement::Through => 'T',
            Movement::Right => 'R',
        }
    }

    /// Arm on which a vehicle from `from` leaves the intersection.
    pub fn exit_arm(self, from: Approach) -> Approach {
        let k = from.index();
        match self {
            Movement::Left => Approach::from_index(k + 3),
            Movement::Through => Approach::from_index(k + 2),
            Movement::Right => Approach::from_index(k + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "2in1out")]
    TwoInOneOut,
    #[serde(rename = "3in2out")]
    ThreeInTwoOut,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TwoInOneOut => "2in1out",
            Preset::ThreeInTwoOut => "3in2out",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "2in1out" => Ok(Preset::TwoInOneOut),
            "3in2out" => Ok(Preset::ThreeInTwoOut),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn in_lanes(self) -> u8 {
        match self {
            Preset::TwoInOneOut => 2,
            Preset::ThreeInTwoOut => 3,
        }
    }

    pub fn out_lanes(self) -> u8 {
        match self {
            Preset::TwoInOneOut => 1,
            Preset::ThreeInTwoOut => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub lane_width: f64,
    /// Distance between the outermost lane edge and the box corner.
    pub corner_margin: f64,
    /// Largest vehicle the conflict table must cover.
    pub veh_length: f64,
    pub veh_width: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams { lane_width: 3.5, corner_margin: 5.0, veh_length: 5.0, veh_width: 1.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InLane {
    pub approach: Approach,
    pub lane: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExitLane {
    pub arm: Approach,
    pub lane: u8,
}

/// A four-way intersection: its routes and the offline conflict table.
#[derive(Debug, Clone)]
pub struct Intersection {
    pub preset: Preset,
    pub params: LayoutParams,
    /// Half the side of the square intersection box.
    pub half_size: f64,
    pub routes: Vec<CrossingRoute>,
    lane_routes: Vec<[Option<RouteIdx>; 3]>,
    conflicts: Vec<ConflictRange>,
    allowance: Vec<Vec<f64>>,
}

fn lane_plan(preset: Preset) -> Vec<(u8, Movement, u8)> {
    match preset {
        Preset::ThreeInTwoOut => vec![
            (0, Movement::Left, 0),
            (1, Movement::Through, 0),
            (2, Movement::Through, 1),
            (2, Movement::Right, 1),
        ],
        Preset::TwoInOneOut => vec![
            (0, Movement::Left, 0),
            (0, Movement::Through, 0),
            (1, Movement::Through, 0),
            (1, Movement::Right, 0),
        ],
    }
}

fn south_segments(p: &LayoutParams, a: f64, in_lane: u8, mv: Movement, out_lane: u8) -> Vec<Segment> {
    let w = p.lane_width;
    let x_in = (in_lane as f64 + 0.5) * w;
    match mv {
        Movement::Through => {
            let x_out = (out_lane as f64 + 0.5) * w;
            let (dx, dy) = (x_out - x_in, 2.0 * a);
            vec![Segment::Line { x0: x_in, y0: -a, theta: dy.atan2(dx), len: dx.hypot(dy) }]
        }
        Movement::Left => {
            // Quarter circle about the south-west box corner, ending on the
            // west arm's outgoing lane.
            let r = a + x_in;
            vec![Segment::Arc { cx: -a, cy: -a, radius: r, phi0: 0.0, ccw: true, len: FRAC_PI_2 * r }]
        }
        Movement::Right => {
            let y_out = -(out_lane as f64 + 0.5) * w;
            let r = (a - x_in).min(y_out + a);
            let mut segs = Vec::new();
            let lead = y_out - r + a;
            if lead > 1e-12 {
                segs.push(Segment::Line { x0: x_in, y0: -a, theta: FRAC_PI_2, len: lead });
            }
            segs.push(Segment::Arc {
                cx: x_in + r,
                cy: y_out - r,
                radius: r,
                phi0: PI,
                ccw: false,
                len: FRAC_PI_2 * r,
            });
            let tail = a - (x_in + r);
            if tail > 1e-12 {
                segs.push(Segment::Line { x0: x_in + r, y0: y_out, theta: 0.0, len: tail });
            }
            segs
        }
    }
}

impl Intersection {
    pub fn build(preset: Preset, params: LayoutParams) -> Result<Intersection> {
        if !(params.lane_width > 0.0 && params.corner_margin >= 0.0) {
            return Err(Error::config("lane_width", "lane width must be positive"));
        }
        if params.veh_width >= params.lane_width {
            return Err(Error::config("lane_width", "lane narrower than the vehicle"));
        }
        let a = preset.in_lanes() as f64 * params.lane_width + params.corner_margin;
        let n_in = preset.in_lanes() as usize;
        let mut routes = Vec::new();
        let mut lane_routes = vec![[None; 3]; 4 * n_in];
        for approach in Approach::ALL {
            for &(in_lane, mv, out_lane) in &lane_plan(preset) {
                let segs: Vec<Segment> = south_segments(&params, a, in_lane, mv, out_lane)
                    .iter()
                    .map(|s| s.rotated(approach.index() as u8))
                    .collect();
                let id = RouteId { approach, movement: mv, in_lane, out_lane };
                lane_routes[approach.index() * n_in + in_lane as usize][mv as usize] = Some(routes.len());
                routes.push(CrossingRoute::new(id, segs)?);
            }
        }
        let n = routes.len();
        let mut conflicts = vec![None; n * n];
        for i in 0..n {
            for j in i..n {
                let cr = conflict_ranges(&routes[i], &routes[j], params.veh_length, params.veh_width);
                conflicts[j * n + i] = Some(cr.mirrored());
                conflicts[i * n + j] = Some(cr);
            }
        }
        let allowance = routes
            .iter()
            .map(|r| {
                r.segments
                    .iter()
                    .map(|s| match s.radius() {
                        Some(rad) => arc_separation_excess(rad, params.veh_length, params.veh_width).min(MAX_ALLOWANCE),
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();
        Ok(Intersection {
            preset,
            params,
            half_size: a,
            routes,
            lane_routes,
            conflicts: conflicts.into_iter().map(|c| c.expect("filled")).collect(),
            allowance,
        })
    }

    /// Shared instance with default layout parameters.
    pub fn standard(preset: Preset) -> Arc<Intersection> {
        static TWO: OnceLock<Arc<Intersection>> = OnceLock::new();
        static THREE: OnceLock<Arc<Intersection>> = OnceLock::new();
        let cell = match preset {
            Preset::TwoInOneOut => &TWO,
            Preset::ThreeInTwoOut => &THREE,
        };
        cell.get_or_init(|| Arc::new(Intersection::build(preset, LayoutParams::default()).expect("default layout")))
            .clone()
    }

    pub fn in_lanes(&self) -> u8 {
        self.preset.in_lanes()
    }

    pub fn route(&self, idx: RouteIdx) -> &CrossingRoute {
        &self.routes[idx]
    }

    pub fn route_for(&self, approach: Approach, lane: u8, movement: Movement) -> Option<RouteIdx> {
        if lane >= self.in_lanes() {
            return None;
        }
        self.lane_routes[approach.index() * self.in_lanes() as usize + lane as usize][movement as usize]
    }

    /// In-lanes that serve a movement, with the share of that movement's
    /// traffic assigned to each.
    pub fn lanes_for(&self, movement: Movement) -> Vec<(u8, f64)> {
        match (self.preset, movement) {
            (_, Movement::Left) => vec![(0, 1.0)],
            (Preset::ThreeInTwoOut, Movement::Through) => vec![(1, 2.0 / 3.0), (2, 1.0 / 3.0)],
            (Preset::ThreeInTwoOut, Movement::Right) => vec![(2, 1.0)],
            (Preset::TwoInOneOut, Movement::Through) => vec![(0, 0.5), (1, 0.5)],
            (Preset::TwoInOneOut, Movement::Right) => vec![(1, 1.0)],
        }
    }

    pub fn in_lane_of(&self, idx: RouteIdx) -> InLane {
        let id = self.routes[idx].id;
        InLane { approach: id.approach, lane: id.in_lane }
    }

    pub fn exit_lane_of(&self, idx: RouteIdx) -> ExitLane {
        let id = self.routes[idx].id;
        ExitLane { arm: id.movement.exit_arm(id.approach), lane: id.out_lane }
    }

    pub fn conflict(&self, a: RouteIdx, b: RouteIdx) -> &ConflictRange {
        &self.conflicts[a * self.routes.len() + b]
    }

    pub fn compatible(&self, a: RouteIdx, b: RouteIdx) -> bool {
        self.conflict(a, b).is_compatible()
    }

    pub fn max_route_length(&self) -> f64 {
        self.routes.iter().map(|r| r.total_length).fold(0.0, f64::max)
    }

    /// Extra distance added to the vehicle length when estimating how long
    /// a footprint centred at arc length `center_s` stays occupied.
    pub fn curvature_allowance(&self, idx: RouteIdx, center_s: f64) -> f64 {
        let l = self.params.veh_length;
        let route = &self.routes[idx];
        route
            .segments_between(center_s - l, center_s + l)
            .map(|i| self.allowance[idx][i])
            .fold(0.0, f64::max)
    }

    /// Rows of the conflict table: route_a, route_b, a_lo, a_hi, b_lo, b_hi.
    pub fn conflict_rows(&self) -> Vec<[String; 6]> {
        let n = self.routes.len();
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let c = self.conflict(i, j);
                rows.push([
                    c.route_a.to_string(),
                    c.route_b.to_string(),
                    fmt(c.range_a.map(|r| r.lo)),
                    fmt(c.range_a.map(|r| r.hi)),
                    fmt(c.range_b.map(|r| r.lo)),
                    fmt(c.range_b.map(|r| r.hi)),
                ]);
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_turn_radius_three_lane() {
        let ix = Intersection::standard(Preset::ThreeInTwoOut);
        assert_eq!(ix.half_size, 15.5);
        let r = ix.route(ix.route_for(Approach::South, 2, Movement::Right).unwrap());
        assert_eq!(r.segments.iter().filter_map(|s| s.radius()).next(), Some(6.75));
        let end = r.pose_at(r.total_length);
        assert!((end.x - 15.5).abs() < 1e-9 && (end.y + 5.25).abs() < 1e-9);
        assert!(end.theta.abs() < 1e-12);
    }

    #[test]
    fn routes_start_and_end_on_box_edges() {
        for preset in [Preset::TwoInOneOut, Preset::ThreeInTwoOut] {
            let ix = Intersection::standard(preset);
            let a = ix.half_size;
            for r in &ix.routes {
                for p in [r.pose_at(0.0), r.pose_at(r.total_length)] {
                    let on_edge = (p.x.abs() - a).abs() < 1e-9 || (p.y.abs() - a).abs() < 1e-9;
                    assert!(on_edge, "{} endpoint {:?}", r.id, p);
                }
            }
        }
    }

    #[test]
    fn exit_arms() {
        assert_eq!(Movement::Left.exit_arm(Approach::South), Approach::West);
        assert_eq!(Movement::Through.exit_arm(Approach::South), Approach::North);
        assert_eq!(Movement::Right.exit_arm(Approach::South), Approach::East);
        assert_eq!(Movement::Left.exit_arm(Approach::West), Approach::North);
    }

    #[test]
    fn lane_shares_sum_to_one() {
        for preset in [Preset::TwoInOneOut, Preset::ThreeInTwoOut] {
            let ix = Intersection::standard(preset);
            for m in Movement::ALL {
                let total: f64 = ix.lanes_for(m).iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
                for (lane, _) in ix.lanes_for(m) {
                    assert!(ix.route_for(Approach::East, lane, m).is_some());
                }
            }
        }
    }

    #[test]
    fn opposing_lefts_compatible_crossing_throughs_not() {
        let ix = Intersection::standard(Preset::ThreeInTwoOut);
        let sl = ix.route_for(Approach::South, 0, Movement::Left).unwrap();
        let nl = ix.route_for(Approach::North, 0, Movement::Left).unwrap();
        assert!(ix.compatible(sl, nl));
        let st = ix.route_for(Approach::South, 1, Movement::Through).unwrap();
        let et = ix.route_for(Approach::East, 1, Movement::Through).unwrap();
        assert!(!ix.compatible(st, et));
    }
}
