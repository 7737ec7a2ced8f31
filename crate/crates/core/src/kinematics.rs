//! Longitudinal motion along crossing routes: fastest profiles, timed state
//! sequences, occupancy trajectories and the stop/arrival helpers used by
//! the approach controller.

use crate::error::{Error, Result};
use crate::geometry::{footprint, CrossingRoute, Movement, OrientedRect, Pose, RouteIdx};
use serde::{Deserialize, Serialize};

pub fn kmh(v: f64) -> f64 {
    v / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedCaps {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl SpeedCaps {
    pub fn for_movement(&self, m: Movement) -> f64 {
        match m {
            Movement::Left => self.left,
            Movement::Through => self.through,
            Movement::Right => self.right,
        }
    }
}

impl Default for SpeedCaps {
    fn default() -> Self {
        SpeedCaps { left: kmh(35.0), through: kmh(65.0), right: kmh(25.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub vin: u64,
    pub length: f64,
    pub width: f64,
    pub a_max: f64,
    /// Braking capability as a positive magnitude.
    pub a_min: f64,
    pub v_caps: SpeedCaps,
}

impl VehicleSpec {
    pub fn standard(vin: u64) -> Self {
        VehicleSpec {
            vin,
            length: 5.0,
            width: 1.8,
            a_max: 2.0,
            a_min: 4.5,
            v_caps: SpeedCaps::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let caps = [self.v_caps.left, self.v_caps.through, self.v_caps.right];
        if !(self.length > 0.0 && self.width > 0.0 && self.a_max > 0.0 && self.a_min > 0.0)
            || caps.iter().any(|c| !(*c > 0.0))
        {
            return Err(Error::InvalidArgument(format!("invalid vehicle spec {self:?}")));
        }
        Ok(())
    }
}

/// Speeds and covered distances at each sample, starting at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub h: f64,
    pub speeds: Vec<f64>,
    pub positions: Vec<f64>,
}

impl SpeedProfile {
    pub fn steps(&self) -> usize {
        self.speeds.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.h
    }
}

/// Accelerate at `a_max` up to `v_cap`, then hold. A start above the cap is
/// held, never increased. Distance per step uses the mean of the end speeds.
pub fn fastest_profile(v0: f64, v_cap: f64, a_max: f64, distance: f64, h: f64) -> SpeedProfile {
    let mut speeds = Vec::new();
    let mut positions = Vec::new();
    if !(distance > 0.0) || (v0 <= 0.0 && v_cap <= 0.0) {
        return SpeedProfile { h, speeds, positions };
    }
    let (mut v, mut x) = (v0.max(0.0), 0.0);
    speeds.push(v);
    positions.push(x);
    while x < distance {
        let vn = if v >= v_cap { v } else { (v + a_max * h).min(v_cap) };
        x += 0.5 * h * (v + vn);
        v = vn;
        speeds.push(v);
        positions.push(x);
    }
    SpeedProfile { h, speeds, positions }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub t: f64,
    pub pose: Pose,
}

/// Timed states from the moment the front bumper reaches the enter line
/// until the rear bumper clears the exit line. Times sit on the global
/// tick grid: state `k` is at tick `start_tick + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tss {
    pub route: RouteIdx,
    pub start_tick: i64,
    pub h: f64,
    pub v_enter: f64,
    pub cap: f64,
    /// Front-bumper arc length past the enter line.
    pub progress: Vec<f64>,
    pub speeds: Vec<f64>,
    /// Vehicle centre poses.
    pub poses: Vec<Pose>,
}

impl Tss {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn end_tick(&self) -> i64 {
        self.start_tick + self.len() as i64 - 1
    }

    pub fn states(&self) -> impl Iterator<Item = TimedState> + '_ {
        self.poses
            .iter()
            .enumerate()
            .map(move |(k, p)| TimedState { t: (self.start_tick + k as i64) as f64 * self.h, pose: *p })
    }

    /// Index of the first state whose front bumper is at or past `route_len`.
    pub fn exit_index(&self, route_len: f64) -> usize {
        self.progress.iter().position(|&p| p >= route_len).unwrap_or(self.len() - 1)
    }

    pub fn shifted(&self, ticks: i64) -> Tss {
        let mut t = self.clone();
        t.start_tick += ticks;
        t
    }
}

pub fn plan_crossing_tss(
    spec: &VehicleSpec,
    r: &CrossingRoute,
    route: RouteIdx,
    start_tick: i64,
    v_enter: f64,
    cap: Option<f64>,
    h: f64,
) -> Tss {
    let mut v_cap = spec.v_caps.for_movement(r.id.movement);
    if let Some(c) = cap {
        v_cap = v_cap.min(c);
    }
    let prof = fastest_profile(v_enter, v_cap, spec.a_max, r.total_length + spec.length, h);
    let poses = prof.positions.iter().map(|&p| r.pose_at(p - spec.length / 2.0)).collect();
    Tss {
        route,
        start_tick,
        h,
        v_enter,
        cap: v_cap,
        progress: prof.positions,
        speeds: prof.speeds,
        poses,
    }
}

/// Footprints of a crossing on the tick grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtot {
    pub route: RouteIdx,
    pub start_tick: i64,
    pub h: f64,
    pub rects: Vec<OrientedRect>,
    pub progress: Vec<f64>,
}

impl Dtot {
    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn tick(&self, k: usize) -> i64 {
        self.start_tick + k as i64
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.tick(k) as f64 * self.h
    }

    pub fn end_tick(&self) -> i64 {
        self.start_tick + self.rects.len() as i64 - 1
    }

    pub fn occupancies(&self) -> impl Iterator<Item = (OrientedRect, f64)> + '_ {
        self.rects.iter().enumerate().map(move |(k, r)| (*r, self.tau(k)))
    }
}

pub fn tss_to_dtot(tss: &Tss, spec: &VehicleSpec) -> Dtot {
    Dtot {
        route: tss.route,
        start_tick: tss.start_tick,
        h: tss.h,
        rects: tss
            .poses
            .iter()
            .map(|p| footprint(*p, spec.length, spec.width).expect("validated spec"))
            .collect(),
        progress: tss.progress.clone(),
    }
}

/// Pure time translation by a whole number of ticks.
pub fn delay_dtot(dtot: &Dtot, delta_ticks: i64) -> Result<Dtot> {
    if delta_ticks < 0 {
        return Err(Error::InvalidArgument(format!("negative delay {delta_ticks}")));
    }
    let mut d = dtot.clone();
    d.start_tick += delta_ticks;
    Ok(d)
}

/// Earliest unimpeded arrival at the enter line (continuous closed form).
pub fn predicted_arrival_time(d_to_line: f64, v: f64, v_cap: f64, a_max: f64, now: f64) -> f64 {
    if d_to_line <= 0.0 {
        return now;
    }
    if v >= v_cap {
        return now + d_to_line / v;
    }
    let t_acc = (v_cap - v) / a_max;
    let d_acc = (v_cap * v_cap - v * v) / (2.0 * a_max);
    if d_to_line <= d_acc {
        now + ((v * v + 2.0 * a_max * d_to_line).sqrt() - v) / a_max
    } else {
        now + t_acc + (d_to_line - d_acc) / v_cap
    }
}

pub fn stopping_distance(v: f64, a_min: f64) -> f64 {
    v * v / (2.0 * a_min)
}

pub fn can_stop_before_line(v: f64, d_to_line: f64, a_min: f64) -> bool {
    stopping_distance(v, a_min) <= d_to_line
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsModel {
    pub h: f64,
    pub l_m: f64,
    pub t_m: f64,
    pub n_bar: usize,
}

impl BoundsModel {
    pub fn new(l_m: f64, v_m: f64, a_m: f64, h: f64) -> Self {
        let t_m = if l_m >= v_m * v_m / (2.0 * a_m) {
            (2.0 * a_m * l_m + v_m * v_m) / (2.0 * a_m * v_m)
        } else {
            (2.0 * l_m / a_m).sqrt()
        };
        BoundsModel { h, l_m, t_m, n_bar: occupancy_count_bound(l_m, v_m, a_m, h) }
    }
}

/// Upper bound on crossing steps from rest over `l_m` metres.
pub fn occupancy_count_bound(l_m: f64, v_m: f64, a_m: f64, h: f64) -> usize {
    let steps = if l_m >= v_m * v_m / (2.0 * a_m) {
        (2.0 * a_m * l_m + v_m * v_m) / (2.0 * a_m * v_m * h)
    } else {
        (2.0 * l_m / a_m).sqrt() / h
    };
    (steps - 1e-9).ceil() as usize
}
