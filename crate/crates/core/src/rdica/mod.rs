//! Emergency-vehicle sequencing: separation times, entrance times, the
//! permutation GA and an exhaustive reference search.

mod ga;
mod instances;

pub use ga::{
    exhaustive_optimize, feasible_count, ga_optimize, one_point_crossover, swap_mutation, GaParams, GaResult, GenerationRecord,
    SearchResult, DEFAULT_EXHAUSTIVE_CAP,
};
pub use instances::random_instance;

use crate::error::{Error, Result};
use crate::geometry::{InLane, Intersection, RouteIdx};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationPolicy {
    /// Conflicting routes.
    pub delta_c: f64,
    /// Same lane.
    pub delta_s: f64,
}

impl Default for SeparationPolicy {
    fn default() -> Self {
        SeparationPolicy { delta_c: 2.0, delta_s: 1.0 }
    }
}

impl SeparationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s >= 0.0 && self.delta_c >= self.delta_s) {
            return Err(Error::config("delta_c", "need delta_c >= delta_s >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    SameLane,
    Conflicting,
    Compatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderVehicle {
    pub vin: u64,
    /// Predicted arrival time at the enter line, seconds.
    pub t_a: f64,
    /// Entry time of a previously confirmed crossing, if any.
    pub confirmed_entry: Option<f64>,
    pub route: RouteIdx,
    pub lane: InLane,
    /// Distance to the enter line; orders vehicles within a lane.
    pub dist_to_line: f64,
    pub is_ev: bool,
}

/// Vehicles to be sequenced. Exactly one is the EV; `ev_lane_order` lists
/// the indices of the vehicles on its lane, front first, ending at the EV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderableSet {
    pub vehicles: Vec<OrderVehicle>,
    pub ev_lane_order: Vec<usize>,
    pub ev: usize,
    relations: Vec<Vec<Relation>>,
    /// Put the EV lane ahead of every other vehicle.
    pub strict_priority: bool,
}

impl OrderableSet {
    pub fn new(vehicles: Vec<OrderVehicle>, ix: &Intersection) -> Result<Self> {
        let evs: Vec<usize> = (0..vehicles.len()).filter(|&i| vehicles[i].is_ev).collect();
        if evs.len() != 1 {
            return Err(Error::InvalidArgument(format!("need exactly one EV, got {}", evs.len())));
        }
        let ev = evs[0];
        let ev_lane = vehicles[ev].lane;
        let mut ev_lane_order: Vec<usize> = (0..vehicles.len()).filter(|&i| vehicles[i].lane == ev_lane).collect();
        ev_lane_order.sort_by(|&a, &b| vehicles[a].dist_to_line.total_cmp(&vehicles[b].dist_to_line).then(a.cmp(&b)));
        if *ev_lane_order.last().expect("contains the EV") != ev {
            return Err(Error::InvalidArgument("vehicles behind the EV on its lane cannot be sequenced".into()));
        }
        let relations = vehicles
            .iter()
            .map(|a| {
                vehicles
                    .iter()
                    .map(|b| {
                        if a.lane == b.lane {
                            Relation::SameLane
                        } else if ix.compatible(a.route, b.route) {
                            Relation::Compatible
                        } else {
                            Relation::Conflicting
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(OrderableSet { vehicles, ev_lane_order, ev, relations, strict_priority: false })
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn n_ev(&self) -> usize {
        self.ev_lane_order.len()
    }

    pub fn relation(&self, a: usize, b: usize) -> Relation {
        self.relations[a][b]
    }

    pub fn is_feasible(&self, seq: &[usize]) -> bool {
        let mut seen = vec![false; self.len()];
        if seq.len() != self.len() || seq.iter().any(|&v| v >= self.len() || std::mem::replace(&mut seen[v], true)) {
            return false;
        }
        let lane: Vec<usize> = seq.iter().copied().filter(|v| self.ev_lane_order.contains(v)).collect();
        if lane != self.ev_lane_order {
            return false;
        }
        !self.strict_priority || seq[..self.n_ev()] == self.ev_lane_order[..]
    }

    pub fn vins(&self, seq: &[usize]) -> Vec<u64> {
        seq.iter().map(|&i| self.vehicles[i].vin).collect()
    }
}

/// Required entrance-time gap between consecutive vehicles `a` then `b`.
pub fn separation_time(set: &OrderableSet, a: usize, b: usize, policy: &SeparationPolicy) -> f64 {
    match set.relation(a, b) {
        Relation::SameLane => policy.delta_s,
        Relation::Conflicting => policy.delta_c,
        Relation::Compatible => 0.0,
    }
}

/// Entrance time of every vehicle, indexed like `set.vehicles`.
pub fn entrance_times(seq: &[usize], set: &OrderableSet, policy: &SeparationPolicy) -> Result<Vec<f64>> {
    if !set.is_feasible(seq) {
        return Err(Error::InvalidArgument("infeasible sequence".into()));
    }
    Ok(entrance_times_unchecked(seq, set, policy))
}

pub(crate) fn entrance_times_unchecked(seq: &[usize], set: &OrderableSet, policy: &SeparationPolicy) -> Vec<f64> {
    let mut te = vec![0.0; set.len()];
    for (p, &v) in seq.iter().enumerate() {
        let veh = &set.vehicles[v];
        te[v] = if p == 0 {
            veh.confirmed_entry.unwrap_or(veh.t_a)
        } else {
            let prev = seq[p - 1];
            veh.t_a.max(te[prev] + separation_time(set, prev, v, policy))
        };
    }
    te
}

pub(crate) fn ev_entrance(seq: &[usize], set: &OrderableSet, policy: &SeparationPolicy) -> f64 {
    let mut prev: Option<(usize, f64)> = None;
    for &v in seq {
        let veh = &set.vehicles[v];
        let t = match prev {
            None => veh.confirmed_entry.unwrap_or(veh.t_a),
            Some((p, tp)) => veh.t_a.max(tp + separation_time(set, p, v, policy)),
        };
        if v == set.ev {
            return t;
        }
        prev = Some((v, t));
    }
    unreachable!("sequence contains the EV")
}

pub fn fitness(seq: &[usize], set: &OrderableSet, policy: &SeparationPolicy) -> Result<f64> {
    let te = entrance_times(seq, set, policy)?;
    Ok(1.0 / te[set.ev])
}

/// Rewrites the EV-lane vehicles, in place of their current positions, in
/// their on-road order.
pub fn feasibility_repair(ind: &[usize], set: &OrderableSet) -> Vec<usize> {
    let mut out = ind.to_vec();
    if set.strict_priority {
        let rest: Vec<usize> = ind.iter().copied().filter(|v| !set.ev_lane_order.contains(v)).collect();
        out = set.ev_lane_order.iter().copied().chain(rest).collect();
        return out;
    }
    let mut lane = set.ev_lane_order.iter();
    for slot in out.iter_mut() {
        if set.ev_lane_order.contains(slot) {
            *slot = *lane.next().expect("same EV-lane count");
        }
    }
    out
}

/// Mode of the coordinator with respect to emergency vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    Normal,
    /// Confirmations follow `sequence` until the EV has exited.
    Emergency { ev: u64, sequence: Vec<u64>, next: usize },
}

impl Mode {
    pub fn is_emergency(&self) -> bool {
        matches!(self, Mode::Emergency { .. })
    }

    /// Next vehicle allowed to be confirmed, if any remain in the sequence.
    pub fn next_in_sequence(&self) -> Option<u64> {
        match self {
            Mode::Emergency { sequence, next, .. } => sequence.get(*next).copied(),
            Mode::Normal => None,
        }
    }

    pub fn advance(&mut self) {
        if let Mode::Emergency { next, .. } = self {
            *next += 1;
        }
    }

    /// Back to normal once the EV has left the intersection.
    pub fn on_exit(&mut self, vin: u64) {
        if matches!(self, Mode::Emergency { ev, .. } if *ev == vin) {
            *self = Mode::Normal;
        }
    }
}
