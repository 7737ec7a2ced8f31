//! Intersection control agent: confirmed set, occupancy time intervals,
//! exhaustive space-time conflict detection and the delay-based update.

use crate::error::{Error, Result};
use crate::geometry::{rect_overlap, ExitLane, InLane, Intersection, RouteIdx};
use crate::kinematics::{delay_dtot, plan_crossing_tss, tss_to_dtot, Dtot, Tss, VehicleSpec};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Occupancy time interval on the tick grid, closed at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtiInterval {
    pub lb: i64,
    pub ub: i64,
}

impl OtiInterval {
    pub fn new(lb: i64, ub: i64) -> Self {
        debug_assert!(lb <= ub);
        OtiInterval { lb, ub }
    }

    pub fn tau_lb(&self, h: f64) -> f64 {
        self.lb as f64 * h
    }

    pub fn tau_ub(&self, h: f64) -> f64 {
        self.ub as f64 * h
    }

    pub fn overlaps(&self, other: &OtiInterval) -> bool {
        self.lb <= other.ub && other.lb <= self.ub
    }

    pub fn widened(&self, ticks: i64) -> OtiInterval {
        OtiInterval { lb: self.lb - ticks, ub: self.ub + ticks }
    }
}

/// Work counters for conflict detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Rectangle overlap tests, including those made while computing OTIs.
    pub comparisons: u64,
    pub oti_evals: u64,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.comparisons += other.comparisons;
        self.oti_evals += other.oti_evals;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedEntry {
    pub vin: u64,
    pub is_ev: bool,
    pub spec: VehicleSpec,
    pub route: RouteIdx,
    pub in_lane: InLane,
    pub exit_lane: ExitLane,
    pub tss: Tss,
    pub dtot: Dtot,
    /// Tick at which the front bumper reaches the exit line.
    pub exit_tick: i64,
    pub exit_speed: f64,
    pub confirmed_at: i64,
}

impl ConfirmedEntry {
    pub fn new(ix: &Intersection, spec: VehicleSpec, is_ev: bool, tss: Tss, confirmed_at: i64) -> Self {
        let route = tss.route;
        let k = tss.exit_index(ix.route(route).total_length);
        ConfirmedEntry {
            vin: spec.vin,
            is_ev,
            spec,
            route,
            in_lane: ix.in_lane_of(route),
            exit_lane: ix.exit_lane_of(route),
            dtot: tss_to_dtot(&tss, &spec),
            exit_tick: tss.start_tick + k as i64,
            exit_speed: tss.speeds[k],
            tss,
            confirmed_at,
        }
    }
}

/// Confirmed vehicles in confirmation order.
#[derive(Debug, Clone, Default)]
pub struct ConfirmedSet {
    entries: Vec<ConfirmedEntry>,
}

impl ConfirmedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, entry: ConfirmedEntry) -> Result<()> {
        if self.contains(entry.vin) {
            return Err(Error::InvalidArgument(format!("vehicle {} already confirmed", entry.vin)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn contains(&self, vin: u64) -> bool {
        self.entries.iter().any(|e| e.vin == vin)
    }

    pub fn get(&self, vin: u64) -> Option<&ConfirmedEntry> {
        self.entries.iter().find(|e| e.vin == vin)
    }

    pub fn remove(&mut self, vin: u64) -> Option<ConfirmedEntry> {
        let i = self.entries.iter().position(|e| e.vin == vin)?;
        Some(self.entries.remove(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConfirmedEntry> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[ConfirmedEntry] {
        &self.entries
    }

    /// Drops vehicles whose last occupancy is before `now`.
    pub fn prune(&mut self, now: i64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.dtot.end_tick() >= now);
        before - self.entries.len()
    }
}

/// A detected conflict with the confirmed vehicle `vin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictEntry {
    pub vin: u64,
    /// Lower OTI bound of the confirmed vehicle's conflicting occupancy.
    pub first_tick: i64,
    pub confirmed_oti: OtiInterval,
    pub request_oti: OtiInterval,
    pub kj: usize,
    pub ki: usize,
}

impl ConflictEntry {
    pub fn first_time_at_collision(&self, h: f64) -> f64 {
        self.first_tick as f64 * h
    }
}

pub fn sort_conflicts(c: &mut [ConflictEntry]) {
    c.sort_by_key(|e| (e.first_tick, e.vin));
}

/// Head vehicles waiting to be served, ordered by region entry tick.
#[derive(Debug, Clone, Default)]
pub struct HeadQueue {
    items: VecDeque<(i64, u64)>,
}

impl HeadQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sigma: i64, vin: u64) {
        if self.items.iter().any(|&(_, v)| v == vin) {
            return;
        }
        let pos = self.items.partition_point(|&k| k <= (sigma, vin));
        self.items.insert(pos, (sigma, vin));
    }

    pub fn remove(&mut self, vin: u64) -> bool {
        match self.items.iter().position(|&(_, v)| v == vin) {
            Some(i) => {
                self.items.remove(i);
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, vin: u64) -> bool {
        self.items.iter().any(|&(_, v)| v == vin)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn vins(&self) -> Vec<u64> {
        self.items.iter().map(|&(_, v)| v).collect()
    }
}

/// Exact OTI of occupancy `k`: the nearest earlier and later occupancies
/// that do not overlap it, or the first/last occupancy when none exists.
pub fn get_oti(dtot: &Dtot, k: usize, counters: &mut Counters) -> OtiInterval {
    counters.oti_evals += 1;
    let r = &dtot.rects[k];
    let mut lb = dtot.start_tick;
    for m in (0..k).rev() {
        counters.comparisons += 1;
        if !rect_overlap(r, &dtot.rects[m]) {
            lb = dtot.tick(m);
            break;
        }
    }
    let mut ub = dtot.end_tick();
    for m in k + 1..dtot.len() {
        counters.comparisons += 1;
        if !rect_overlap(r, &dtot.rects[m]) {
            ub = dtot.tick(m);
            break;
        }
    }
    OtiInterval::new(lb, ub)
}

/// First conflicting occupancy pair with one confirmed vehicle, scanning
/// its occupancies in order and then the requester's.
pub fn conflict_with(e: &ConfirmedEntry, dtot: &Dtot, counters: &mut Counters) -> Option<ConflictEntry> {
    for kj in 0..e.dtot.len() {
        for ki in 0..dtot.len() {
            counters.comparisons += 1;
            if !rect_overlap(&e.dtot.rects[kj], &dtot.rects[ki]) {
                continue;
            }
            let oj = get_oti(&e.dtot, kj, counters);
            let oi = get_oti(dtot, ki, counters);
            if oj.overlaps(&oi) {
                return Some(ConflictEntry { vin: e.vin, first_tick: oj.lb, confirmed_oti: oj, request_oti: oi, kj, ki });
            }
        }
    }
    None
}

/// Exhaustive conflict detection against every confirmed vehicle.
pub fn get_cv(set: &ConfirmedSet, dtot: &Dtot, counters: &mut Counters) -> Vec<ConflictEntry> {
    let mut out: Vec<_> = set.iter().filter_map(|e| conflict_with(e, dtot, counters)).collect();
    sort_conflicts(&mut out);
    out
}

/// Ticks the requester must be delayed so the conflicting OTIs become
/// disjoint, including one tick of margin.
pub fn required_delay(c: &ConflictEntry) -> i64 {
    if !c.confirmed_oti.overlaps(&c.request_oti) {
        return 0;
    }
    c.confirmed_oti.ub - c.request_oti.lb + 1
}

pub fn update_dtot(dtot: &Dtot, c: &ConflictEntry) -> Dtot {
    delay_dtot(dtot, required_delay(c)).expect("delay is non-negative")
}

/// Conflict detector used while resolving a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detector {
    Exhaustive,
    Enhanced(crate::enhanced::Techniques),
}

impl Detector {
    pub fn detect(
        &self,
        set: &ConfirmedSet,
        ix: &Intersection,
        spec: &VehicleSpec,
        dtot: &Dtot,
        stats: &mut crate::enhanced::RequestStats,
    ) -> Vec<ConflictEntry> {
        match self {
            Detector::Exhaustive => {
                stats.n = set.len();
                stats.n_filtered = set.len();
                stats.n_occ = dtot.len();
                stats.n_restricted = dtot.len();
                get_cv(set, dtot, &mut stats.counters)
            }
            Detector::Enhanced(t) => crate::enhanced::enhanced_get_cv(set, ix, spec, dtot, *t, stats),
        }
    }

    pub fn detect_one(
        &self,
        e: &ConfirmedEntry,
        ix: &Intersection,
        spec: &VehicleSpec,
        dtot: &Dtot,
        stats: &mut crate::enhanced::RequestStats,
    ) -> Option<ConflictEntry> {
        match self {
            Detector::Exhaustive => conflict_with(e, dtot, &mut stats.counters),
            Detector::Enhanced(t) => crate::enhanced::enhanced_conflict_with(e, ix, spec, dtot, *t, stats),
        }
    }
}

/// Parameters of a requested crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingPlan {
    pub route: RouteIdx,
    pub start_tick: i64,
    pub v_enter: f64,
    pub cap: Option<f64>,
}

impl CrossingPlan {
    pub fn effective_cap(&self, spec: &VehicleSpec, ix: &Intersection) -> f64 {
        let c = spec.v_caps.for_movement(ix.route(self.route).id.movement);
        self.cap.map_or(c, |x| x.min(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontConfig {
    /// Same-lane separation in ticks.
    pub delta_s_ticks: i64,
    /// Extra bumper gap beyond one vehicle length for same-route followers.
    pub gap_extra: f64,
    /// How far back an exit-lane predecessor is considered, in ticks.
    pub window_ticks: i64,
}

impl FrontConfig {
    pub fn new(delta_s: f64, h: f64) -> Self {
        FrontConfig {
            delta_s_ticks: (delta_s / h - 1e-9).ceil() as i64,
            gap_extra: 1.0,
            window_ticks: (3.0 / h).round() as i64,
        }
    }
}

/// Front-vehicle constraints. Returns the adjusted plan.
pub fn check_fv(
    set: &ConfirmedSet,
    ix: &Intersection,
    spec: &VehicleSpec,
    plan: CrossingPlan,
    cfg: &FrontConfig,
    h: f64,
) -> CrossingPlan {
    let mut plan = plan;
    let route_len = ix.route(plan.route).total_length;
    let exit_lane = ix.exit_lane_of(plan.route);
    let tss = plan_crossing_tss(spec, ix.route(plan.route), plan.route, plan.start_tick, plan.v_enter, plan.cap, h);
    let k = tss.exit_index(route_len);
    let my_exit = tss.start_tick + k as i64;
    let front = set
        .iter()
        .filter(|e| e.exit_lane == exit_lane && e.exit_tick <= my_exit && my_exit - e.exit_tick <= cfg.window_ticks)
        .max_by_key(|e| (e.exit_tick, e.confirmed_at));
    if let Some(f) = front {
        if tss.speeds[k] > f.exit_speed {
            plan.cap = Some(plan.effective_cap(spec, ix).min(f.exit_speed));
            plan.v_enter = plan.v_enter.min(f.exit_speed);
        }
        let t2 = plan_crossing_tss(spec, ix.route(plan.route), plan.route, plan.start_tick, plan.v_enter, plan.cap, h);
        let exit2 = t2.start_tick + t2.exit_index(route_len) as i64;
        let need = f.exit_tick + cfg.delta_s_ticks;
        if exit2 < need {
            plan.start_tick += need - exit2;
        }
    }
    let pred = set.iter().filter(|e| e.route == plan.route).max_by_key(|e| (e.tss.start_tick, e.confirmed_at));
    if let Some(p) = pred {
        let mine = plan_crossing_tss(spec, ix.route(plan.route), plan.route, plan.start_tick, plan.v_enter, plan.cap, h);
        let min_gap = spec.length + cfg.gap_extra;
        let mut start = plan.start_tick.max(p.tss.start_tick + cfg.delta_s_ticks);
        loop {
            let violated = (0..mine.len()).any(|m| {
                let t = start + m as i64;
                let pk = t - p.tss.start_tick;
                pk >= 0 && (pk as usize) < p.tss.len() && p.tss.progress[pk as usize] - mine.progress[m] < min_gap
            });
            if !violated {
                break;
            }
            start += 1;
        }
        plan.start_tick = start;
    }
    plan
}

/// Outcome of resolving a request against the confirmed set.
#[derive(Debug, Clone)]
pub struct Resolution {
    pub plan: CrossingPlan,
    pub tss: Tss,
    pub dtot: Dtot,
    /// Detection rounds, each clearing one confirmed vehicle.
    pub rounds: usize,
    /// Individual delay updates.
    pub updates: usize,
}

/// Front-vehicle check followed by conflict updates, repeated until the
/// plan is stable. Each round takes the earliest conflicting vehicle and
/// delays the request until it no longer conflicts with that vehicle.
/// Delays only move the start later and caps only drop.
pub fn resolve(
    set: &ConfirmedSet,
    ix: &Intersection,
    spec: &VehicleSpec,
    plan: CrossingPlan,
    detector: &Detector,
    fv: &FrontConfig,
    h: f64,
    stats: &mut crate::enhanced::RequestStats,
) -> Resolution {
    let mut plan = plan;
    let (mut rounds, mut updates) = (0, 0);
    loop {
        plan = check_fv(set, ix, spec, plan, fv, h);
        let tss = plan_crossing_tss(spec, ix.route(plan.route), plan.route, plan.start_tick, plan.v_enter, plan.cap, h);
        let mut dtot = tss_to_dtot(&tss, spec);
        while let Some(first) = detector.detect(set, ix, spec, &dtot, stats).first().copied() {
            let e = set.get(first.vin).expect("conflict with a confirmed vehicle");
            let mut c = Some(first);
            while let Some(x) = c {
                dtot = update_dtot(&dtot, &x);
                updates += 1;
                c = detector.detect_one(e, ix, spec, &dtot, stats);
            }
            rounds += 1;
        }
        if dtot.start_tick == plan.start_tick {
            return Resolution { plan, tss, dtot, rounds, updates };
        }
        plan.start_tick = dtot.start_tick;
    }
}

/// Resolve and insert in one step, for callers without an approach model.
pub fn process_request(
    set: &mut ConfirmedSet,
    ix: &Intersection,
    spec: &VehicleSpec,
    plan: CrossingPlan,
    detector: &Detector,
    fv: &FrontConfig,
    h: f64,
    now: i64,
) -> Result<Tss> {
    let mut stats = crate::enhanced::RequestStats::default();
    let r = resolve(set, ix, spec, plan, detector, fv, h, &mut stats);
    set.insert(ConfirmedEntry::new(ix, *spec, false, r.tss.clone(), now))?;
    Ok(r.tss)
}

/// A pair of occupancies that overlap in both space and OTI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub vin_a: u64,
    pub vin_b: u64,
    pub ka: usize,
    pub kb: usize,
}

/// Exhaustive pairwise safety audit over all confirmed vehicles.
pub fn audit(set: &ConfirmedSet) -> Vec<Violation> {
    let es = set.entries();
    let mut memo: Vec<Vec<Option<OtiInterval>>> = es.iter().map(|e| vec![None; e.dtot.len()]).collect();
    let mut scratch = Counters::default();
    let mut out = Vec::new();
    for a in 0..es.len() {
        for b in a + 1..es.len() {
            let (da, db) = (&es[a].dtot, &es[b].dtot);
            if da.end_tick() < db.start_tick || db.end_tick() < da.start_tick {
                continue;
            }
            for ka in 0..da.len() {
                for kb in 0..db.len() {
                    if !rect_overlap(&da.rects[ka], &db.rects[kb]) {
                        continue;
                    }
                    let oa = *memo[a][ka].get_or_insert_with(|| get_oti(da, ka, &mut scratch));
                    let ob = *memo[b][kb].get_or_insert_with(|| get_oti(db, kb, &mut scratch));
                    if oa.overlaps(&ob) {
                        out.push(Violation { vin_a: es[a].vin, vin_b: es[b].vin, ka, kb });
                    }
                }
            }
        }
    }
    out
}
