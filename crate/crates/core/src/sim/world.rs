use super::approach::{admission_speed, advance, can_stop, next_speed, ApproachParams, Control, Leader};
use super::config::{Controller, RdicaDetector, ScenarioConfig};
use super::events::{compute_metrics, Event, EventKind, Metrics};
use crate::baselines::{
    critical_flow_ratios, fixed_plan_step, reactive_tl_transition, signal_changes, PhasePlan, ReactiveConfig, Signal,
    TlState,
};
use crate::dica::{resolve, ConfirmedEntry, ConfirmedSet, CrossingPlan, Detector, FrontConfig, HeadQueue, Resolution};
use crate::enhanced::{record_counters, PerfCounters, RequestStats, Techniques};
use crate::error::{Error, Result};
use crate::geometry::{footprint, rect_min_distance, rect_overlap, Approach, Intersection, Movement, OrientedRect, RouteIdx};
use crate::kinematics::{predicted_arrival_time, Tss, VehicleSpec};
use crate::rdica::{ga_optimize, Mode, OrderVehicle, OrderableSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

/// Re-plans allowed before a request falls back to stopping at the line.
const MAX_REQUEST_ITERS: usize = 64;
/// A waiting vehicle counts as stopped within this distance of the line.
const STOP_ZONE: f64 = 1.0;
/// Width of the min-distance histogram bins, metres; the last bin is open.
const HIST_BINS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VPhase {
    Outside,
    Approaching,
    Confirmed,
    Crossing,
    Exited,
}

#[derive(Debug, Clone)]
struct Confirmed {
    tss: Tss,
    /// Approach states for ticks `base`, `base + 1`, ... before entry.
    traj: Vec<(f64, f64)>,
    base: i64,
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub vin: u64,
    pub spec: VehicleSpec,
    pub is_ev: bool,
    pub approach: Approach,
    pub lane: u8,
    pub movement: Movement,
    pub route: RouteIdx,
    /// Front-bumper distance to the enter line; negative once inside.
    pub d: f64,
    pub v: f64,
    pub v_spawn: f64,
    pub phase: VPhase,
    pub spawn_tick: i64,
    /// Tick of entry into the communication region.
    pub sigma: i64,
    pub head_since: Option<i64>,
    pub stopped: bool,
    plan: Option<Confirmed>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDistanceSample {
    pub t: f64,
    pub pairs: usize,
    /// `None` when fewer than two vehicles are inside.
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub generated: usize,
    pub exited: usize,
    pub waiting: usize,
}

impl FlowSample {
    pub fn ratio(&self) -> Option<f64> {
        (self.exited > 0).then(|| self.generated as f64 / self.exited as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: i64,
    pub requests: u64,
    pub rejected: u64,
    pub fallbacks: u64,
    pub comparisons: u64,
    pub oti_evals: u64,
    pub ga_runs: u64,
    /// Overlapping footprints inside the intersection, summed over steps.
    pub safety_violations: u64,
    /// Same-lane footprint overlaps on the approach.
    pub approach_violations: u64,
    pub min_distance: Option<f64>,
    /// Pair distances sampled each second, 1 m bins, last bin open.
    pub histogram: Vec<u64>,
    /// Longest time a head vehicle waited for confirmation, seconds.
    pub max_head_wait: f64,
    pub drained: bool,
}

/// Everything a run produces. `coordinator_wall` and the wall times in
/// `perf` are the only non-deterministic parts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub metrics: Metrics,
    pub summary: RunSummary,
    pub log: Vec<Event>,
    pub perf: Vec<PerfCounters>,
    pub min_distance: Vec<MinDistanceSample>,
    pub flow: Vec<FlowSample>,
    pub coordinator_wall: f64,
}

struct Signals {
    plan: PhasePlan,
    state: TlState,
    reactive: Option<ReactiveConfig>,
}

pub struct World {
    cfg: ScenarioConfig,
    ix: Arc<Intersection>,
    p: ApproachParams,
    rng: ChaCha8Rng,
    spawn_p: [f64; 4],
    tick: i64,
    vehicles: Vec<Vehicle>,
    /// Vehicles in the region per in-lane, front first.
    lanes: Vec<Vec<usize>>,
    pending: Vec<VecDeque<usize>>,
    set: ConfirmedSet,
    queue: HeadQueue,
    detector: Detector,
    fv: FrontConfig,
    mode: Mode,
    ev_handled: Option<u64>,
    signals: Option<Signals>,
    log: Vec<Event>,
    perf: Vec<PerfCounters>,
    min_distance: Vec<MinDistanceSample>,
    flow: Vec<FlowSample>,
    summary: RunSummary,
    coordinator_wall: f64,
    generated: usize,
    exited: usize,
}

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<World> {
        cfg.validate()?;
        let ix = Intersection::standard(cfg.preset);
        let spec = VehicleSpec::standard(0);
        let p = ApproachParams { h: cfg.h, a_max: spec.a_max, b: spec.a_min, v_m: cfg.v_m, length: spec.length, min_gap: spec.length };
        let detector = match cfg.controller {
            Controller::Dica => Detector::Exhaustive,
            Controller::Enhanced => Detector::Enhanced(cfg.techniques()?),
            Controller::Rdica => match cfg.rdica_detector {
                RdicaDetector::Exhaustive => Detector::Exhaustive,
                RdicaDetector::Enhanced => Detector::Enhanced(Techniques::all()),
            },
            Controller::FixedTl | Controller::ReactiveTl => Detector::Enhanced(Techniques::all()),
        };
        let signals = match cfg.controller {
            Controller::FixedTl => {
                let ratios = critical_flow_ratios(&ix, &cfg.hourly_rates(), cfg.p_l, cfg.p_s, cfg.p_r);
                let plan = PhasePlan::optimized(&ratios, cfg.lost_time, cfg.yellow)?;
                Some(Signals { state: TlState::start(&plan, cfg.h), plan, reactive: None })
            }
            Controller::ReactiveTl => {
                let plan = PhasePlan::reactive_default();
                Some(Signals {
                    state: TlState::start(&plan, cfg.h),
                    plan,
                    reactive: Some(ReactiveConfig { extension: cfg.ev_extension }),
                })
            }
            _ => None,
        };
        let n_lanes = 4 * ix.in_lanes() as usize;
        let mut w = World {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            spawn_p: cfg.spawn_probabilities(),
            fv: FrontConfig::new(cfg.delta_s, cfg.h),
            cfg,
            ix,
            p,
            tick: 0,
            vehicles: Vec::new(),
            lanes: vec![Vec::new(); n_lanes],
            pending: vec![VecDeque::new(); n_lanes],
            set: ConfirmedSet::new(),
            queue: HeadQueue::new(),
            detector,
            mode: Mode::Normal,
            ev_handled: None,
            signals,
            log: Vec::new(),
            perf: Vec::new(),
            min_distance: Vec::new(),
            flow: Vec::new(),
            summary: RunSummary { histogram: vec![0; HIST_BINS], ..Default::default() },
            coordinator_wall: 0.0,
            generated: 0,
            exited: 0,
        };
        if let Some(s) = &w.signals {
            for r in signal_changes(None, &s.state, &s.plan, 0.0) {
                w.log.push(Event {
                    tick: 0,
                    t: 0.0,
                    vin: 0,
                    kind: EventKind::Signal { approach: r.approach, movement: r.movement, color: r.color },
                });
            }
        }
        Ok(w)
    }

    pub fn tick(&self) -> i64 {
        self.tick
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn confirmed(&self) -> &ConfirmedSet {
        &self.set
    }

    pub fn waiting(&self) -> usize {
        self.generated - self.exited
    }

    fn lane_index(&self, a: Approach, lane: u8) -> usize {
        a.index() * self.ix.in_lanes() as usize + lane as usize
    }

    fn emit(&mut self, tick: i64, vin: u64, kind: EventKind) {
        self.log.push(Event { tick, t: tick as f64 * self.cfg.h, vin, kind });
    }

    fn ev_in_system(&self) -> bool {
        self.vehicles.iter().any(|v| v.is_ev && v.phase != VPhase::Exited)
    }

    fn spawn(&mut self, now: i64) {
        for a in Approach::ALL {
            let u: [f64; 5] = std::array::from_fn(|_| self.rng.gen::<f64>());
            if u[0] >= self.spawn_p[a.index()] || self.cfg.spawn_limit.is_some_and(|n| self.generated >= n) {
                continue;
            }
            let movement = if u[1] < self.cfg.p_l {
                Movement::Left
            } else if u[1] < self.cfg.p_l + self.cfg.p_s {
                Movement::Through
            } else {
                Movement::Right
            };
            let lanes = self.ix.lanes_for(movement);
            let mut acc = 0.0;
            let mut lane = lanes.last().expect("movement has a lane").0;
            for &(l, w) in &lanes {
                acc += w;
                if u[2] < acc {
                    lane = l;
                    break;
                }
            }
            let is_ev = u[4] < self.cfg.p_ev && !self.ev_in_system();
            let vin = self.vehicles.len() as u64 + 1;
            let route = self.ix.route_for(a, lane, movement).expect("lane serves movement");
            self.vehicles.push(Vehicle {
                vin,
                spec: VehicleSpec::standard(vin),
                is_ev,
                approach: a,
                lane,
                movement,
                route,
                d: self.cfg.comm_region,
                v: 0.0,
                v_spawn: self.cfg.v_m * (0.4 + 0.6 * u[3]),
                phase: VPhase::Outside,
                spawn_tick: now,
                sigma: -1,
                head_since: None,
                stopped: false,
                plan: None,
            });
            let li = self.lane_index(a, lane);
            self.pending[li].push_back(vin as usize - 1);
            self.generated += 1;
            self.emit(now, vin, EventKind::Spawn { approach: a, lane, movement, is_ev });
        }
    }

    fn leader_now(&self, li: usize) -> Option<Leader> {
        self.lanes[li].last().map(|&i| Leader { d: self.vehicles[i].d, v: self.vehicles[i].v })
    }

    fn admit(&mut self, now: i64) {
        for li in 0..self.lanes.len() {
            let Some(&vi) = self.pending[li].front() else { continue };
            let leader = self.leader_now(li);
            let wanted = self.vehicles[vi].v_spawn;
            let Some(v) = admission_speed(self.cfg.comm_region, wanted, leader, &self.p) else { continue };
            self.pending[li].pop_front();
            let veh = &mut self.vehicles[vi];
            veh.d = self.cfg.comm_region;
            veh.v = v;
            veh.phase = VPhase::Approaching;
            veh.sigma = now;
            self.lanes[li].push(vi);
            let vin = veh.vin;
            self.emit(now, vin, EventKind::Detect { v, sequence: None, revoked: None });
        }
    }

    fn detect_heads(&mut self, now: i64) {
        for li in 0..self.lanes.len() {
            let Some(&vi) = self.lanes[li].iter().find(|&&i| self.vehicles[i].phase != VPhase::Crossing) else {
                continue;
            };
            let veh = &mut self.vehicles[vi];
            if veh.phase == VPhase::Approaching && veh.head_since.is_none() {
                veh.head_since = Some(now);
                self.queue.push(veh.sigma, veh.vin);
            }
        }
    }

    /// Predecessor on the lane if it is already crossing.
    fn crossing_leader(&self, vi: usize) -> Option<&Tss> {
        let veh = &self.vehicles[vi];
        let lane = &self.lanes[self.lane_index(veh.approach, veh.lane)];
        let pos = lane.iter().position(|&i| i == vi)?;
        let prev = &self.vehicles[*lane.get(pos.checked_sub(1)?)?];
        match (&prev.phase, &prev.plan) {
            (VPhase::Crossing, Some(c)) => Some(&c.tss),
            _ => None,
        }
    }

    /// Simulates the approach from the current state under `ctl` until the
    /// front bumper reaches the line. Returns the states before entry, the
    /// entry tick and the entry speed. With `Control::Stop` it runs until
    /// the vehicle is stopped at the line instead and reports that tick.
    fn simulate(&self, vi: usize, now: i64, ctl: Control) -> (Vec<(f64, f64)>, i64, f64) {
        let veh = &self.vehicles[vi];
        let leader_tss = self.crossing_leader(vi);
        let cap = veh.spec.v_caps.for_movement(veh.movement);
        let (mut d, mut v, mut t) = (veh.d, veh.v, now);
        let mut traj = Vec::new();
        let limit = (3600.0 / self.cfg.h) as usize;
        loop {
            let leader = leader_tss.and_then(|ts| {
                let k = t + 1 - ts.start_tick;
                (k >= 0 && (k as usize) < ts.len()).then(|| Leader { d: -ts.progress[k as usize], v: ts.speeds[k as usize] })
            });
            let vn = next_speed(d, v, cap, leader, ctl, t, &self.p);
            let dn = advance(d, v, vn, self.cfg.h);
            t += 1;
            if dn <= 0.0 {
                return (traj, t, vn);
            }
            traj.push((dn, vn));
            d = dn;
            v = vn;
            if ctl == Control::Stop && v < self.cfg.stop_speed && d < STOP_ZONE || traj.len() > limit {
                return (traj, t, 0.0);
            }
        }
    }

    fn timed_resolve(&mut self, vi: usize, plan: CrossingPlan, stats: &mut RequestStats) -> Resolution {
        let spec = self.vehicles[vi].spec;
        let t0 = Instant::now();
        let r = resolve(&self.set, &self.ix, &spec, plan, &self.detector, &self.fv, self.cfg.h, stats);
        self.coordinator_wall += t0.elapsed().as_secs_f64();
        r
    }

    /// Request loop: predict the entry, resolve, and re-plan the approach
    /// until the approach and the confirmed crossing agree.
    fn request(&mut self, vi: usize, now: i64) -> (Resolution, Vec<(f64, f64)>, bool, RequestStats) {
        let route = self.vehicles[vi].route;
        let mut stats = RequestStats::default();
        let (mut traj, mut entry, mut v_entry) = self.simulate(vi, now, Control::Free);
        let mut plan = CrossingPlan { route, start_tick: entry, v_enter: v_entry, cap: None };
        for _ in 0..MAX_REQUEST_ITERS {
            let r = self.timed_resolve(vi, plan, &mut stats);
            if r.plan.start_tick == entry && (r.plan.v_enter - v_entry).abs() <= 1e-9 {
                return (r, traj, false, stats);
            }
            let (s0, vt) = (r.plan.start_tick, r.plan.v_enter);
            (traj, entry, v_entry) = self.simulate(vi, now, Control::Arrive { s0, v_target: vt });
            plan = CrossingPlan { route, start_tick: entry.max(s0), v_enter: v_entry.min(vt), cap: r.plan.cap };
        }
        // stop at the line, then enter from rest whenever the crossing is free
        let (traj, stopped_at, _) = self.simulate(vi, now, Control::Stop);
        let plan = CrossingPlan { route, start_tick: stopped_at + 1, v_enter: 0.0, cap: plan.cap };
        let r = self.timed_resolve(vi, plan, &mut stats);
        (r, traj, true, stats)
    }

    fn confirm(&mut self, vi: usize, now: i64, r: Resolution, traj: Vec<(f64, f64)>, fallback: bool, stats: RequestStats) -> Result<()> {
        let veh = &self.vehicles[vi];
        let (vin, spec, is_ev) = (veh.vin, veh.spec, veh.is_ev);
        let tss = r.tss.clone();
        self.set.insert(ConfirmedEntry::new(&self.ix, spec, is_ev, tss.clone(), now))?;
        self.queue.remove(vin);
        let veh = &mut self.vehicles[vi];
        if let Some(h0) = veh.head_since {
            self.summary.max_head_wait = self.summary.max_head_wait.max((now - h0) as f64 * self.cfg.h);
        }
        veh.phase = VPhase::Confirmed;
        veh.plan = Some(Confirmed { tss, traj, base: now + 1 });
        self.summary.requests += 1;
        self.summary.fallbacks += fallback as u64;
        self.summary.comparisons += stats.counters.comparisons;
        self.summary.oti_evals += stats.counters.oti_evals;
        let label = match self.detector {
            Detector::Exhaustive => "exhaustive".to_string(),
            Detector::Enhanced(t) => t.label(),
        };
        self.perf.push(record_counters(self.summary.requests, vin, &stats, 0.0, &label));
        self.emit(now, vin, EventKind::Response { accepted: true, start_tick: r.plan.start_tick, v_enter: r.plan.v_enter, rounds: r.rounds, fallback });
        Ok(())
    }

    fn serve(&mut self, vi: usize, now: i64) -> Result<()> {
        let (vin, d, v) = (self.vehicles[vi].vin, self.vehicles[vi].d, self.vehicles[vi].v);
        self.emit(now, vin, EventKind::Request { d, v });
        let wall0 = self.coordinator_wall;
        let (r, traj, fb, stats) = self.request(vi, now);
        self.confirm(vi, now, r, traj, fb, stats)?;
        self.perf.last_mut().expect("just pushed").wall_seconds = self.coordinator_wall - wall0;
        Ok(())
    }

    fn ica_control(&mut self, now: i64) -> Result<()> {
        if self.cfg.controller == Controller::Rdica {
            self.rdica_trigger(now)?;
        }
        if self.mode.is_emergency() {
            while let Some(next) = self.mode.next_in_sequence() {
                if !self.queue.contains(next) {
                    break;
                }
                self.serve(next as usize - 1, now)?;
                self.mode.advance();
            }
            return Ok(());
        }
        for vin in self.queue.vins() {
            self.serve(vin as usize - 1, now)?;
        }
        Ok(())
    }

    fn rdica_trigger(&mut self, now: i64) -> Result<()> {
        if self.mode.is_emergency() {
            return Ok(());
        }
        let Some(ev) = self
            .vehicles
            .iter()
            .position(|v| v.is_ev && v.phase == VPhase::Approaching && self.ev_handled != Some(v.vin))
        else {
            return Ok(());
        };
        let ev_vin = self.vehicles[ev].vin;
        self.ev_handled = Some(ev_vin);
        let ev_li = self.lane_index(self.vehicles[ev].approach, self.vehicles[ev].lane);
        let mut members = Vec::new();
        let mut revoked = Vec::new();
        for li in 0..self.lanes.len() {
            for &vi in &self.lanes[li] {
                let veh = &self.vehicles[vi];
                match veh.phase {
                    VPhase::Confirmed if can_stop(veh.d, veh.v, &self.p) => {
                        if li == ev_li || veh.d > 0.0 {
                            members.push(vi);
                            revoked.push(vi);
                        }
                    }
                    VPhase::Approaching if li == ev_li => members.push(vi),
                    _ => {}
                }
                if vi == ev {
                    break;
                }
            }
        }
        let now_s = now as f64 * self.cfg.h;
        let mut order = Vec::with_capacity(members.len());
        for &vi in &members {
            let veh = &self.vehicles[vi];
            let confirmed_entry = veh.plan.as_ref().map(|c| c.tss.start_tick as f64 * self.cfg.h);
            order.push(OrderVehicle {
                vin: veh.vin,
                t_a: now_s + predicted_arrival_time(veh.d, veh.v, self.cfg.v_m, veh.spec.a_max, 0.0),
                confirmed_entry,
                route: veh.route,
                lane: self.ix.in_lane_of(veh.route),
                dist_to_line: veh.d,
                is_ev: veh.is_ev,
            });
        }
        for &vi in &revoked {
            let vin = self.vehicles[vi].vin;
            self.set.remove(vin);
            let veh = &mut self.vehicles[vi];
            veh.phase = VPhase::Approaching;
            veh.plan = None;
            veh.head_since = Some(now);
            let sigma = veh.sigma;
            self.queue.push(sigma, vin);
        }
        let mut set = OrderableSet::new(order, &self.ix)?;
        set.strict_priority = self.cfg.strict_priority;
        let params = crate::rdica::GaParams { seed: self.cfg.seed ^ mix(ev_vin), ..self.cfg.ga_params() };
        let t0 = Instant::now();
        let best = ga_optimize(&set, &params, &self.cfg.separation())?;
        self.coordinator_wall += t0.elapsed().as_secs_f64();
        self.summary.ga_runs += 1;
        let sequence = set.vins(&best.best);
        let revoked_vins: Vec<u64> = revoked.iter().map(|&i| self.vehicles[i].vin).collect();
        if let Some(e) = self.log.iter_mut().rev().find(|e| e.vin == ev_vin && matches!(e.kind, EventKind::Detect { .. })) {
            if let EventKind::Detect { sequence: s, revoked: r, .. } = &mut e.kind {
                *s = Some(sequence.clone());
                *r = Some(revoked_vins);
            }
        }
        self.mode = Mode::Emergency { ev: ev_vin, sequence, next: 0 };
        Ok(())
    }

    fn ev_phase(&self, plan: &PhasePlan) -> Option<usize> {
        self.vehicles
            .iter()
            .find(|v| v.is_ev && matches!(v.phase, VPhase::Approaching | VPhase::Confirmed))
            .and_then(|v| plan.phase_serving(v.approach, v.movement))
    }

    fn tl_control(&mut self, now: i64) -> Result<()> {
        for vin in self.queue.vins() {
            let vi = vin as usize - 1;
            let (a, m, d, v) = {
                let x = &self.vehicles[vi];
                (x.approach, x.movement, x.d, x.v)
            };
            let s = self.signals.as_ref().expect("signal controller");
            let color = s.state.signal(&s.plan, a, m);
            let to_red = s.state.ticks_to_red(&s.plan, a, m, self.cfg.h);
            let stoppable = can_stop(d, v, &self.p);
            if color == Signal::Red || (color == Signal::Yellow && stoppable) {
                continue;
            }
            self.emit(now, vin, EventKind::Request { d, v });
            let wall0 = self.coordinator_wall;
            let (r, traj, fb, stats) = self.request(vi, now);
            let limit = now + to_red.unwrap_or(0);
            if r.plan.start_tick > limit && stoppable {
                self.summary.rejected += 1;
                self.emit(now, vin, EventKind::Response { accepted: false, start_tick: r.plan.start_tick, v_enter: r.plan.v_enter, rounds: r.rounds, fallback: fb });
                continue;
            }
            self.confirm(vi, now, r, traj, fb, stats)?;
            self.perf.last_mut().expect("just pushed").wall_seconds = self.coordinator_wall - wall0;
        }
        Ok(())
    }

    fn advance_signals(&mut self, next: i64) {
        let ev_phase = match &self.signals {
            Some(s) if s.reactive.is_some() => self.ev_phase(&s.plan),
            _ => None,
        };
        let h = self.cfg.h;
        let Some(s) = self.signals.as_mut() else { return };
        let prev = s.state;
        s.state = match &s.reactive {
            Some(rc) => reactive_tl_transition(&prev, &s.plan, ev_phase, rc, h),
            None => fixed_plan_step(&prev, &s.plan, h),
        };
        let changes = signal_changes(Some(&prev), &s.state, &s.plan, next as f64 * h);
        for r in changes {
            self.emit(next, 0, EventKind::Signal { approach: r.approach, movement: r.movement, color: r.color });
        }
    }

    /// Moves every vehicle in the region to tick `now + 1`.
    fn update(&mut self, now: i64) {
        let n1 = now + 1;
        let mut exits = Vec::new();
        for li in 0..self.lanes.len() {
            let mut leader: Option<Leader> = None;
            for pos in 0..self.lanes[li].len() {
                let vi = self.lanes[li][pos];
                let veh = &mut self.vehicles[vi];
                match veh.phase {
                    VPhase::Crossing => {
                        let tss = &veh.plan.as_ref().expect("crossing has a plan").tss;
                        let k = (n1 - tss.start_tick) as usize;
                        let k = k.min(tss.len() - 1);
                        veh.d = -tss.progress[k];
                        veh.v = tss.speeds[k];
                        if n1 >= tss.end_tick() {
                            veh.phase = VPhase::Exited;
                            exits.push(vi);
                            continue;
                        }
                    }
                    VPhase::Confirmed => {
                        let c = veh.plan.as_ref().expect("confirmed has a plan");
                        if n1 >= c.tss.start_tick {
                            veh.phase = VPhase::Crossing;
                            veh.d = 0.0;
                            veh.v = c.tss.speeds[0];
                            let (vin, v) = (veh.vin, veh.v);
                            self.log.push(Event { tick: n1, t: n1 as f64 * self.cfg.h, vin, kind: EventKind::Enter { v } });
                        } else {
                            let k = (n1 - c.base) as usize;
                            match c.traj.get(k) {
                                Some(&(d, v)) => {
                                    veh.d = d;
                                    veh.v = v;
                                }
                                None => veh.v = 0.0,
                            }
                        }
                    }
                    VPhase::Approaching => {
                        let cap = veh.spec.v_caps.for_movement(veh.movement);
                        let vn = next_speed(veh.d, veh.v, cap, leader, Control::Stop, now, &self.p);
                        veh.d = advance(veh.d, veh.v, vn, self.cfg.h);
                        veh.v = vn;
                    }
                    VPhase::Outside | VPhase::Exited => unreachable!("only region vehicles are on lanes"),
                }
                let veh = &mut self.vehicles[vi];
                if veh.phase != VPhase::Crossing && !veh.stopped && veh.v < self.cfg.stop_speed && veh.d <= STOP_ZONE {
                    veh.stopped = true;
                    let vin = veh.vin;
                    self.log.push(Event { tick: n1, t: n1 as f64 * self.cfg.h, vin, kind: EventKind::Stop });
                }
                let veh = &self.vehicles[vi];
                if let Some(l) = leader {
                    if veh.d - l.d < veh.spec.length - 1e-9 {
                        self.summary.approach_violations += 1;
                    }
                }
                leader = Some(Leader { d: veh.d, v: veh.v });
            }
        }
        for vi in exits {
            let (vin, li) = {
                let v = &self.vehicles[vi];
                (v.vin, self.lane_index(v.approach, v.lane))
            };
            self.lanes[li].retain(|&i| i != vi);
            self.exited += 1;
            self.mode.on_exit(vin);
            self.emit(n1, vin, EventKind::Exit);
        }
    }

    fn inside_rects(&self) -> Vec<OrientedRect> {
        let mut out = Vec::new();
        for lane in &self.lanes {
            for &vi in lane {
                let veh = &self.vehicles[vi];
                if veh.phase != VPhase::Crossing {
                    continue;
                }
                let c = veh.plan.as_ref().expect("crossing has a plan");
                let k = ((self.tick - c.tss.start_tick) as usize).min(c.tss.len() - 1);
                out.push(footprint(c.tss.poses[k], veh.spec.length, veh.spec.width).expect("valid spec"));
            }
        }
        out
    }

    fn sample(&mut self) {
        let rects = self.inside_rects();
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                if rect_overlap(&rects[i], &rects[j]) {
                    self.summary.safety_violations += 1;
                }
            }
        }
        let per_second = (1.0 / self.cfg.h).round().max(1.0) as i64;
        if self.tick % per_second == 0 {
            let mut best: Option<f64> = None;
            let mut pairs = 0;
            for i in 0..rects.len() {
                for j in i + 1..rects.len() {
                    let d = rect_min_distance(&rects[i], &rects[j]);
                    pairs += 1;
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                    let bin = (d.max(0.0) as usize).min(HIST_BINS - 1);
                    self.summary.histogram[bin] += 1;
                }
            }
            if let Some(b) = best {
                self.summary.min_distance = Some(self.summary.min_distance.map_or(b, |m| m.min(b)));
            }
            self.min_distance.push(MinDistanceSample { t: self.tick as f64 * self.cfg.h, pairs, min_distance: best });
        }
        self.flow.push(FlowSample {
            t: self.tick as f64 * self.cfg.h,
            generated: self.generated,
            exited: self.exited,
            waiting: self.generated - self.exited,
        });
    }

    /// One fixed step from `tick` to `tick + 1`.
    pub fn step(&mut self, spawning: bool) -> Result<()> {
        let now = self.tick;
        if spawning {
            self.spawn(now);
        }
        self.admit(now);
        self.detect_heads(now);
        if self.signals.is_some() {
            self.tl_control(now)?;
        } else {
            self.ica_control(now)?;
        }
        self.update(now);
        self.advance_signals(now + 1);
        self.tick = now + 1;
        let keep = self.tick - self.fv.window_ticks;
        self.set.prune(keep);
        self.sample();
        Ok(())
    }

    pub fn finish(self) -> RunOutput {
        let metrics = compute_metrics(&self.log);
        let mut summary = self.summary;
        summary.steps = self.tick;
        RunOutput {
            config: self.cfg,
            metrics,
            summary,
            log: self.log,
            perf: self.perf,
            min_distance: self.min_distance,
            flow: self.flow,
            coordinator_wall: self.coordinator_wall,
        }
    }
}

/// Runs a scenario: spawn for `duration`, then optionally drain.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let mut w = World::new(cfg.clone())?;
    let spawn_ticks = (cfg.duration / cfg.h).round() as i64;
    while w.tick < spawn_ticks {
        w.step(true)?;
        if cfg.spawn_limit.is_some_and(|n| w.generated >= n) {
            break;
        }
    }
    let mut drained = false;
    if cfg.drain {
        let limit = spawn_ticks + (cfg.drain_limit / cfg.h).round() as i64;
        while w.waiting() > 0 && w.tick < limit {
            w.step(false)?;
        }
        drained = w.waiting() == 0;
    }
    let mut out = w.finish();
    out.summary.drained = drained;
    if out.summary.safety_violations > 0 {
        return Err(Error::Runtime(format!(
            "{} overlapping footprint pairs inside the intersection",
            out.summary.safety_violations
        )));
    }
    Ok(out)
}
