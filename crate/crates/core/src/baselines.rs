//! Traffic-light baselines: an optimised fixed-cycle plan and a reactive
//! program that gives way to an emergency vehicle.

use crate::error::{Error, Result};
use crate::geometry::{Approach, Intersection, Movement};
use serde::{Deserialize, Serialize};

/// Saturation flow per lane, veh/h.
pub const SATURATION_FLOW: f64 = 1800.0;
/// Lost time per cycle for four phases of 4 s.
pub const DEFAULT_LOST_TIME: f64 = 16.0;
pub const DEFAULT_YELLOW: f64 = 3.0;

pub fn optimal_cycle_length(lost_time: f64, y: f64) -> Result<f64> {
    if !(lost_time > 0.0) {
        return Err(Error::InvalidArgument(format!("lost time must be positive, got {lost_time}")));
    }
    if !(y >= 0.0) {
        return Err(Error::InvalidArgument(format!("flow ratio sum must be non-negative, got {y}")));
    }
    if y >= 1.0 {
        return Err(Error::Oversaturated(y));
    }
    Ok(1.5 * lost_time * (1.8 * y).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Green,
    Yellow,
    Red,
}

impl Signal {
    pub fn name(self) -> &'static str {
        match self {
            Signal::Green => "green",
            Signal::Yellow => "yellow",
            Signal::Red => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub movements: Vec<(Approach, Movement)>,
    pub green: f64,
    pub yellow: f64,
}

impl Phase {
    pub fn serves(&self, approach: Approach, movement: Movement) -> bool {
        self.movements.contains(&(approach, movement))
    }
}

/// N/S through+right, N/S left, E/W through+right, E/W left.
pub fn standard_phase_sets() -> [Vec<(Approach, Movement)>; 4] {
    use Approach::*;
    use Movement::*;
    [
        vec![(South, Through), (South, Right), (North, Through), (North, Right)],
        vec![(South, Left), (North, Left)],
        vec![(East, Through), (East, Right), (West, Through), (West, Right)],
        vec![(East, Left), (West, Left)],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub phases: Vec<Phase>,
    pub cycle: f64,
    pub lost_time: f64,
    /// Sum of critical flow ratios (0 when the plan is not flow-derived).
    pub y: f64,
}

impl PhasePlan {
    fn from_phases(phases: Vec<Phase>, lost_time: f64, y: f64) -> Result<PhasePlan> {
        if phases.is_empty() || phases.iter().any(|p| !(p.green > 0.0 && p.yellow > 0.0)) {
            return Err(Error::InvalidArgument("phase durations must be positive".into()));
        }
        let cycle = phases.iter().map(|p| p.green + p.yellow).sum();
        Ok(PhasePlan { phases, cycle, lost_time, y })
    }

    /// Cycle from the exponential model; the time left after the yellows is
    /// split in proportion to each phase's critical flow ratio.
    pub fn optimized(ratios: &[f64; 4], lost_time: f64, yellow: f64) -> Result<PhasePlan> {
        let y: f64 = ratios.iter().sum();
        let c0 = optimal_cycle_length(lost_time, y)?;
        let effective = c0 - 4.0 * yellow;
        if effective <= 0.0 {
            return Err(Error::InvalidArgument(format!("cycle {c0:.2} s leaves no green after yellows")));
        }
        let phases = standard_phase_sets()
            .into_iter()
            .zip(ratios)
            .map(|(movements, &r)| Phase {
                movements,
                green: if y > 0.0 { effective * r / y } else { effective / 4.0 },
                yellow,
            })
            .collect();
        Self::from_phases(phases, lost_time, y)
    }

    /// Default program of the reactive light: 31 s green for the through
    /// phases and 6.5 s for the left phases, 13 s yellow each.
    pub fn reactive_default() -> PhasePlan {
        let g = [31.0, 6.5, 31.0, 6.5];
        let phases = standard_phase_sets()
            .into_iter()
            .zip(g)
            .map(|(movements, green)| Phase { movements, green, yellow: 13.0 })
            .collect();
        Self::from_phases(phases, 52.0, 0.0).expect("valid default program")
    }

    pub fn phase_serving(&self, approach: Approach, movement: Movement) -> Option<usize> {
        self.phases.iter().position(|p| p.serves(approach, movement))
    }

    pub fn ticks(&self, h: f64) -> Vec<(i64, i64)> {
        self.phases.iter().map(|p| (to_ticks(p.green, h), to_ticks(p.yellow, h))).collect()
    }

    pub fn cycle_ticks(&self, h: f64) -> i64 {
        self.ticks(h).iter().map(|(g, y)| g + y).sum()
    }
}

fn to_ticks(s: f64, h: f64) -> i64 {
    ((s / h).round() as i64).max(1)
}

/// Critical flow ratio of each standard phase. `rates` are per-approach
/// arrival rates in veh/h; the turning split assigns traffic to lanes with
/// the preset's lane shares, and each phase takes its busiest lane.
pub fn critical_flow_ratios(ix: &Intersection, rates: &[f64; 4], p_l: f64, p_s: f64, p_r: f64) -> [f64; 4] {
    let n_in = ix.in_lanes() as usize;
    let share = |m: Movement| match m {
        Movement::Left => p_l,
        Movement::Through => p_s,
        Movement::Right => p_r,
    };
    let lane_flow = |a: Approach, lane: u8| -> f64 {
        Movement::ALL
            .iter()
            .flat_map(|&m| ix.lanes_for(m).into_iter().map(move |(l, w)| (m, l, w)))
            .filter(|&(_, l, _)| l == lane)
            .map(|(m, _, w)| rates[a.index()] * share(m) * w)
            .sum()
    };
    let mut out = [0.0; 4];
    for (i, set) in standard_phase_sets().iter().enumerate() {
        let mut best: f64 = 0.0;
        for &(a, m) in set {
            for (l, _) in ix.lanes_for(m) {
                if (l as usize) < n_in {
                    best = best.max(lane_flow(a, l));
                }
            }
        }
        out[i] = best / SATURATION_FLOW;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Green,
    Yellow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Override {
    /// Waiting for the current yellow to end before serving `phase`.
    Clearing { phase: usize },
    /// `phase` is green for the emergency vehicle.
    Serving { phase: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlState {
    pub phase: usize,
    pub stage: Stage,
    /// Ticks left in the current stage, including the current one.
    pub remaining: i64,
    pub ev_override: Option<Override>,
}

impl TlState {
    pub fn start(plan: &PhasePlan, h: f64) -> TlState {
        TlState { phase: 0, stage: Stage::Green, remaining: plan.ticks(h)[0].0, ev_override: None }
    }

    pub fn signal(&self, plan: &PhasePlan, approach: Approach, movement: Movement) -> Signal {
        if !plan.phases[self.phase].serves(approach, movement) {
            return Signal::Red;
        }
        match self.stage {
            Stage::Green => Signal::Green,
            Stage::Yellow => Signal::Yellow,
        }
    }

    /// Ticks until the movement turns red if nothing intervenes; `None`
    /// when it is red now.
    pub fn ticks_to_red(&self, plan: &PhasePlan, approach: Approach, movement: Movement, h: f64) -> Option<i64> {
        if !plan.phases[self.phase].serves(approach, movement) {
            return None;
        }
        Some(match self.stage {
            Stage::Green => self.remaining + plan.ticks(h)[self.phase].1,
            Stage::Yellow => self.remaining,
        })
    }

    fn advance(&self, plan: &PhasePlan, h: f64) -> TlState {
        let t = plan.ticks(h);
        let mut s = *self;
        s.remaining -= 1;
        if s.remaining > 0 {
            return s;
        }
        match s.stage {
            Stage::Green => {
                s.stage = Stage::Yellow;
                s.remaining = t[s.phase].1;
            }
            Stage::Yellow => {
                s.phase = (s.phase + 1) % plan.phases.len();
                s.stage = Stage::Green;
                s.remaining = t[s.phase].0;
            }
        }
        s
    }
}

/// One tick of the fixed program.
pub fn fixed_plan_step(state: &TlState, plan: &PhasePlan, h: f64) -> TlState {
    state.advance(plan, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactiveConfig {
    /// Green extension granted to the EV phase, seconds.
    pub extension: f64,
}

impl Default for ReactiveConfig {
    fn default() -> Self {
        ReactiveConfig { extension: 10.0 }
    }
}

/// One tick of the reactive light. `ev_phase` is the phase serving the
/// detected EV's movement, if an EV is waiting to enter.
pub fn reactive_tl_transition(
    state: &TlState,
    plan: &PhasePlan,
    ev_phase: Option<usize>,
    cfg: &ReactiveConfig,
    h: f64,
) -> TlState {
    let ext = to_ticks(cfg.extension, h);
    let Some(p) = ev_phase else {
        let mut s = fixed_plan_step(state, plan, h);
        s.ev_override = None;
        return s;
    };
    let mut s = *state;
    match s.ev_override {
        Some(Override::Serving { phase }) if phase == p => {
            // keep the green until the EV is through
            if s.phase == p && s.stage == Stage::Green && s.remaining <= 1 {
                s.remaining += ext;
            }
        }
        Some(Override::Clearing { phase }) if phase == p => {}
        _ if s.phase == p => {
            match s.stage {
                Stage::Green => s.remaining += ext,
                Stage::Yellow => {
                    s.stage = Stage::Green;
                    s.remaining = ext;
                }
            }
            s.ev_override = Some(Override::Serving { phase: p });
        }
        _ => {
            if s.stage == Stage::Green {
                s.stage = Stage::Yellow;
                s.remaining = plan.ticks(h)[s.phase].1;
            }
            s.ev_override = Some(Override::Clearing { phase: p });
        }
    }
    if s.ev_override == Some(Override::Clearing { phase: p }) && s.remaining <= 1 {
        return TlState {
            phase: p,
            stage: Stage::Green,
            remaining: plan.ticks(h)[p].0,
            ev_override: Some(Override::Serving { phase: p }),
        };
    }
    let mut next = s.advance(plan, h);
    next.ev_override = s.ev_override;
    next
}

/// Movements green or yellow in the same state must be pairwise
/// compatible. Returns the offending route pairs.
pub fn exclusion_violations(state: &TlState, plan: &PhasePlan, ix: &Intersection) -> Vec<(usize, usize)> {
    let active: Vec<usize> = (0..ix.routes.len())
        .filter(|&r| {
            let id = ix.route(r).id;
            state.signal(plan, id.approach, id.movement) != Signal::Red
        })
        .collect();
    let mut out = Vec::new();
    for (i, &a) in active.iter().enumerate() {
        for &b in &active[i + 1..] {
            if ix.in_lane_of(a) != ix.in_lane_of(b) && !ix.compatible(a, b) {
                out.push((a, b));
            }
        }
    }
    out
}

/// One row of the signal trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub t: f64,
    pub approach: Approach,
    pub movement: Movement,
    pub color: Signal,
}

/// Rows for every (approach, movement) whose colour differs between two states.
pub fn signal_changes(prev: Option<&TlState>, next: &TlState, plan: &PhasePlan, t: f64) -> Vec<SignalRecord> {
    let mut out = Vec::new();
    for a in Approach::ALL {
        for m in Movement::ALL {
            let c = next.signal(plan, a, m);
            if prev.is_none_or(|p| p.signal(plan, a, m) != c) {
                out.push(SignalRecord { t, approach: a, movement: m, color: c });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Preset;

    #[test]
    fn cycle_formula() {
        assert_eq!(optimal_cycle_length(16.0, 0.0).unwrap(), 24.0);
        assert!((optimal_cycle_length(16.0, 0.6).unwrap() - 70.7).abs() < 0.05);
        assert!(matches!(optimal_cycle_length(16.0, 1.0), Err(Error::Oversaturated(_))));
        assert!(optimal_cycle_length(0.0, 0.3).is_err());
    }

    #[test]
    fn optimized_plan_sums_to_cycle() {
        let p = PhasePlan::optimized(&[0.2, 0.1, 0.2, 0.1], DEFAULT_LOST_TIME, DEFAULT_YELLOW).unwrap();
        assert!((p.cycle - optimal_cycle_length(16.0, 0.6).unwrap()).abs() < 1e-9);
        assert!((p.phases[0].green / p.phases[1].green - 2.0).abs() < 1e-9);
    }

    #[test]
    fn reactive_program_durations() {
        let p = PhasePlan::reactive_default();
        assert_eq!(p.cycle, 127.0);
        let through_red = p.cycle - p.phases[0].green - p.phases[0].yellow;
        assert_eq!(through_red, 83.0);
    }

    #[test]
    fn critical_ratios_use_busiest_lane() {
        let ix = Intersection::standard(Preset::ThreeInTwoOut);
        let r = critical_flow_ratios(&ix, &[900.0; 4], 0.2, 0.6, 0.2);
        assert!((r[0] - 360.0 / 1800.0).abs() < 1e-12);
        assert!((r[1] - 180.0 / 1800.0).abs() < 1e-12);
    }
}
