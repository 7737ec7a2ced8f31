//! Longitudinal control on the approach lanes. Every speed bound has the
//! form `v_next <= f(R)`: the largest next speed from which the vehicle can
//! still brake at `b` to satisfy a distance budget `R`.

use crate::kinematics::predicted_arrival_time;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachParams {
    pub h: f64,
    pub a_max: f64,
    /// Braking magnitude.
    pub b: f64,
    pub v_m: f64,
    pub length: f64,
    /// Standstill gap to the leader's rear bumper.
    pub min_gap: f64,
}

/// Predecessor state at the next tick: front-bumper distance to the enter
/// line (negative once inside) and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub d: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    /// No obligation at the line beyond the speed cap.
    Free,
    /// Be able to stop before the line.
    Stop,
    /// Do not reach the line before tick `s0`; arrive no faster than `v_target`.
    Arrive { s0: i64, v_target: f64 },
}

/// Extra distance a discrete braking sequence can cover beyond `v^2 / 2b`.
fn discrete_slack(p: &ApproachParams) -> f64 {
    p.b * p.h * p.h / 8.0
}

fn f_bound(r: f64, p: &ApproachParams) -> f64 {
    let r = r - discrete_slack(p);
    if r <= 0.0 {
        return 0.0;
    }
    let bh = p.b * p.h;
    0.5 * (-bh + (bh * bh + 8.0 * p.b * r).sqrt())
}

/// Next speed for a vehicle at distance `d` from the line with speed `v`
/// at tick `tick`. `line_cap` is the speed it may carry across the line.
pub fn next_speed(d: f64, v: f64, line_cap: f64, leader: Option<Leader>, ctl: Control, tick: i64, p: &ApproachParams) -> f64 {
    let base = d - 0.5 * p.h * v;
    let lo = (v - p.b * p.h).max(0.0);
    let mut hi = (v + p.a_max * p.h).min(p.v_m);
    if d > 0.0 {
        hi = hi.min(f_bound(base + line_cap * line_cap / (2.0 * p.b), p));
    }
    if let Some(l) = leader {
        hi = hi.min(f_bound(base - l.d - p.length - p.min_gap + l.v * l.v / (2.0 * p.b), p));
    }
    match ctl {
        Control::Free => {}
        Control::Stop => hi = hi.min(f_bound(base, p)),
        Control::Arrive { s0, v_target } => {
            hi = hi.min(f_bound(base + v_target * v_target / (2.0 * p.b), p).max(v_target));
            let ok = |vn: f64| {
                let dn = d - 0.5 * p.h * (v + vn);
                if dn > 0.0 && vn * vn / (2.0 * p.b) + discrete_slack(p) <= dn {
                    return true;
                }
                let arrival = if dn <= 0.0 {
                    tick + 1
                } else {
                    let t = predicted_arrival_time(dn, vn, p.v_m.max(vn), p.a_max, 0.0);
                    tick + 1 + (t / p.h - 1e-9).ceil() as i64
                };
                arrival >= s0
            };
            if hi > lo && !ok(hi) {
                let (mut a, mut c) = (lo, hi);
                for _ in 0..40 {
                    let m = 0.5 * (a + c);
                    if ok(m) {
                        a = m;
                    } else {
                        c = m;
                    }
                }
                hi = a;
            }
        }
    }
    hi.max(lo)
}

/// Whether braking from `v` can still keep the front bumper behind the line.
pub fn can_stop(d: f64, v: f64, p: &ApproachParams) -> bool {
    d > 0.0 && (v - p.b * p.h).max(0.0) <= f_bound(d - 0.5 * p.h * v, p) + 1e-9
}

/// Position update for one step with the trapezoidal rule.
pub fn advance(d: f64, v: f64, vn: f64, h: f64) -> f64 {
    d - 0.5 * h * (v + vn)
}

/// Largest admission speed at distance `d` behind a leader.
pub fn admission_speed(d: f64, wanted: f64, leader: Option<Leader>, p: &ApproachParams) -> Option<f64> {
    let Some(l) = leader else {
        return Some(wanted);
    };
    let room = d - l.d - p.length - p.min_gap;
    if room < 0.0 {
        return None;
    }
    Some(wanted.min(f_bound(room + l.v * l.v / (2.0 * p.b), p)))
}
