//! Faster conflict detection: confirmed-set filtering, restricted index
//! ranges, estimated OTIs and a bisection search over the requester's
//! occupancies. Each technique can be switched on separately.

use crate::dica::{get_oti, sort_conflicts, ConfirmedEntry, ConfirmedSet, ConflictEntry, Counters, OtiInterval};
use crate::error::{Error, Result};
use crate::geometry::{rect_overlap, Interval, Intersection, RouteIdx};
use crate::kinematics::{Dtot, VehicleSpec};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Widening applied to estimated OTIs before they are used to prune.
pub const EST_GUARD_TICKS: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Techniques {
    /// Skip confirmed vehicles with disjoint windows or compatible routes.
    pub imp1: bool,
    /// Only visit occupancies inside the precomputed conflict ranges.
    pub imp2: bool,
    /// Estimated OTIs for pruning.
    pub imp3: bool,
    /// Bisection over the requester's occupancy times.
    pub imp4: bool,
}

impl Techniques {
    pub fn all() -> Self {
        Techniques { imp1: true, imp2: true, imp3: true, imp4: true }
    }

    pub fn none() -> Self {
        Techniques { imp1: false, imp2: false, imp3: false, imp4: false }
    }

    /// Only technique `name` enabled (`imp1` .. `imp4`).
    pub fn only(name: &str) -> Result<Self> {
        let mut t = Self::none();
        match name {
            "imp1" => t.imp1 = true,
            "imp2" => t.imp2 = true,
            "imp3" => t.imp3 = true,
            "imp4" => t.imp4 = true,
            _ => return Err(Error::InvalidArgument(format!("unknown technique '{name}'"))),
        }
        Ok(t)
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = [(self.imp1, "imp1"), (self.imp2, "imp2"), (self.imp3, "imp3"), (self.imp4, "imp4")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.len() == 4 {
            "all".into()
        } else if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

/// Work done while resolving one request. Sizes describe the last
/// detection pass; counters accumulate over all passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestStats {
    pub n: usize,
    pub n_filtered: usize,
    pub n_occ: usize,
    pub n_restricted: usize,
    pub counters: Counters,
}

/// One row of the per-request performance CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfCounters {
    pub request_id: u64,
    pub vin: u64,
    pub n: usize,
    pub n_filtered: usize,
    pub n_occ: usize,
    pub n_restricted: usize,
    pub comparisons: u64,
    pub oti_evals: u64,
    pub wall_seconds: f64,
    pub algorithm: String,
}

pub fn record_counters(request_id: u64, vin: u64, stats: &RequestStats, wall_seconds: f64, algorithm: &str) -> PerfCounters {
    PerfCounters {
        request_id,
        vin,
        n: stats.n,
        n_filtered: stats.n_filtered,
        n_occ: stats.n_occ,
        n_restricted: stats.n_restricted,
        comparisons: stats.counters.comparisons,
        oti_evals: stats.counters.oti_evals,
        wall_seconds,
        algorithm: algorithm.to_string(),
    }
}

/// Indices of confirmed vehicles that may conflict with the request.
pub fn filter_confirmed(set: &ConfirmedSet, ix: &Intersection, route: RouteIdx, dtot: &Dtot) -> Vec<usize> {
    debug_assert_eq!(route, dtot.route);
    set.iter().enumerate().filter(|(_, e)| may_conflict(e, ix, dtot)).map(|(i, _)| i).collect()
}

/// Index range of occupancies whose progress lies in `range`. A range that
/// reaches the end of the swept span keeps every later occupancy too.
pub fn restrict_dtot(dtot: &Dtot, range: Option<Interval>, span_end: f64) -> Range<usize> {
    let Some(r) = range else { return 0..0 };
    let p = &dtot.progress;
    let lo = p.partition_point(|&x| x < r.lo);
    let hi = if r.hi >= span_end - 1e-9 { p.len() } else { p.partition_point(|&x| x <= r.hi) };
    lo..hi.max(lo)
}

/// Time to cover `d` from speed `v` under constant acceleration `a`.
fn travel_time(v: f64, a: f64, d: f64) -> Option<f64> {
    if a.abs() < 1e-6 {
        return (v > 1e-9).then(|| d / v);
    }
    let disc = v * v + 2.0 * a * d;
    if disc < 0.0 {
        return None;
    }
    let t = (disc.sqrt() - v) / a;
    (t > 0.0).then_some(t)
}

/// OTI estimated from the local speed and acceleration of occupancy `k`.
/// `extra` is added to the vehicle length to account for curvature.
pub fn get_est_oti(dtot: &Dtot, k: usize, veh_length: f64, extra: f64) -> OtiInterval {
    let (h, n, tick) = (dtot.h, dtot.len(), dtot.tick(k));
    let (first, last) = (dtot.start_tick, dtot.end_tick());
    if n == 1 {
        return OtiInterval::new(tick, tick);
    }
    let x = &dtot.progress;
    let vm = (k > 0).then(|| (x[k] - x[k - 1]) / h);
    let vp = (k + 1 < n).then(|| (x[k + 1] - x[k]) / h);
    let (v, a) = match (vm, vp) {
        (Some(m), Some(p)) => (0.5 * (m + p), (p - m) / h),
        (None, Some(p)) => (p, 0.0),
        (Some(m), None) => (m, 0.0),
        (None, None) => unreachable!(),
    };
    let d = veh_length + extra;
    let steps = |t: f64| (t / h).floor() as i64 + 1;
    let lb = if k == 0 {
        first
    } else {
        travel_time(v, -a, d).map_or(first, |t| (tick - steps(t)).max(first))
    };
    let ub = if k + 1 == n {
        last
    } else {
        travel_time(v, a, d).map_or(last, |t| (tick + steps(t)).min(last))
    };
    OtiInterval::new(lb, ub)
}

/// Lazily computed OTIs of one DTOT.
struct OtiTable<'a> {
    dtot: &'a Dtot,
    length: f64,
    route: RouteIdx,
    exact: Vec<Option<OtiInterval>>,
    est: Vec<Option<OtiInterval>>,
    memo_exact: bool,
}

impl<'a> OtiTable<'a> {
    fn new(dtot: &'a Dtot, length: f64, route: RouteIdx, memo_exact: bool) -> Self {
        OtiTable { dtot, length, route, exact: vec![None; dtot.len()], est: vec![None; dtot.len()], memo_exact }
    }

    fn exact(&mut self, k: usize, c: &mut Counters) -> OtiInterval {
        if !self.memo_exact {
            return get_oti(self.dtot, k, c);
        }
        if let Some(o) = self.exact[k] {
            return o;
        }
        let o = get_oti(self.dtot, k, c);
        self.exact[k] = Some(o);
        o
    }

    /// Estimated OTI widened by the guard band.
    fn est(&mut self, k: usize, ix: &Intersection, c: &mut Counters) -> OtiInterval {
        if let Some(o) = self.est[k] {
            return o;
        }
        c.oti_evals += 1;
        let center = self.dtot.progress[k] - self.length / 2.0;
        let extra = ix.curvature_allowance(self.route, center);
        let o = get_est_oti(self.dtot, k, self.length, extra).widened(EST_GUARD_TICKS);
        self.est[k] = Some(o);
        o
    }

    /// Interval used to decide whether two occupancies can overlap in time.
    fn key(&mut self, k: usize, ix: &Intersection, imp3: bool, c: &mut Counters) -> OtiInterval {
        if imp3 {
            self.est(k, ix, c)
        } else {
            self.exact(k, c)
        }
    }
}

fn may_conflict(e: &ConfirmedEntry, ix: &Intersection, dtot: &Dtot) -> bool {
    e.dtot.end_tick() >= dtot.start_tick && dtot.end_tick() >= e.dtot.start_tick && !ix.compatible(dtot.route, e.route)
}

/// Conflict detection with the selected techniques. Candidates are always
/// confirmed with a rectangle test and exact OTIs.
pub fn enhanced_get_cv(
    set: &ConfirmedSet,
    ix: &Intersection,
    spec: &VehicleSpec,
    dtot: &Dtot,
    t: Techniques,
    stats: &mut RequestStats,
) -> Vec<ConflictEntry> {
    let idx: Vec<usize> = if t.imp1 { filter_confirmed(set, ix, dtot.route, dtot) } else { (0..set.len()).collect() };
    stats.n = set.len();
    stats.n_filtered = idx.len();
    stats.n_occ = dtot.len();
    stats.n_restricted = 0;
    let mut mine = OtiTable::new(dtot, spec.length, dtot.route, t.imp4 && !t.imp3);
    let mut out: Vec<_> =
        idx.iter().filter_map(|&j| scan_vehicle(&set.entries()[j], ix, dtot, t, &mut mine, stats)).collect();
    sort_conflicts(&mut out);
    out
}

/// Single-vehicle form of [`enhanced_get_cv`].
pub fn enhanced_conflict_with(
    e: &ConfirmedEntry,
    ix: &Intersection,
    spec: &VehicleSpec,
    dtot: &Dtot,
    t: Techniques,
    stats: &mut RequestStats,
) -> Option<ConflictEntry> {
    if t.imp1 && !may_conflict(e, ix, dtot) {
        return None;
    }
    let mut mine = OtiTable::new(dtot, spec.length, dtot.route, t.imp4 && !t.imp3);
    scan_vehicle(e, ix, dtot, t, &mut mine, stats)
}

fn scan_vehicle(
    e: &ConfirmedEntry,
    ix: &Intersection,
    dtot: &Dtot,
    t: Techniques,
    mine: &mut OtiTable,
    stats: &mut RequestStats,
) -> Option<ConflictEntry> {
    let route = dtot.route;
    let (ri, rj) = if t.imp2 {
        let cr = ix.conflict(route, e.route);
        let span_i = ix.route(route).total_length + mine.length;
        let span_j = ix.route(e.route).total_length + e.spec.length;
        (restrict_dtot(dtot, cr.range_a, span_i), restrict_dtot(&e.dtot, cr.range_b, span_j))
    } else {
        (0..dtot.len(), 0..e.dtot.len())
    };
    stats.n_restricted = stats.n_restricted.max(ri.len());
    if ri.is_empty() || rj.is_empty() {
        return None;
    }
    let c = &mut stats.counters;
    let mut theirs = OtiTable::new(&e.dtot, e.spec.length, e.route, false);
    for kj in rj {
        let key_j = if t.imp3 || t.imp4 { Some(theirs.key(kj, ix, t.imp3, c)) } else { None };
        let cands = if t.imp4 {
            let kjt = key_j.expect("set above");
            // first index whose upper bound reaches the window, then every
            // contiguous index whose lower bound is inside it
            let (mut lo, mut hi) = (ri.start, ri.end);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if mine.key(mid, ix, t.imp3, c).ub < kjt.lb {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            let mut end = lo;
            while end < ri.end && mine.key(end, ix, t.imp3, c).lb <= kjt.ub {
                end += 1;
            }
            lo..end
        } else {
            ri.clone()
        };
        for ki in cands {
            if t.imp3 && !t.imp4 && !mine.est(ki, ix, c).overlaps(&key_j.expect("set above")) {
                continue;
            }
            c.comparisons += 1;
            if !rect_overlap(&e.dtot.rects[kj], &dtot.rects[ki]) {
                continue;
            }
            let oj = theirs.exact(kj, c);
            let oi = mine.exact(ki, c);
            if oj.overlaps(&oi) {
                return Some(ConflictEntry { vin: e.vin, first_tick: oj.lb, confirmed_oti: oj, request_oti: oi, kj, ki });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Preset;
    use crate::kinematics::{plan_crossing_tss, tss_to_dtot};

    #[test]
    fn only_parses() {
        assert_eq!(Techniques::only("imp2").unwrap().label(), "imp2");
        assert!(Techniques::only("imp5").is_err());
        assert_eq!(Techniques::all().label(), "all");
    }

    #[test]
    fn travel_time_cases() {
        assert!((travel_time(10.0, 0.0, 5.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((travel_time(0.0, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(travel_time(1.0, -2.0, 5.0).is_none());
        assert!(travel_time(0.0, 0.0, 5.0).is_none());
    }

    #[test]
    fn compatible_route_gives_empty_range() {
        let ix = Intersection::standard(Preset::ThreeInTwoOut);
        let spec = VehicleSpec::standard(1);
        let d = tss_to_dtot(&plan_crossing_tss(&spec, ix.route(0), 0, 0, 10.0, None, 0.05), &spec);
        assert_eq!(restrict_dtot(&d, None, 40.0), 0..0);
        let full = restrict_dtot(&d, Some(Interval { lo: 0.0, hi: 100.0 }), 100.0);
        assert_eq!(full, 0..d.len());
    }
}
