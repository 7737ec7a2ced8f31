use crate::baselines::Signal;
use crate::geometry::{Approach, Movement};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Generated outside the communication region.
    Spawn { approach: Approach, lane: u8, movement: Movement, is_ev: bool },
    /// Entered the communication region. For an EV under rdica, the chosen
    /// passing order and the confirmations it revoked.
    Detect {
        v: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sequence: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        revoked: Option<Vec<u64>>,
    },
    Request { d: f64, v: f64 },
    Response { accepted: bool, start_tick: i64, v_enter: f64, rounds: usize, fallback: bool },
    Enter { v: f64 },
    Exit,
    Stop,
    Signal { approach: Approach, movement: Movement, color: Signal },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: i64,
    pub t: f64,
    /// 0 for signal events.
    pub vin: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TripStats {
    pub count: usize,
    pub tau_bar: f64,
    pub sigma_tau: f64,
    pub tau_max: f64,
}

impl TripStats {
    pub fn from_samples(xs: &[f64]) -> TripStats {
        if xs.is_empty() {
            return TripStats::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        TripStats { count: xs.len(), tau_bar: mean, sigma_tau: var.sqrt(), tau_max: xs.iter().cloned().fold(0.0, f64::max) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub generated: usize,
    pub crossed: usize,
    pub stopped: usize,
    /// Detected vehicles that had not exited when the log ended.
    pub incomplete: usize,
    pub tau_bar: f64,
    pub sigma_tau: f64,
    pub tau_max: f64,
    pub rho: f64,
    pub eta: f64,
    pub tau_bar_e: f64,
    pub ev: TripStats,
    pub normal: TripStats,
    /// Average trip time per approach (S, E, N, W).
    pub per_approach: [TripStats; 4],
    /// Throughput of normal vehicles only.
    pub rho_normal: f64,
}

/// Aggregates from a complete or partial event log.
pub fn compute_metrics(log: &[Event]) -> Metrics {
    use std::collections::BTreeMap;
    #[derive(Default)]
    struct Rec {
        approach: Option<Approach>,
        is_ev: bool,
        detect: Option<f64>,
        exit: Option<f64>,
        stopped: bool,
    }
    let mut recs: BTreeMap<u64, Rec> = BTreeMap::new();
    for e in log {
        if e.vin == 0 {
            continue;
        }
        let r = recs.entry(e.vin).or_default();
        match &e.kind {
            EventKind::Spawn { approach, is_ev, .. } => {
                r.approach = Some(*approach);
                r.is_ev = *is_ev;
            }
            EventKind::Detect { .. } => r.detect = Some(e.t),
            EventKind::Exit => r.exit = Some(e.t),
            EventKind::Stop => r.stopped = true,
            _ => {}
        }
    }
    let mut m = Metrics { generated: recs.values().filter(|r| r.approach.is_some()).count(), ..Default::default() };
    let (mut all, mut ev, mut normal) = (Vec::new(), Vec::new(), Vec::new());
    let mut per: [Vec<f64>; 4] = Default::default();
    let mut normal_generated = 0;
    for r in recs.values() {
        if r.approach.is_some() && !r.is_ev {
            normal_generated += 1;
        }
        match (r.detect, r.exit) {
            (Some(d), Some(x)) => {
                let tau = x - d;
                all.push(tau);
                if r.is_ev {
                    ev.push(tau);
                } else {
                    normal.push(tau);
                }
                if let Some(a) = r.approach {
                    per[a.index()].push(tau);
                }
                if r.stopped {
                    m.stopped += 1;
                }
            }
            (Some(_), None) => m.incomplete += 1,
            _ => {}
        }
    }
    let s = TripStats::from_samples(&all);
    m.crossed = s.count;
    m.tau_bar = s.tau_bar;
    m.sigma_tau = s.sigma_tau;
    m.tau_max = s.tau_max;
    m.rho = if m.generated == 0 { 1.0 } else { m.crossed as f64 / m.generated as f64 };
    m.eta = if m.crossed == 0 { 0.0 } else { m.stopped as f64 / m.crossed as f64 };
    m.tau_bar_e = if m.rho > 0.0 { m.tau_bar / m.rho } else { f64::INFINITY };
    m.ev = TripStats::from_samples(&ev);
    m.normal = TripStats::from_samples(&normal);
    m.per_approach = per.map(|xs| TripStats::from_samples(&xs));
    m.rho_normal = if normal_generated == 0 { 1.0 } else { m.normal.count as f64 / normal_generated as f64 };
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(tick: i64, vin: u64, kind: EventKind) -> Event {
        Event { tick, t: tick as f64 * 0.05, vin, kind }
    }

    fn spawn(a: Approach) -> EventKind {
        EventKind::Spawn { approach: a, lane: 1, movement: Movement::Through, is_ev: false }
    }

    fn detect() -> EventKind {
        EventKind::Detect { v: 10.0, sequence: None, revoked: None }
    }

    #[test]
    fn single_trip() {
        let log = vec![ev(190, 1, spawn(Approach::South)), ev(200, 1, detect()), ev(350, 1, EventKind::Exit)];
        let m = compute_metrics(&log);
        assert!((m.tau_bar - 7.5).abs() < 1e-12);
        assert_eq!((m.rho, m.tau_bar_e), (1.0, m.tau_bar));
    }

    #[test]
    fn empty_log() {
        let m = compute_metrics(&[]);
        assert_eq!((m.generated, m.crossed, m.rho), (0, 0, 1.0));
    }

    #[test]
    fn hand_computed_aggregates() {
        // trips of 10, 20 and 30 s; one stopped; a fourth vehicle never detected
        let mut log = Vec::new();
        for (vin, d, x) in [(1, 0, 200), (2, 100, 500), (3, 200, 800)] {
            log.push(ev(d, vin, spawn(Approach::East)));
            log.push(ev(d, vin, detect()));
            log.push(ev(x, vin, EventKind::Exit));
        }
        log.push(ev(300, 2, EventKind::Stop));
        log.push(ev(900, 4, spawn(Approach::North)));
        log.sort_by_key(|e| e.tick);
        let m = compute_metrics(&log);
        assert_eq!((m.generated, m.crossed, m.stopped), (4, 3, 1));
        assert!((m.tau_bar - 20.0).abs() < 1e-9);
        assert!((m.sigma_tau - (200.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!((m.rho - 0.75).abs() < 1e-12);
        assert!((m.eta - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.tau_bar_e - 20.0 / 0.75).abs() < 1e-9);
        assert_eq!(m.per_approach[Approach::East.index()].count, 3);
    }
}
