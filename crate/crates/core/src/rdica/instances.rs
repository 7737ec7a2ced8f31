use super::{OrderVehicle, OrderableSet};
use crate::error::{Error, Result};
use crate::geometry::{Intersection, RouteIdx};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random ordering instance for optimizer studies: `n_ev` vehicles queued on
/// one lane with the EV last, the rest spread over the other lanes.
pub fn random_instance<R: Rng>(rng: &mut R, ix: &Intersection, n: usize, n_ev: usize) -> Result<OrderableSet> {
    if n_ev == 0 || n_ev > n {
        return Err(Error::InvalidArgument(format!("need 1 <= n_ev <= n, got n_ev={n_ev}, n={n}")));
    }
    let routes = ix.routes.len();
    let ev_route: RouteIdx = rng.gen_range(0..routes);
    let ev_lane = ix.in_lane_of(ev_route);
    let same: Vec<RouteIdx> = (0..routes).filter(|&r| ix.in_lane_of(r) == ev_lane).collect();
    let other: Vec<RouteIdx> = (0..routes).filter(|&r| ix.in_lane_of(r) != ev_lane).collect();
    let mut vs = Vec::with_capacity(n);
    for k in 0..n {
        let on_lane = k < n_ev;
        let is_ev = k + 1 == n_ev;
        let route = if is_ev {
            ev_route
        } else if on_lane {
            *same.choose(rng).expect("lane has a route")
        } else {
            *other.choose(rng).expect("other lanes exist")
        };
        let d = if on_lane { 7.0 * k as f64 + rng.gen_range(0.0..2.0) } else { rng.gen_range(0.0..45.0) };
        vs.push(OrderVehicle {
            vin: k as u64 + 1,
            t_a: d / 12.0 + rng.gen_range(0.5..1.5),
            confirmed_entry: None,
            route,
            lane: ix.in_lane_of(route),
            dist_to_line: d,
            is_ev,
        });
    }
    vs.shuffle(rng);
    OrderableSet::new(vs, ix)
}
