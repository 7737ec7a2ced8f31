use dtot::geometry::*;
use dtot::rdica::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ix() -> std::sync::Arc<Intersection> {
    Intersection::standard(Preset::ThreeInTwoOut)
}

fn route(a: Approach, lane: u8, m: Movement) -> RouteIdx {
    ix().route_for(a, lane, m).unwrap()
}

fn veh(vin: u64, t_a: f64, r: RouteIdx, dist: f64, is_ev: bool) -> OrderVehicle {
    OrderVehicle { vin, t_a, confirmed_entry: None, route: r, lane: ix().in_lane_of(r), dist_to_line: dist, is_ev }
}

/// Random instance: `n_ev` vehicles on the EV's lane (EV last), the rest on
/// other lanes.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, n_ev: usize) -> OrderableSet {
    let ix = ix();
    let ev_route = rng.gen_range(0..ix.routes.len());
    let ev_lane = ix.in_lane_of(ev_route);
    let lane_routes: Vec<RouteIdx> = (0..ix.routes.len()).filter(|&r| ix.in_lane_of(r) == ev_lane).collect();
    let other: Vec<RouteIdx> = (0..ix.routes.len()).filter(|&r| ix.in_lane_of(r) != ev_lane).collect();
    let mut vs = Vec::new();
    for k in 0..n_ev {
        let d = 6.0 * k as f64 + rng.gen_range(0.0..2.0);
        let r = if k + 1 == n_ev { ev_route } else { lane_routes[rng.gen_range(0..lane_routes.len())] };
        vs.push(veh(k as u64 + 1, 1.0 + d / 12.0 + rng.gen_range(0.0..0.5), r, d, k + 1 == n_ev));
    }
    for k in n_ev..n {
        let d = rng.gen_range(0.0..40.0);
        vs.push(veh(k as u64 + 1, 1.0 + d / 12.0 + rng.gen_range(0.0..1.0), other[rng.gen_range(0..other.len())], d, false));
    }
    if rng.gen_bool(0.5) {
        let first = vs.iter_mut().find(|v| v.dist_to_line < 6.0).unwrap();
        first.confirmed_entry = Some(first.t_a + rng.gen_range(0.0..1.0));
    }
    vs.shuffle_in_place(rng);
    OrderableSet::new(vs, &ix).unwrap()
}

trait ShuffleExt {
    fn shuffle_in_place(&mut self, rng: &mut ChaCha8Rng);
}

impl<T> ShuffleExt for Vec<T> {
    fn shuffle_in_place(&mut self, rng: &mut ChaCha8Rng) {
        use rand::seq::SliceRandom;
        self.shuffle(rng);
    }
}

/// Direct recurrence: the first vehicle enters at its confirmed time or
/// arrival, then each waits for its predecessor plus the gap.
fn oracle_times(seq: &[usize], set: &OrderableSet, p: &SeparationPolicy) -> Vec<f64> {
    let ix = ix();
    let mut te = vec![f64::NAN; set.len()];
    for (k, &v) in seq.iter().enumerate() {
        let me = &set.vehicles[v];
        if k == 0 {
            te[v] = me.confirmed_entry.unwrap_or(me.t_a);
            continue;
        }
        let prev = &set.vehicles[seq[k - 1]];
        let gap = if prev.lane == me.lane {
            p.delta_s
        } else if ix.compatible(prev.route, me.route) {
            0.0
        } else {
            p.delta_c
        };
        te[v] = me.t_a.max(te[seq[k - 1]] + gap);
    }
    te
}

/// All permutations by Heap's algorithm.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn lane_subsequence_ok(seq: &[usize], set: &OrderableSet) -> bool {
    let sub: Vec<usize> = seq.iter().copied().filter(|v| set.ev_lane_order.contains(v)).collect();
    let mut sorted = seq.to_vec();
    sorted.sort();
    sub == set.ev_lane_order && sorted == (0..set.len()).collect::<Vec<_>>()
}

#[test]
fn entrance_time_examples() {
    let p = SeparationPolicy::default();
    let s = route(Approach::South, 1, Movement::Through);
    let e = route(Approach::East, 1, Movement::Through);
    let set = OrderableSet::new(vec![veh(1, 4.0, s, 10.0, false), veh(2, 4.5, e, 10.0, true)], &ix()).unwrap();
    let te = entrance_times(&[0, 1], &set, &p).unwrap();
    assert_eq!(te, vec![4.0, 6.0]);
    let set = OrderableSet::new(vec![veh(1, 4.0, s, 10.0, false), veh(2, 9.0, e, 10.0, true)], &ix()).unwrap();
    assert_eq!(entrance_times(&[0, 1], &set, &p).unwrap(), vec![4.0, 9.0]);
    let nl = route(Approach::North, 0, Movement::Left);
    let sl = route(Approach::South, 0, Movement::Left);
    let set = OrderableSet::new(vec![veh(1, 4.0, nl, 10.0, false), veh(2, 3.0, sl, 10.0, true)], &ix()).unwrap();
    assert_eq!(entrance_times(&[0, 1], &set, &p).unwrap(), vec![4.0, 4.0]);
    assert!(entrance_times(&[1, 1], &set, &p).is_err());
}

#[test]
fn fitness_is_reciprocal() {
    let p = SeparationPolicy::default();
    let s = route(Approach::South, 1, Movement::Through);
    let e = route(Approach::East, 1, Movement::Through);
    let set = OrderableSet::new(vec![veh(1, 6.0, s, 10.0, false), veh(2, 7.0, e, 10.0, true)], &ix()).unwrap();
    assert_eq!(fitness(&[0, 1], &set, &p).unwrap(), 0.125);
    assert!(fitness(&[1, 0], &set, &p).unwrap() > 0.125);
}

#[test]
fn repair_example() {
    let s1 = route(Approach::South, 1, Movement::Through);
    let x = route(Approach::East, 1, Movement::Through);
    // v1 front, v3 behind it, EV last on the same lane
    let set = OrderableSet::new(
        vec![veh(1, 1.0, s1, 2.0, false), veh(2, 1.0, x, 5.0, false), veh(3, 2.0, s1, 9.0, false), veh(4, 3.0, s1, 16.0, true)],
        &ix(),
    )
    .unwrap();
    assert_eq!(set.ev_lane_order, vec![0, 2, 3]);
    assert_eq!(feasibility_repair(&[2, 1, 0, 3], &set), vec![0, 1, 2, 3]);
    assert_eq!(feasibility_repair(&[0, 1, 2, 3], &set), vec![0, 1, 2, 3]);
}

#[test]
fn crossover_example() {
    let ix = ix();
    // A, B, C on distinct lanes; D is the EV alone on its lane
    let a = route(Approach::South, 0, Movement::Left);
    let b = route(Approach::East, 1, Movement::Through);
    let c = route(Approach::North, 2, Movement::Right);
    let d = route(Approach::West, 1, Movement::Through);
    let set = OrderableSet::new(
        vec![veh(1, 1.0, a, 1.0, false), veh(2, 1.0, b, 1.0, false), veh(3, 1.0, c, 1.0, false), veh(4, 1.0, d, 1.0, true)],
        &ix,
    )
    .unwrap();
    let (c1, c2) = one_point_crossover(&[0, 1, 2, 3], &[2, 0, 3, 1], 2, &set);
    assert_eq!(c1, vec![0, 1, 3, 2]);
    assert!(lane_subsequence_ok(&c2, &set));
    let (s1, s2) = one_point_crossover(&[0, 1, 2, 3], &[0, 1, 2, 3], 2, &set);
    assert_eq!((s1, s2), (vec![0, 1, 2, 3], vec![0, 1, 2, 3]));
}

#[test]
fn mutation_cases() {
    let s1 = route(Approach::South, 1, Movement::Through);
    let x = route(Approach::East, 1, Movement::Through);
    let y = route(Approach::North, 1, Movement::Through);
    let set = OrderableSet::new(
        vec![veh(1, 1.0, s1, 2.0, false), veh(2, 1.0, x, 5.0, false), veh(3, 1.0, y, 5.0, false), veh(4, 3.0, s1, 16.0, true)],
        &ix(),
    )
    .unwrap();
    assert_eq!(swap_mutation(&[0, 1, 2, 3], 1, 2, &set).unwrap(), vec![0, 2, 1, 3]);
    // moving the EV ahead of its lane predecessor gets undone
    assert_eq!(swap_mutation(&[0, 1, 2, 3], 0, 3, &set).unwrap(), vec![0, 1, 2, 3]);
    assert!(swap_mutation(&[0, 1, 2, 3], 2, 2, &set).is_err());
}

#[test]
fn exhaustive_counts_and_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = SeparationPolicy::default();
    let set = random_instance(&mut rng, 3, 2);
    assert_eq!(exhaustive_optimize(&set, &p, DEFAULT_EXHAUSTIVE_CAP).unwrap().enumerated, 3);
    let set = random_instance(&mut rng, 8, 3);
    let r = exhaustive_optimize(&set, &p, DEFAULT_EXHAUSTIVE_CAP).unwrap();
    assert_eq!(r.enumerated, 6720);
    // reference: every permutation, filtered to feasible ones
    let feasible: Vec<Vec<usize>> = permutations(8).into_iter().filter(|s| lane_subsequence_ok(s, &set)).collect();
    assert_eq!(feasible.len(), 6720);
    let best = feasible.iter().map(|s| oracle_times(s, &set, &p)[set.ev]).fold(f64::INFINITY, f64::min);
    assert_eq!(r.te_ev, best);
    assert!(matches!(exhaustive_optimize(&set, &p, 6719), Err(dtot::Error::TooLarge { count: 6720, .. })));
}

#[test]
fn ga_matches_exhaustive_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = SeparationPolicy::default();
    let mut equal = 0;
    for i in 0..100 {
        let n = rng.gen_range(2..=8);
        let n_ev = rng.gen_range(1..=n.min(4));
        let set = random_instance(&mut rng, n, n_ev);
        let es = exhaustive_optimize(&set, &p, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        let ga = ga_optimize(&set, &GaParams { seed: i, ..GaParams::default() }, &p).unwrap();
        assert!(ga.te_ev >= es.te_ev - 1e-12);
        assert!(lane_subsequence_ok(&ga.best, &set));
        assert_eq!(oracle_times(&ga.best, &set, &p)[set.ev], ga.te_ev);
        if (ga.te_ev - es.te_ev).abs() < 1e-12 {
            equal += 1;
        }
        for w in ga.trace.windows(2) {
            assert!(w[1].best_te_ev <= w[0].best_te_ev);
        }
    }
    assert!(equal >= 90, "{equal}/100");
}

#[test]
fn ga_singleton_and_determinism() {
    let p = SeparationPolicy::default();
    let s = route(Approach::South, 1, Movement::Through);
    let set = OrderableSet::new(vec![veh(1, 3.5, s, 10.0, true)], &ix()).unwrap();
    let r = ga_optimize(&set, &GaParams::default(), &p).unwrap();
    assert_eq!((r.best.clone(), r.te_ev), (vec![0], 3.5));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let set = random_instance(&mut rng, 8, 2);
    let a = ga_optimize(&set, &GaParams { seed: 5, ..GaParams::default() }, &p).unwrap();
    let b = ga_optimize(&set, &GaParams { seed: 5, ..GaParams::default() }, &p).unwrap();
    assert_eq!(a, b);
    assert!(GaParams { n_pop: 1, ..GaParams::default() }.validate().is_err());
}

#[test]
fn spot_check_optimum_against_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = SeparationPolicy::default();
    for _ in 0..20 {
        let set = random_instance(&mut rng, 7, 2);
        let r = exhaustive_optimize(&set, &p, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        for _ in 0..50 {
            let mut s: Vec<usize> = (0..7).collect();
            s.shuffle_in_place(&mut rng);
            let s = feasibility_repair(&s, &set);
            assert!(r.te_ev <= entrance_times(&s, &set, &p).unwrap()[set.ev]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn operators_keep_feasibility(seed in 0u64..10_000, n in 2usize..9, cut in 1usize..8, i in 0usize..8, j in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_ev = rng.gen_range(1..=n.min(4));
        let set = random_instance(&mut rng, n, n_ev);
        let p = SeparationPolicy::default();
        let mut a: Vec<usize> = (0..n).collect();
        let mut b = a.clone();
        a.shuffle_in_place(&mut rng);
        b.shuffle_in_place(&mut rng);
        let ra = feasibility_repair(&a, &set);
        prop_assert!(lane_subsequence_ok(&ra, &set));
        prop_assert_eq!(feasibility_repair(&ra, &set), ra.clone());
        let rb = feasibility_repair(&b, &set);
        let (c1, c2) = one_point_crossover(&ra, &rb, cut.min(n - 1), &set);
        prop_assert!(lane_subsequence_ok(&c1, &set));
        prop_assert!(lane_subsequence_ok(&c2, &set));
        let (i, j) = (i % n, j % n);
        if i != j {
            let m = swap_mutation(&c1, i, j, &set).unwrap();
            prop_assert!(lane_subsequence_ok(&m, &set));
        }
        // recurrence constraints on an evaluated sequence
        let te = entrance_times(&c1, &set, &p).unwrap();
        prop_assert_eq!(&te, &oracle_times(&c1, &set, &p));
        for w in c1.windows(2) {
            prop_assert!(te[w[1]] - te[w[0]] >= separation_time(&set, w[0], w[1], &p) - 1e-12);
        }
        for (k, v) in set.vehicles.iter().enumerate() {
            prop_assert!(te[k] >= v.t_a);
        }
    }
}
