use super::{ev_entrance, feasibility_repair, OrderableSet, SeparationPolicy};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

pub const DEFAULT_EXHAUSTIVE_CAP: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub n_pop: usize,
    pub n_max: usize,
    pub n_no_change: usize,
    pub p_c: f64,
    pub p_m: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams { n_pop: 100, n_max: 100, n_no_change: 10, p_c: 0.85, p_m: 0.05, seed: 0 }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_pop < 2 {
            return Err(Error::config("n_pop", "population must hold at least 2 individuals"));
        }
        for (name, p) in [("p_c", self.p_c), ("p_m", self.p_m)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, "probability outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_te_ev: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Vec<usize>,
    pub te_ev: f64,
    pub generations: usize,
    pub trace: Vec<GenerationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Vec<usize>,
    pub te_ev: f64,
    pub enumerated: u64,
}

fn factorial_ratio(n: usize, k: usize) -> u128 {
    ((k + 1)..=n).fold(1u128, |acc, x| acc.saturating_mul(x as u128))
}

/// Number of feasible sequences.
pub fn feasible_count(set: &OrderableSet) -> u128 {
    if set.strict_priority {
        factorial_ratio(set.len() - set.n_ev(), 1)
    } else {
        factorial_ratio(set.len(), set.n_ev())
    }
}

/// Swaps the tails after `cut`. In each child the repeated genes of the
/// tail are replaced by its missing genes, in the order the other child
/// holds them, and the result is made feasible.
pub fn one_point_crossover(p1: &[usize], p2: &[usize], cut: usize, set: &OrderableSet) -> (Vec<usize>, Vec<usize>) {
    let n = p1.len();
    let cut = cut.min(n);
    let raw1: Vec<usize> = p1[..cut].iter().chain(&p2[cut..]).copied().collect();
    let raw2: Vec<usize> = p2[..cut].iter().chain(&p1[cut..]).copied().collect();
    let fix = |raw: &[usize], other: &[usize]| -> Vec<usize> {
        let head: HashSet<usize> = raw[..cut].iter().copied().collect();
        let present: HashSet<usize> = raw.iter().copied().collect();
        let mut missing = other[cut..].iter().copied().filter(|g| !present.contains(g));
        let mut out = raw.to_vec();
        for slot in out[cut..].iter_mut() {
            if head.contains(slot) {
                *slot = missing.next().expect("one missing gene per repeat");
            }
        }
        feasibility_repair(&out, set)
    };
    (fix(&raw1, &raw2), fix(&raw2, &raw1))
}

pub fn swap_mutation(ind: &[usize], i: usize, j: usize, set: &OrderableSet) -> Result<Vec<usize>> {
    if i == j || i >= ind.len() || j >= ind.len() {
        return Err(Error::InvalidArgument(format!("bad swap positions {i}, {j}")));
    }
    let mut out = ind.to_vec();
    out.swap(i, j);
    Ok(feasibility_repair(&out, set))
}

fn random_individual(rng: &mut ChaCha8Rng, set: &OrderableSet) -> Vec<usize> {
    let mut v: Vec<usize> = (0..set.len()).collect();
    v.shuffle(rng);
    feasibility_repair(&v, set)
}

/// Keeps the `n` best distinct individuals, ties broken by the sequence.
fn select(pool: Vec<Vec<usize>>, n: usize, set: &OrderableSet, policy: &SeparationPolicy) -> Vec<(Vec<usize>, f64)> {
    let mut seen = HashSet::new();
    let mut scored: Vec<(Vec<usize>, f64)> = pool
        .into_iter()
        .filter(|ind| seen.insert(ind.clone()))
        .map(|ind| {
            let t = ev_entrance(&ind, set, policy);
            (ind, t)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

pub fn ga_optimize(set: &OrderableSet, params: &GaParams, policy: &SeparationPolicy) -> Result<GaResult> {
    params.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty vehicle set".into()));
    }
    let n = set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let target = (params.n_pop as u128).min(feasible_count(set)) as usize;
    let mut init = HashSet::new();
    let mut pool = Vec::new();
    let mut attempts = 0;
    while pool.len() < target && attempts < 100 * params.n_pop {
        let ind = random_individual(&mut rng, set);
        if init.insert(ind.clone()) {
            pool.push(ind);
        }
        attempts += 1;
    }
    let mut pop = select(pool, target, set, policy);
    let record = |g: usize, pop: &[(Vec<usize>, f64)]| GenerationRecord {
        generation: g,
        best_te_ev: pop[0].1,
        mean_fitness: pop.iter().map(|p| 1.0 / p.1).sum::<f64>() / pop.len() as f64,
    };
    let mut trace = vec![record(0, &pop)];
    let (mut k, mut still) = (0, 0);
    while k < params.n_max && still < params.n_no_change {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.shuffle(&mut rng);
        let mut offspring = Vec::new();
        for pair in order.chunks_exact(2) {
            if n >= 2 && rng.gen_bool(params.p_c) {
                let cut = rng.gen_range(1..n);
                let (c1, c2) = one_point_crossover(&pop[pair[0]].0, &pop[pair[1]].0, cut, set);
                offspring.push(c1);
                offspring.push(c2);
            }
        }
        for child in offspring.iter_mut() {
            if n >= 2 && rng.gen_bool(params.p_m) {
                let i = rng.gen_range(0..n);
                let j = (i + rng.gen_range(1..n)) % n;
                *child = swap_mutation(child, i, j, set)?;
            }
        }
        let best_before = pop[0].1;
        let pool: Vec<Vec<usize>> = pop.into_iter().map(|p| p.0).chain(offspring).collect();
        pop = select(pool, target, set, policy);
        k += 1;
        if pop[0].1 < best_before {
            still = 0;
        } else {
            still += 1;
        }
        trace.push(record(k, &pop));
    }
    let (best, te_ev) = pop.swap_remove(0);
    Ok(GaResult { best, te_ev, generations: k, trace })
}

struct Dfs<'a> {
    set: &'a OrderableSet,
    policy: &'a SeparationPolicy,
    used: Vec<bool>,
    seq: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
    enumerated: u64,
}

impl Dfs<'_> {
    fn go(&mut self, lane_next: usize, prev: Option<(usize, f64)>, te_ev: Option<f64>) {
        let set = self.set;
        if self.seq.len() == set.len() {
            self.enumerated += 1;
            let t = te_ev.expect("EV placed");
            if self.best.as_ref().is_none_or(|b| t < b.1) {
                self.best = Some((self.seq.clone(), t));
            }
            return;
        }
        let lane_pending = lane_next < set.n_ev();
        for v in 0..set.len() {
            if self.used[v] {
                continue;
            }
            let on_lane = set.ev_lane_order.contains(&v);
            if on_lane && set.ev_lane_order[lane_next] != v {
                continue;
            }
            if set.strict_priority && lane_pending && !on_lane {
                continue;
            }
            let veh = &set.vehicles[v];
            let t = match prev {
                None => veh.confirmed_entry.unwrap_or(veh.t_a),
                Some((p, tp)) => veh.t_a.max(tp + super::separation_time(set, p, v, self.policy)),
            };
            self.used[v] = true;
            self.seq.push(v);
            let ev_t = if v == set.ev { Some(t) } else { te_ev };
            self.go(lane_next + on_lane as usize, Some((v, t)), ev_t);
            self.seq.pop();
            self.used[v] = false;
        }
    }
}

/// Enumerates every feasible sequence and returns the one with the
/// earliest EV entrance.
pub fn exhaustive_optimize(set: &OrderableSet, policy: &SeparationPolicy, cap: u64) -> Result<SearchResult> {
    let count = feasible_count(set);
    if count > cap as u128 {
        return Err(Error::TooLarge { count, cap });
    }
    let mut dfs = Dfs { set, policy, used: vec![false; set.len()], seq: Vec::new(), best: None, enumerated: 0 };
    dfs.go(0, None, None);
    let (best, te_ev) = dfs.best.expect("at least one sequence");
    Ok(SearchResult { best, te_ev, enumerated: dfs.enumerated })
}
