//! Simulated-annealing local search on w_s·Service + w_e·Ecology.
//!
//! Each restart starts from `random_plan` with seed `seed + restart` and
//! explores feasible single-area reassignments and pairwise swaps. The
//! objective is maintained incrementally from per-resident reach counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_feasible, near_lists, random_plan, PlannerConfig, PlannerError};
use crate::metrics;
use crate::population::Population;
use crate::region::{LandUse, Plan, Region};

/// w_s·Service + w_e·Ecology of `plan`, computed by the metrics module.
pub fn objective(region: &Region, plan: &Plan, population: &Population, config: &PlannerConfig) -> Result<f64, PlannerError> {
    let (ws, we) = config.objective_weights;
    Ok(ws * metrics::service(region, plan, population, &config.metrics)?
        + we * metrics::ecology(region, plan, population, &config.metrics)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub plan: Plan,
    pub objective: f64,
    /// Objective of restart 0's starting plan.
    pub initial_objective: f64,
    /// Restart that produced the returned plan.
    pub restart: u32,
    pub accepted_moves: u64,
}

struct Evaluator<'a> {
    by_use: [Vec<usize>; 10],
    green: [bool; 10],
    n_c: usize,
    svc_near: &'a [Vec<u32>],
    eco_near: &'a [Vec<u32>],
    reach: Vec<u32>,
    green_reach: Vec<u32>,
    served: i64,
    in_esr: i64,
    scale_s: f64,
    scale_e: f64,
}

impl<'a> Evaluator<'a> {
    fn new(
        region: &Region,
        plan: &Plan,
        n_m: usize,
        config: &PlannerConfig,
        svc_near: &'a [Vec<u32>],
        eco_near: &'a [Vec<u32>],
    ) -> Self {
        let cats = &config.metrics.categories;
        let n_c = cats.len();
        let mut green = [false; 10];
        for u in LandUse::ALL {
            green[u.index()] = config.metrics.is_green(u);
        }
        let (ws, we) = config.objective_weights;
        let mut ev = Evaluator {
            by_use: cats.index_by_use(),
            green,
            n_c,
            svc_near,
            eco_near,
            reach: vec![0; n_m * n_c],
            green_reach: vec![0; n_m],
            served: 0,
            in_esr: 0,
            scale_s: ws / (n_m * n_c) as f64,
            scale_e: we / n_m as f64,
        };
        for a in region.areas() {
            if let Some(u) = region.use_of(a, plan) {
                ev.add(a.id as usize - 1, u);
            }
        }
        ev
    }

    fn add(&mut self, area: usize, u: LandUse) {
        for &m in &self.svc_near[area] {
            for &c in &self.by_use[u.index()] {
                let slot = &mut self.reach[m as usize * self.n_c + c];
                if *slot == 0 {
                    self.served += 1;
                }
                *slot += 1;
            }
        }
        if self.green[u.index()] {
            for &m in &self.eco_near[area] {
                let slot = &mut self.green_reach[m as usize];
                if *slot == 0 {
                    self.in_esr += 1;
                }
                *slot += 1;
            }
        }
    }

    fn remove(&mut self, area: usize, u: LandUse) {
        for &m in &self.svc_near[area] {
            for &c in &self.by_use[u.index()] {
                let slot = &mut self.reach[m as usize * self.n_c + c];
                *slot -= 1;
                if *slot == 0 {
                    self.served -= 1;
                }
            }
        }
        if self.green[u.index()] {
            for &m in &self.eco_near[area] {
                let slot = &mut self.green_reach[m as usize];
                *slot -= 1;
                if *slot == 0 {
                    self.in_esr -= 1;
                }
            }
        }
    }

    fn set(&mut self, area: usize, from: LandUse, to: LandUse) {
        self.remove(area, from);
        self.add(area, to);
    }

    fn value(&self) -> f64 {
        self.served as f64 * self.scale_s + self.in_esr as f64 * self.scale_e
    }
}

pub fn local_search_plan(region: &Region, population: &Population, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    local_search_report(region, population, config).map(|r| r.plan)
}

/// Runs every restart and keeps the best-seen plan; ties keep the lower
/// restart index. With `max_iters == 0` the seed plan is returned as is.
pub fn local_search_report(
    region: &Region,
    population: &Population,
    config: &PlannerConfig,
) -> Result<SearchReport, PlannerError> {
    check_feasible(region, config)?;
    if population.is_empty() {
        return Err(PlannerError::PopulationRequired("local-search"));
    }
    let svc_near = near_lists(region, population, config.metrics.service_radius_m, true);
    let eco_near = near_lists(region, population, config.metrics.esr_radius_m, false);
    let restarts = if config.search.max_iters == 0 { 1 } else { config.search.restarts.max(1) };

    let mut best: Option<SearchReport> = None;
    let mut initial_objective = 0.0;
    for restart in 0..restarts {
        let start = random_plan(region, &config.clone().with_seed(config.seed.wrapping_add(restart as u64)))?;
        let (plan, value, start_value, accepted) =
            anneal(region, population.len(), config, &svc_near, &eco_near, start, restart);
        if restart == 0 {
            initial_objective = start_value;
        }
        if best.as_ref().is_none_or(|b| value > b.objective) {
            best = Some(SearchReport {
                plan,
                objective: value,
                initial_objective,
                restart,
                accepted_moves: accepted,
            });
        }
    }
    let mut report = best.expect("at least one restart");
    report.initial_objective = initial_objective;
    Ok(report)
}

fn anneal(
    region: &Region,
    n_m: usize,
    config: &PlannerConfig,
    svc_near: &[Vec<u32>],
    eco_near: &[Vec<u32>],
    start: Plan,
    restart: u32,
) -> (Plan, f64, f64, u64) {
    let mut ev = Evaluator::new(region, &start, n_m, config, svc_near, eco_near);
    let start_value = ev.value();
    let ids: Vec<u32> = start.iter().map(|(id, _)| id).collect();
    let mut cur: Vec<LandUse> = start.iter().map(|(_, u)| u).collect();
    let mut counts = [0u32; 10];
    for u in &cur {
        counts[u.index()] += 1;
    }
    let types = config.types();
    let search = &config.search;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64) ^ 0x5eed_5eed);
    let mut value = start_value;
    let mut best = (cur.clone(), value);
    let mut accepted = 0u64;
    let ratio = search.final_temperature / search.initial_temperature;
    let n = ids.len();

    for it in 0..search.max_iters {
        if n == 0 {
            break;
        }
        let temp = search.initial_temperature * ratio.powf(it as f64 / search.max_iters as f64);
        let i = rng.random_range(0..n);
        let area_i = ids[i] as usize - 1;
        let reassign = types.len() > 1 && (n < 2 || rng.random_bool(0.5));
        let undo: Vec<(usize, LandUse, LandUse)> = if reassign {
            let from = cur[i];
            let mut to = types[rng.random_range(0..types.len() - 1)];
            if to == from {
                to = types[types.len() - 1];
            }
            if counts[from.index()] <= region.requirement(from) {
                continue;
            }
            ev.set(area_i, from, to);
            vec![(i, from, to)]
        } else {
            if n < 2 {
                continue;
            }
            let j = rng.random_range(0..n);
            if cur[i] == cur[j] {
                continue;
            }
            let area_j = ids[j] as usize - 1;
            ev.set(area_i, cur[i], cur[j]);
            ev.set(area_j, cur[j], cur[i]);
            vec![(i, cur[i], cur[j]), (j, cur[j], cur[i])]
        };
        let next = ev.value();
        let delta = next - value;
        if delta >= 0.0 || rng.random::<f64>() < (delta / temp).exp() {
            for &(k, from, to) in &undo {
                cur[k] = to;
                counts[from.index()] -= 1;
                counts[to.index()] += 1;
            }
            value = next;
            accepted += 1;
            if value > best.1 {
                best = (cur.clone(), value);
            }
        } else {
            for &(k, from, to) in undo.iter().rev() {
                ev.set(ids[k] as usize - 1, to, from);
            }
        }
    }
    let plan: Plan = ids.iter().copied().zip(best.0).collect();
    (plan, best.1, start_value, accepted)
}
