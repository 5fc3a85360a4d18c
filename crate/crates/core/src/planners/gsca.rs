//! Greedy coverage baseline: per type, repeatedly take the vacant area that
//! brings the most residents newly within the service radius of that type.

use super::{check_feasible, fill_max_marginal_service, near_lists, FillPolicy, Pick, PlannerConfig, PlannerError};
use crate::population::Population;
use crate::region::{LandUse, Plan, Region};

pub fn gsca_plan(region: &Region, population: &Population, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    gsca_plan_traced(region, population, config).map(|(p, _)| p)
}

/// Argmax of newly covered residents over `pool`; ties go to the lower id
/// because `pool` is ascending and only strict improvements replace.
fn best_area(pool: &[u32], near: &[Vec<u32>], covered: &[bool]) -> (usize, u32) {
    let mut best = (0, 0u32);
    for (k, &id) in pool.iter().enumerate() {
        let gain = near[id as usize - 1].iter().filter(|&&m| !covered[m as usize]).count() as u32;
        if k == 0 || gain > best.1 {
            best = (k, gain);
        }
    }
    best
}

fn covered_by(region: &Region, plan: &Plan, near: &[Vec<u32>], n: usize, u: LandUse) -> Vec<bool> {
    let mut covered = vec![false; n];
    for a in region.areas() {
        if region.use_of(a, plan) == Some(u) {
            for &m in &near[a.id as usize - 1] {
                covered[m as usize] = true;
            }
        }
    }
    covered
}

/// Also returns every pick in order, with the newly covered count for
/// quota picks.
pub fn gsca_plan_traced(
    region: &Region,
    population: &Population,
    config: &PlannerConfig,
) -> Result<(Plan, Vec<Pick>), PlannerError> {
    check_feasible(region, config)?;
    if population.is_empty() {
        return Err(PlannerError::PopulationRequired("gsca"));
    }
    let near = near_lists(region, population, config.metrics.service_radius_m, true);
    let n = population.len();
    let mut pool = region.vacant_ids();
    let mut plan = Plan::default();
    let mut trace = Vec::with_capacity(pool.len());

    // Descending quota; the stable sort keeps canonical order among equals.
    let mut order: Vec<(LandUse, u32)> = LandUse::ASSIGNABLE.iter().map(|&u| (u, region.requirement(u))).collect();
    order.sort_by_key(|&(_, q)| std::cmp::Reverse(q));
    for (u, quota) in order {
        let mut covered = covered_by(region, &plan, &near, n, u);
        for _ in 0..quota {
            let (k, gain) = best_area(&pool, &near, &covered);
            let id = pool.remove(k);
            for &m in &near[id as usize - 1] {
                covered[m as usize] = true;
            }
            plan.set(id, u);
            trace.push(Pick {
                area_id: id,
                land_use: u,
                slack: false,
                gain: Some(gain),
            });
        }
    }

    match config.fill_policy.unwrap_or(FillPolicy::MaxMarginalService) {
        FillPolicy::MaxMarginalService => {
            fill_max_marginal_service(region, population, config, &mut plan, &pool, &near, &mut trace)
        }
        FillPolicy::SameRule => {
            let types = config.types();
            let mut k = 0;
            while !pool.is_empty() {
                let u = types[k % types.len()];
                let covered = covered_by(region, &plan, &near, n, u);
                let (i, gain) = best_area(&pool, &near, &covered);
                let id = pool.remove(i);
                plan.set(id, u);
                trace.push(Pick {
                    area_id: id,
                    land_use: u,
                    slack: true,
                    gain: Some(gain),
                });
                k += 1;
            }
        }
    }
    Ok((plan, trace))
}
