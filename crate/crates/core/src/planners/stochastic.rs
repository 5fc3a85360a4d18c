//! Random, centralized and decentralized baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_feasible, quota_schedule, sample_weighted, FillPolicy, Pick, PlannerConfig, PlannerError};
use crate::region::{LandUse, Plan, Point, Region};

fn centroid(region: &Region, id: u32) -> Point {
    region.area(id).expect("pool holds region ids").centroid
}

fn same_rule_only(config: &PlannerConfig, method: &str) -> Result<(), PlannerError> {
    match config.fill_policy {
        Some(FillPolicy::MaxMarginalService) => Err(PlannerError::InvalidConfig(format!(
            "{method} supports only the same-rule fill policy"
        ))),
        _ => Ok(()),
    }
}

/// Quotas first by uniform sampling without replacement, then a uniform
/// type for every remaining vacant area.
pub fn random_plan(region: &Region, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    check_feasible(region, config)?;
    same_rule_only(config, "random")?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool = region.vacant_ids();
    let mut plan = Plan::default();
    for u in LandUse::ASSIGNABLE {
        for _ in 0..region.requirement(u) {
            let id = pool.swap_remove(rng.random_range(0..pool.len()));
            plan.set(id, u);
        }
    }
    pool.sort_unstable();
    let types = config.types();
    for id in pool {
        plan.set(id, types[rng.random_range(0..types.len())]);
    }
    Ok(plan)
}

/// Mean of all area centroids.
pub(crate) fn region_center(region: &Region) -> Point {
    let n = region.areas().len() as f64;
    let (x, y) = region
        .areas()
        .iter()
        .fold((0.0, 0.0), |(x, y), a| (x + a.centroid.x, y + a.centroid.y));
    Point::new(x / n, y / n)
}

/// One centralized draw: an index into `pool`, chosen with probability
/// proportional to 1 / (epsilon + centroid distance to `center`).
pub fn centralized_step<R: Rng>(region: &Region, pool: &[u32], center: Point, epsilon_m: f64, rng: &mut R) -> usize {
    let weights: Vec<f64> = pool
        .iter()
        .map(|&id| 1.0 / (epsilon_m + centroid(region, id).distance(center)))
        .collect();
    sample_weighted(rng, &weights)
}

/// One decentralized draw: uniform when `anchors` is empty, otherwise
/// proportional to the centroid distance to the nearest anchor.
pub fn decentralized_step<R: Rng>(region: &Region, pool: &[u32], anchors: &[Point], rng: &mut R) -> usize {
    if anchors.is_empty() {
        return rng.random_range(0..pool.len());
    }
    let weights: Vec<f64> = pool
        .iter()
        .map(|&id| {
            let c = centroid(region, id);
            anchors.iter().map(|a| a.distance(c)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    sample_weighted(rng, &weights)
}

/// Shared driver: quota picks in round-robin type order, then slack picks
/// cycling over the allowed types, each pick made by `step`.
fn drive<F>(region: &Region, config: &PlannerConfig, mut step: F) -> (Plan, Vec<Pick>)
where
    F: FnMut(&[u32], LandUse, &mut ChaCha8Rng) -> usize,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool = region.vacant_ids();
    let mut plan = Plan::default();
    let mut trace = Vec::with_capacity(pool.len());
    let quota = quota_schedule(region.requirements());
    let types = config.types();
    let slack = (0..).map(|k| types[k % types.len()]);
    for (is_slack, u) in quota.iter().map(|&u| (false, u)).chain(slack.map(|u| (true, u))) {
        if pool.is_empty() {
            break;
        }
        let k = step(&pool, u, &mut rng);
        let id = pool.remove(k);
        plan.set(id, u);
        trace.push(Pick {
            area_id: id,
            land_use: u,
            slack: is_slack,
            gain: None,
        });
    }
    (plan, trace)
}

pub fn centralized_plan(region: &Region, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    centralized_plan_traced(region, config).map(|(p, _)| p)
}

pub fn centralized_plan_traced(region: &Region, config: &PlannerConfig) -> Result<(Plan, Vec<Pick>), PlannerError> {
    check_feasible(region, config)?;
    same_rule_only(config, "centralized")?;
    let center = config.center.unwrap_or_else(|| region_center(region));
    Ok(drive(region, config, |pool, _, rng| {
        centralized_step(region, pool, center, config.epsilon_m, rng)
    }))
}

pub fn decentralized_plan(region: &Region, config: &PlannerConfig) -> Result<Plan, PlannerError> {
    decentralized_plan_traced(region, config).map(|(p, _)| p)
}

pub fn decentralized_plan_traced(region: &Region, config: &PlannerConfig) -> Result<(Plan, Vec<Pick>), PlannerError> {
    check_feasible(region, config)?;
    same_rule_only(config, "decentralized")?;
    let mut anchors: [Vec<Point>; 10] = Default::default();
    Ok(drive(region, config, |pool, u, rng| {
        let k = decentralized_step(region, pool, &anchors[u.index()], rng);
        anchors[u.index()].push(centroid(region, pool[k]));
        k
    }))
}
