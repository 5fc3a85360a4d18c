//! Constraint-satisfying plan generators.
//!
//! Every planner first meets the per-type minimum quotas, then types the
//! remaining ("slack") vacant areas according to a [`FillPolicy`]. All
//! randomness comes from one seeded ChaCha stream per call, so identical
//! inputs give identical plans.

mod gsca;
mod llm;
mod search;
mod stochastic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatBackend, LlmError};
use crate::metrics::{MetricsConfig, MetricsError};
use crate::population::Population;
use crate::region::{LandUse, Plan, Point, Region};

pub use gsca::{gsca_plan, gsca_plan_traced};
pub use llm::llm_plan;
pub use search::{local_search_plan, local_search_report, objective, SearchReport};
pub use stochastic::{
    centralized_plan, centralized_plan_traced, centralized_step, decentralized_plan, decentralized_plan_traced,
    decentralized_step, random_plan,
};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("the {0} planner needs a resident population")]
    PopulationRequired(&'static str),
    #[error("the llm planner needs a chat backend")]
    BackendRequired,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("planner reply rejected after repair: {0}")]
    BadReply(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How vacant areas beyond the minimum quotas are typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Keep applying the method's own selection rule, cycling over types.
    SameRule,
    /// Give each remaining area the type with the largest Service gain.
    MaxMarginalService,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_iters: u32,
    pub restarts: u32,
    pub initial_temperature: f64,
    pub final_temperature: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            restarts: 4,
            initial_temperature: 0.02,
            final_temperature: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub seed: u64,
    pub epsilon_m: f64,
    /// `None` picks the method default: same-rule for the stochastic
    /// baselines, max-marginal-service for gsca.
    pub fill_policy: Option<FillPolicy>,
    /// (w_service, w_ecology) for local search.
    pub objective_weights: (f64, f64),
    pub search: SearchConfig,
    /// Declared center for the centralized baseline; defaults to the mean
    /// of all area centroids.
    pub center: Option<Point>,
    /// Restricts the types used for slack areas and search moves. Types
    /// outside the list must have a zero quota.
    pub allowed_types: Option<Vec<LandUse>>,
    pub metrics: MetricsConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epsilon_m: 1.0,
            fill_policy: None,
            objective_weights: (0.5, 0.5),
            search: SearchConfig::default(),
            center: None,
            allowed_types: None,
            metrics: MetricsConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.epsilon_m > 0.0) {
            return Err(PlannerError::InvalidConfig("epsilon_m must be positive".into()));
        }
        let (ws, we) = self.objective_weights;
        if !(ws >= 0.0 && we >= 0.0) || ws + we == 0.0 {
            return Err(PlannerError::InvalidConfig(
                "objective weights must be non-negative and not both zero".into(),
            ));
        }
        if let Some(types) = &self.allowed_types {
            if types.is_empty() {
                return Err(PlannerError::InvalidConfig("allowed_types is empty".into()));
            }
            if let Some(u) = types.iter().find(|u| !u.is_assignable()) {
                return Err(PlannerError::InvalidConfig(format!("{u} is not assignable")));
            }
        }
        if !(self.search.initial_temperature > 0.0 && self.search.final_temperature > 0.0) {
            return Err(PlannerError::InvalidConfig("temperatures must be positive".into()));
        }
        self.metrics.categories.validate()?;
        Ok(())
    }

    /// Allowed types in canonical order.
    pub(crate) fn types(&self) -> Vec<LandUse> {
        match &self.allowed_types {
            Some(t) => LandUse::ASSIGNABLE.iter().copied().filter(|u| t.contains(u)).collect(),
            None => LandUse::ASSIGNABLE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Random,
    Centralized,
    Decentralized,
    Gsca,
    LocalSearch,
    Llm,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::Random,
        PlannerKind::Centralized,
        PlannerKind::Decentralized,
        PlannerKind::Gsca,
        PlannerKind::LocalSearch,
        PlannerKind::Llm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Random => "random",
            PlannerKind::Centralized => "centralized",
            PlannerKind::Decentralized => "decentralized",
            PlannerKind::Gsca => "gsca",
            PlannerKind::LocalSearch => "local-search",
            PlannerKind::Llm => "llm",
        }
    }

    pub fn needs_population(self) -> bool {
        matches!(self, PlannerKind::Gsca | PlannerKind::LocalSearch)
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown planner {0:?} (expected random, centralized, decentralized, gsca, local-search or llm)")]
pub struct UnknownPlanner(pub String);

impl FromStr for PlannerKind {
    type Err = UnknownPlanner;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| UnknownPlanner(s.to_string()))
    }
}

/// Runs any planner by name.
pub fn run_planner(
    kind: PlannerKind,
    region: &Region,
    population: Option<&Population>,
    config: &PlannerConfig,
    backend: Option<&dyn ChatBackend>,
) -> Result<Plan, PlannerError> {
    match kind {
        PlannerKind::Random => random_plan(region, config),
        PlannerKind::Centralized => centralized_plan(region, config),
        PlannerKind::Decentralized => decentralized_plan(region, config),
        PlannerKind::Gsca => gsca_plan(region, population.ok_or(PlannerError::PopulationRequired("gsca"))?, config),
        PlannerKind::LocalSearch => local_search_plan(
            region,
            population.ok_or(PlannerError::PopulationRequired("local-search"))?,
            config,
        ),
        PlannerKind::Llm => llm_plan(region, backend.ok_or(PlannerError::BackendRequired)?, config.seed),
    }
}

/// One selection made by a planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub area_id: u32,
    pub land_use: LandUse,
    /// Made after every quota was met.
    pub slack: bool,
    /// Residents newly covered (gsca quota picks only).
    pub gain: Option<u32>,
}

/// Types in round-robin order until every quota is met: one pick per type
/// with remaining quota per cycle, cycling in canonical type order.
pub fn quota_schedule(requirements: &BTreeMap<LandUse, u32>) -> Vec<LandUse> {
    let mut remaining: Vec<(LandUse, u32)> = LandUse::ASSIGNABLE
        .iter()
        .map(|&u| (u, requirements.get(&u).copied().unwrap_or(0)))
        .collect();
    let mut out = Vec::new();
    loop {
        let mut any = false;
        for (u, left) in &mut remaining {
            if *left > 0 {
                *left -= 1;
                out.push(*u);
                any = true;
            }
        }
        if !any {
            return out;
        }
    }
}

pub(crate) fn check_feasible(region: &Region, config: &PlannerConfig) -> Result<(), PlannerError> {
    config.validate()?;
    let total: u32 = region.requirements().values().sum();
    let vacant = region.vacant_areas().count() as u32;
    if total > vacant {
        return Err(PlannerError::Infeasible(format!("{total} required areas but only {vacant} vacant")));
    }
    let types = config.types();
    for (&u, &s) in region.requirements() {
        if s > 0 && !types.contains(&u) {
            return Err(PlannerError::InvalidConfig(format!("{u} has quota {s} but is not an allowed type")));
        }
    }
    Ok(())
}

/// Draws an index with probability proportional to `weights`. All-zero
/// (or non-finite) weights fall back to a uniform draw.
pub(crate) fn sample_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    debug_assert!(!weights.is_empty());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return rng.random_range(0..weights.len());
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding left `target` past the last bucket: take the last positive one.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// For each area (by index), the residents (by index) within `radius` of
/// it: strictly closer when `strict`, otherwise at most `radius`.
pub(crate) fn near_lists(region: &Region, population: &Population, radius: f64, strict: bool) -> Vec<Vec<u32>> {
    region
        .areas()
        .iter()
        .map(|a| {
            population
                .residents
                .iter()
                .enumerate()
                .filter(|(_, r)| {
                    let d = region.distance(r.home, a);
                    if strict {
                        d < radius
                    } else {
                        d <= radius
                    }
                })
                .map(|(i, _)| i as u32)
                .collect()
        })
        .collect()
}

/// Types each remaining vacant area with the type of largest marginal
/// Service gain, in ascending area order; ties go to the earlier type.
pub(crate) fn fill_max_marginal_service(
    region: &Region,
    population: &Population,
    config: &PlannerConfig,
    plan: &mut Plan,
    pool: &[u32],
    near: &[Vec<u32>],
    trace: &mut Vec<Pick>,
) {
    let cats = &config.metrics.categories;
    let by_use = cats.index_by_use();
    let n_c = cats.len();
    let mut access = vec![false; population.len() * n_c];
    for area in region.areas() {
        if let Some(u) = region.use_of(area, plan) {
            for &m in &near[area.id as usize - 1] {
                for &c in &by_use[u.index()] {
                    access[m as usize * n_c + c] = true;
                }
            }
        }
    }
    let types = config.types();
    for &id in pool {
        let residents = &near[id as usize - 1];
        let mut best = (types[0], 0u64);
        for (k, &t) in types.iter().enumerate() {
            let gain: u64 = residents
                .iter()
                .map(|&m| by_use[t.index()].iter().filter(|&&c| !access[m as usize * n_c + c]).count() as u64)
                .sum();
            if k == 0 || gain > best.1 {
                best = (t, gain);
            }
        }
        let (t, _) = best;
        for &m in residents {
            for &c in &by_use[t.index()] {
                access[m as usize * n_c + c] = true;
            }
        }
        plan.set(id, t);
        trace.push(Pick {
            area_id: id,
            land_use: t,
            slack: true,
            gain: None,
        });
    }
}
