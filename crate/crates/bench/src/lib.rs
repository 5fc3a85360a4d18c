//! Shared setup for the benchmarks: synthetic regions with rule-elicited
//! populations, built without touching the filesystem.

use std::sync::Arc;

use parplan::llm::{RuleBackend, RuleWorld};
use parplan::planners::PlannerConfig;
use parplan::population::{synthesize, NeedsRuleTable, Population};
use parplan::synth::{demographics, grid_region, GridSpec};
use parplan::Region;

pub fn setup(spec: GridSpec, residents: u32, seed: u64) -> (Region, Population) {
    let region = grid_region(&spec, seed).expect("synthetic region");
    let mut spec = demographics(residents);
    if spec.marginalized_total() > residents as u64 {
        for q in spec.marginalized_quotas.values_mut() {
            *q = (*q * residents / 1000).max(1);
        }
    }
    let mut pop = synthesize(&spec, &region, seed).expect("population");
    pop.elicit_needs(&RuleBackend::new(NeedsRuleTable::default())).expect("needs");
    (region, pop)
}

pub fn rule_backend(region: &Region, population: &Population, planner: &PlannerConfig) -> RuleBackend {
    RuleBackend::new(NeedsRuleTable::default()).with_world(Arc::new(RuleWorld {
        region: Arc::new(region.clone()),
        population: Arc::new(population.clone()),
        planner: planner.clone(),
    }))
}
