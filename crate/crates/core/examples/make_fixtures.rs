//! Regenerates the bundled fixtures under `<workspace>/fixtures`.
//!
//! cargo run -p parplan --example make_fixtures

use std::fs;
use std::path::PathBuf;

use parplan::llm::RuleBackend;
use parplan::planners::{random_plan, PlannerConfig};
use parplan::population::{synthesize, NeedsRuleTable};
use parplan::region::{save_plan, save_region, PlanDocument};
use parplan::synth::{demographics, grid_region, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    fs::create_dir_all(&dir)?;

    for (spec, seed, file) in [
        (GridSpec::hlg_like(), 11, "hlg_like.geojson"),
        (GridSpec::dhm_like(), 12, "dhm_like.geojson"),
        (GridSpec::grid16(), 1, "grid16.geojson"),
    ] {
        save_region(&grid_region(&spec, seed)?, dir.join(file))?;
    }
    fs::write(
        dir.join("demographics.json"),
        serde_json::to_string_pretty(&demographics(1000))? + "\n",
    )?;

    // Small population with elicited needs and a fixed plan on grid16; the
    // metric values for this triple are checked against golden numbers.
    let region = grid_region(&GridSpec::grid16(), 1)?;
    let mut spec = demographics(40);
    for (q, n) in spec.marginalized_quotas.values_mut().zip([2, 2, 3, 3, 3, 3]) {
        *q = n;
    }
    let mut population = synthesize(&spec, &region, 5)?;
    population.elicit_needs(&RuleBackend::new(NeedsRuleTable::default()))?;
    fs::write(dir.join("grid16_population.json"), population.to_json() + "\n")?;
    let plan = random_plan(&region, &PlannerConfig::default().with_seed(3))?;
    save_plan(&PlanDocument::new(&plan, Default::default()), dir.join("grid16_plan.json"))?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
