mod common;

use common::{fixture, load_fixture, random_instance, reference};
use parplan::metrics::{self, MetricsConfig};
use parplan::population::Population;
use parplan::region::load_plan;
use proptest::prelude::*;

#[test]
fn grid16_matches_geometry_library_reference() {
    let region = load_fixture("grid16.geojson");
    let plan = load_plan(fixture("grid16_plan.json")).unwrap().plan();
    let pop = Population::from_json(&std::fs::read_to_string(fixture("grid16_population.json")).unwrap()).unwrap();
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("grid16_golden.json")).unwrap()).unwrap();
    let r = metrics::report(&region, &plan, &pop, &MetricsConfig::default()).unwrap();
    let pairs = [
        ("service", r.service),
        ("ecology", r.ecology),
        ("satisfaction", r.satisfaction),
        ("inclusion", r.inclusion.unwrap()),
    ];
    for (name, got) in pairs {
        let want = golden[name].as_f64().unwrap();
        assert!((got - want).abs() <= 1e-12, "{name}: {got} vs {want}");
    }
}

#[test]
fn report_agrees_with_individual_metrics() {
    let cfg = MetricsConfig::default();
    for seed in 0..20 {
        let inst = random_instance(seed, 20, 40);
        let (r, p, pop) = (&inst.region, &inst.plan, &inst.population);
        let rep = metrics::report(r, p, pop, &cfg).unwrap();
        assert_eq!(rep.service, metrics::service(r, p, pop, &cfg).unwrap());
        assert_eq!(rep.ecology, metrics::ecology(r, p, pop, &cfg).unwrap());
        assert_eq!(rep.satisfaction, metrics::satisfaction(r, p, pop, &cfg).unwrap());
        assert_eq!(rep.inclusion, metrics::inclusion(r, p, pop, &cfg).ok());
        assert_eq!(rep.per_resident.len(), pop.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_reference(seed in any::<u64>()) {
        let inst = random_instance(seed, 25, 60);
        let cfg = MetricsConfig::default();
        let (r, p, pop) = (&inst.region, &inst.plan, &inst.population);
        prop_assert!((metrics::service(r, p, pop, &cfg).unwrap() - reference::service(r, p, pop)).abs() <= 1e-12);
        prop_assert!((metrics::ecology(r, p, pop, &cfg).unwrap() - reference::ecology(r, p, pop)).abs() <= 1e-12);
        prop_assert!(
            (metrics::satisfaction(r, p, pop, &cfg).unwrap() - reference::satisfaction(r, p, pop)).abs() <= 1e-12
        );
        match (metrics::inclusion(r, p, pop, &cfg).ok(), reference::inclusion(r, p, pop)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn metrics_are_fractions(seed in any::<u64>()) {
        let inst = random_instance(seed, 15, 30);
        let rep = metrics::report(&inst.region, &inst.plan, &inst.population, &MetricsConfig::default()).unwrap();
        for v in rep.values().into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn metrics_are_translation_invariant(seed in any::<u64>(), dx in -5000.0f64..5000.0, dy in -5000.0f64..5000.0) {
        let inst = random_instance(seed, 12, 30);
        let cfg = MetricsConfig::default();
        let moved = inst.region.translated(dx, dy);
        let mut pop = inst.population.clone();
        for r in &mut pop.residents {
            r.home = r.home.translate(dx, dy);
        }
        let a = metrics::report(&inst.region, &inst.plan, &inst.population, &cfg).unwrap();
        let b = metrics::report(&moved, &inst.plan, &pop, &cfg).unwrap();
        // Residents sitting within rounding distance of a radius may flip;
        // allow one resident's worth of difference.
        let slack = 1.0 / inst.population.len() as f64 + 1e-12;
        prop_assert!((a.service - b.service).abs() <= slack);
        prop_assert!((a.ecology - b.ecology).abs() <= slack);
        prop_assert!((a.satisfaction - b.satisfaction).abs() <= slack);
    }
}
