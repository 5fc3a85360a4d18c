mod common;

use common::{load_fixture, population, random_instance, reference, requirements};
use parplan::llm::parse::render_plan_json;
use parplan::llm::ScriptedBackend;
use parplan::planners::{
    gsca_plan_traced, local_search_report, objective, quota_schedule, random_plan, run_planner, FillPolicy,
    PlannerConfig, PlannerError, PlannerKind, SearchConfig,
};
use parplan::region::{validate_plan, LandUse, Plan, Region};

fn with_requirements(region: &Region, req: &[(LandUse, u32)]) -> Region {
    Region::new(region.name(), region.areas().to_vec(), requirements(req), region.communities().to_vec(), "").unwrap()
}

#[test]
fn quota_schedule_round_robin() {
    let req = requirements(&[(LandUse::School, 2), (LandUse::Park, 1), (LandUse::Clinic, 3)]);
    assert_eq!(
        quota_schedule(&req),
        vec![
            LandUse::School,
            LandUse::Clinic,
            LandUse::Park,
            LandUse::School,
            LandUse::Clinic,
            LandUse::Clinic
        ]
    );
}

#[test]
fn stochastic_planners_are_reproducible_per_seed() {
    let region = load_fixture("hlg_like.geojson");
    for kind in [PlannerKind::Random, PlannerKind::Centralized, PlannerKind::Decentralized] {
        let a = run_planner(kind, &region, None, &PlannerConfig::default().with_seed(4), None).unwrap();
        let b = run_planner(kind, &region, None, &PlannerConfig::default().with_seed(4), None).unwrap();
        let c = run_planner(kind, &region, None, &PlannerConfig::default().with_seed(5), None).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_ne!(a, c, "{kind}");
    }
}

#[test]
fn stochastic_planners_reject_marginal_service_fill() {
    let region = load_fixture("grid16.geojson");
    let cfg = PlannerConfig {
        fill_policy: Some(FillPolicy::MaxMarginalService),
        ..PlannerConfig::default()
    };
    for kind in [PlannerKind::Random, PlannerKind::Centralized, PlannerKind::Decentralized] {
        let err = run_planner(kind, &region, None, &cfg, None).unwrap_err();
        assert!(matches!(err, PlannerError::InvalidConfig(_)), "{kind}: {err}");
    }
}

#[test]
fn infeasible_quotas_are_rejected() {
    let region = load_fixture("grid16.geojson");
    let vacant = region.vacant_ids().len() as u32;
    let err = Region::new(
        "over",
        region.areas().to_vec(),
        requirements(&[(LandUse::School, vacant + 1)]),
        region.communities().to_vec(),
        "",
    )
    .unwrap_err();
    assert!(err.to_string().contains("infeasible"), "{err}");
    // A quota on a type the planner may not use is a configuration error.
    let cfg = PlannerConfig {
        allowed_types: Some(vec![LandUse::Park]),
        ..PlannerConfig::default()
    };
    let err = run_planner(PlannerKind::Random, &region, None, &cfg, None).unwrap_err();
    assert!(matches!(err, PlannerError::InvalidConfig(_)), "{err}");
}

#[test]
fn population_and_backend_requirements() {
    let region = load_fixture("grid16.geojson");
    let cfg = PlannerConfig::default();
    assert!(matches!(
        run_planner(PlannerKind::Gsca, &region, None, &cfg, None),
        Err(PlannerError::PopulationRequired(_))
    ));
    assert!(matches!(
        run_planner(PlannerKind::Llm, &region, None, &cfg, None),
        Err(PlannerError::BackendRequired)
    ));
}

#[test]
fn gsca_gains_match_reference_coverage() {
    for seed in 0..20 {
        let inst = random_instance(300 + seed, 14, 50);
        let vacant = inst.region.vacant_ids().len() as u32;
        if vacant < 2 {
            continue;
        }
        let region = with_requirements(&inst.region, &[(LandUse::Hospital, 2.min(vacant))]);
        let pop = &inst.population;
        let (plan, trace) = gsca_plan_traced(&region, pop, &PlannerConfig::default()).unwrap();
        assert!(validate_plan(&region, &plan).ok);
        let mut chosen = Vec::new();
        let mut covered = 0;
        for pick in trace.iter().filter(|p| !p.slack) {
            chosen.push(pick.area_id);
            let now = reference::coverage(&region, pop, &chosen, 500.0);
            assert_eq!(pick.gain, Some((now - covered) as u32), "instance {seed}");
            covered = now;
        }
    }
}

#[test]
fn gsca_ignores_the_seed() {
    let region = load_fixture("hlg_like.geojson");
    let pop = population(&region, 300, 1);
    let a = run_planner(PlannerKind::Gsca, &region, Some(&pop), &PlannerConfig::default().with_seed(1), None);
    let b = run_planner(PlannerKind::Gsca, &region, Some(&pop), &PlannerConfig::default().with_seed(99), None);
    assert_eq!(a.unwrap(), b.unwrap());
}

#[test]
fn local_search_improves_on_its_start() {
    let region = load_fixture("hlg_like.geojson");
    let pop = population(&region, 300, 1);
    let cfg = PlannerConfig {
        search: SearchConfig {
            max_iters: 1500,
            restarts: 2,
            ..SearchConfig::default()
        },
        ..PlannerConfig::default()
    }
    .with_seed(8);
    let report = local_search_report(&region, &pop, &cfg).unwrap();
    assert!(validate_plan(&region, &report.plan).ok);
    assert!(report.objective >= report.initial_objective);
    let recomputed = objective(&region, &report.plan, &pop, &cfg).unwrap();
    assert!((recomputed - report.objective).abs() < 1e-9, "{recomputed} vs {}", report.objective);
}

#[test]
fn local_search_without_iterations_returns_the_seed_plan() {
    let region = load_fixture("grid16.geojson");
    let pop = population(&region, 40, 2);
    let cfg = PlannerConfig {
        search: SearchConfig {
            max_iters: 0,
            ..SearchConfig::default()
        },
        ..PlannerConfig::default()
    }
    .with_seed(6);
    let report = local_search_report(&region, &pop, &cfg).unwrap();
    assert_eq!(report.plan, random_plan(&region, &cfg).unwrap());
}

#[test]
fn llm_planner_repairs_once_then_fails() {
    let region = load_fixture("grid16.geojson");
    let good = random_plan(&region, &PlannerConfig::default().with_seed(1)).unwrap();
    let short: Plan = good.iter().skip(1).collect();
    let cfg = PlannerConfig::default();

    let backend = ScriptedBackend::from_replies([render_plan_json(&short), render_plan_json(&good)]);
    let plan = run_planner(PlannerKind::Llm, &region, None, &cfg, Some(&backend)).unwrap();
    assert_eq!(plan, good);

    let backend = ScriptedBackend::from_replies([render_plan_json(&short), "no json here".to_string()]);
    let err = run_planner(PlannerKind::Llm, &region, None, &cfg, Some(&backend)).unwrap_err();
    assert!(matches!(err, PlannerError::BadReply(_)), "{err}");
}
