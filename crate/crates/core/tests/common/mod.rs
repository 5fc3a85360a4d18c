//! Shared test support: fixture loading, random instances, and a
//! brute-force metric reference with its own geometry.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use parplan::llm::RuleBackend;
use parplan::population::{synthesize, NeedsRuleTable, Population, Profile, Resident};
use parplan::region::{load_region, Area, Community, LandUse, Plan, Point, Polygon, Region};
use parplan::synth::demographics;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str) -> Region {
    load_region(fixture(name)).expect("fixture loads")
}

/// Synthesized residents with rule-elicited needs.
pub fn population(region: &Region, n: u32, seed: u64) -> Population {
    let mut spec = demographics(n);
    if spec.marginalized_total() > n as u64 {
        for q in spec.marginalized_quotas.values_mut() {
            *q = (*q * n / 1000).max(1);
        }
    }
    let mut pop = synthesize(&spec, region, seed).expect("population synthesizes");
    pop.elicit_needs(&RuleBackend::new(NeedsRuleTable::default())).expect("needs elicit");
    pop
}

pub fn resident(id: u32, home: Point, needs: &[LandUse], marginalized: bool) -> Resident {
    Resident {
        id,
        profile: Profile {
            gender: "female".into(),
            age_band: "35-44".into(),
            education: "college".into(),
            family_size: "3".into(),
        },
        background: marginalized.then(|| "parenting family".into()),
        description: String::new(),
        home,
        home_area_id: 1,
        needs: needs.to_vec(),
        is_marginalized: marginalized,
    }
}

pub fn square(x: f64, y: f64, side: f64) -> Polygon {
    Polygon::new(vec![
        Point::new(x, y),
        Point::new(x + side, y),
        Point::new(x + side, y + side),
        Point::new(x, y + side),
    ])
}

pub fn requirements(pairs: &[(LandUse, u32)]) -> BTreeMap<LandUse, u32> {
    let mut req: BTreeMap<LandUse, u32> = LandUse::ASSIGNABLE.iter().map(|&u| (u, 0)).collect();
    req.extend(pairs.iter().copied());
    req
}

pub fn one_community() -> Vec<Community> {
    vec![Community {
        id: 1,
        name: "c".into(),
    }]
}

/// A random instance: star-shaped (often non-convex) areas scattered over a
/// 3 km square, a random assignment of every vacant area, and residents at
/// random points with random needs.
pub struct Instance {
    pub region: Region,
    pub plan: Plan,
    pub population: Population,
}

fn star(rng: &mut ChaCha8Rng, origin: Point) -> Polygon {
    // Jittered, evenly spaced angles keep every gap below a half turn, so
    // the polygon is star-shaped around `c` and therefore simple.
    let k = rng.random_range(3..=8);
    let step = std::f64::consts::TAU / k as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let c = Point::new(origin.x + rng.random_range(0.0..3000.0), origin.y + rng.random_range(0.0..3000.0));
    Polygon::new(
        (0..k)
            .map(|i| {
                let a = phase + step * (i as f64 + rng.random_range(0.0..0.8));
                let r = rng.random_range(40.0..260.0);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect(),
    )
}

pub fn random_instance(seed: u64, max_areas: usize, max_residents: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = Point::new(300_000.0, 4_000_000.0);
    let n_a = rng.random_range(3..=max_areas);
    let mut areas = Vec::with_capacity(n_a);
    for id in 1..=n_a as u32 {
        let fixed = match (id, rng.random_range(0..10)) {
            (1, _) => Some(LandUse::Residential),
            (_, 0..=2) => Some(LandUse::Residential),
            (_, 3) => Some(LandUse::GreenFixed),
            _ => None,
        };
        areas.push(Area::new(id, star(&mut rng, origin), fixed, 1));
    }
    let region = Region::new("random", areas, requirements(&[]), one_community(), "").expect("valid");
    let plan: Plan = region
        .vacant_ids()
        .into_iter()
        .map(|id| (id, LandUse::ASSIGNABLE[rng.random_range(0..8)]))
        .collect();
    let n_m = rng.random_range(1..=max_residents);
    let residents = (0..n_m as u32)
        .map(|id| {
            let mut types = LandUse::ASSIGNABLE.to_vec();
            types.shuffle(&mut rng);
            types.truncate(rng.random_range(3..=5));
            let home = Point::new(
                origin.x + rng.random_range(-200.0..3200.0),
                origin.y + rng.random_range(-200.0..3200.0),
            );
            resident(id, home, &types, rng.random_bool(0.3))
        })
        .collect();
    Instance {
        region,
        plan,
        population: Population { seed, residents },
    }
}

/// Independent reference implementation of the four metrics: its own
/// point-segment distance and even-odd containment, plain loops over every
/// (resident, area) pair.
pub mod reference {
    use super::*;

    fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (vx, vy) = (b.0 - a.0, b.1 - a.1);
        let (wx, wy) = (p.0 - a.0, p.1 - a.1);
        let len2 = vx * vx + vy * vy;
        let t = if len2 == 0.0 { 0.0 } else { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) };
        let (dx, dy) = (a.0 + t * vx - p.0, a.1 + t * vy - p.1);
        (dx * dx + dy * dy).sqrt()
    }

    fn inside(p: (f64, f64), ring: &[(f64, f64)]) -> bool {
        let mut c = false;
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.1 > p.1) != (b.1 > p.1) {
                let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x {
                    c = !c;
                }
            }
        }
        c
    }

    pub fn distance(p: Point, area: &Area) -> f64 {
        let ring: Vec<(f64, f64)> = area.boundary.vertices().iter().map(|v| (v.x, v.y)).collect();
        let p = (p.x, p.y);
        if inside(p, &ring) {
            return 0.0;
        }
        (0..ring.len())
            .map(|i| seg_dist(p, ring[i], ring[(i + 1) % ring.len()]))
            .fold(f64::INFINITY, f64::min)
    }

    fn use_of(area: &Area, plan: &Plan) -> Option<LandUse> {
        area.fixed_use.or_else(|| plan.get(area.id))
    }

    const CATEGORIES: [&[LandUse]; 5] = [
        &[LandUse::School],
        &[LandUse::Hospital, LandUse::Clinic],
        &[LandUse::Office],
        &[LandUse::Business],
        &[LandUse::Recreation],
    ];

    fn reaches(home: Point, region: &Region, plan: &Plan, types: &[LandUse], radius: f64) -> bool {
        region
            .areas()
            .iter()
            .any(|a| use_of(a, plan).is_some_and(|u| types.contains(&u)) && distance(home, a) < radius)
    }

    pub fn service(region: &Region, plan: &Plan, pop: &Population) -> f64 {
        let mut total = 0.0;
        for r in &pop.residents {
            let hits = CATEGORIES.iter().filter(|c| reaches(r.home, region, plan, c, 500.0)).count();
            total += hits as f64 / 5.0;
        }
        total / pop.residents.len() as f64
    }

    pub fn ecology(region: &Region, plan: &Plan, pop: &Population) -> f64 {
        let green = [LandUse::Park, LandUse::OpenSpace, LandUse::GreenFixed];
        let mut inside = 0usize;
        for r in &pop.residents {
            if region
                .areas()
                .iter()
                .any(|a| use_of(a, plan).is_some_and(|u| green.contains(&u)) && distance(r.home, a) <= 300.0)
            {
                inside += 1;
            }
        }
        inside as f64 / pop.residents.len() as f64
    }

    fn share(r: &Resident, region: &Region, plan: &Plan) -> f64 {
        let met = r.needs.iter().filter(|&&u| reaches(r.home, region, plan, &[u], 500.0)).count();
        met as f64 / r.needs.len() as f64
    }

    pub fn satisfaction(region: &Region, plan: &Plan, pop: &Population) -> f64 {
        let total: f64 = pop.residents.iter().map(|r| share(r, region, plan)).sum();
        total / pop.residents.len() as f64
    }

    pub fn inclusion(region: &Region, plan: &Plan, pop: &Population) -> Option<f64> {
        let v: Vec<f64> = pop
            .residents
            .iter()
            .filter(|r| r.is_marginalized)
            .map(|r| share(r, region, plan))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Number of residents within `radius` (strict) of at least one area in `set`.
    pub fn coverage(region: &Region, pop: &Population, set: &[u32], radius: f64) -> usize {
        pop.residents
            .iter()
            .filter(|r| set.iter().any(|&id| distance(r.home, region.area(id).unwrap()) < radius))
            .count()
    }
}
