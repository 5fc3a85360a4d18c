//! Synthetic regions and demographics for tests, benchmarks and demos.
//!
//! Regions are jittered grids in a projected metric frame: shared grid
//! vertices are displaced at random so neighboring areas still tile the
//! plane, and the grid is cut into rectangular blocks of communities.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::population::{Categorical, DemographicSpec, ProfileConstraint};
use crate::region::{Area, Community, LandUse, Point, Polygon, Region, RegionError};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub name: String,
    pub cols: u32,
    pub rows: u32,
    pub cell_m: f64,
    /// Maximum vertex displacement as a fraction of `cell_m` (below 0.25
    /// keeps every cell simple).
    pub jitter: f64,
    pub origin: Point,
    pub n_vacant: u32,
    pub n_green_fixed: u32,
    /// Communities per axis (columns, rows of blocks).
    pub community_blocks: (u32, u32),
    pub requirements: BTreeMap<LandUse, u32>,
}

fn requirements(counts: [u32; 8]) -> BTreeMap<LandUse, u32> {
    LandUse::ASSIGNABLE.iter().copied().zip(counts).collect()
}

impl GridSpec {
    /// 63 areas, 42 vacant, four communities.
    pub fn hlg_like() -> Self {
        Self {
            name: "hlg-like".into(),
            cols: 9,
            rows: 7,
            cell_m: 260.0,
            jitter: 0.18,
            origin: Point::new(441_000.0, 4_432_000.0),
            n_vacant: 42,
            n_green_fixed: 2,
            community_blocks: (2, 2),
            requirements: requirements([6, 2, 4, 4, 6, 6, 2, 4]),
        }
    }

    /// 70 areas, 42 vacant, four communities.
    pub fn dhm_like() -> Self {
        Self {
            name: "dhm-like".into(),
            cols: 10,
            rows: 7,
            cell_m: 240.0,
            jitter: 0.18,
            origin: Point::new(452_000.0, 4_418_000.0),
            n_vacant: 42,
            n_green_fixed: 3,
            community_blocks: (2, 2),
            requirements: requirements([7, 1, 4, 4, 2, 6, 2, 6]),
        }
    }

    /// 4×4 unjittered grid with two communities and one of each type.
    pub fn grid16() -> Self {
        Self {
            name: "grid16".into(),
            cols: 4,
            rows: 4,
            cell_m: 200.0,
            jitter: 0.0,
            origin: Point::new(500_000.0, 4_400_000.0),
            n_vacant: 10,
            n_green_fixed: 0,
            community_blocks: (2, 1),
            requirements: requirements([1; 8]),
        }
    }
}

/// Builds a jittered-grid region. Fixed cells are drawn at random; draws
/// leaving a community without a residential area are retried.
pub fn grid_region(spec: &GridSpec, seed: u64) -> Result<Region, RegionError> {
    let n = spec.cols * spec.rows;
    if spec.n_vacant + spec.n_green_fixed >= n {
        return Err(RegionError::Invariant("grid leaves no residential cell".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = (spec.cols as usize + 1, spec.rows as usize + 1);
    let amp = spec.jitter * spec.cell_m;
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mut dx = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
            let mut dy = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
            // Outer vertices slide only along the outline; corners stay put.
            if i == 0 || i == nx - 1 {
                dx = 0.0;
            }
            if j == 0 || j == ny - 1 {
                dy = 0.0;
            }
            vertices.push(Point::new(
                spec.origin.x + i as f64 * spec.cell_m + dx,
                spec.origin.y + j as f64 * spec.cell_m + dy,
            ));
        }
    }
    let v = |i: usize, j: usize| vertices[j * nx + i];
    let (bx, by) = spec.community_blocks;
    let community_of = |i: u32, j: u32| (j * by / spec.rows) * bx + (i * bx / spec.cols) + 1;

    let cells: Vec<(u32, u32)> = (0..spec.rows).flat_map(|j| (0..spec.cols).map(move |i| (i, j))).collect();
    let mut kinds: Vec<Option<LandUse>> = (0..n)
        .map(|k| match k {
            k if k < spec.n_vacant => None,
            k if k < spec.n_vacant + spec.n_green_fixed => Some(LandUse::GreenFixed),
            _ => Some(LandUse::Residential),
        })
        .collect();
    let n_communities = bx * by;
    for _ in 0..1000 {
        kinds.shuffle(&mut rng);
        let mut has_home = vec![false; n_communities as usize];
        for (k, &(i, j)) in cells.iter().enumerate() {
            if kinds[k] == Some(LandUse::Residential) {
                has_home[community_of(i, j) as usize - 1] = true;
            }
        }
        if has_home.iter().all(|&h| h) {
            break;
        }
    }
    let areas = cells
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let (i, j) = (i as usize, j as usize);
            let ring = Polygon::new(vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
            Area::new(k as u32 + 1, ring, kinds[k], community_of(i as u32, j as u32))
        })
        .collect();
    let communities = (1..=n_communities)
        .map(|id| Community {
            id,
            name: format!("Community {id}"),
        })
        .collect();
    Region::new(
        &spec.name,
        areas,
        spec.requirements.clone(),
        communities,
        "synthetic projected frame, meters",
    )
}

fn dist(pairs: &[(&str, f64)]) -> Categorical {
    pairs.iter().map(|&(k, p)| (k.to_string(), p)).collect()
}

fn labels(v: &[&str]) -> Option<Vec<String>> {
    Some(v.iter().map(|s| s.to_string()).collect())
}

/// A made-up but plausible urban demographic mix with the six special
/// backgrounds at 10/10/50/50/50/50.
pub fn demographics(n_agents: u32) -> DemographicSpec {
    let quotas: IndexMap<String, u32> = [
        ("elderly living alone", 10),
        ("family with a sick person", 10),
        ("parenting family", 50),
        ("family with school-age children", 50),
        ("Beijing drifter", 50),
        ("office worker", 50),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let c = |age: &[&str], fam: &[&str], edu: &[&str]| ProfileConstraint {
        gender: None,
        age: (!age.is_empty()).then(|| labels(age)).flatten(),
        education: (!edu.is_empty()).then(|| labels(edu)).flatten(),
        family_size: (!fam.is_empty()).then(|| labels(fam)).flatten(),
    };
    let constraints: IndexMap<String, ProfileConstraint> = [
        ("elderly living alone", c(&["65+"], &["1"], &[])),
        ("family with a sick person", c(&[], &["2", "3", "4", "5+"], &[])),
        ("parenting family", c(&["25-34", "35-44"], &["3", "4", "5+"], &[])),
        ("family with school-age children", c(&["35-44", "45-54"], &["3", "4", "5+"], &[])),
        ("Beijing drifter", c(&["18-24", "25-34", "35-44"], &[], &[])),
        ("office worker", c(&["25-34", "35-44", "45-54"], &[], &["secondary", "college", "graduate"])),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    DemographicSpec {
        label: "synthetic".into(),
        n_agents,
        gender: dist(&[("male", 0.49), ("female", 0.51)]),
        age: dist(&[
            ("18-24", 0.08),
            ("25-34", 0.20),
            ("35-44", 0.20),
            ("45-54", 0.17),
            ("55-64", 0.15),
            ("65+", 0.20),
        ]),
        education: dist(&[
            ("primary or below", 0.15),
            ("secondary", 0.35),
            ("college", 0.35),
            ("graduate", 0.15),
        ]),
        family_size: dist(&[("1", 0.18), ("2", 0.32), ("3", 0.30), ("4", 0.12), ("5+", 0.08)]),
        marginalized_quotas: quotas,
        background_constraints: constraints,
        needs_rules: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::synthesize;

    #[test]
    fn fixture_shapes() {
        for (spec, n, vacant) in [(GridSpec::hlg_like(), 63, 42), (GridSpec::dhm_like(), 70, 42), (GridSpec::grid16(), 16, 10)] {
            let r = grid_region(&spec, 1).unwrap();
            assert_eq!(r.areas().len(), n);
            assert_eq!(r.vacant_areas().count(), vacant);
            assert!(r.areas().iter().all(|a| a.boundary.is_simple() && a.boundary.area() > 0.0));
        }
    }

    #[test]
    fn cells_tile_the_grid() {
        let spec = GridSpec::hlg_like();
        let r = grid_region(&spec, 3).unwrap();
        let total: f64 = r.areas().iter().map(|a| a.boundary.area()).sum();
        let expected = spec.cols as f64 * spec.rows as f64 * spec.cell_m * spec.cell_m;
        assert!((total - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn demographics_validate_and_synthesize() {
        let spec = demographics(1000);
        spec.validate().unwrap();
        let region = grid_region(&GridSpec::dhm_like(), 2).unwrap();
        let pop = synthesize(&spec, &region, 7).unwrap();
        assert_eq!(pop.marginalized().count(), 220);
    }
}
