//! Areas, land-use vocabulary, communities and plan validation.

mod geometry;
mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{point_segment_distance, Direction, Point, Polygon};
pub use io::{load_plan, load_region, parse_region, region_to_geojson, save_plan, save_region, PlanDocument};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no area of type {0} exists under this plan")]
    NotPresent(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Land-use vocabulary. `Residential` and `GreenFixed` only appear as fixed
/// uses; the other eight are assignable to vacant areas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUse {
    Residential,
    GreenFixed,
    School,
    Hospital,
    Clinic,
    Business,
    Office,
    Recreation,
    Park,
    OpenSpace,
}

impl LandUse {
    pub const ALL: [LandUse; 10] = [
        LandUse::Residential,
        LandUse::GreenFixed,
        LandUse::School,
        LandUse::Hospital,
        LandUse::Clinic,
        LandUse::Business,
        LandUse::Office,
        LandUse::Recreation,
        LandUse::Park,
        LandUse::OpenSpace,
    ];

    pub const ASSIGNABLE: [LandUse; 8] = [
        LandUse::School,
        LandUse::Hospital,
        LandUse::Clinic,
        LandUse::Business,
        LandUse::Office,
        LandUse::Recreation,
        LandUse::Park,
        LandUse::OpenSpace,
    ];

    pub fn is_assignable(self) -> bool {
        !matches!(self, LandUse::Residential | LandUse::GreenFixed)
    }

    /// Dense index into [`LandUse::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LandUse::Residential => "residential",
            LandUse::GreenFixed => "green_fixed",
            LandUse::School => "school",
            LandUse::Hospital => "hospital",
            LandUse::Clinic => "clinic",
            LandUse::Business => "business",
            LandUse::Office => "office",
            LandUse::Recreation => "recreation",
            LandUse::Park => "park",
            LandUse::OpenSpace => "open_space",
        }
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown land-use type {0:?}")]
pub struct UnknownLandUse(pub String);

impl FromStr for LandUse {
    type Err = UnknownLandUse;

    /// Accepts the canonical snake_case names plus the common spellings a
    /// language model produces ("Open Space", "business area", "parks").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '`')
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        let norm = norm
            .strip_suffix("_area")
            .or_else(|| norm.strip_suffix("_areas"))
            .unwrap_or(&norm);
        let use_ = match norm {
            "residential" => LandUse::Residential,
            "green_fixed" | "green" | "green_land" => LandUse::GreenFixed,
            "school" | "schools" | "education" => LandUse::School,
            "hospital" | "hospitals" => LandUse::Hospital,
            "clinic" | "clinics" => LandUse::Clinic,
            "business" | "businesses" | "commercial" | "shopping" => LandUse::Business,
            "office" | "offices" => LandUse::Office,
            "recreation" | "recreational" => LandUse::Recreation,
            "park" | "parks" => LandUse::Park,
            "open_space" | "open_spaces" | "openspace" => LandUse::OpenSpace,
            _ => return Err(UnknownLandUse(s.trim().to_string())),
        };
        Ok(use_)
    }
}

/// How a home-to-area distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Distance to the nearest point of the polygon, zero inside.
    #[default]
    Boundary,
    /// Distance to the area centroid.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub id: u32,
    pub boundary: Polygon,
    pub centroid: Point,
    pub fixed_use: Option<LandUse>,
    pub community_id: u32,
}

impl Area {
    pub fn new(id: u32, boundary: Polygon, fixed_use: Option<LandUse>, community_id: u32) -> Self {
        let centroid = boundary.centroid();
        Self {
            id,
            boundary,
            centroid,
            fixed_use,
            community_id,
        }
    }

    pub fn is_vacant(&self) -> bool {
        self.fixed_use.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: u32,
    pub name: String,
}

/// An immutable partitioned region. Area ids are dense and 1-based:
/// `areas[i].id == i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    name: String,
    areas: Vec<Area>,
    requirements: BTreeMap<LandUse, u32>,
    communities: Vec<Community>,
    crs_note: String,
    distance_mode: DistanceMode,
}

impl Region {
    /// Validates every region invariant. Areas may be given in any order.
    pub fn new(
        name: impl Into<String>,
        mut areas: Vec<Area>,
        requirements: BTreeMap<LandUse, u32>,
        communities: Vec<Community>,
        crs_note: impl Into<String>,
    ) -> Result<Self, RegionError> {
        areas.sort_by_key(|a| a.id);
        for (i, area) in areas.iter().enumerate() {
            if i > 0 && areas[i - 1].id == area.id {
                return Err(RegionError::Invariant(format!("duplicate area id {}", area.id)));
            }
            if area.id as usize != i + 1 {
                return Err(RegionError::Invariant(format!(
                    "area ids must be dense and start at 1; found id {} at position {}",
                    area.id,
                    i + 1
                )));
            }
            let n = area.boundary.vertices().len();
            if n < 3 {
                return Err(RegionError::Invariant(format!(
                    "area {}: polygon has {n} vertices, need at least 3",
                    area.id
                )));
            }
            if !(area.boundary.area() > 0.0) {
                return Err(RegionError::Invariant(format!(
                    "area {}: polygon has zero area",
                    area.id
                )));
            }
            if !area.boundary.is_simple() {
                return Err(RegionError::Invariant(format!(
                    "area {}: polygon is self-intersecting",
                    area.id
                )));
            }
            if let Some(u) = area.fixed_use {
                if u.is_assignable() {
                    return Err(RegionError::Invariant(format!(
                        "area {}: fixed_use must be residential or green_fixed, got {u}",
                        area.id
                    )));
                }
            }
            if !communities.iter().any(|c| c.id == area.community_id) {
                return Err(RegionError::Invariant(format!(
                    "area {}: unknown community_id {}",
                    area.id, area.community_id
                )));
            }
        }
        for u in LandUse::ASSIGNABLE {
            if !requirements.contains_key(&u) {
                return Err(RegionError::Invariant(format!("requirements missing entry for {u}")));
            }
        }
        if let Some(u) = requirements.keys().find(|u| !u.is_assignable()) {
            return Err(RegionError::Invariant(format!(
                "requirements may only name assignable types, got {u}"
            )));
        }
        let vacant = areas.iter().filter(|a| a.is_vacant()).count() as u64;
        let required: u64 = requirements.values().map(|&v| v as u64).sum();
        if required > vacant {
            return Err(RegionError::Invariant(format!(
                "infeasible requirements: {required} areas required but only {vacant} vacant"
            )));
        }
        if !areas.iter().any(|a| a.fixed_use == Some(LandUse::Residential)) {
            return Err(RegionError::Invariant("region has no residential area".into()));
        }
        let mut communities = communities;
        communities.sort_by_key(|c| c.id);
        communities.dedup_by_key(|c| c.id);
        Ok(Self {
            name: name.into(),
            areas,
            requirements,
            communities,
            crs_note: crs_note.into(),
            distance_mode: DistanceMode::Boundary,
        })
    }

    pub fn with_distance_mode(mut self, mode: DistanceMode) -> Self {
        self.distance_mode = mode;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    pub fn area(&self, id: u32) -> Option<&Area> {
        id.checked_sub(1).and_then(|i| self.areas.get(i as usize))
    }

    pub fn requirements(&self) -> &BTreeMap<LandUse, u32> {
        &self.requirements
    }

    pub fn requirement(&self, use_: LandUse) -> u32 {
        self.requirements.get(&use_).copied().unwrap_or(0)
    }

    pub fn communities(&self) -> &[Community] {
        &self.communities
    }

    pub fn crs_note(&self) -> &str {
        &self.crs_note
    }

    pub fn distance_mode(&self) -> DistanceMode {
        self.distance_mode
    }

    pub fn vacant_areas(&self) -> impl Iterator<Item = &Area> {
        self.areas.iter().filter(|a| a.is_vacant())
    }

    pub fn vacant_ids(&self) -> Vec<u32> {
        self.vacant_areas().map(|a| a.id).collect()
    }

    pub fn residential_areas(&self) -> impl Iterator<Item = &Area> {
        self.areas
            .iter()
            .filter(|a| a.fixed_use == Some(LandUse::Residential))
    }

    pub fn community_areas(&self, community_id: u32) -> impl Iterator<Item = &Area> {
        self.areas
            .iter()
            .filter(move |a| a.community_id == community_id)
    }

    /// The land use of an area under `plan`: its fixed use, or the planned use.
    pub fn use_of(&self, area: &Area, plan: &Plan) -> Option<LandUse> {
        area.fixed_use.or_else(|| plan.get(area.id))
    }

    /// Distance from `point` to `area` under the region's distance mode.
    pub fn distance(&self, point: Point, area: &Area) -> f64 {
        match self.distance_mode {
            DistanceMode::Boundary => min_distance(point, area),
            DistanceMode::Centroid => point.distance(area.centroid),
        }
    }

    /// Rigidly translated copy, used for invariance checks.
    pub fn translated(&self, dx: f64, dy: f64) -> Region {
        let mut out = self.clone();
        for a in &mut out.areas {
            a.boundary = a.boundary.translate(dx, dy);
            a.centroid = a.boundary.centroid();
        }
        out
    }
}

/// Assignment of an assignable land use to every vacant area.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Plan {
    assignment: BTreeMap<u32, LandUse>,
}

impl Plan {
    pub fn new(assignment: BTreeMap<u32, LandUse>) -> Self {
        Self { assignment }
    }

    pub fn get(&self, area_id: u32) -> Option<LandUse> {
        self.assignment.get(&area_id).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<u32, LandUse> {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, LandUse)> + '_ {
        self.assignment.iter().map(|(&k, &v)| (k, v))
    }

    /// Returns a new plan with `area_id` reassigned.
    pub fn with(&self, area_id: u32, use_: LandUse) -> Plan {
        let mut out = self.clone();
        out.assignment.insert(area_id, use_);
        out
    }

    pub(crate) fn set(&mut self, area_id: u32, use_: LandUse) {
        self.assignment.insert(area_id, use_);
    }

    pub fn count(&self, use_: LandUse) -> u32 {
        self.assignment.values().filter(|&&u| u == use_).count() as u32
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(&self.assignment).expect("plan serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Area ids whose use differs between the two plans.
    pub fn diff(&self, other: &Plan) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .assignment
            .keys()
            .chain(other.assignment.keys())
            .copied()
            .filter(|id| self.get(*id) != other.get(*id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

impl FromIterator<(u32, LandUse)> for Plan {
    fn from_iter<I: IntoIterator<Item = (u32, LandUse)>>(iter: I) -> Self {
        Plan {
            assignment: iter.into_iter().collect(),
        }
    }
}

/// Euclidean distance from a point to the area polygon (0 inside or on it).
pub fn min_distance(point: Point, area: &Area) -> f64 {
    area.boundary.distance_to(point)
}

/// Closest area whose (fixed or planned) use is in `types`; ties go to the
/// lower area id.
pub fn nearest_of_types(
    home: Point,
    region: &Region,
    plan: &Plan,
    types: &[LandUse],
) -> Result<(u32, f64), RegionError> {
    let mut best: Option<(u32, f64)> = None;
    for area in region.areas() {
        let Some(u) = region.use_of(area, plan) else {
            continue;
        };
        if !types.contains(&u) {
            continue;
        }
        let d = region.distance(home, area);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((area.id, d));
        }
    }
    best.ok_or_else(|| {
        RegionError::NotPresent(
            types
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join("|"),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub area_id: u32,
    /// `None` only for a vacant area the plan leaves unassigned.
    pub land_use: Option<LandUse>,
    pub distance_m: f64,
    pub direction: Direction,
    pub vacant: bool,
    pub community_id: u32,
}

/// What a resident observes around their home.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborhoodView {
    pub radius_m: f64,
    pub entries: Vec<NeighborEntry>,
}

impl NeighborhoodView {
    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.area_id).collect()
    }

    pub fn contains(&self, area_id: u32) -> bool {
        self.entries.iter().any(|e| e.area_id == area_id)
    }
}

/// Every area within `radius` of `home`, sorted by distance then id.
pub fn neighborhood(home: Point, region: &Region, plan: &Plan, radius: f64) -> NeighborhoodView {
    let mut entries: Vec<NeighborEntry> = region
        .areas()
        .iter()
        .filter_map(|area| {
            let d = region.distance(home, area);
            (d <= radius).then(|| NeighborEntry {
                area_id: area.id,
                land_use: region.use_of(area, plan),
                distance_m: d,
                direction: Direction::from_to(home, area.centroid),
                vacant: area.is_vacant(),
                community_id: area.community_id,
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then(a.area_id.cmp(&b.area_id))
    });
    NeighborhoodView {
        radius_m: radius,
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeCount {
    pub land_use: LandUse,
    pub assigned: u32,
    pub required: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub counts: Vec<TypeCount>,
    /// Types whose count falls short, with the shortfall.
    pub deficits: BTreeMap<LandUse, u32>,
    /// Vacant areas the plan leaves unassigned.
    pub missing_areas: Vec<u32>,
    /// Plan entries that are not vacant areas of the region.
    pub unexpected_areas: Vec<u32>,
    /// Plan entries carrying a non-assignable use.
    pub non_assignable: Vec<u32>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("plan is valid");
        }
        let mut parts = Vec::new();
        for (u, d) in &self.deficits {
            parts.push(format!("{u} short by {d}"));
        }
        if !self.missing_areas.is_empty() {
            parts.push(format!("unassigned vacant areas {:?}", self.missing_areas));
        }
        if !self.unexpected_areas.is_empty() {
            parts.push(format!("non-vacant or unknown areas {:?}", self.unexpected_areas));
        }
        if !self.non_assignable.is_empty() {
            parts.push(format!("non-assignable uses on {:?}", self.non_assignable));
        }
        write!(f, "invalid plan: {}", parts.join("; "))
    }
}

pub fn validate_plan(region: &Region, plan: &Plan) -> ValidationReport {
    let missing_areas: Vec<u32> = region
        .vacant_areas()
        .filter(|a| plan.get(a.id).is_none())
        .map(|a| a.id)
        .collect();
    let unexpected_areas: Vec<u32> = plan
        .iter()
        .filter(|(id, _)| region.area(*id).is_none_or(|a| !a.is_vacant()))
        .map(|(id, _)| id)
        .collect();
    let non_assignable: Vec<u32> = plan
        .iter()
        .filter(|(_, u)| !u.is_assignable())
        .map(|(id, _)| id)
        .collect();
    let counts: Vec<TypeCount> = LandUse::ASSIGNABLE
        .iter()
        .map(|&u| TypeCount {
            land_use: u,
            assigned: plan
                .iter()
                .filter(|(id, v)| *v == u && region.area(*id).is_some_and(|a| a.is_vacant()))
                .count() as u32,
            required: region.requirement(u),
        })
        .collect();
    let deficits: BTreeMap<LandUse, u32> = counts
        .iter()
        .filter(|c| c.assigned < c.required)
        .map(|c| (c.land_use, c.required - c.assigned))
        .collect();
    let ok = deficits.is_empty()
        && missing_areas.is_empty()
        && unexpected_areas.is_empty()
        && non_assignable.is_empty();
    ValidationReport {
        ok,
        counts,
        deficits,
        missing_areas,
        unexpected_areas,
        non_assignable,
    }
}
