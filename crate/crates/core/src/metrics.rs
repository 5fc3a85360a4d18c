//! Service, Ecology, Satisfaction and Inclusion.
//!
//! Accessibility is strict: an area at exactly `service_radius_m` is not
//! reachable. ESR membership is a closed buffer: a home at exactly
//! `esr_radius_m` from a green area is inside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{Population, Resident};
use crate::region::{LandUse, Plan, Point, Region};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("resident {0} has no elicited needs")]
    NeedsMissing(u32),
    #[error("population has no marginalized residents")]
    NoMarginalized,
    #[error("invalid service categories: {0}")]
    InvalidCategories(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCategory {
    pub label: String,
    pub types: Vec<LandUse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCategories(pub Vec<ServiceCategory>);

impl Default for ServiceCategories {
    /// Education, medical care, working, shopping and entertainment.
    fn default() -> Self {
        let cat = |label: &str, types: &[LandUse]| ServiceCategory {
            label: label.into(),
            types: types.to_vec(),
        };
        Self(vec![
            cat("education", &[LandUse::School]),
            cat("medical", &[LandUse::Hospital, LandUse::Clinic]),
            cat("working", &[LandUse::Office]),
            cat("shopping", &[LandUse::Business]),
            cat("entertainment", &[LandUse::Recreation]),
        ])
    }
}

impl ServiceCategories {
    /// One category per assignable type.
    pub fn per_type() -> Self {
        Self(
            LandUse::ASSIGNABLE
                .iter()
                .map(|&u| ServiceCategory {
                    label: u.name().into(),
                    types: vec![u],
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.0.is_empty() {
            return Err(MetricsError::InvalidCategories("no categories".into()));
        }
        for c in &self.0 {
            if c.types.is_empty() {
                return Err(MetricsError::InvalidCategories(format!("{} has no types", c.label)));
            }
            if let Some(u) = c.types.iter().find(|u| !u.is_assignable()) {
                return Err(MetricsError::InvalidCategories(format!("{} lists {u}", c.label)));
            }
        }
        Ok(())
    }

    /// Indices of the categories containing each land use.
    pub(crate) fn index_by_use(&self) -> [Vec<usize>; 10] {
        let mut out: [Vec<usize>; 10] = Default::default();
        for (i, c) in self.0.iter().enumerate() {
            for u in &c.types {
                if !out[u.index()].contains(&i) {
                    out[u.index()].push(i);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub service_radius_m: f64,
    pub esr_radius_m: f64,
    /// Pre-existing green land counts toward the ESR.
    pub green_fixed_in_esr: bool,
    pub categories: ServiceCategories,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            service_radius_m: 500.0,
            esr_radius_m: 300.0,
            green_fixed_in_esr: true,
            categories: ServiceCategories::default(),
        }
    }
}

impl MetricsConfig {
    pub fn is_green(&self, u: LandUse) -> bool {
        matches!(u, LandUse::Park | LandUse::OpenSpace) || (self.green_fixed_in_esr && u == LandUse::GreenFixed)
    }
}

/// Nearest distance from `home` to an area of each land use, indexed by
/// [`LandUse::index`]; `+inf` where the type is absent.
pub fn nearest_by_type(home: Point, region: &Region, plan: &Plan) -> [f64; 10] {
    let mut best = [f64::INFINITY; 10];
    for area in region.areas() {
        if let Some(u) = region.use_of(area, plan) {
            let d = region.distance(home, area);
            let slot = &mut best[u.index()];
            if d < *slot {
                *slot = d;
            }
        }
    }
    best
}

pub(crate) fn service_share(nearest: &[f64; 10], cfg: &MetricsConfig) -> f64 {
    let reached = cfg
        .categories
        .0
        .iter()
        .filter(|c| c.types.iter().any(|u| nearest[u.index()] < cfg.service_radius_m))
        .count();
    reached as f64 / cfg.categories.len() as f64
}

pub(crate) fn in_esr(nearest: &[f64; 10], cfg: &MetricsConfig) -> bool {
    LandUse::ALL
        .iter()
        .any(|&u| cfg.is_green(u) && nearest[u.index()] <= cfg.esr_radius_m)
}

/// S_m: fraction of the resident's needs reachable within `radius`.
pub(crate) fn need_share(nearest: &[f64; 10], needs: &[LandUse], radius: f64) -> f64 {
    let met = needs.iter().filter(|u| nearest[u.index()] < radius).count();
    met as f64 / needs.len() as f64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn check_needs<'a>(residents: impl Iterator<Item = &'a Resident>) -> Result<(), MetricsError> {
    for r in residents {
        if r.needs.is_empty() {
            return Err(MetricsError::NeedsMissing(r.id));
        }
    }
    Ok(())
}

pub fn service(region: &Region, plan: &Plan, population: &Population, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    cfg.categories.validate()?;
    mean(
        population
            .residents
            .iter()
            .map(|r| service_share(&nearest_by_type(r.home, region, plan), cfg)),
    )
    .ok_or(MetricsError::EmptyPopulation)
}

pub fn ecology(region: &Region, plan: &Plan, population: &Population, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    mean(
        population
            .residents
            .iter()
            .map(|r| f64::from(u8::from(in_esr(&nearest_by_type(r.home, region, plan), cfg)))),
    )
    .ok_or(MetricsError::EmptyPopulation)
}

pub fn satisfaction(region: &Region, plan: &Plan, population: &Population, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    check_needs(population.residents.iter())?;
    mean(population.residents.iter().map(|r| {
        need_share(&nearest_by_type(r.home, region, plan), &r.needs, cfg.service_radius_m)
    }))
    .ok_or(MetricsError::EmptyPopulation)
}

pub fn inclusion(region: &Region, plan: &Plan, population: &Population, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    check_needs(population.marginalized())?;
    mean(population.marginalized().map(|r| {
        need_share(&nearest_by_type(r.home, region, plan), &r.needs, cfg.service_radius_m)
    }))
    .ok_or(MetricsError::NoMarginalized)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidentMetrics {
    pub resident_id: u32,
    pub service_share: f64,
    pub in_esr: bool,
    pub satisfaction: f64,
    pub is_marginalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub service: f64,
    pub ecology: f64,
    pub satisfaction: f64,
    /// Absent when the population has no marginalized residents.
    pub inclusion: Option<f64>,
    pub service_radius_m: f64,
    pub esr_radius_m: f64,
    pub per_resident: Vec<ResidentMetrics>,
}

pub const CSV_HEADER: &str = "run_id,seed,method,service,ecology,satisfaction,inclusion";

impl MetricsReport {
    pub fn csv_row(&self, run_id: &str, seed: &str, method: &str) -> String {
        format!(
            "{run_id},{seed},{method},{},{},{},{}",
            self.service,
            self.ecology,
            self.satisfaction,
            self.inclusion.map(|v| v.to_string()).unwrap_or_default()
        )
    }

    /// The four aggregates in table order.
    pub fn values(&self) -> [Option<f64>; 4] {
        [Some(self.service), Some(self.ecology), Some(self.satisfaction), self.inclusion]
    }
}

/// All four metrics plus per-resident detail, summed in resident-id order.
pub fn report(region: &Region, plan: &Plan, population: &Population, cfg: &MetricsConfig) -> Result<MetricsReport, MetricsError> {
    cfg.categories.validate()?;
    check_needs(population.residents.iter())?;
    if population.is_empty() {
        return Err(MetricsError::EmptyPopulation);
    }
    let per_resident: Vec<ResidentMetrics> = population
        .residents
        .iter()
        .map(|r| {
            let nearest = nearest_by_type(r.home, region, plan);
            ResidentMetrics {
                resident_id: r.id,
                service_share: service_share(&nearest, cfg),
                in_esr: in_esr(&nearest, cfg),
                satisfaction: need_share(&nearest, &r.needs, cfg.service_radius_m),
                is_marginalized: r.is_marginalized,
            }
        })
        .collect();
    let col = |f: fn(&ResidentMetrics) -> f64| mean(per_resident.iter().map(f)).expect("non-empty");
    Ok(MetricsReport {
        service: col(|m| m.service_share),
        ecology: col(|m| f64::from(u8::from(m.in_esr))),
        satisfaction: col(|m| m.satisfaction),
        inclusion: mean(per_resident.iter().filter(|m| m.is_marginalized).map(|m| m.satisfaction)),
        service_radius_m: cfg.service_radius_m,
        esr_radius_m: cfg.esr_radius_m,
        per_resident,
    })
}
