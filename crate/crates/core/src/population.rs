//! Resident synthesis from demographic marginals, home placement,
//! marginalized backgrounds and needs elicitation.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{self, ChatBackend, LlmError};
use crate::region::{LandUse, Point, Region};

pub const MIN_NEEDS: usize = 3;
pub const MAX_NEEDS: usize = 5;
const MAX_HOME_ATTEMPTS: usize = 10_000;
const RULES_CONSULTED: usize = 2;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("invalid demographic spec: {0}")]
    Spec(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("resident {resident}: {message}")]
    Parse { resident: u32, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Categorical distribution, label to probability, in file order.
pub type Categorical = IndexMap<String, f64>;

/// Allowed attribute labels for residents with a given background.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileConstraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_size: Option<Vec<String>>,
}

/// Predicate over a profile. Empty predicate matches everyone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RulePredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(flatten)]
    pub profile: ProfileConstraint,
}

impl RulePredicate {
    pub fn matches(&self, profile: &Profile, background: Option<&str>) -> bool {
        fn within(allowed: &Option<Vec<String>>, v: &str) -> bool {
            allowed.as_ref().is_none_or(|a| a.iter().any(|x| x == v))
        }
        self.background
            .as_deref()
            .is_none_or(|b| background == Some(b))
            && within(&self.profile.gender, &profile.gender)
            && within(&self.profile.age, &profile.age_band)
            && within(&self.profile.education, &profile.education)
            && within(&self.profile.family_size, &profile.family_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedsRule {
    pub name: String,
    pub when: RulePredicate,
    pub prefer: IndexMap<LandUse, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedsRuleTable {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub default_ranking: Vec<LandUse>,
    /// What a resident without a profile asks for.
    pub generic_needs: Vec<LandUse>,
    pub rules: Vec<NeedsRule>,
}

impl Default for NeedsRuleTable {
    fn default() -> Self {
        serde_json::from_str(include_str!("../data/needs_rules.json"))
            .expect("bundled needs rule table parses")
    }
}

impl NeedsRuleTable {
    /// Offline elicitation: accumulate the weights of the first two
    /// matching rules, keep the five heaviest types, and pad to three from
    /// the default ranking.
    pub fn needs_for(&self, profile: &Profile, background: Option<&str>) -> Vec<LandUse> {
        let mut score: IndexMap<LandUse, f64> = IndexMap::new();
        for rule in self
            .rules
            .iter()
            .filter(|r| r.when.matches(profile, background))
            .take(RULES_CONSULTED)
        {
            for (&u, &w) in &rule.prefer {
                if u.is_assignable() && w > 0.0 {
                    *score.entry(u).or_insert(0.0) += w;
                }
            }
        }
        let mut ranked: Vec<(LandUse, f64)> = score.into_iter().collect();
        // Stable: equal scores keep first-mention order.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut needs: Vec<LandUse> = ranked.into_iter().map(|(u, _)| u).take(MAX_NEEDS).collect();
        for &u in &self.default_ranking {
            if needs.len() >= MIN_NEEDS {
                break;
            }
            if !needs.contains(&u) {
                needs.push(u);
            }
        }
        needs
    }

    fn validate(&self) -> Result<(), PopulationError> {
        let distinct: BTreeSet<_> = self.default_ranking.iter().filter(|u| u.is_assignable()).collect();
        if distinct.len() < MIN_NEEDS {
            return Err(PopulationError::Spec(
                "needs rule table: default_ranking must list at least 3 assignable types".into(),
            ));
        }
        let generic: BTreeSet<_> = self.generic_needs.iter().collect();
        if generic.len() < MIN_NEEDS
            || generic.len() > MAX_NEEDS
            || self.generic_needs.iter().any(|u| !u.is_assignable())
        {
            return Err(PopulationError::Spec(
                "needs rule table: generic_needs must hold 3-5 distinct assignable types".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSpec {
    #[serde(default)]
    pub label: String,
    pub n_agents: u32,
    pub gender: Categorical,
    pub age: Categorical,
    pub education: Categorical,
    pub family_size: Categorical,
    /// Background label to exact head count, filled in this order.
    #[serde(default)]
    pub marginalized_quotas: IndexMap<String, u32>,
    #[serde(default)]
    pub background_constraints: IndexMap<String, ProfileConstraint>,
    #[serde(default)]
    pub needs_rules: Option<NeedsRuleTable>,
}

impl DemographicSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PopulationError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PopulationError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let spec: DemographicSpec = serde_json::from_str(&text)
            .map_err(|e| PopulationError::Spec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn rules(&self) -> NeedsRuleTable {
        self.needs_rules.clone().unwrap_or_default()
    }

    pub fn marginalized_total(&self) -> u64 {
        self.marginalized_quotas.values().map(|&q| q as u64).sum()
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.n_agents == 0 {
            return Err(PopulationError::Spec("n_agents must be positive".into()));
        }
        for (name, dist) in self.distributions() {
            if dist.is_empty() {
                return Err(PopulationError::Spec(format!("{name} distribution is empty")));
            }
            if let Some((label, p)) = dist.iter().find(|(_, p)| !(**p >= 0.0)) {
                return Err(PopulationError::Spec(format!(
                    "{name}: probability of {label:?} is {p}"
                )));
            }
            let total: f64 = dist.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(PopulationError::Spec(format!(
                    "{name} distribution sums to {total}, expected 1"
                )));
            }
        }
        if self.marginalized_total() > self.n_agents as u64 {
            return Err(PopulationError::Spec(format!(
                "marginalized quotas total {} exceed n_agents {}",
                self.marginalized_total(),
                self.n_agents
            )));
        }
        for (bg, c) in &self.background_constraints {
            for ((name, dist), allowed) in self.distributions().into_iter().zip(c.fields()) {
                let Some(allowed) = allowed else { continue };
                let mass: f64 = allowed.iter().filter_map(|l| dist.get(l)).sum();
                if !(mass > 0.0) {
                    return Err(PopulationError::Spec(format!(
                        "background {bg:?}: allowed {name} labels {allowed:?} have zero probability"
                    )));
                }
            }
        }
        self.rules().validate()
    }

    fn distributions(&self) -> [(&'static str, &Categorical); 4] {
        [
            ("gender", &self.gender),
            ("age", &self.age),
            ("education", &self.education),
            ("family_size", &self.family_size),
        ]
    }
}

impl ProfileConstraint {
    fn fields(&self) -> [&Option<Vec<String>>; 4] {
        [&self.gender, &self.age, &self.education, &self.family_size]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Profile {
    pub gender: String,
    pub age_band: String,
    pub education: String,
    pub family_size: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resident {
    pub id: u32,
    pub profile: Profile,
    pub background: Option<String>,
    pub description: String,
    pub home: Point,
    pub home_area_id: u32,
    /// Elicited needs J_m; empty until elicitation runs.
    pub needs: Vec<LandUse>,
    pub is_marginalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub seed: u64,
    pub residents: Vec<Resident>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.residents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residents.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Resident> {
        self.residents.get(id as usize).filter(|r| r.id == id)
    }

    pub fn marginalized(&self) -> impl Iterator<Item = &Resident> {
        self.residents.iter().filter(|r| r.is_marginalized)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("population serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PopulationError> {
        serde_json::from_str(text).map_err(|e| PopulationError::Spec(format!("population file: {e}")))
    }

    /// Fills every resident's needs through `backend`, at most
    /// `backend.concurrency()` calls in flight, merged by resident id.
    pub fn elicit_needs(&mut self, backend: &dyn ChatBackend) -> Result<(), PopulationError> {
        let results = llm::map_bounded(&self.residents, backend.concurrency(), |r| elicit_needs(r, backend));
        for (r, needs) in self.residents.iter_mut().zip(results) {
            r.needs = needs?;
        }
        Ok(())
    }

    pub fn describe(&mut self, backend: &dyn ChatBackend) -> Result<(), PopulationError> {
        let results =
            llm::map_bounded(&self.residents, backend.concurrency(), |r| generate_description(r, backend));
        for (r, text) in self.residents.iter_mut().zip(results) {
            r.description = text?;
        }
        Ok(())
    }

    /// Residents with every home inside a residential polygon and a valid
    /// needs set.
    pub fn check_invariants(&self, region: &Region) -> Result<(), String> {
        for (i, r) in self.residents.iter().enumerate() {
            if r.id as usize != i {
                return Err(format!("resident ids not dense at position {i}"));
            }
            let area = region
                .area(r.home_area_id)
                .ok_or_else(|| format!("resident {}: unknown home area", r.id))?;
            if area.fixed_use != Some(LandUse::Residential) || !area.boundary.contains(r.home) {
                return Err(format!("resident {}: home outside residential area {}", r.id, area.id));
            }
            if r.is_marginalized != r.background.is_some() {
                return Err(format!("resident {}: marginalized flag disagrees with background", r.id));
            }
            let distinct: BTreeSet<_> = r.needs.iter().collect();
            if distinct.len() != r.needs.len()
                || !(MIN_NEEDS..=MAX_NEEDS).contains(&r.needs.len())
                || r.needs.iter().any(|u| !u.is_assignable())
            {
                return Err(format!("resident {}: invalid needs {:?}", r.id, r.needs));
            }
        }
        Ok(())
    }
}

fn sample_label(rng: &mut ChaCha8Rng, dist: &Categorical, allowed: Option<&[String]>) -> String {
    let admissible = |label: &String| allowed.is_none_or(|a| a.contains(label));
    let total: f64 = dist.iter().filter(|(l, _)| admissible(l)).map(|(_, p)| p).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (label, &p) in dist.iter().filter(|(l, _)| admissible(l)) {
        if p <= 0.0 {
            continue;
        }
        last = Some(label);
        if u < p {
            return label.clone();
        }
        u -= p;
    }
    last.expect("validated distribution has positive mass").clone()
}

fn sample_home(rng: &mut ChaCha8Rng, region: &Region) -> Result<(u32, Point), PopulationError> {
    let residential: Vec<_> = region.residential_areas().collect();
    let total: f64 = residential.iter().map(|a| a.boundary.area()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut chosen = residential[residential.len() - 1];
    for a in &residential {
        let w = a.boundary.area();
        if u < w {
            chosen = a;
            break;
        }
        u -= w;
    }
    let (lo, hi) = chosen.boundary.bounding_box();
    for _ in 0..MAX_HOME_ATTEMPTS {
        let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if chosen.boundary.contains(p) {
            return Ok((chosen.id, p));
        }
    }
    Err(PopulationError::Geometry(format!(
        "residential area {} too thin: no interior point after {MAX_HOME_ATTEMPTS} samples",
        chosen.id
    )))
}

/// Draws `spec.n_agents` residents. The first residents receive the
/// marginalized backgrounds in quota order, with their profile attributes
/// redrawn from the background's allowed labels. Needs and descriptions are
/// left empty for the elicitation step.
pub fn synthesize(spec: &DemographicSpec, region: &Region, seed: u64) -> Result<Population, PopulationError> {
    spec.validate()?;
    if region.residential_areas().next().is_none() {
        return Err(PopulationError::Geometry("region has no residential area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backgrounds: Vec<&String> = spec
        .marginalized_quotas
        .iter()
        .flat_map(|(label, &n)| std::iter::repeat_n(label, n as usize))
        .collect();
    let mut residents = Vec::with_capacity(spec.n_agents as usize);
    for id in 0..spec.n_agents {
        let mut profile = Profile {
            gender: sample_label(&mut rng, &spec.gender, None),
            age_band: sample_label(&mut rng, &spec.age, None),
            education: sample_label(&mut rng, &spec.education, None),
            family_size: sample_label(&mut rng, &spec.family_size, None),
        };
        let background = backgrounds.get(id as usize).map(|s| s.to_string());
        if let Some(c) = background.as_ref().and_then(|b| spec.background_constraints.get(b)) {
            if let Some(a) = &c.gender {
                profile.gender = sample_label(&mut rng, &spec.gender, Some(a));
            }
            if let Some(a) = &c.age {
                profile.age_band = sample_label(&mut rng, &spec.age, Some(a));
            }
            if let Some(a) = &c.education {
                profile.education = sample_label(&mut rng, &spec.education, Some(a));
            }
            if let Some(a) = &c.family_size {
                profile.family_size = sample_label(&mut rng, &spec.family_size, Some(a));
            }
        }
        let (home_area_id, home) = sample_home(&mut rng, region)?;
        residents.push(Resident {
            id,
            profile,
            is_marginalized: background.is_some(),
            background,
            description: String::new(),
            home,
            home_area_id,
            needs: Vec::new(),
        });
    }
    Ok(Population { seed, residents })
}

/// Deterministic description used by the rule-based backend.
pub fn template_description(profile: &Profile, background: Option<&str>) -> String {
    let household = if profile.family_size == "1" {
        "living alone".to_string()
    } else {
        format!("living in a household of {}", profile.family_size)
    };
    let mut text = format!(
        "A {} resident aged {} with {} education, {household}.",
        profile.gender, profile.age_band, profile.education
    );
    if let Some(b) = background {
        text.push_str(&format!(" Background: {b}."));
    }
    text
}

/// Asks the resident to list the land uses they need most. A reply that
/// does not parse gets one repair round.
pub fn elicit_needs(resident: &Resident, backend: &dyn ChatBackend) -> Result<Vec<LandUse>, PopulationError> {
    let mut messages = llm::prompts::resident_needs(resident);
    let reply = backend.complete(&messages)?;
    match llm::parse::parse_needs_reply(&reply) {
        Ok(needs) => Ok(needs),
        Err(first) => {
            messages.push(llm::ChatMessage::assistant(reply));
            messages.push(llm::prompts::needs_repair(&first));
            let reply = backend.complete(&messages)?;
            llm::parse::parse_needs_reply(&reply).map_err(|message| PopulationError::Parse {
                resident: resident.id,
                message,
            })
        }
    }
}

pub fn generate_description(resident: &Resident, backend: &dyn ChatBackend) -> Result<String, PopulationError> {
    let reply = backend.complete(&llm::prompts::resident_description(resident))?;
    let text = reply.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(LlmError::BadReply("empty description".into()).into());
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(gender: &str, age: &str, edu: &str, fam: &str) -> Profile {
        Profile {
            gender: gender.into(),
            age_band: age.into(),
            education: edu.into(),
            family_size: fam.into(),
        }
    }

    #[test]
    fn bundled_rules_parse_and_validate() {
        let t = NeedsRuleTable::default();
        t.validate().unwrap();
        assert_eq!(t.generic_needs, vec![LandUse::Clinic, LandUse::Business, LandUse::Park]);
    }

    #[test]
    fn parenting_family_needs() {
        let t = NeedsRuleTable::default();
        let needs = t.needs_for(&profile("female", "25-34", "bachelor", "3"), Some("parenting family"));
        // school 3.0, clinic 2.8, park 2.6 from the background rule, then
        // the young-adult rule: office 1.0, business 0.8 (recreation cut at five).
        assert_eq!(
            needs,
            vec![LandUse::School, LandUse::Clinic, LandUse::Park, LandUse::Office, LandUse::Business]
        );
    }

    #[test]
    fn elderly_alone_needs() {
        let t = NeedsRuleTable::default();
        let needs = t.needs_for(&profile("male", "65+", "high school", "1"), Some("elderly living alone"));
        // hospital 4.0, park 3.7, clinic 3.3: three types, no padding needed.
        assert_eq!(needs, vec![LandUse::Hospital, LandUse::Park, LandUse::Clinic]);
    }

    #[test]
    fn needs_are_padded_to_three() {
        let t = NeedsRuleTable {
            description: String::new(),
            default_ranking: vec![LandUse::Park, LandUse::School, LandUse::Clinic],
            generic_needs: vec![LandUse::Park, LandUse::School, LandUse::Clinic],
            rules: vec![NeedsRule {
                name: "only".into(),
                when: RulePredicate::default(),
                prefer: [(LandUse::School, 1.0)].into_iter().collect(),
            }],
        };
        let needs = t.needs_for(&profile("f", "18-24", "x", "1"), None);
        assert_eq!(needs, vec![LandUse::School, LandUse::Park, LandUse::Clinic]);
    }

    #[test]
    fn template_mentions_every_fact() {
        let p = profile("female", "30-39", "bachelor", "3");
        let text = template_description(&p, Some("parenting family"));
        for fact in ["female", "30-39", "bachelor", "3", "parenting family"] {
            assert!(text.contains(fact), "{text} lacks {fact}");
        }
        let plain = template_description(&p, None);
        assert!(!plain.contains("Background"));
        assert_eq!(plain, template_description(&p, None));
    }

    #[test]
    fn spec_validation_errors() {
        let mut spec: DemographicSpec = serde_json::from_str(
            r#"{"n_agents": 3, "gender": {"f": 0.5, "m": 0.5}, "age": {"a": 1.0},
                "education": {"e": 1.0}, "family_size": {"1": 1.0},
                "marginalized_quotas": {"x": 2}}"#,
        )
        .unwrap();
        spec.validate().unwrap();
        spec.gender.insert("f".into(), 0.6);
        assert!(spec.validate().unwrap_err().to_string().contains("sums to"));
        spec.gender.insert("f".into(), 0.5);
        spec.marginalized_quotas.insert("y".into(), 2);
        assert!(spec.validate().unwrap_err().to_string().contains("exceed"));
        spec.marginalized_quotas.shift_remove("y");
        spec.background_constraints.insert(
            "x".into(),
            ProfileConstraint {
                age: Some(vec!["missing".into()]),
                ..Default::default()
            },
        );
        assert!(spec.validate().unwrap_err().to_string().contains("zero probability"));
    }
}
