//! Prompt templates. Each prompt tags its role on the first line of the
//! system message and ends the last user message with a JSON context block,
//! which the rule-based backend reads instead of the prose.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::parse::RepairRequest;
use super::{ChatMessage, LlmError, Role};
use crate::population::{Profile, Resident};
use crate::region::{Direction, LandUse, NeighborEntry, Plan, Point, Region};

const CONTEXT_OPEN: &str = "<context>";
const CONTEXT_CLOSE: &str = "</context>";

/// Persona used when resident profiles are withheld.
pub const GENERIC_PERSONA: &str = "You are a resident living in a region in the city.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    PlannerInitial,
    PlannerRevise,
    ResidentNeeds,
    ResidentDescription,
    ResidentOpinion,
    Summarizer,
}

impl AgentRole {
    const ALL: [AgentRole; 6] = [
        AgentRole::PlannerInitial,
        AgentRole::PlannerRevise,
        AgentRole::ResidentNeeds,
        AgentRole::ResidentDescription,
        AgentRole::ResidentOpinion,
        AgentRole::Summarizer,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AgentRole::PlannerInitial => "[role:planner-initial]",
            AgentRole::PlannerRevise => "[role:planner-revise]",
            AgentRole::ResidentNeeds => "[role:resident-needs]",
            AgentRole::ResidentDescription => "[role:resident-description]",
            AgentRole::ResidentOpinion => "[role:resident-opinion]",
            AgentRole::Summarizer => "[role:summarizer]",
        }
    }
}

/// Role tag of the first system message.
pub fn role_of(messages: &[ChatMessage]) -> Option<AgentRole> {
    let system = messages.iter().find(|m| m.role == Role::System)?;
    let first = system.content.lines().next()?.trim();
    AgentRole::ALL.into_iter().find(|r| r.tag() == first)
}

/// Decodes the context block of the last user message that carries one.
pub fn context_of<T: DeserializeOwned>(messages: &[ChatMessage]) -> Result<T, LlmError> {
    let block = messages
        .iter()
        .rev()
        .filter(|m| m.role == Role::User)
        .find_map(|m| {
            let start = m.content.find(CONTEXT_OPEN)? + CONTEXT_OPEN.len();
            let end = m.content[start..].find(CONTEXT_CLOSE)? + start;
            Some(&m.content[start..end])
        })
        .ok_or_else(|| LlmError::BadReply("prompt carries no context block".into()))?;
    serde_json::from_str(block).map_err(|e| LlmError::BadReply(format!("context block: {e}")))
}

fn with_context<T: Serialize>(prose: String, ctx: &T) -> String {
    format!(
        "{prose}\n\n{CONTEXT_OPEN}\n{}\n{CONTEXT_CLOSE}",
        serde_json::to_string(ctx).expect("context serializes")
    )
}

fn system(role: AgentRole, body: &str) -> ChatMessage {
    ChatMessage::system(format!("{}\n{body}", role.tag()))
}

fn type_list() -> String {
    LandUse::ASSIGNABLE.map(|u| u.name()).join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub profile: Profile,
    pub background: Option<String>,
    #[serde(default)]
    pub description: String,
}

impl Persona {
    pub fn of(r: &Resident) -> Self {
        Self {
            profile: r.profile.clone(),
            background: r.background.clone(),
            description: r.description.clone(),
        }
    }

    fn text(&self) -> String {
        let p = &self.profile;
        let mut s = format!(
            "You are a {} resident aged {}, with {} education, in a household of {}.",
            p.gender, p.age_band, p.education, p.family_size
        );
        if let Some(b) = &self.background {
            s.push_str(&format!(" Your background: {b}."));
        }
        if !self.description.is_empty() {
            s.push(' ');
            s.push_str(&self.description);
        }
        s
    }
}

pub fn resident_description(r: &Resident) -> Vec<ChatMessage> {
    let persona = Persona::of(r);
    let prose = format!(
        "Write a short, single-paragraph first-person description of a resident with this profile: \
         gender {}, age {}, education {}, household size {}{}. Reply with the paragraph only.",
        r.profile.gender,
        r.profile.age_band,
        r.profile.education,
        r.profile.family_size,
        r.background
            .as_ref()
            .map(|b| format!(", background: {b}"))
            .unwrap_or_default()
    );
    vec![
        system(AgentRole::ResidentDescription, "You write concise resident profiles."),
        ChatMessage::user(with_context(prose, &persona)),
    ]
}

pub fn resident_needs(r: &Resident) -> Vec<ChatMessage> {
    let persona = Persona::of(r);
    let prose = format!(
        "Which types of land use do you need most near your home? Choose 3 to 5 from: {}. \
         Reply with a comma-separated list only, most important first.",
        type_list()
    );
    vec![
        system(AgentRole::ResidentNeeds, &persona.text()),
        ChatMessage::user(with_context(prose, &persona)),
    ]
}

pub fn needs_repair(error: &str) -> ChatMessage {
    ChatMessage::user(format!(
        "Your reply could not be used ({error}). Reply again with 3 to 5 items from: {}, \
         separated by commas, and nothing else.",
        type_list()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpinionContext {
    pub resident_id: u32,
    pub community_id: u32,
    /// Withheld in the no-role-play ablation.
    pub persona: Option<Persona>,
    pub needs: Option<Vec<LandUse>>,
    pub radius_m: f64,
    pub view: Vec<NeighborEntry>,
    /// Vacant areas of the community under discussion that are in view.
    pub changeable: Vec<u32>,
    pub prior_summaries: Vec<String>,
}

pub fn resident_opinion(ctx: &OpinionContext) -> Vec<ChatMessage> {
    let mut sys = match &ctx.persona {
        Some(p) => p.text(),
        None => GENERIC_PERSONA.to_string(),
    };
    if let Some(needs) = &ctx.needs {
        sys.push_str(&format!(
            " The land uses you need most are: {}.",
            needs.iter().map(|u| u.name()).collect::<Vec<_>>().join(", ")
        ));
    }
    let mut prose = format!(
        "The planner has proposed a land-use plan and residents of community {} are discussing it. \
         These are the areas within {:.0} m of your home:\n",
        ctx.community_id, ctx.radius_m
    );
    if ctx.view.is_empty() {
        prose.push_str("(no areas within range)\n");
    }
    for e in &ctx.view {
        let use_ = e.land_use.map_or("unassigned", |u| u.name());
        let note = if ctx.changeable.contains(&e.area_id) { ", can be changed" } else { "" };
        prose.push_str(&format!(
            "- area {}: {use_}{note}, {:.0} m {}\n",
            e.area_id, e.distance_m, e.direction
        ));
    }
    if !ctx.prior_summaries.is_empty() {
        prose.push_str("\nSummary of the discussion so far:\n");
        for (i, s) in ctx.prior_summaries.iter().enumerate() {
            prose.push_str(&format!("Round {}: {s}\n", i + 1));
        }
    }
    prose.push_str(&format!(
        "\nGive your opinion on the plan in a few sentences. If you want an area changed, \
         add one line per change of the form `REQUEST <area id> <land use> <short reason>` \
         using only areas that can be changed and types from: {}.",
        type_list()
    ));
    vec![
        system(AgentRole::ResidentOpinion, &sys),
        ChatMessage::user(with_context(prose, ctx)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestItem {
    pub area_id: u32,
    pub land_use: LandUse,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpokenOpinion {
    pub resident_id: u32,
    pub text: String,
    pub requests: Vec<RequestItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryContext {
    pub community_id: u32,
    pub round: u32,
    pub budget_words: usize,
    pub opinions: Vec<SpokenOpinion>,
}

pub fn summarize(ctx: &SummaryContext) -> Vec<ChatMessage> {
    let mut prose = format!(
        "Summarize round {} of the residents' discussion about community {}. Opinions:\n",
        ctx.round, ctx.community_id
    );
    for o in &ctx.opinions {
        prose.push_str(&format!("Resident {}: {}\n", o.resident_id, o.text.replace('\n', " ")));
    }
    prose.push_str(&format!(
        "\nWrite at most {} words. List every requested change on its own line as \
         `REQUEST <area id> <land use> <number of residents asking>`.",
        ctx.budget_words
    ));
    vec![
        system(
            AgentRole::Summarizer,
            "You are the moderator of a fishbowl discussion among residents. \
             Summarize faithfully, keeping minority requests.",
        ),
        ChatMessage::user(with_context(prose, ctx)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPlanContext {
    pub region: String,
    pub quotas: BTreeMap<LandUse, u32>,
    pub vacant: Vec<u32>,
    pub seed: u64,
}

const PLANNING_GUIDELINES: &str = "\
Planning guidelines:
1. Every residential area should reach a school, a clinic, a business area, an office area and a recreation area within 500 m.
2. Hospitals serve the whole region; place them where several residential areas can reach them.
3. Parks and open spaces should cover as many homes as possible within 300 m.
4. Avoid clustering the same facility type; spread facilities across communities.
5. Meet every minimum requirement exactly or exceed it; never fall short.";

fn center_of(region: &Region) -> Point {
    let n = region.areas().len() as f64;
    let (sx, sy) = region
        .areas()
        .iter()
        .fold((0.0, 0.0), |(x, y), a| (x + a.centroid.x, y + a.centroid.y));
    Point::new(sx / n, sy / n)
}

/// One line per area: community, position relative to the region center,
/// and its three nearest neighbors by centroid distance.
pub fn describe_areas(region: &Region) -> String {
    let center = center_of(region);
    let mut out = String::new();
    for a in region.areas() {
        let status = match a.fixed_use {
            Some(u) => format!("fixed {u}"),
            None => "vacant".to_string(),
        };
        let mut near: Vec<(f64, u32, Direction)> = region
            .areas()
            .iter()
            .filter(|b| b.id != a.id)
            .map(|b| (a.centroid.distance(b.centroid), b.id, Direction::from_to(a.centroid, b.centroid)))
            .collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let near: Vec<String> = near
            .iter()
            .take(3)
            .map(|(d, id, dir)| format!("#{id} {d:.0} m {dir}"))
            .collect();
        out.push_str(&format!(
            "Area {}: community {}, {status}, {:.0} m {} of the region center; nearest: {}\n",
            a.id,
            a.community_id,
            center.distance(a.centroid),
            Direction::from_to(center, a.centroid),
            near.join(", ")
        ));
    }
    out
}

pub fn quota_lines(quotas: &BTreeMap<LandUse, u32>) -> String {
    LandUse::ASSIGNABLE
        .iter()
        .map(|u| format!("- {u}: at least {}\n", quotas.get(u).copied().unwrap_or(0)))
        .collect()
}

pub fn initial_plan(region: &Region, seed: u64) -> Vec<ChatMessage> {
    let ctx = InitialPlanContext {
        region: region.name().to_string(),
        quotas: region.requirements().clone(),
        vacant: region.vacant_ids(),
        seed,
    };
    let prose = format!(
        "Region {} is partitioned into the areas below. Assign one land-use type to every vacant area.\n\n\
         {}\nRequirements:\n{}\nAvailable types: {}.\n\
         Reply with a single JSON object {{\"assignments\": {{\"<area id>\": \"<land use>\"}}}} covering every vacant area.",
        region.name(),
        describe_areas(region),
        quota_lines(region.requirements()),
        type_list()
    );
    vec![
        system(
            AgentRole::PlannerInitial,
            &format!("You are an experienced urban planner renovating a region.\n{PLANNING_GUIDELINES}"),
        ),
        ChatMessage::user(with_context(prose, &ctx)),
    ]
}

pub fn plan_repair(request: &RepairRequest) -> ChatMessage {
    ChatMessage::user(format!(
        "Your plan cannot be accepted: {request}. Reply again with the complete JSON object \
         {{\"assignments\": {{...}}}} covering every vacant area and meeting every requirement."
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviseContext {
    pub community_id: u32,
    pub changeable: Vec<u32>,
    pub current: BTreeMap<u32, LandUse>,
    pub quotas: BTreeMap<LandUse, u32>,
    pub summaries: Vec<String>,
    /// Residents spoke without profiles.
    pub generic_needs: bool,
    pub invite_buffer_m: f64,
    pub radius_m: f64,
}

pub fn revise_plan(region: &Region, plan: &Plan, ctx: &ReviseContext) -> Vec<ChatMessage> {
    let mut prose = format!(
        "Residents of community {} and its surroundings discussed the plan. Revise the land use of \
         this community's vacant areas according to their opinions.\n\nCommunity areas:\n",
        ctx.community_id
    );
    for a in region.community_areas(ctx.community_id) {
        let use_ = region.use_of(a, plan).map_or("unassigned", |u| u.name());
        let tag = if a.is_vacant() { "changeable" } else { "fixed" };
        prose.push_str(&format!("- area {}: {use_} ({tag})\n", a.id));
    }
    prose.push_str("\nRequirements for the whole region (current count in brackets):\n");
    for u in LandUse::ASSIGNABLE {
        prose.push_str(&format!(
            "- {u}: at least {} [{}]\n",
            ctx.quotas.get(&u).copied().unwrap_or(0),
            plan.count(u)
        ));
    }
    prose.push_str("\nDiscussion summaries:\n");
    for (i, s) in ctx.summaries.iter().enumerate() {
        prose.push_str(&format!("Round {}: {s}\n", i + 1));
    }
    prose.push_str(
        "\nReply with a JSON object {\"edits\": {\"<area id>\": \"<land use>\"}, \"rationale\": \"...\"}. \
         Only change changeable areas of this community, keep every requirement met, \
         and reply with empty edits if no change is needed.",
    );
    vec![
        system(
            AgentRole::PlannerRevise,
            &format!("You are the urban planner responsible for the region.\n{PLANNING_GUIDELINES}"),
        ),
        ChatMessage::user(with_context(prose, ctx)),
    ]
}

pub fn edits_repair(problem: &str) -> ChatMessage {
    ChatMessage::user(format!(
        "Your revision cannot be applied: {problem}. Reply again with the JSON object \
         {{\"edits\": {{...}}, \"rationale\": \"...\"}}, changing only this community's vacant areas \
         and keeping every requirement met."
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{Area, Community, Polygon};

    fn grid_region() -> Region {
        let mut areas = Vec::new();
        for i in 0..9u32 {
            let (x, y) = ((i % 3) as f64 * 200.0, (i / 3) as f64 * 200.0);
            let poly = Polygon::new(vec![
                Point::new(x, y),
                Point::new(x + 200.0, y),
                Point::new(x + 200.0, y + 200.0),
                Point::new(x, y + 200.0),
            ]);
            let fixed = (i == 4).then_some(LandUse::Residential);
            areas.push(Area::new(i + 1, poly, fixed, 1));
        }
        let mut req: BTreeMap<LandUse, u32> = LandUse::ASSIGNABLE.iter().map(|&u| (u, 0)).collect();
        req.insert(LandUse::School, 6);
        Region::new("g", areas, req, vec![Community { id: 1, name: "c".into() }], "").unwrap()
    }

    #[test]
    fn initial_prompt_lists_each_area_once() {
        let region = grid_region();
        let msgs = initial_plan(&region, 7);
        assert_eq!(role_of(&msgs), Some(AgentRole::PlannerInitial));
        let text = &msgs[1].content;
        for a in region.areas() {
            let head = format!("Area {}:", a.id);
            assert_eq!(text.matches(&head).count(), 1, "{head}");
        }
        assert!(text.contains("- school: at least 6"));
        assert_eq!(msgs, initial_plan(&region, 7));
        let ctx: InitialPlanContext = context_of(&msgs).unwrap();
        assert_eq!(ctx.vacant.len(), 8);
    }

    #[test]
    fn role_tag_must_lead_system_message() {
        let msgs = vec![ChatMessage::system("hello\n[role:summarizer]")];
        assert_eq!(role_of(&msgs), None);
        assert!(context_of::<SummaryContext>(&msgs).is_err());
    }
}
