//! Deterministic offline backend. It reads the JSON context block of each
//! prompt and answers from explicit rules, emitting replies in the same
//! grammar a language model is asked for.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use super::parse::{aggregate_summary_requests, render_edits_json, render_plan_json, PlanEdit};
use super::prompts::{self, AgentRole, OpinionContext, Persona, ReviseContext, SummaryContext};
use super::{ChatBackend, ChatMessage, LlmError, Telemetry, TelemetrySnapshot};
use crate::discussion::invite;
use crate::planners::{gsca_plan, PlannerConfig};
use crate::population::{template_description, NeedsRuleTable, Population};
use crate::region::{validate_plan, LandUse, Plan, Region};

/// What the rule planner needs to propose and revise plans.
#[derive(Debug, Clone)]
pub struct RuleWorld {
    pub region: Arc<Region>,
    pub population: Arc<Population>,
    pub planner: PlannerConfig,
}

pub struct RuleBackend {
    rules: NeedsRuleTable,
    world: Option<Arc<RuleWorld>>,
    lock: Mutex<()>,
    telemetry: Telemetry,
}

impl RuleBackend {
    pub fn new(rules: NeedsRuleTable) -> Self {
        Self {
            rules,
            world: None,
            lock: Mutex::new(()),
            telemetry: Telemetry::default(),
        }
    }

    pub fn with_world(mut self, world: Arc<RuleWorld>) -> Self {
        self.world = Some(world);
        self
    }

    fn world(&self) -> Result<&RuleWorld, LlmError> {
        self.world
            .as_deref()
            .ok_or_else(|| LlmError::Config("rule backend has no region for planner prompts".into()))
    }

    fn answer(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let role = prompts::role_of(messages).ok_or_else(|| LlmError::BadReply("prompt has no role tag".into()))?;
        match role {
            AgentRole::ResidentNeeds => {
                let p: Persona = prompts::context_of(messages)?;
                let needs = self.rules.needs_for(&p.profile, p.background.as_deref());
                Ok(needs.iter().map(|u| u.name()).collect::<Vec<_>>().join(", "))
            }
            AgentRole::ResidentDescription => {
                let p: Persona = prompts::context_of(messages)?;
                Ok(template_description(&p.profile, p.background.as_deref()))
            }
            AgentRole::ResidentOpinion => Ok(self.opinion(&prompts::context_of(messages)?)),
            AgentRole::Summarizer => Ok(summary(&prompts::context_of(messages)?)),
            AgentRole::PlannerInitial => {
                let w = self.world()?;
                let plan = gsca_plan(&w.region, &w.population, &w.planner)
                    .map_err(|e| LlmError::BadReply(format!("rule planner: {e}")))?;
                Ok(render_plan_json(&plan))
            }
            AgentRole::PlannerRevise => self.revise(&prompts::context_of(messages)?),
        }
    }

    /// One request per unmet need (the nearest changeable area in view whose
    /// current use the resident does not need), plus support for earlier
    /// requests that would meet one of the resident's unmet needs.
    fn opinion(&self, ctx: &OpinionContext) -> String {
        let needs = match (&ctx.persona, &ctx.needs) {
            (Some(_), Some(n)) if !n.is_empty() => n.clone(),
            (Some(p), _) => self.rules.needs_for(&p.profile, p.background.as_deref()),
            (None, _) => self.rules.generic_needs.clone(),
        };
        let unmet: Vec<LandUse> = needs
            .iter()
            .copied()
            .filter(|&u| !ctx.view.iter().any(|e| e.land_use == Some(u) && e.distance_m < ctx.radius_m))
            .collect();
        if unmet.is_empty() {
            return "Everything I need is within walking distance. The plan works for me; no changes needed.".into();
        }
        let mut requests: Vec<(u32, LandUse, &str)> = Vec::new();
        let mut used = BTreeSet::new();
        for &u in &unmet {
            let pick = ctx.view.iter().find(|e| {
                ctx.changeable.contains(&e.area_id)
                    && !used.contains(&e.area_id)
                    && e.land_use.is_none_or(|cur| !needs.contains(&cur))
            });
            if let Some(e) = pick {
                used.insert(e.area_id);
                requests.push((e.area_id, u, "need"));
            }
        }
        for prior in aggregate_summary_requests(ctx.prior_summaries.iter().map(String::as_str)).keys() {
            let (area, u) = *prior;
            if unmet.contains(&u)
                && ctx.changeable.contains(&area)
                && !requests.iter().any(|&(a, v, _)| a == area && v == u)
            {
                requests.push((area, u, "support"));
            }
        }
        let mut text = format!(
            "I cannot reach {} within {:.0} m of my home.",
            unmet.iter().map(|u| u.name()).collect::<Vec<_>>().join(", "),
            ctx.radius_m
        );
        if requests.is_empty() {
            text.push_str(" None of the areas near me can be changed, so I have no concrete request.");
        }
        for (a, u, why) in requests {
            text.push_str(&format!("\nREQUEST {a} {} {why}", u.name()));
        }
        text
    }

    fn revise(&self, ctx: &ReviseContext) -> Result<String, LlmError> {
        let w = self.world()?;
        let region = &w.region;
        let plan = Plan::new(ctx.current.clone());
        let invited = invite(ctx.community_id, region, &w.population, ctx.invite_buffer_m)
            .map_err(|e| LlmError::BadReply(format!("rule planner: {e}")))?;
        let judge = CommunityJudge::new(region, &w.population, &invited, ctx, &self.rules);

        let mut groups: Vec<((u32, LandUse), u32)> =
            aggregate_summary_requests(ctx.summaries.iter().map(String::as_str)).into_iter().collect();
        groups.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut current = plan.clone();
        let mut score = judge.score(&current);
        let mut locked = BTreeSet::new();
        let mut edits = Vec::new();
        for ((area, u), count) in groups {
            let Some(a) = region.area(area) else { continue };
            if !a.is_vacant() || a.community_id != ctx.community_id || locked.contains(&area) || current.get(area) == Some(u)
            {
                continue;
            }
            let next = current.with(area, u);
            if !validate_plan(region, &next).ok {
                continue;
            }
            let next_score = judge.score(&next);
            if next_score >= score {
                edits.push((area, u, count));
                locked.insert(area);
                current = next;
                score = next_score;
            }
        }
        let rationale = if edits.is_empty() {
            "No requested change keeps every requirement met without lowering residents' satisfaction.".into()
        } else {
            edits
                .iter()
                .map(|(a, u, c)| format!("area {a} -> {u} ({c} request(s))"))
                .collect::<Vec<_>>()
                .join("; ")
        };
        let mut edits: Vec<(u32, LandUse)> = edits.into_iter().map(|(a, u, _)| (a, u)).collect();
        edits.sort_unstable();
        Ok(render_edits_json(&PlanEdit { edits, rationale }))
    }
}

/// Exact community satisfaction: each invited resident contributes
/// met·(60/|J|), so comparisons are free of rounding.
struct CommunityJudge<'a> {
    region: &'a Region,
    /// (needs, distance to every area by index)
    residents: Vec<(Vec<LandUse>, Vec<f64>)>,
    radius: f64,
}

impl<'a> CommunityJudge<'a> {
    fn new(
        region: &'a Region,
        population: &Population,
        invited: &[u32],
        ctx: &ReviseContext,
        rules: &NeedsRuleTable,
    ) -> Self {
        let residents = invited
            .iter()
            .filter_map(|&id| population.get(id))
            .map(|r| {
                let needs = if ctx.generic_needs || r.needs.is_empty() {
                    rules.generic_needs.clone()
                } else {
                    r.needs.clone()
                };
                let d = region.areas().iter().map(|a| region.distance(r.home, a)).collect();
                (needs, d)
            })
            .collect();
        Self {
            region,
            residents,
            radius: ctx.radius_m,
        }
    }

    fn score(&self, plan: &Plan) -> u64 {
        let uses: Vec<Option<LandUse>> = self.region.areas().iter().map(|a| self.region.use_of(a, plan)).collect();
        self.residents
            .iter()
            .map(|(needs, d)| {
                let mut near = [false; 10];
                for (k, u) in uses.iter().enumerate() {
                    if let Some(u) = u {
                        if d[k] < self.radius {
                            near[u.index()] = true;
                        }
                    }
                }
                let met = needs.iter().filter(|u| near[u.index()]).count() as u64;
                met * (60 / needs.len() as u64)
            })
            .sum()
    }
}

/// Requests tallied by (area, use), most requested first, cut to the word
/// budget.
fn summary(ctx: &SummaryContext) -> String {
    let mut tally: BTreeMap<(u32, LandUse), u32> = BTreeMap::new();
    for o in &ctx.opinions {
        let mut seen = BTreeSet::new();
        for r in &o.requests {
            if seen.insert((r.area_id, r.land_use)) {
                *tally.entry((r.area_id, r.land_use)).or_insert(0) += 1;
            }
        }
    }
    let satisfied = ctx.opinions.iter().filter(|o| o.requests.is_empty()).count();
    let mut rows: Vec<((u32, LandUse), u32)> = tally.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let head = format!(
        "Round {}: {} residents spoke; {} raised no change request.",
        ctx.round,
        ctx.opinions.len(),
        satisfied
    );
    let mut words = head.split_whitespace().count();
    let mut out = head;
    for ((a, u), n) in rows {
        let line = format!("REQUEST {a} {} {n}", u.name());
        let w = line.split_whitespace().count();
        if words + w > ctx.budget_words {
            break;
        }
        words += w;
        out.push('\n');
        out.push_str(&line);
    }
    out
}

impl ChatBackend for RuleBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        self.telemetry.request();
        let out = self.answer(messages);
        if out.is_err() {
            self.telemetry.failure();
        }
        out
    }

    fn telemetry(&self) -> TelemetrySnapshot {
        self.telemetry.snapshot()
    }
}
