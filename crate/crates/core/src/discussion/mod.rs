//! Fishbowl discussion and community revision.
//!
//! For one community: invite the residents living in or near it, run `N`
//! rounds in which a sampled inner circle speaks about the frozen plan and a
//! moderator summarizes, then let the planner revise the community's vacant
//! areas from all summaries. [`run_full_pipeline`] revises every community
//! in turn and records metrics after each stage.

mod transcript;

use std::collections::BTreeSet;

use log::{info, warn};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::parse::{parse_plan_edits, parse_request_lines, PlanEdit};
use crate::llm::prompts::{self, OpinionContext, Persona, RequestItem, ReviseContext, SummaryContext};
use crate::llm::{map_bounded, ChatBackend, ChatMessage, LlmError};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::planners::{run_planner, PlannerConfig, PlannerError, PlannerKind};
use crate::population::Population;
use crate::region::{neighborhood, validate_plan, Plan, Region};

pub use transcript::{Opinion, Round, Transcript};

#[derive(Debug, Error)]
pub enum DiscussionError {
    #[error("community {0} does not exist")]
    UnknownCommunity(u32),
    #[error("no resident lives in or near community {0}")]
    EmptyCommunity(u32),
    #[error("invalid discussion config: {0}")]
    InvalidConfig(String),
    #[error("backend failed while revising community {community_id}: {source}")]
    Backend {
        community_id: u32,
        #[source]
        source: LlmError,
        /// Everything recorded before the failure.
        partial: Box<Transcript>,
    },
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Protocol variants used for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// The complete protocol.
    #[default]
    None,
    /// Residents speak with a generic persona and generic needs.
    NoRoleplay,
    /// One round, no shared context between speakers.
    NoDiscussion,
    /// The initial plan is final.
    SinglePlanner,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoRoleplay => "no-roleplay",
            Ablation::NoDiscussion => "no-discussion",
            Ablation::SinglePlanner => "single-planner",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Ablation::None, Ablation::NoRoleplay, Ablation::NoDiscussion, Ablation::SinglePlanner]
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown ablation {s:?} (expected no-roleplay, no-discussion or single-planner)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscussionConfig {
    pub rounds: u32,
    pub speakers_per_round: u32,
    pub invite_buffer_m: f64,
    /// Share of the inner circle replaced between rounds; 1.0 draws a
    /// fresh circle every round.
    pub exchange_fraction: f64,
    pub seed: u64,
    /// Radius of each speaker's neighborhood view.
    pub view_radius_m: f64,
    pub summary_budget_words: usize,
    /// Revision order; ascending community id when absent.
    pub community_order: Option<Vec<u32>>,
    pub ablation: Ablation,
}

impl Default for DiscussionConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            speakers_per_round: 50,
            invite_buffer_m: 500.0,
            exchange_fraction: 1.0,
            seed: 0,
            view_radius_m: 500.0,
            summary_budget_words: 400,
            community_order: None,
            ablation: Ablation::None,
        }
    }
}

impl DiscussionConfig {
    pub fn validate(&self) -> Result<(), DiscussionError> {
        let bad = |m: &str| Err(DiscussionError::InvalidConfig(m.into()));
        if self.rounds < 1 {
            return bad("rounds must be at least 1");
        }
        if self.speakers_per_round < 1 {
            return bad("speakers_per_round must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.exchange_fraction) {
            return bad("exchange_fraction must lie in [0, 1]");
        }
        if !(self.invite_buffer_m >= 0.0) || !(self.view_radius_m > 0.0) {
            return bad("radii must be positive");
        }
        Ok(())
    }

    /// Rounds actually run under the configured ablation.
    pub fn effective_rounds(&self) -> u32 {
        match self.ablation {
            Ablation::NoDiscussion => 1,
            _ => self.rounds,
        }
    }
}

/// Residents whose home lies in a community area or within `buffer_m` of
/// one, in id order.
pub fn invite(
    community_id: u32,
    region: &Region,
    population: &Population,
    buffer_m: f64,
) -> Result<Vec<u32>, DiscussionError> {
    if !region.communities().iter().any(|c| c.id == community_id) {
        return Err(DiscussionError::UnknownCommunity(community_id));
    }
    let areas: Vec<_> = region.community_areas(community_id).collect();
    let invited: Vec<u32> = population
        .residents
        .iter()
        .filter(|r| areas.iter().any(|a| region.distance(r.home, a) <= buffer_m))
        .map(|r| r.id)
        .collect();
    if invited.is_empty() {
        return Err(DiscussionError::EmptyCommunity(community_id));
    }
    Ok(invited)
}

fn community_rng(seed: u64, community_id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(community_id)).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Inner circle for the next round, sorted by id.
fn next_circle(rng: &mut ChaCha8Rng, invited: &[u32], previous: &[u32], size: usize, exchange: f64) -> Vec<u32> {
    let keep_n = ((1.0 - exchange) * previous.len() as f64).round() as usize;
    let mut circle: Vec<u32> = previous.choose_multiple(rng, keep_n.min(size)).copied().collect();
    let kept: BTreeSet<u32> = circle.iter().copied().collect();
    let mut rest: Vec<u32> = invited.iter().copied().filter(|id| !kept.contains(id)).collect();
    rest.shuffle(rng);
    circle.extend(rest.into_iter().take(size - circle.len()));
    circle.sort_unstable();
    circle
}

#[allow(clippy::too_many_arguments)]
fn speak(
    resident_id: u32,
    community_id: u32,
    plan: &Plan,
    region: &Region,
    population: &Population,
    config: &DiscussionConfig,
    summaries: &[String],
    backend: &dyn ChatBackend,
) -> Result<Opinion, LlmError> {
    let r = population.get(resident_id).expect("invited residents exist");
    let view = neighborhood(r.home, region, plan, config.view_radius_m);
    let changeable: Vec<u32> = view
        .entries
        .iter()
        .filter(|e| e.vacant && e.community_id == community_id)
        .map(|e| e.area_id)
        .collect();
    let roleplay = config.ablation != Ablation::NoRoleplay;
    let ctx = OpinionContext {
        resident_id,
        community_id,
        persona: roleplay.then(|| Persona::of(r)),
        needs: roleplay.then(|| r.needs.clone()),
        radius_m: config.view_radius_m,
        view: view.entries,
        changeable: changeable.clone(),
        prior_summaries: summaries.to_vec(),
    };
    let text = backend.complete(&prompts::resident_opinion(&ctx))?;
    // Requests must name changeable areas the speaker can see.
    let structured = parse_request_lines(&text)
        .into_iter()
        .filter(|q| changeable.contains(&q.area_id))
        .map(|q| RequestItem {
            area_id: q.area_id,
            land_use: q.land_use,
            reason: q.rest,
        })
        .collect();
    Ok(Opinion {
        resident_id,
        text,
        requests: structured,
    })
}

enum Revision {
    Applied(PlanEdit, Plan),
    Rejected(String),
}

fn check_edit(reply: &str, region: &Region, plan: &Plan, community_id: u32) -> Result<(PlanEdit, Plan), String> {
    let edit = parse_plan_edits(reply, region, community_id).map_err(|e| e.to_string())?;
    let next = edit.apply(plan);
    let report = validate_plan(region, &next);
    if report.ok {
        Ok((edit, next))
    } else {
        Err(report.to_string())
    }
}

fn revise(
    community_id: u32,
    plan: &Plan,
    region: &Region,
    config: &DiscussionConfig,
    summaries: &[String],
    backend: &dyn ChatBackend,
) -> Result<Revision, LlmError> {
    let ctx = ReviseContext {
        community_id,
        changeable: region.community_areas(community_id).filter(|a| a.is_vacant()).map(|a| a.id).collect(),
        current: plan.assignment().clone(),
        quotas: region.requirements().clone(),
        summaries: summaries.to_vec(),
        generic_needs: config.ablation == Ablation::NoRoleplay,
        invite_buffer_m: config.invite_buffer_m,
        radius_m: config.view_radius_m,
    };
    let mut messages = prompts::revise_plan(region, plan, &ctx);
    let reply = backend.complete(&messages)?;
    let problem = match check_edit(&reply, region, plan, community_id) {
        Ok((edit, next)) => return Ok(Revision::Applied(edit, next)),
        Err(p) => p,
    };
    warn!("community {community_id}: revision rejected ({problem}); requesting a repair");
    messages.push(ChatMessage::assistant(reply));
    messages.push(prompts::edits_repair(&problem));
    let reply = backend.complete(&messages)?;
    Ok(match check_edit(&reply, region, plan, community_id) {
        Ok((edit, next)) => Revision::Applied(edit, next),
        Err(p) => {
            warn!("community {community_id}: repaired revision rejected ({p}); keeping the plan");
            Revision::Rejected(p)
        }
    })
}

/// Discusses and revises one community. The plan is frozen during the
/// rounds; only the final revision changes it, and only inside the
/// community.
pub fn run_community_revision(
    plan: &Plan,
    community_id: u32,
    region: &Region,
    population: &Population,
    backend: &dyn ChatBackend,
    config: &DiscussionConfig,
) -> Result<(Plan, Transcript), DiscussionError> {
    config.validate()?;
    let invited = invite(community_id, region, population, config.invite_buffer_m)?;
    let size = invited.len().min(config.speakers_per_round as usize);
    let mut rng = community_rng(config.seed, community_id);
    let mut transcript = Transcript {
        community_id,
        invited: invited.len(),
        rounds: Vec::new(),
        final_edits: PlanEdit::default(),
        plan_before: plan.digest(),
        plan_after: plan.digest(),
        rejected: None,
    };
    let fail = |source: LlmError, transcript: &Transcript| DiscussionError::Backend {
        community_id,
        source,
        partial: Box::new(transcript.clone()),
    };

    let mut summaries: Vec<String> = Vec::new();
    let mut circle: Vec<u32> = Vec::new();
    for round in 1..=config.effective_rounds() {
        circle = next_circle(&mut rng, &invited, &circle, size, if round == 1 { 1.0 } else { config.exchange_fraction });
        let prior = if config.ablation == Ablation::NoDiscussion { &[][..] } else { &summaries[..] };
        let results = map_bounded(&circle, backend.concurrency(), |&id| {
            speak(id, community_id, plan, region, population, config, prior, backend)
        });
        let mut opinions = Vec::with_capacity(results.len());
        for r in results {
            opinions.push(r.map_err(|e| fail(e, &transcript))?);
        }
        let ctx = SummaryContext {
            community_id,
            round,
            budget_words: config.summary_budget_words,
            opinions: opinions.clone(),
        };
        let summary = backend
            .complete(&prompts::summarize(&ctx))
            .map_err(|e| fail(e, &transcript))?;
        summaries.push(summary.clone());
        transcript.rounds.push(Round {
            speakers: circle.clone(),
            opinions,
            summary,
        });
    }

    match revise(community_id, plan, region, config, &summaries, backend).map_err(|e| fail(e, &transcript))? {
        Revision::Applied(edit, next) => {
            info!("community {community_id}: {} edit(s) applied", edit.edits.len());
            transcript.plan_after = next.digest();
            transcript.final_edits = edit;
            Ok((next, transcript))
        }
        Revision::Rejected(problem) => {
            transcript.rejected = Some(problem);
            Ok((plan.clone(), transcript))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub initial_plan: Plan,
    pub plan: Plan,
    pub transcripts: Vec<Transcript>,
    /// Index 0 scores the initial plan, index i the plan after the i-th
    /// community revision.
    pub reports: Vec<MetricsReport>,
    /// The plan at each recorded stage, aligned with `reports`.
    pub stage_plans: Vec<Plan>,
    /// Community revised at each stage after the first.
    pub order: Vec<u32>,
    /// Communities skipped because nobody lives in or near them.
    pub skipped: Vec<u32>,
}

/// Initial plan, then every community revised in turn.
pub fn run_full_pipeline(
    region: &Region,
    population: &Population,
    initial: PlannerKind,
    planner: &PlannerConfig,
    backend: &dyn ChatBackend,
    config: &DiscussionConfig,
) -> Result<PipelineOutput, DiscussionError> {
    config.validate()?;
    let initial_plan = run_planner(initial, region, Some(population), planner, Some(backend))?;
    let score = |p: &Plan| metrics::report(region, p, population, &planner.metrics);
    let mut out = PipelineOutput {
        reports: vec![score(&initial_plan)?],
        stage_plans: vec![initial_plan.clone()],
        plan: initial_plan.clone(),
        initial_plan,
        transcripts: Vec::new(),
        order: Vec::new(),
        skipped: Vec::new(),
    };
    if config.ablation == Ablation::SinglePlanner {
        return Ok(out);
    }
    let order: Vec<u32> = match &config.community_order {
        Some(o) => o.clone(),
        None => {
            let mut ids: Vec<u32> = region.communities().iter().map(|c| c.id).collect();
            ids.sort_unstable();
            ids
        }
    };
    for cid in order {
        out.order.push(cid);
        match run_community_revision(&out.plan, cid, region, population, backend, config) {
            Ok((next, transcript)) => {
                out.plan = next;
                out.transcripts.push(transcript);
            }
            Err(DiscussionError::EmptyCommunity(id)) => {
                warn!("community {id}: nobody lives in or near it; skipped");
                out.skipped.push(id);
            }
            Err(e) => return Err(e),
        }
        out.reports.push(score(&out.plan)?);
        out.stage_plans.push(out.plan.clone());
    }
    Ok(out)
}

/// The pipeline under an ablation.
pub fn run_ablation(
    mode: Ablation,
    region: &Region,
    population: &Population,
    initial: PlannerKind,
    planner: &PlannerConfig,
    backend: &dyn ChatBackend,
    config: &DiscussionConfig,
) -> Result<PipelineOutput, DiscussionError> {
    let config = DiscussionConfig {
        ablation: mode,
        ..config.clone()
    };
    run_full_pipeline(region, population, initial, planner, backend, &config)
}
