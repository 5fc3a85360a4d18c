//! Discussion records and their human-readable rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::llm::parse::PlanEdit;

/// One speaker's contribution; `requests` only names changeable areas in
/// the speaker's view.
pub type Opinion = crate::llm::prompts::SpokenOpinion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// Inner circle, ascending id.
    pub speakers: Vec<u32>,
    pub opinions: Vec<Opinion>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub community_id: u32,
    pub invited: usize,
    pub rounds: Vec<Round>,
    pub final_edits: PlanEdit,
    /// Plan digests before and after the revision.
    pub plan_before: String,
    pub plan_after: String,
    /// Why the planner's revision was discarded, if it was.
    pub rejected: Option<String>,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Speaker-by-speaker text for reading.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Community {} — {} invited, {} round(s)",
            self.community_id,
            self.invited,
            self.rounds.len()
        );
        for (i, round) in self.rounds.iter().enumerate() {
            let _ = writeln!(out, "\n== Round {} ({} speakers) ==", i + 1, round.speakers.len());
            for o in &round.opinions {
                let _ = writeln!(out, "\n[resident {}]", o.resident_id);
                for line in o.text.lines() {
                    let _ = writeln!(out, "  {line}");
                }
            }
            let _ = writeln!(out, "\n-- Summary --");
            for line in round.summary.lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
        let _ = writeln!(out, "\n== Revision ==");
        if let Some(why) = &self.rejected {
            let _ = writeln!(out, "rejected: {why}");
        } else if self.final_edits.is_empty() {
            let _ = writeln!(out, "no changes");
        } else {
            for (id, u) in &self.final_edits.edits {
                let _ = writeln!(out, "area {id} -> {u}");
            }
        }
        if !self.final_edits.rationale.is_empty() {
            let _ = writeln!(out, "rationale: {}", self.final_edits.rationale);
        }
        let _ = writeln!(out, "plan {} -> {}", &self.plan_before[..12.min(self.plan_before.len())], &self.plan_after[..12.min(self.plan_after.len())]);
        out
    }
}
