//! Initial plan proposed through a chat backend, with one repair round.

use log::warn;

use super::PlannerError;
use crate::llm::parse::{parse_plan_response, PlanReplyError};
use crate::llm::{prompts, ChatBackend, ChatMessage};
use crate::region::{Plan, Region};

fn repair_message(err: &PlanReplyError) -> ChatMessage {
    match err {
        PlanReplyError::RepairNeeded(req) => prompts::plan_repair(req),
        PlanReplyError::Parse(msg) => ChatMessage::user(format!(
            "Your reply could not be read: {msg}. Reply again with only the JSON object \
             {{\"assignments\": {{\"<area id>\": \"<land use>\"}}}} covering every vacant area."
        )),
    }
}

pub fn llm_plan(region: &Region, backend: &dyn ChatBackend, seed: u64) -> Result<Plan, PlannerError> {
    let mut messages = prompts::initial_plan(region, seed);
    let reply = backend.complete(&messages)?;
    let err = match parse_plan_response(&reply, region) {
        Ok(plan) => return Ok(plan),
        Err(e) => e,
    };
    warn!("initial plan rejected ({err}); requesting a repair");
    messages.push(ChatMessage::assistant(reply));
    messages.push(repair_message(&err));
    let reply = backend.complete(&messages)?;
    parse_plan_response(&reply, region).map_err(|e| PlannerError::BadReply(e.to_string()))
}
