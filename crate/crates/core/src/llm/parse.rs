//! Strict parsers for model replies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::population::{MAX_NEEDS, MIN_NEEDS};
use crate::region::{validate_plan, LandUse, Plan, Region};

/// What a plan reply lacks; enough to phrase a repair prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRequest {
    pub missing: Vec<u32>,
    pub deficits: BTreeMap<LandUse, u32>,
    /// Ids that are not vacant areas of the region.
    pub invalid_areas: Vec<u32>,
}

impl fmt::Display for RepairRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.missing.is_empty() {
            parts.push(format!("vacant areas {:?} are unassigned", self.missing));
        }
        if !self.invalid_areas.is_empty() {
            parts.push(format!("areas {:?} are not vacant areas", self.invalid_areas));
        }
        for (u, d) in &self.deficits {
            parts.push(format!("{d} more {u} needed"));
        }
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanReplyError {
    #[error("cannot parse plan reply: {0}")]
    Parse(String),
    #[error("plan needs repair: {0}")]
    RepairNeeded(RepairRequest),
}

/// A sparse revision of one community.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdit {
    pub edits: Vec<(u32, LandUse)>,
    pub rationale: String,
}

impl PlanEdit {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn apply(&self, plan: &Plan) -> Plan {
        let mut out = plan.clone();
        for &(id, u) in &self.edits {
            out.set(id, u);
        }
        out
    }
}

/// Byte range of the first balanced `{...}` in `text`, skipping braces
/// inside JSON strings.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_use(token: &str) -> Result<LandUse, String> {
    let u = token
        .parse::<LandUse>()
        .map_err(|_| format!("unknown land-use type {token:?}"))?;
    if !u.is_assignable() {
        return Err(format!("land use {u} cannot be assigned"));
    }
    Ok(u)
}

fn parse_id(key: &str) -> Result<u32, String> {
    key.trim()
        .trim_start_matches(|c: char| c == '#' || c.is_alphabetic() || c.is_whitespace())
        .parse::<u32>()
        .map_err(|_| format!("bad area id {key:?}"))
}

/// Reads `{"<id>": "<use>", ...}` or `[{"area_id": .., "land_use": ..}, ...]`.
fn parse_assignment_map(v: &Value) -> Result<Vec<(u32, LandUse)>, String> {
    let mut out = Vec::new();
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let s = v.as_str().ok_or_else(|| format!("area {k}: land use must be a string"))?;
                out.push((parse_id(k)?, parse_use(s)?));
            }
        }
        Value::Array(items) => {
            for item in items {
                let id = item
                    .get("area_id")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| format!("edit without integer area_id: {item}"))?;
                let s = item
                    .get("land_use")
                    .and_then(Value::as_str)
                    .ok_or_else(|| format!("edit without land_use: {item}"))?;
                out.push((id as u32, parse_use(s)?));
            }
        }
        other => return Err(format!("expected an object of assignments, got {other}")),
    }
    Ok(out)
}

fn json_field<'a>(text: &'a str, field: &str) -> Result<(Value, &'a str), String> {
    let raw = first_json_object(text).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let v: Value = serde_json::from_str(raw).map_err(|e| format!("invalid JSON: {e}"))?;
    let inner = v
        .get(field)
        .cloned()
        .ok_or_else(|| format!("JSON object lacks \"{field}\""))?;
    Ok((inner, raw))
}

/// Parses a full-plan reply. Unknown types are hard errors; coverage and
/// quota problems come back as [`PlanReplyError::RepairNeeded`].
pub fn parse_plan_response(text: &str, region: &Region) -> Result<Plan, PlanReplyError> {
    let (assignments, _) = json_field(text, "assignments").map_err(PlanReplyError::Parse)?;
    let pairs = parse_assignment_map(&assignments).map_err(PlanReplyError::Parse)?;
    let mut plan = BTreeMap::new();
    let mut invalid = BTreeSet::new();
    for (id, u) in pairs {
        if region.area(id).is_some_and(|a| a.is_vacant()) {
            plan.insert(id, u);
        } else {
            invalid.insert(id);
        }
    }
    let plan = Plan::new(plan);
    let report = validate_plan(region, &plan);
    if report.ok && invalid.is_empty() {
        return Ok(plan);
    }
    Err(PlanReplyError::RepairNeeded(RepairRequest {
        missing: report.missing_areas,
        deficits: report.deficits,
        invalid_areas: invalid.into_iter().collect(),
    }))
}

/// The reply grammar for a full plan.
pub fn render_plan_json(plan: &Plan) -> String {
    let map: serde_json::Map<String, Value> = plan
        .iter()
        .map(|(id, u)| (id.to_string(), Value::String(u.name().to_string())))
        .collect();
    serde_json::json!({ "assignments": map }).to_string()
}

pub fn render_edits_json(edit: &PlanEdit) -> String {
    let map: serde_json::Map<String, Value> = edit
        .edits
        .iter()
        .map(|(id, u)| (id.to_string(), Value::String(u.name().to_string())))
        .collect();
    serde_json::json!({ "edits": map, "rationale": edit.rationale }).to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditReplyError {
    #[error("cannot parse revision: {0}")]
    Parse(String),
    #[error("area {0} is not in community {1}")]
    OutsideCommunity(u32, u32),
    #[error("area {0} is not a vacant area")]
    NotVacant(u32),
}

/// Parses a sparse community revision. Edits that touch another
/// community's areas are rejected by name.
pub fn parse_plan_edits(text: &str, region: &Region, community_id: u32) -> Result<PlanEdit, EditReplyError> {
    let (edits, raw) = json_field(text, "edits").map_err(EditReplyError::Parse)?;
    let rationale = serde_json::from_str::<Value>(raw)
        .ok()
        .and_then(|v| v.get("rationale").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_default();
    let pairs = match &edits {
        Value::Null => Vec::new(),
        v => parse_assignment_map(v).map_err(EditReplyError::Parse)?,
    };
    let mut seen = BTreeMap::new();
    for (id, u) in pairs {
        let area = region.area(id).ok_or(EditReplyError::NotVacant(id))?;
        if area.community_id != community_id {
            return Err(EditReplyError::OutsideCommunity(id, community_id));
        }
        if !area.is_vacant() {
            return Err(EditReplyError::NotVacant(id));
        }
        seen.insert(id, u);
    }
    Ok(PlanEdit {
        edits: seen.into_iter().collect(),
        rationale,
    })
}

/// Parses a comma- or line-separated list of 3-5 land-use types.
pub fn parse_needs_reply(text: &str) -> Result<Vec<LandUse>, String> {
    let mut needs = Vec::new();
    for raw in text.split([',', ';', '\n']) {
        let token = raw
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '-' | '*' | '.' | ')' | ' '))
            .trim();
        let token = token.strip_prefix("and ").unwrap_or(token).trim();
        if token.is_empty() {
            continue;
        }
        let u = parse_use(token)?;
        if !needs.contains(&u) {
            needs.push(u);
        }
    }
    needs.truncate(MAX_NEEDS);
    if needs.len() < MIN_NEEDS {
        return Err(format!("expected at least {MIN_NEEDS} land-use types, got {}", needs.len()));
    }
    Ok(needs)
}

/// A `REQUEST <area id> <land use> <rest>` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLine {
    pub area_id: u32,
    pub land_use: LandUse,
    pub rest: String,
}

/// Extracts request lines, skipping lines that do not parse.
pub fn parse_request_lines(text: &str) -> Vec<RequestLine> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '`', ' ']).trim_end_matches('`');
        let Some(body) = line
            .get(..7)
            .filter(|p| p.eq_ignore_ascii_case("request"))
            .map(|_| line[7..].trim_start_matches(':').trim())
        else {
            continue;
        };
        let mut tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.first().is_some_and(|t| t.eq_ignore_ascii_case("area")) {
            tokens.remove(0);
        }
        let Some(Ok(area_id)) = tokens.first().map(|t| parse_id(t)) else {
            continue;
        };
        // Two-word names ("open space") first, then one word.
        let parsed = tokens
            .get(1..3)
            .and_then(|t| parse_use(&t.join(" ")).ok().map(|u| (u, 3)))
            .or_else(|| tokens.get(1).and_then(|t| parse_use(t).ok().map(|u| (u, 2))));
        let Some((land_use, used)) = parsed else { continue };
        out.push(RequestLine {
            area_id,
            land_use,
            rest: tokens[used.min(tokens.len())..].join(" "),
        });
    }
    out
}

/// Sums `REQUEST <area> <use> <count>` lines across summaries. A missing or
/// unreadable count counts as one.
pub fn aggregate_summary_requests<'a>(summaries: impl IntoIterator<Item = &'a str>) -> BTreeMap<(u32, LandUse), u32> {
    let mut out = BTreeMap::new();
    for s in summaries {
        for r in parse_request_lines(s) {
            let n = r
                .rest
                .split_whitespace()
                .next()
                .map(|t| t.trim_start_matches(['x', '×', '(']).trim_end_matches(')'))
                .and_then(|t| t.parse::<u32>().ok())
                .unwrap_or(1);
            *out.entry((r.area_id, r.land_use)).or_insert(0) += n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{Area, Community, Point, Polygon};

    /// Two communities: areas 1 (residential) and 2-3 in community 1,
    /// areas 4-5 in community 2. One school required.
    fn region() -> Region {
        let areas = (1..=5u32)
            .map(|i| {
                let x = (i - 1) as f64 * 300.0;
                let poly = Polygon::new(vec![
                    Point::new(x, 0.0),
                    Point::new(x + 300.0, 0.0),
                    Point::new(x + 300.0, 300.0),
                    Point::new(x, 300.0),
                ]);
                Area::new(i, poly, (i == 1).then_some(LandUse::Residential), if i <= 3 { 1 } else { 2 })
            })
            .collect();
        let mut req: BTreeMap<LandUse, u32> = LandUse::ASSIGNABLE.iter().map(|&u| (u, 0)).collect();
        req.insert(LandUse::School, 1);
        Region::new(
            "r",
            areas,
            req,
            vec![
                Community { id: 1, name: "a".into() },
                Community { id: 2, name: "b".into() },
            ],
            "",
        )
        .unwrap()
    }

    #[test]
    fn full_plan_parses() {
        let text = r#"Here is my plan: {"assignments": {"2": "school", "3": "park", "4": "Open Space", "5": "clinic"}} done"#;
        let plan = parse_plan_response(text, &region()).unwrap();
        assert_eq!(plan.get(4), Some(LandUse::OpenSpace));
        assert_eq!(plan.len(), 4);
    }

    #[test]
    fn missing_area_needs_repair() {
        let text = r#"{"assignments": {"2": "school", "3": "park", "5": "clinic"}}"#;
        match parse_plan_response(text, &region()) {
            Err(PlanReplyError::RepairNeeded(r)) => assert_eq!(r.missing, vec![4]),
            other => panic!("{other:?}"),
        }
        let text = r#"{"assignments": {"2": "park", "3": "park", "4": "park", "5": "clinic"}}"#;
        match parse_plan_response(text, &region()) {
            Err(PlanReplyError::RepairNeeded(r)) => {
                assert_eq!(r.deficits.get(&LandUse::School), Some(&1));
                assert!(r.to_string().contains("1 more school"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_type_names_token() {
        let text = r#"{"assignments": {"2": "stadium"}}"#;
        let err = parse_plan_response(text, &region()).unwrap_err();
        assert!(matches!(&err, PlanReplyError::Parse(m) if m.contains("stadium")), "{err}");
        assert!(matches!(parse_plan_response("no json here", &region()), Err(PlanReplyError::Parse(_))));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let plan: Plan = [(2, LandUse::School), (3, LandUse::Park), (4, LandUse::OpenSpace), (5, LandUse::Office)]
            .into_iter()
            .collect();
        assert_eq!(parse_plan_response(&render_plan_json(&plan), &region()).unwrap(), plan);
    }

    #[test]
    fn edits_within_community() {
        let r = region();
        let e = parse_plan_edits(r#"{"edits": {"2": "clinic", "3": "school"}, "rationale": "asked"}"#, &r, 1).unwrap();
        assert_eq!(e.edits, vec![(2, LandUse::Clinic), (3, LandUse::School)]);
        assert_eq!(e.rationale, "asked");
        let err = parse_plan_edits(r#"{"edits": {"4": "clinic"}}"#, &r, 1).unwrap_err();
        assert_eq!(err, EditReplyError::OutsideCommunity(4, 1));
        assert!(err.to_string().contains("area 4"));
        let empty = parse_plan_edits(r#"{"edits": {}, "rationale": "all good"}"#, &r, 2).unwrap();
        assert!(empty.is_empty());
        assert_eq!(parse_plan_edits(r#"{"edits": [{"area_id": 5, "land_use": "park"}]}"#, &r, 2).unwrap().edits, vec![(5, LandUse::Park)]);
        assert_eq!(parse_plan_edits(r#"{"edits": {"1": "park"}}"#, &r, 1).unwrap_err(), EditReplyError::NotVacant(1));
    }

    #[test]
    fn needs_reply_forms() {
        assert_eq!(
            parse_needs_reply("school, park, clinic").unwrap(),
            vec![LandUse::School, LandUse::Park, LandUse::Clinic]
        );
        assert_eq!(
            parse_needs_reply("1. Hospital\n2. Park\n3. Open space\n4. clinic\n5. school\n6. office").unwrap().len(),
            5
        );
        assert!(parse_needs_reply("school, park").is_err());
        assert!(parse_needs_reply("school, park, residential").unwrap_err().contains("cannot be assigned"));
        assert!(parse_needs_reply("school, park, mall").unwrap_err().contains("mall"));
    }

    #[test]
    fn request_lines() {
        let text = "I would like more care.\nREQUEST 5 clinic unmet-need\n- request area 7 open space near home\nREQUEST x clinic\nrequest 9 stadium";
        let reqs = parse_request_lines(text);
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[0], RequestLine { area_id: 5, land_use: LandUse::Clinic, rest: "unmet-need".into() });
        assert_eq!(reqs[1].land_use, LandUse::OpenSpace);
        assert_eq!(reqs[1].rest, "near home");
        let agg = aggregate_summary_requests(["REQUEST 5 clinic 3\nREQUEST 2 school", "REQUEST 5 clinic 2"]);
        assert_eq!(agg[&(5, LandUse::Clinic)], 5);
        assert_eq!(agg[&(2, LandUse::School)], 1);
    }

    #[test]
    fn json_object_skips_string_braces() {
        assert_eq!(first_json_object(r#"x {"a": "}{", "b": {}} y"#), Some(r#"{"a": "}{", "b": {}}"#));
        assert_eq!(first_json_object("{ unbalanced"), None);
    }
}
