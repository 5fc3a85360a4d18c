//! Region files (GeoJSON feature collections with foreign members) and plan
//! documents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Area, Community, DistanceMode, LandUse, Plan, Point, Polygon, Region, RegionError};

fn parse_err(msg: impl Into<String>) -> RegionError {
    RegionError::Parse(msg.into())
}

fn read(path: &Path) -> Result<String, RegionError> {
    fs::read_to_string(path).map_err(|source| RegionError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), RegionError> {
    fs::write(path, text).map_err(|source| RegionError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_region(path: impl AsRef<Path>) -> Result<Region, RegionError> {
    parse_region(&read(path.as_ref())?)
}

/// Parses a region document. Vacant areas are exactly the features without
/// a `fixed_use` property.
pub fn parse_region(text: &str) -> Result<Region, RegionError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| parse_err(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| parse_err("top level must be an object"))?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(parse_err("expected \"type\": \"FeatureCollection\""));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("missing \"features\" array"))?;

    let mut areas = Vec::with_capacity(features.len());
    for (idx, feature) in features.iter().enumerate() {
        areas.push(parse_feature(idx, feature)?);
    }
    check_not_degrees(&areas)?;

    let requirements = parse_requirements(obj.get("requirements"))?;
    let communities = match obj.get("communities") {
        Some(v) => serde_json::from_value::<Vec<Community>>(v.clone())
            .map_err(|e| parse_err(format!("bad \"communities\": {e}")))?,
        None => {
            let mut ids: Vec<u32> = areas.iter().map(|a| a.community_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter()
                .map(|id| Community {
                    id,
                    name: format!("Community {id}"),
                })
                .collect()
        }
    };
    let name = obj.get("name").and_then(Value::as_str).unwrap_or("region");
    let crs_note = obj.get("crs_note").and_then(Value::as_str).unwrap_or("");
    let mode = match obj.get("distance_mode") {
        Some(v) => serde_json::from_value::<DistanceMode>(v.clone())
            .map_err(|e| parse_err(format!("bad \"distance_mode\": {e}")))?,
        None => DistanceMode::Boundary,
    };
    Ok(Region::new(name, areas, requirements, communities, crs_note)?.with_distance_mode(mode))
}

fn parse_feature(idx: usize, feature: &Value) -> Result<Area, RegionError> {
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| parse_err(format!("feature #{idx}: missing properties")))?;
    let id = props
        .get("id")
        .and_then(Value::as_u64)
        .or_else(|| feature.get("id").and_then(Value::as_u64))
        .ok_or_else(|| parse_err(format!("feature #{idx}: missing integer id")))?;
    let id = u32::try_from(id).map_err(|_| parse_err(format!("feature #{idx}: id too large")))?;
    let fixed_use = match props.get("fixed_use") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(
            s.parse::<LandUse>()
                .map_err(|e| parse_err(format!("feature id {id}: {e}")))?,
        ),
        Some(other) => {
            return Err(parse_err(format!("feature id {id}: fixed_use must be a string, got {other}")))
        }
    };
    let community_id = props
        .get("community_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| parse_err(format!("feature id {id}: missing integer community_id")))?
        as u32;

    let geometry = feature
        .get("geometry")
        .ok_or_else(|| parse_err(format!("feature id {id}: missing geometry")))?;
    if geometry.get("type").and_then(Value::as_str) != Some("Polygon") {
        return Err(parse_err(format!("feature id {id}: geometry must be a Polygon")));
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(format!("feature id {id}: missing coordinates")))?;
    if rings.len() != 1 {
        return Err(parse_err(format!(
            "feature id {id}: expected exactly one ring, found {} (holes are not supported)",
            rings.len()
        )));
    }
    let ring = rings[0]
        .as_array()
        .ok_or_else(|| parse_err(format!("feature id {id}: ring must be an array")))?;
    let mut vertices = Vec::with_capacity(ring.len());
    for pos in ring {
        let xy = pos.as_array().filter(|a| a.len() >= 2);
        let (x, y) = xy
            .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
            .ok_or_else(|| parse_err(format!("feature id {id}: bad position {pos}")))?;
        vertices.push(Point::new(x, y));
    }
    Ok(Area::new(id, Polygon::new(vertices), fixed_use, community_id))
}

/// Coordinates must be projected meters. A file whose every vertex fits in
/// the lon/lat box is almost certainly in degrees.
fn check_not_degrees(areas: &[Area]) -> Result<(), RegionError> {
    let all_small = areas.iter().all(|a| {
        a.boundary
            .vertices()
            .iter()
            .all(|p| p.x.abs() <= 180.0 && p.y.abs() <= 90.0)
    });
    if !areas.is_empty() && all_small {
        return Err(RegionError::Invariant(
            "coordinates look like longitude/latitude degrees; project to a local metric frame".into(),
        ));
    }
    Ok(())
}

fn parse_requirements(v: Option<&Value>) -> Result<BTreeMap<LandUse, u32>, RegionError> {
    let obj = v
        .and_then(Value::as_object)
        .ok_or_else(|| parse_err("missing \"requirements\" object"))?;
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        let use_ = k
            .parse::<LandUse>()
            .map_err(|e| parse_err(format!("requirements: {e}")))?;
        let n = v
            .as_u64()
            .ok_or_else(|| parse_err(format!("requirements: {k} must be a non-negative integer")))?;
        out.insert(use_, n as u32);
    }
    Ok(out)
}

/// Serializes a region to the same document shape [`parse_region`] reads.
pub fn region_to_geojson(region: &Region) -> Value {
    let features: Vec<Value> = region
        .areas()
        .iter()
        .map(|a| {
            let mut props = Map::new();
            props.insert("id".into(), json!(a.id));
            if let Some(u) = a.fixed_use {
                props.insert("fixed_use".into(), json!(u.name()));
            }
            props.insert("community_id".into(), json!(a.community_id));
            let mut ring: Vec<[f64; 2]> = a.boundary.vertices().iter().map(|p| [p.x, p.y]).collect();
            ring.push(ring[0]);
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
        })
        .collect();
    let requirements: Map<String, Value> = region
        .requirements()
        .iter()
        .map(|(u, n)| (u.name().to_string(), json!(n)))
        .collect();
    json!({
        "type": "FeatureCollection",
        "name": region.name(),
        "crs_note": region.crs_note(),
        "distance_mode": region.distance_mode(),
        "requirements": requirements,
        "communities": region.communities(),
        "features": features,
    })
}

pub fn save_region(region: &Region, path: impl AsRef<Path>) -> Result<(), RegionError> {
    let text = serde_json::to_string_pretty(&region_to_geojson(region)).expect("json");
    write(path.as_ref(), &text)
}

/// On-disk plan: `{"assignments": {"<id>": "<use>"}, "provenance": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub assignments: BTreeMap<u32, LandUse>,
    #[serde(default)]
    pub provenance: Map<String, Value>,
}

impl PlanDocument {
    pub fn new(plan: &Plan, provenance: Map<String, Value>) -> Self {
        Self {
            assignments: plan.assignment().clone(),
            provenance,
        }
    }

    pub fn plan(&self) -> Plan {
        Plan::new(self.assignments.clone())
    }
}

pub fn save_plan(doc: &PlanDocument, path: impl AsRef<Path>) -> Result<(), RegionError> {
    write(path.as_ref(), &(serde_json::to_string_pretty(doc).expect("json") + "\n"))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PlanDocument, RegionError> {
    serde_json::from_str(&read(path.as_ref())?).map_err(|e| parse_err(format!("plan file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(features: Value, requirements: Value) -> String {
        json!({"type": "FeatureCollection", "name": "t", "requirements": requirements, "features": features})
            .to_string()
    }

    fn square_feature(id: u32, x0: f64, fixed: Option<&str>) -> Value {
        let ring = json!([[x0, 0.0], [x0 + 100.0, 0.0], [x0 + 100.0, 100.0], [x0, 100.0], [x0, 0.0]]);
        let mut props = json!({"id": id, "community_id": 1});
        if let Some(f) = fixed {
            props["fixed_use"] = json!(f);
        }
        json!({"type": "Feature", "properties": props, "geometry": {"type": "Polygon", "coordinates": [ring]}})
    }

    fn zero_req() -> Value {
        let m: Map<String, Value> = LandUse::ASSIGNABLE.iter().map(|u| (u.name().into(), json!(0))).collect();
        Value::Object(m)
    }

    #[test]
    fn single_square_centroid() {
        let text = doc(json!([square_feature(1, 0.0, Some("residential"))]), zero_req());
        let region = parse_region(&text).unwrap();
        assert_eq!(region.areas()[0].centroid, Point::new(50.0, 50.0));
        assert_eq!(region.vacant_ids(), Vec::<u32>::new());
    }

    #[test]
    fn infeasible_requirements_rejected() {
        let mut req = zero_req();
        req["school"] = json!(2);
        let text = doc(
            json!([square_feature(1, 0.0, Some("residential")), square_feature(2, 100.0, None)]),
            req,
        );
        assert!(matches!(parse_region(&text), Err(RegionError::Invariant(_))));
    }

    #[test]
    fn degenerate_polygon_names_feature() {
        let bad = json!({"type": "Feature", "properties": {"id": 2, "community_id": 1},
            "geometry": {"type": "Polygon", "coordinates": [[[0.0, 0.0], [500.0, 0.0], [1000.0, 0.0]]]}});
        let text = doc(json!([square_feature(1, 300.0, Some("residential")), bad]), zero_req());
        let err = parse_region(&text).unwrap_err().to_string();
        assert!(err.contains("area 2"), "{err}");
    }

    #[test]
    fn degree_coordinates_rejected() {
        let f = json!({"type": "Feature", "properties": {"id": 1, "community_id": 1, "fixed_use": "residential"},
            "geometry": {"type": "Polygon", "coordinates": [[[116.3, 40.0], [116.4, 40.0], [116.4, 40.1], [116.3, 40.0]]]}});
        let err = parse_region(&doc(json!([f]), zero_req())).unwrap_err().to_string();
        assert!(err.contains("degrees"), "{err}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(parse_region("{"), Err(RegionError::Parse(_))));
        assert!(matches!(parse_region("{\"type\": \"Feature\"}"), Err(RegionError::Parse(_))));
    }

    #[test]
    fn unknown_fixed_use_is_parse_error() {
        let text = doc(json!([square_feature(1, 0.0, Some("stadium"))]), zero_req());
        let err = parse_region(&text).unwrap_err().to_string();
        assert!(err.contains("stadium"), "{err}");
    }

    #[test]
    fn plan_document_shape() {
        let plan: Plan = [(2, LandUse::OpenSpace)].into_iter().collect();
        let doc = PlanDocument::new(&plan, Map::new());
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(text, r#"{"assignments":{"2":"open_space"},"provenance":{}}"#);
        let back: PlanDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.plan(), plan);
    }
}
