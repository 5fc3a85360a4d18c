//! Plan maps as standalone SVG.
//!
//! Output is a pure function of the region and plan: fixed colours, fixed
//! canvas size and coordinates printed with two decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use parplan::region::{load_plan, load_region};
use parplan::{LandUse, Plan, Point, Region};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 20.0;
const LEGEND_W: f64 = 170.0;
const UNASSIGNED: &str = "#ffffff";

/// Fill colour per land use, in [`LandUse::ALL`] order.
pub const PALETTE: [(LandUse, &str); 10] = [
    (LandUse::Residential, "#e8d8b0"),
    (LandUse::GreenFixed, "#2e7d32"),
    (LandUse::School, "#1e88e5"),
    (LandUse::Hospital, "#d32f2f"),
    (LandUse::Clinic, "#f06292"),
    (LandUse::Business, "#8e24aa"),
    (LandUse::Office, "#5e35b1"),
    (LandUse::Recreation, "#ff9800"),
    (LandUse::Park, "#81c784"),
    (LandUse::OpenSpace, "#c5e1a5"),
];

fn colour(u: Option<LandUse>) -> &'static str {
    u.map_or(UNASSIGNED, |u| PALETTE[u.index()].1)
}

pub fn export(region_path: &Path, plan_path: &Path) -> anyhow::Result<String> {
    let region = load_region(region_path).with_context(|| format!("loading region {}", region_path.display()))?;
    let plan = load_plan(plan_path)
        .with_context(|| format!("loading plan {}", plan_path.display()))?
        .plan();
    Ok(render(&region, &plan))
}

/// An undirected edge keyed by its endpoints rounded to centimetres.
type EdgeKey = ((i64, i64), (i64, i64));

fn key(p: Point) -> (i64, i64) {
    ((p.x * 100.0).round() as i64, (p.y * 100.0).round() as i64)
}

pub fn render(region: &Region, plan: &Plan) -> String {
    let (mut lo, mut hi) = (Point { x: f64::MAX, y: f64::MAX }, Point { x: f64::MIN, y: f64::MIN });
    for a in region.areas() {
        let (l, h) = a.boundary.bounding_box();
        lo = Point { x: lo.x.min(l.x), y: lo.y.min(l.y) };
        hi = Point { x: hi.x.max(h.x), y: hi.y.max(h.y) };
    }
    let span_x = (hi.x - lo.x).max(1e-9);
    let span_y = (hi.y - lo.y).max(1e-9);
    let scale = (WIDTH - 2.0 * MARGIN) / span_x;
    let map_h = span_y * scale;
    let legend_h = 30.0 + 22.0 * PALETTE.len() as f64;
    let height = (map_h + 2.0 * MARGIN).max(legend_h + 2.0 * MARGIN);
    let total_w = WIDTH + LEGEND_W;
    let tx = |p: Point| (MARGIN + (p.x - lo.x) * scale, MARGIN + (hi.y - p.y) * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0}" height="{height:.0}" viewBox="0 0 {total_w:.2} {height:.2}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, "  <title>{}</title>", escape(region.name()));
    let _ = writeln!(s, r#"  <rect width="100%" height="100%" fill="{UNASSIGNED}"/>"#);

    let _ = writeln!(s, r##"  <g id="areas" stroke="#555555" stroke-width="0.6">"##);
    for a in region.areas() {
        let pts: Vec<String> = a
            .boundary
            .vertices()
            .iter()
            .map(|&p| {
                let (x, y) = tx(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let use_ = region.use_of(a, plan);
        let _ = writeln!(
            s,
            r#"    <polygon data-area="{}" data-use="{}" fill="{}" points="{}"/>"#,
            a.id,
            use_.map_or("unassigned", |u| u.name()),
            colour(use_),
            pts.join(" ")
        );
    }
    let _ = writeln!(s, "  </g>");

    // An edge lies on a community boundary when it is unshared (outer rim)
    // or the areas on its two sides belong to different communities.
    let mut edges: BTreeMap<EdgeKey, (Point, Point, Vec<u32>)> = BTreeMap::new();
    for a in region.areas() {
        for (p, q) in a.boundary.edges() {
            let (kp, kq) = (key(p), key(q));
            let k = if kp <= kq { (kp, kq) } else { (kq, kp) };
            edges.entry(k).or_insert_with(|| (p, q, Vec::new())).2.push(a.community_id);
        }
    }
    let _ = writeln!(s, r##"  <g id="communities" stroke="#000000" stroke-width="2.5" stroke-linecap="round">"##);
    for (p, q, comms) in edges.values() {
        if comms.len() == 1 || comms.iter().any(|c| *c != comms[0]) {
            let ((x1, y1), (x2, y2)) = (tx(*p), tx(*q));
            let _ = writeln!(s, r#"    <line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
    }
    let _ = writeln!(s, "  </g>");

    let _ = writeln!(s, r##"  <g id="labels" font-size="10" text-anchor="middle" fill="#111111">"##);
    for a in region.areas() {
        let (x, y) = tx(a.centroid);
        let _ = writeln!(s, r#"    <text x="{x:.2}" y="{:.2}">{}</text>"#, y + 3.5, a.id);
    }
    let _ = writeln!(s, "  </g>");

    let lx = WIDTH + 10.0;
    let _ = writeln!(s, r#"  <g id="legend" font-size="12">"#);
    let _ = writeln!(s, r#"    <text x="{lx:.2}" y="{:.2}" font-weight="bold">Land use</text>"#, MARGIN + 12.0);
    for (i, (u, c)) in PALETTE.iter().enumerate() {
        let y = MARGIN + 24.0 + 22.0 * i as f64;
        let _ = writeln!(
            s,
            r##"    <g class="legend-entry" data-use="{}"><rect x="{lx:.2}" y="{y:.2}" width="16" height="16" fill="{c}" stroke="#555555"/><text x="{:.2}" y="{:.2}">{}</text></g>"##,
            u.name(),
            lx + 22.0,
            y + 12.5,
            u.name().replace('_', " ")
        );
    }
    let _ = writeln!(s, "  </g>");
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
