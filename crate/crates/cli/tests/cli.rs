use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn parplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parplan"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn plan_run(out: &Path, method: &str, seeds: &str) -> Output {
    parplan(&[
        "plan",
        "--region",
        s(&fixture("hlg_like.geojson")),
        "--method",
        method,
        "--residents",
        "200",
        "--seeds",
        seeds,
        "--out",
        s(out),
    ])
}

#[test]
fn plan_writes_one_file_and_row_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = plan_run(&out, "random", "1-5");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plans = fs::read_dir(out.join("plans")).unwrap().count();
    assert_eq!(plans, 5);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run_id,seed,method,service,ecology,satisfaction,inclusion");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("hlg_like.random,mean,random,"));
    for f in ["config.snapshot.json", "record.json", "report.txt", "trajectory.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn unknown_method_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = plan_run(&tmp.path().join("run"), "genetic", "1");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("genetic"));
}

#[test]
fn remote_backend_without_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("backend.json");
    fs::write(&cfg, r#"{"api_key_env": "PARPLAN_CLI_TEST_UNSET_KEY"}"#).unwrap();
    let o = parplan(&[
        "simulate",
        "--region",
        s(&fixture("hlg_like.geojson")),
        "--backend",
        "remote",
        "--backend-config",
        s(&cfg),
        "--seeds",
        "1",
        "--out",
        s(&tmp.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PARPLAN_CLI_TEST_UNSET_KEY"));
}

#[test]
fn sweep_rejects_zero_rounds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = parplan(&[
        "sweep-rounds",
        "--values",
        "0,1",
        "--region",
        s(&fixture("hlg_like.geojson")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_round_count() {
    let tmp = tempfile::tempdir().unwrap();
    let o = parplan(&[
        "sweep-rounds",
        "--values",
        "1,2",
        "--region",
        s(&fixture("grid16.geojson")),
        "--residents",
        "60",
        "--seeds",
        "1-2",
        "--out",
        s(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,") && rows[2].starts_with("2,"));
    assert!(tmp.path().join("rounds-2/metrics.csv").is_file());
}

#[test]
fn ablation_single_planner_writes_no_transcripts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = parplan(&[
        "ablate",
        "--mode",
        "single-planner",
        "--region",
        s(&fixture("hlg_like.geojson")),
        "--residents",
        "200",
        "--seeds",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.join("transcripts")).unwrap().count(), 0);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 2);
}

#[test]
fn compare_marks_best_and_second() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for method in ["random", "gsca", "centralized"] {
        let d = tmp.path().join(method);
        let o = plan_run(&d, method, "1-2");
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dirs.push(d);
    }
    let csv = tmp.path().join("table.csv");
    let mut args = vec!["compare", "--out", s(&csv)];
    args.extend(dirs.iter().map(|d| s(d)));
    let o = parplan(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("hlg_like.gsca"), "{stdout}");
    let table = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<String>> = table.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    for col in 3..7 {
        let best = rows.iter().filter(|r| r[col].starts_with("**")).count();
        assert!(best >= 1, "column {col} has no best mark:\n{table}");
        assert!(rows.iter().all(|r| !r[col].is_empty()));
    }
}

#[test]
fn svg_export_is_deterministic_and_well_formed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.svg"), tmp.path().join("b.svg"));
    for out in [&a, &b] {
        let o = parplan(&[
            "export-svg",
            "--region",
            s(&fixture("grid16.geojson")),
            "--plan",
            s(&fixture("grid16_plan.json")),
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let doc = roxmltree::Document::parse(&text).expect("valid XML");
    let legend = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("legend-entry"))
        .count();
    assert_eq!(legend, 10);
    let polygons = doc.descendants().filter(|n| n.has_tag_name("polygon")).count();
    assert_eq!(polygons, 16);
    let labels: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("text") && n.parent().and_then(|p| p.attribute("id")) == Some("labels"))
        .filter_map(|n| n.text())
        .collect();
    assert_eq!(labels.len(), 16);
    assert!(labels.contains(&"16"));
}

#[test]
fn failed_seed_is_recorded_and_exit_is_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    // A scripted backend with an empty transcript fails every backend call.
    let transcript = tmp.path().join("empty.json");
    fs::write(&transcript, "[]").unwrap();
    let out = tmp.path().join("run");
    let o = parplan(&[
        "simulate",
        "--region",
        s(&fixture("hlg_like.geojson")),
        "--backend",
        "scripted",
        "--transcript",
        s(&transcript),
        "--residents",
        "50",
        "--seeds",
        "1-2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("record.json")).unwrap()).unwrap();
    let seeds = record["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 2);
    assert!(seeds.iter().all(|s| s["error"].as_str().is_some_and(|e| e.contains("stage"))));
}
