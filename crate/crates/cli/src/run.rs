//! Multi-seed runs and the run directory.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.snapshot.json
//! plans/seed-<s>.json              final plan (plus seed-<s>.initial.json when simulating)
//! populations/seed-<s>.json        residents with elicited needs
//! transcripts/seed-<s>/community-<c>.{json,txt}
//! metrics.csv                      one row per seed plus a "mean" row
//! trajectory.csv                   metrics after every pipeline stage
//! record.json                      everything above in one document, plus timing
//! report.txt                       human-readable summary
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use parplan::discussion::{run_full_pipeline, DiscussionConfig, Transcript};
use parplan::llm::{map_bounded, ChatBackend, RecordingBackend, RuleBackend, RuleWorld};
use parplan::metrics::{self, MetricsReport, CSV_HEADER};
use parplan::planners::run_planner;
use parplan::population::{synthesize, DemographicSpec, NeedsRuleTable, Population};
use parplan::region::{load_region, save_plan, Plan, PlanDocument, Region};
use parplan::{synth, BackendKind};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Plan,
    Simulate,
}

/// The four aggregate scores of one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub service: f64,
    pub ecology: f64,
    pub satisfaction: f64,
    pub inclusion: Option<f64>,
}

impl From<&MetricsReport> for Scores {
    fn from(r: &MetricsReport) -> Self {
        Self {
            service: r.service,
            ecology: r.ecology,
            satisfaction: r.satisfaction,
            inclusion: r.inclusion,
        }
    }
}

impl Scores {
    pub fn values(&self) -> [Option<f64>; 4] {
        [Some(self.service), Some(self.ecology), Some(self.satisfaction), self.inclusion]
    }

    fn from_values(v: [Option<f64>; 4]) -> Self {
        Self {
            service: v[0].unwrap_or(f64::NAN),
            ecology: v[1].unwrap_or(f64::NAN),
            satisfaction: v[2].unwrap_or(f64::NAN),
            inclusion: v[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Community revised to reach this stage; absent for the initial plan.
    pub community_id: Option<u32>,
    pub plan_digest: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// Final scores; absent when the seed failed.
    pub scores: Option<Scores>,
    pub plan_digest: Option<String>,
    pub trajectory: Vec<StageRecord>,
    pub transcripts: Vec<PathBuf>,
    pub error: Option<String>,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: Scores,
    /// Sample standard deviation (0 for a single seed).
    pub std: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub run_id: String,
    pub region_name: String,
    pub config: RunConfig,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: Option<Aggregate>,
    pub elapsed_ms: u128,
}

impl RunRecord {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join("record.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn failed(&self) -> usize {
        self.seeds.iter().filter(|s| s.error.is_some()).count()
    }
}

/// Mean and sample standard deviation per metric over the given scores;
/// inclusion is averaged over the seeds that have it.
pub fn aggregate(scores: &[Scores]) -> Option<Aggregate> {
    if scores.is_empty() {
        return None;
    }
    let mut mean = [None; 4];
    let mut std = [None; 4];
    for k in 0..4 {
        let v: Vec<f64> = scores.iter().filter_map(|s| s.values()[k]).collect();
        if v.is_empty() {
            continue;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = if v.len() > 1 {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        mean[k] = Some(m);
        std[k] = Some(s);
    }
    Some(Aggregate {
        n: scores.len(),
        mean: Scores::from_values(mean),
        std: Scores::from_values(std),
    })
}

struct SeedArtifacts {
    population: Population,
    initial_plan: Plan,
    plan: Plan,
    reports: Vec<MetricsReport>,
    stage_plans: Vec<Plan>,
    order: Vec<u32>,
    transcripts: Vec<Transcript>,
}

fn load_spec(cfg: &RunConfig) -> anyhow::Result<DemographicSpec> {
    let mut spec = match &cfg.demographics {
        Some(path) => DemographicSpec::load(path).with_context(|| format!("loading demographics {}", path.display()))?,
        None => synth::demographics(1000),
    };
    if let Some(n) = cfg.residents {
        spec.n_agents = n;
        if spec.marginalized_total() > n as u64 {
            warn!("marginalized quotas exceed {n} residents; scaling them down");
            let total = spec.marginalized_total();
            for q in spec.marginalized_quotas.values_mut() {
                *q = (*q as u64 * n as u64 / total) as u32;
            }
        }
        spec.validate().context("demographics")?;
    }
    Ok(spec)
}

fn run_seed(
    cfg: &RunConfig,
    region: &Arc<Region>,
    spec: &DemographicSpec,
    rules: &NeedsRuleTable,
    shared: Option<&Arc<dyn ChatBackend>>,
    seed: u64,
) -> anyhow::Result<SeedArtifacts> {
    let rule_backend: Arc<dyn ChatBackend>;
    let backend: &dyn ChatBackend = match shared {
        Some(b) => b.as_ref(),
        None => {
            rule_backend = Arc::new(RuleBackend::new(rules.clone()));
            rule_backend.as_ref()
        }
    };
    let mut population = synthesize(spec, region, seed).context("stage: population synthesis")?;
    population.describe(backend).context("stage: resident descriptions")?;
    population.elicit_needs(backend).context("stage: needs elicitation")?;

    let planner = cfg.planner.clone().with_seed(seed);
    let population = Arc::new(population);
    let world_backend: Arc<dyn ChatBackend>;
    let backend: &dyn ChatBackend = match shared {
        Some(b) => b.as_ref(),
        None => {
            world_backend = Arc::new(RuleBackend::new(rules.clone()).with_world(Arc::new(RuleWorld {
                region: Arc::clone(region),
                population: Arc::clone(&population),
                planner: planner.clone(),
            })));
            world_backend.as_ref()
        }
    };
    let kind = cfg.planner_kind();
    match cfg.mode {
        Mode::Plan => {
            let plan = run_planner(kind, region, Some(&population), &planner, Some(backend))
                .with_context(|| format!("stage: {kind} planner"))?;
            let report = metrics::report(region, &plan, &population, &planner.metrics).context("stage: metrics")?;
            Ok(SeedArtifacts {
                population: (*population).clone(),
                initial_plan: plan.clone(),
                stage_plans: vec![plan.clone()],
                plan,
                reports: vec![report],
                order: Vec::new(),
                transcripts: Vec::new(),
            })
        }
        Mode::Simulate => {
            let discussion = DiscussionConfig {
                seed,
                ..cfg.discussion.clone()
            };
            let out = run_full_pipeline(region, &population, kind, &planner, backend, &discussion)
                .context("stage: participatory pipeline")?;
            Ok(SeedArtifacts {
                population: (*population).clone(),
                initial_plan: out.initial_plan,
                plan: out.plan,
                reports: out.reports,
                stage_plans: out.stage_plans,
                order: out.order,
                transcripts: out.transcripts,
            })
        }
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs every seed and writes the run directory. Seeds that fail are
/// recorded and do not stop the others; the run then fails as a whole.
pub fn execute(cfg: &RunConfig) -> Result<RunRecord, CliError> {
    let started = Instant::now();
    let out = &cfg.out;
    for sub in ["plans", "populations", "transcripts"] {
        fs::create_dir_all(out.join(sub))
            .with_context(|| format!("creating {}", out.join(sub).display()))
            .map_err(CliError::Runtime)?;
    }
    write(
        &out.join("config.snapshot.json"),
        &(serde_json::to_string_pretty(cfg).expect("config serializes") + "\n"),
    )?;

    let region = Arc::new(load_region(&cfg.region).with_context(|| format!("loading region {}", cfg.region.display()))?);
    let spec = load_spec(cfg)?;
    let rules = spec.rules();
    let recorder: Option<Arc<RecordingBackend<Arc<dyn ChatBackend>>>>;
    let shared: Option<Arc<dyn ChatBackend>> = match cfg.backend.kind {
        BackendKind::RuleBased => {
            if cfg.record.is_some() {
                warn!("--record is ignored for the rule backend");
            }
            recorder = None;
            None
        }
        _ => {
            let inner = parplan::llm::build_backend(&cfg.backend, rules.clone(), None)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            match &cfg.record {
                Some(_) => {
                    let r = Arc::new(RecordingBackend::new(inner));
                    recorder = Some(Arc::clone(&r));
                    Some(r as Arc<dyn ChatBackend>)
                }
                None => {
                    recorder = None;
                    Some(inner)
                }
            }
        }
    };

    let limit = if cfg.parallel_seeds { cfg.seeds.len() } else { 1 };
    let results = map_bounded(&cfg.seeds, limit, |&seed| {
        let t = Instant::now();
        info!("seed {seed}: starting");
        let r = run_seed(cfg, &region, &spec, &rules, shared.as_ref(), seed);
        (r, t.elapsed().as_millis())
    });

    let run_id = cfg.run_id();
    let method = cfg.method.clone();
    let mut seeds = Vec::new();
    let mut metrics_rows = Vec::new();
    let mut trajectory_rows = Vec::new();
    for (&seed, (result, elapsed_ms)) in cfg.seeds.iter().zip(results) {
        let art = match result {
            Ok(a) => a,
            Err(e) => {
                warn!("seed {seed} failed: {e:#}");
                seeds.push(SeedRecord {
                    seed,
                    scores: None,
                    plan_digest: None,
                    trajectory: Vec::new(),
                    transcripts: Vec::new(),
                    error: Some(format!("{e:#}")),
                    elapsed_ms,
                });
                continue;
            }
        };
        let plans = out.join("plans");
        let mut provenance = serde_json::Map::new();
        provenance.insert("run_id".into(), run_id.clone().into());
        provenance.insert("method".into(), method.clone().into());
        provenance.insert("seed".into(), seed.into());
        save_plan(&PlanDocument::new(&art.plan, provenance.clone()), plans.join(format!("seed-{seed}.json")))
            .map_err(anyhow::Error::from)?;
        if cfg.mode == Mode::Simulate {
            provenance.insert("stage".into(), "initial".into());
            save_plan(
                &PlanDocument::new(&art.initial_plan, provenance),
                plans.join(format!("seed-{seed}.initial.json")),
            )
            .map_err(anyhow::Error::from)?;
        }
        write(&out.join("populations").join(format!("seed-{seed}.json")), &(art.population.to_json() + "\n"))?;

        let mut transcript_files = Vec::new();
        if !art.transcripts.is_empty() {
            let dir = out.join("transcripts").join(format!("seed-{seed}"));
            fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
            for t in &art.transcripts {
                let stem = format!("community-{}", t.community_id);
                write(&dir.join(format!("{stem}.json")), &(t.to_json() + "\n"))?;
                write(&dir.join(format!("{stem}.txt")), &t.render_text())?;
                transcript_files.push(PathBuf::from("transcripts").join(format!("seed-{seed}")).join(format!("{stem}.json")));
            }
        }

        let trajectory: Vec<StageRecord> = art
            .reports
            .iter()
            .zip(&art.stage_plans)
            .enumerate()
            .map(|(stage, (r, p))| StageRecord {
                stage,
                community_id: stage.checked_sub(1).map(|i| art.order[i]),
                plan_digest: p.digest(),
                scores: Scores::from(r),
            })
            .collect();
        for s in &trajectory {
            let v = s.scores;
            trajectory_rows.push(vec![
                run_id.clone(),
                seed.to_string(),
                s.stage.to_string(),
                s.community_id.map(|c| c.to_string()).unwrap_or_default(),
                v.service.to_string(),
                v.ecology.to_string(),
                v.satisfaction.to_string(),
                fmt_opt(v.inclusion),
            ]);
        }
        let final_scores = Scores::from(art.reports.last().expect("at least one report"));
        metrics_rows.push((seed.to_string(), final_scores));
        seeds.push(SeedRecord {
            seed,
            scores: Some(final_scores),
            plan_digest: Some(art.plan.digest()),
            trajectory,
            transcripts: transcript_files,
            error: None,
            elapsed_ms,
        });
    }

    let ok_scores: Vec<Scores> = metrics_rows.iter().map(|(_, s)| *s).collect();
    let agg = aggregate(&ok_scores);
    write_metrics_csv(&out.join("metrics.csv"), &run_id, &method, &metrics_rows, agg.as_ref())?;
    write_trajectory_csv(&out.join("trajectory.csv"), &trajectory_rows)?;

    if let (Some(r), Some(path)) = (&recorder, &cfg.record) {
        r.save(path).with_context(|| format!("saving transcript {}", path.display()))?;
    }

    let record = RunRecord {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        run_id,
        region_name: region.name().to_string(),
        config: cfg.clone(),
        seeds,
        aggregate: agg,
        elapsed_ms: started.elapsed().as_millis(),
    };
    write(
        &out.join("record.json"),
        &(serde_json::to_string_pretty(&record).expect("record serializes") + "\n"),
    )?;
    write(&out.join("report.txt"), &render_report(&record))?;

    let failed = record.failed();
    if failed > 0 {
        return Err(CliError::Runtime(anyhow!(
            "{failed} of {} seed(s) failed; details in {}",
            record.seeds.len(),
            out.join("record.json").display()
        )));
    }
    Ok(record)
}

fn write_metrics_csv(
    path: &Path,
    run_id: &str,
    method: &str,
    rows: &[(String, Scores)],
    agg: Option<&Aggregate>,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(CSV_HEADER.split(','))?;
    let mut emit = |seed: &str, s: &Scores| {
        w.write_record([
            run_id.to_string(),
            seed.to_string(),
            method.to_string(),
            s.service.to_string(),
            s.ecology.to_string(),
            s.satisfaction.to_string(),
            fmt_opt(s.inclusion),
        ])
    };
    for (seed, s) in rows {
        emit(seed, s)?;
    }
    if let Some(a) = agg {
        emit("mean", &a.mean)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trajectory_csv(path: &Path, rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record([
        "run_id",
        "seed",
        "stage",
        "community_id",
        "service",
        "ecology",
        "satisfaction",
        "inclusion",
    ])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed rows of a metrics.csv, excluding the aggregate row.
pub fn read_metrics_csv(path: &Path) -> anyhow::Result<Vec<(String, Scores)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> anyhow::Result<Option<f64>> {
            let f = rec.get(i).unwrap_or("");
            if f.is_empty() {
                Ok(None)
            } else {
                Ok(Some(f.parse().with_context(|| format!("bad number {f:?}"))?))
            }
        };
        let scores = Scores {
            service: num(3)?.unwrap_or(f64::NAN),
            ecology: num(4)?.unwrap_or(f64::NAN),
            satisfaction: num(5)?.unwrap_or(f64::NAN),
            inclusion: num(6)?,
        };
        out.push((rec.get(1).unwrap_or("").to_string(), scores));
    }
    Ok(out)
}

fn render_report(record: &RunRecord) -> String {
    let c = &record.config;
    let mut s = String::new();
    let _ = writeln!(s, "run        {}", record.run_id);
    let _ = writeln!(s, "region     {} ({})", record.region_name, c.region.display());
    let _ = writeln!(s, "method     {}", c.method);
    if c.mode == Mode::Simulate {
        let _ = writeln!(
            s,
            "protocol   {} round(s), {} speakers per round, ablation {}",
            c.discussion.effective_rounds(),
            c.discussion.speakers_per_round,
            c.ablation.name()
        );
    }
    let _ = writeln!(s, "backend    {:?}", c.backend.kind);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>8}  {:>9}  {:>9}  {:>12}  {:>9}",
        "seed", "service", "ecology", "satisfaction", "inclusion"
    );
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for seed in &record.seeds {
        match (&seed.scores, &seed.error) {
            (Some(v), _) => {
                let _ = writeln!(
                    s,
                    "{:>8}  {:>9}  {:>9}  {:>12}  {:>9}",
                    seed.seed,
                    cell(Some(v.service)),
                    cell(Some(v.ecology)),
                    cell(Some(v.satisfaction)),
                    cell(v.inclusion)
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "{:>8}  FAILED: {e}", seed.seed);
            }
            _ => {}
        }
    }
    if let Some(a) = &record.aggregate {
        let pm = |m: Option<f64>, d: Option<f64>| match (m, d) {
            (Some(m), Some(d)) => format!("{m:.4}±{d:.4}"),
            _ => "-".into(),
        };
        let (m, d) = (a.mean.values(), a.std.values());
        let _ = writeln!(
            s,
            "{:>8}  {}  {}  {}  {}",
            "mean±sd",
            pm(m[0], d[0]),
            pm(m[1], d[1]),
            pm(m[2], d[2]),
            pm(m[3], d[3])
        );
    }
    if c.mode == Mode::Simulate {
        let _ = writeln!(s, "\nsatisfaction by stage (0 = initial plan):");
        for seed in record.seeds.iter().filter(|x| x.error.is_none()) {
            let stages: Vec<String> = seed
                .trajectory
                .iter()
                .map(|t| format!("{:.4}", t.scores.satisfaction))
                .collect();
            let _ = writeln!(s, "  seed {}: {}", seed.seed, stages.join(" -> "));
        }
    }
    let _ = writeln!(s, "\nelapsed {} ms", record.elapsed_ms);
    s
}

/// One simulate run per round count under `<out>/rounds-<n>`, then
/// `<out>/sweep.csv` with the mean scores per round count.
pub fn sweep_rounds(cfg: &RunConfig, rounds: &[u32]) -> Result<Vec<(u32, Aggregate)>, CliError> {
    let mut rows = Vec::new();
    for &n in rounds {
        let mut sub = cfg.clone();
        sub.discussion.rounds = n;
        sub.out = cfg.out.join(format!("rounds-{n}"));
        let record = execute(&sub)?;
        let agg = record
            .aggregate
            .ok_or_else(|| CliError::Runtime(anyhow!("no seed succeeded for {n} round(s)")))?;
        rows.push((n, agg));
    }
    let path = cfg.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)?;
    let mut emit = || -> anyhow::Result<()> {
        w.write_record(["rounds", "service", "ecology", "satisfaction", "inclusion"])?;
        for (n, a) in &rows {
            w.write_record([
                n.to_string(),
                a.mean.service.to_string(),
                a.mean.ecology.to_string(),
                a.mean.satisfaction.to_string(),
                fmt_opt(a.mean.inclusion),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    emit().map_err(CliError::Runtime)?;
    Ok(rows)
}
