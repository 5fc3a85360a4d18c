//! Run configuration assembled from flags, validated before any work.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use parplan::discussion::{Ablation, DiscussionConfig};
use parplan::llm::{BackendConfig, BackendKind};
use parplan::planners::{PlannerConfig, PlannerKind};

use crate::run::Mode;
use crate::{CliError, RunArgs};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Name of the full pipeline whose initial plan comes from the planner agent.
pub const PARTICIPATORY: &str = "participatory";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub region: PathBuf,
    pub demographics: Option<PathBuf>,
    pub residents: Option<u32>,
    /// A planner name, or "participatory".
    pub method: String,
    pub ablation: Ablation,
    pub backend: BackendConfig,
    pub record: Option<PathBuf>,
    pub discussion: DiscussionConfig,
    pub planner: PlannerConfig,
    pub seeds: Vec<u64>,
    pub parallel_seeds: bool,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs, mode: Mode, ablation: Ablation) -> Result<Self, CliError> {
        let usage = CliError::Usage;
        let method = match (&args.method, mode) {
            (Some(m), _) => m.trim().to_ascii_lowercase(),
            (None, Mode::Plan) => PlannerKind::Gsca.name().to_string(),
            (None, Mode::Simulate) => PARTICIPATORY.to_string(),
        };
        if !(method == PARTICIPATORY && mode == Mode::Simulate) {
            method.parse::<PlannerKind>().map_err(|e| usage(e.to_string()))?;
        }

        let mut backend = match &args.backend_config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("reading backend config {}: {e}", path.display())))?;
                serde_json::from_str::<BackendConfig>(&text)
                    .map_err(|e| usage(format!("backend config {}: {e}", path.display())))?
            }
            None => BackendConfig::default(),
        };
        backend.kind = match args.backend.trim().to_ascii_lowercase().as_str() {
            "rule" | "rule-based" => BackendKind::RuleBased,
            "scripted" => BackendKind::Scripted,
            "remote" => BackendKind::Remote,
            other => return Err(usage(format!("unknown backend {other:?} (expected rule, scripted or remote)"))),
        };
        if args.transcript.is_some() {
            backend.transcript = args.transcript.clone();
        }
        backend.verbose |= args.verbose;
        backend.validate().map_err(|e| usage(e.to_string()))?;
        if args.parallel_seeds && backend.kind == BackendKind::Scripted {
            return Err(usage("--parallel-seeds cannot be combined with a scripted backend".into()));
        }

        let mut discussion = DiscussionConfig::default();
        if let Some(n) = args.rounds {
            discussion.rounds = n;
        }
        if let Some(m) = args.speakers {
            discussion.speakers_per_round = m;
        }
        discussion.ablation = ablation;
        discussion.validate().map_err(|e| usage(e.to_string()))?;
        if args.residents == Some(0) {
            return Err(usage("--residents must be positive".into()));
        }

        Ok(Self {
            mode,
            region: args.region.clone(),
            demographics: args.demographics.clone(),
            residents: args.residents,
            method,
            ablation,
            backend,
            record: args.record.clone(),
            discussion,
            planner: PlannerConfig::default(),
            seeds: parse_seeds(&args.seeds)?,
            parallel_seeds: args.parallel_seeds,
            out: args.out.clone(),
        })
    }

    /// Initial planner for this run.
    pub fn planner_kind(&self) -> PlannerKind {
        if self.method == PARTICIPATORY {
            PlannerKind::Llm
        } else {
            self.method.parse().expect("validated")
        }
    }

    /// Stable label for tables: region file stem, method, and ablation.
    pub fn run_id(&self) -> String {
        let stem = self.region.file_stem().map_or("region".into(), |s| s.to_string_lossy().into_owned());
        match self.ablation {
            Ablation::None => format!("{stem}.{}", self.method),
            a => format!("{stem}.{}.{}", self.method, a.name()),
        }
    }
}

/// Parses "1,2,7", "1-5" or a mix; duplicates are dropped, order kept.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = |t: &str| CliError::Usage(format!("invalid seed list {text:?} at {t:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once('-').or_else(|| part.split_once(".."));
        match range {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad(part))?;
                if b < a {
                    return Err(bad(part));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    seeds.retain(|s| seen.insert(*s));
    if seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    Ok(seeds)
}

/// Round counts for a sweep; every value must be at least 1.
pub fn parse_rounds(text: &str) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let n: u32 = part
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid round count {part:?}")))?;
        if n == 0 {
            return Err(CliError::Usage("round counts must be at least 1".into()));
        }
        out.push(n);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no round counts given".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1-5").unwrap(), DEFAULT_SEEDS);
        assert_eq!(parse_seeds("3, 1,3,9").unwrap(), vec![3, 1, 9]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("5-1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn round_lists() {
        assert_eq!(parse_rounds("1,2,3,4").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_rounds("0,1").is_err());
    }
}
