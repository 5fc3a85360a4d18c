//! Participatory land-use planning simulator.
//!
//! A [`region::Region`] is partitioned into areas; planners assign a land
//! use to every vacant area under per-type minimum quotas; synthesized
//! residents discuss the plan community by community in a fishbowl format
//! and a planner revises it; [`metrics`] scores plans on service access,
//! green coverage, and need satisfaction.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discussion;
pub mod llm;
pub mod metrics;
pub mod planners;
pub mod population;
pub mod region;
pub mod synth;

pub use discussion::{run_full_pipeline, Ablation, DiscussionConfig, PipelineOutput, Transcript};
pub use llm::{BackendConfig, BackendKind, ChatBackend};
pub use metrics::{MetricsConfig, MetricsReport};
pub use planners::{PlannerConfig, PlannerKind};
pub use population::{DemographicSpec, Population, Resident};
pub use region::{Area, LandUse, Plan, Point, Polygon, Region};
