//! Experiment driver: runs optimizer/selector combinations over objectives
//! and writes metrics, projector logs, checkpoints and summaries.

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod error;
pub mod run;

pub use compare::{checkpoint_diff, compare_runs, Comparison, ComparisonRow};
pub use config::{ObjectiveSpec, RunConfig};
pub use error::{HarnessError, Result};
pub use run::{resume_experiment, run_experiment, summarize, RunOutcome, RunSummary};
