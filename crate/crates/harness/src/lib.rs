//! Experiment harness: the cross-validated sweep over the nine baselines and
//! the two graph models, the append-only results store it resumes from, and
//! the tables and figures derived from that store.

pub mod artifacts;
pub mod config;
mod error;
pub mod grid;
pub mod plots;
pub mod report;
pub mod results;
pub mod sweep;

pub use config::{ModelId, RunConfig, TrainSettings};
pub use error::{Error, Result};
pub use grid::{grid_search, Grid, GridPoint, PointEval, TuningOutcome};
pub use results::{Cell, CellKey, Metric, ResultRow, ResultsTable, ResultsWriter, RunKey, RunMetrics};
pub use studentgraph_core::{compute_metrics, Metrics};
pub use sweep::{plan, run_seed, run_sweep, run_sweep_with, Job, Workbench};
