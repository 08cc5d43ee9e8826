//! Data side of the student-success workbench.
//!
//! Loads the OULA CSV files, filters and labels registrations, engineers the
//! dynamic partial-grade feature at the 13 snapshot days, encodes feature
//! matrices, builds stratified folds, runs the PCA loading analysis and
//! constructs the registration graphs consumed by the graph models.

pub mod encode;
pub mod error;
pub mod folds;
pub mod grades;
pub mod graph;
pub mod ingest;
pub mod logit;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod synthetic;

pub use encode::{Encoder, Feature, FeatureCase, SnapshotDataset};
pub use error::{Error, Result};
pub use folds::FoldAssignment;
pub use grades::{snapshot_days, PassModelWeights, Snapshot, SNAPSHOT_DAYS};
pub use graph::{EdgeIndex, GraphStats, HeteroGraph, Split};
pub use ingest::{load_oula, AssessmentDef, AssessmentType, FinalResult, OulaTables, StudentInfoRow, SubmissionRow};
pub use matrix::Matrix;
pub use metrics::{compute_metrics, Metrics};
pub use pipeline::{prepare, Prepared};
pub use preprocess::{derive_label, preprocess, CourseCategory, Preprocessed, RegistrationRecord};
