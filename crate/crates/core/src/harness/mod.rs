//! Experiment plumbing: data, metrics, cross-validation, timing.

pub mod bench;
pub mod cv;
pub mod data;
pub mod metrics;
pub mod results;

pub use bench::{timing_benchmark, BenchSize, StructureClass, Timing};
pub use cv::{cross_validate, fit_and_score, fold_partition, CvOutcome, CvPlan, Method, ModelSpec};
pub use data::{gen_bilinear, load_csv, save_csv, Dataset, Layout};
pub use metrics::{ni, nmse};
pub use results::ResultRow;
