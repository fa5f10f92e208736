//! Pipeline orchestration across the four ablation configurations.

pub mod ablation;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ConfigId, PipelineConfig, Settings};
pub use pipeline::{run_pipeline, CaseOutcome, Evaluation, Toolkit};
