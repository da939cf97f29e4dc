//! Pipeline orchestration, configuration and report emission behind the
//! `lmface` command.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::CliError;
pub use manifest::RunManifest;
pub use pipeline::{run_pipeline, Pipeline, RunSummary, Target};
pub use report::{export_report, Format, Report};
