//! End-to-end analysis: configuration, per-continuation metrics, group
//! aggregation with uncertainty, and table emission.

mod aggregate;
mod analyze;
mod config;
mod emit;
mod metrics;

pub use aggregate::{aggregate, ExclusionReason, GroupAggregate};
pub use analyze::{analyze, load_inputs, run, RunInputs};
pub use config::{
    BootstrapSettings, FixedKSettings, Inputs, LmmModel, LmmSettings, ManifoldSettings, Metrics, MmdSettings,
    PcaSettings, RunConfig, ThemeSettings,
};
pub use emit::{
    emit, format_p, render_markdown, EstimateRow, EstimateTable, ExclusionRow, LmmRow, Manifest, PcaOutput, PcaPoint,
    Report, Scale, TABLE_IDS,
};
pub use metrics::{continuation_metrics, AffectSummary, ContinuationMetrics};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::formats::FormatError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("inputs disagree: {0}")]
    Input(String),
    #[error("group {group} has no usable continuations ({})", aggregate::describe(.exclusions))]
    EmptyGroup {
        group: String,
        exclusions: BTreeMap<ExclusionReason, usize>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status: 1 for configuration problems, 2 for data and
    /// I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}
