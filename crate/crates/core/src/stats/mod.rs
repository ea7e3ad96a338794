//! Uncertainty and inference: bootstrap intervals, length residualization,
//! random-intercept mixed models, Holm correction and range reduction.

mod bootstrap;
mod holm;
mod lmm;
mod range;
mod residualize;

pub use bootstrap::{
    component_bound_ci, percentile_interval, resample_indices, sentence_bootstrap_ci, story_bootstrap_ci,
    story_replicates, BootstrapConfig, CiMethod, MetricEstimate,
};
pub use holm::{holm_bonferroni, HolmResult};
pub use lmm::{
    lmm_fit, two_sided_p, Covariate, Factor, FixedEffect, LmmFit, LmmMethod, LmmObservation, LmmOptions, LmmSpec, Term,
};
pub use range::{grouped_mean, range_reduction, DomainUnits, RangeReduction, Weighting};
pub use residualize::{residualize, ResidualizedMetric};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("estimate has no interval to combine")]
    MissingInterval,
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("all lengths are equal; slope is undefined")]
    ConstantLength,
    #[error("{0} observations; at least 3 are needed")]
    TooFewObservations(usize),
    #[error("{0} domain(s); at least 2 are needed for a range")]
    TooFewDomains(usize),
    #[error("{0} random-intercept group(s); at least 2 are needed")]
    TooFewGroups(usize),
    #[error("rank-deficient fixed-effect design: {0}")]
    RankDeficientDesign(String),
    #[error("level {0:?} is not in the configured stage order")]
    UnknownLevel(String),
    #[error("response contains non-finite values")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
