//! Linguistic diversity: distance to the human style distribution and
//! across-story spread of per-continuation style centroids.

mod centroid;
mod manifold;
mod mmd;
mod pca;
mod variance;

pub use centroid::{centroid_of, style_centroids, StyleCentroid};
pub use manifold::{manifold_precision, ManifoldConfig, ManifoldResult, NeighborQuery};
pub use mmd::{
    kernel_matrix, median_bandwidth, mmd2_brute_force, mmd2_from_kernel, mmd2_unbiased, mmd2_with_ci, subsample,
    KernelConfig, MmdEstimate,
};
pub use pca::{pca_view, PcaModel, PcaView, Reference, Standardization};
pub use variance::{
    across_story_variance, fixed_k_ratio, fixed_k_variance, variance_ratio, variance_ratio_ci, FixedKConfig,
    FixedKEstimate,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StyleError {
    #[error("missing style embedding: {0}")]
    MissingEmbedding(String),
    #[error("all pairwise distances are zero; bandwidth is undefined")]
    DegenerateSample,
    #[error("{group} has {found} point(s) after subsampling; at least {needed} are needed")]
    TooFewPoints {
        group: &'static str,
        found: usize,
        needed: usize,
    },
    #[error("{0} centroid(s); at least 2 are needed for a variance")]
    TooFewCentroids(usize),
    #[error("human across-story variance is zero")]
    ZeroHumanVariance,
    #[error("{found} human point(s); more than {needed} are needed")]
    TooFewHumanPoints { found: usize, needed: usize },
    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no cosine distance")]
    ZeroVector,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn check_dims<V: AsRef<[f64]>>(groups: &[&[V]]) -> Result<usize, StyleError> {
    let dim = groups.iter().find_map(|g| g.first()).map_or(0, |v| v.as_ref().len());
    for g in groups {
        if let Some(v) = g.iter().find(|v| v.as_ref().len() != dim) {
            return Err(StyleError::DimensionMismatch {
                expected: dim,
                found: v.as_ref().len(),
            });
        }
    }
    Ok(dim)
}
