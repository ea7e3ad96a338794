//! Thematic motion: consecutive-sentence jump sizes and their coefficient of
//! variation within a continuation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, SdDivisor};

#[derive(Debug, Error, PartialEq)]
pub enum ThemeError {
    #[error("trajectory has {0} sentence(s); at least 2 are needed for a jump")]
    TooFewSentences(usize),
    #[error("jump series has {0} jump(s); at least 2 are needed for a CV")]
    TooFewJumps(usize),
    #[error("all jumps are zero")]
    DegenerateTrajectory,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {index} has norm {norm}, expected unit norm")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("cosine distance undefined for zero vector at {0}")]
    ZeroVector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Theme,
    Style,
}

impl Facet {
    /// Dimension produced by the production encoders.
    pub fn default_dim(self) -> usize {
        match self {
            Facet::Theme => 3072,
            Facet::Style => 768,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Theme => "theme",
            Facet::Style => "style",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpMetric {
    L2,
    Cosine,
}

impl JumpMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpMetric::L2 => "l2",
            JumpMetric::Cosine => "cosine",
        }
    }
}

/// Per-sentence vectors of one continuation for one facet.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEmbedding {
    pub facet: Facet,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub unit_norm: bool,
}

impl TrajectoryEmbedding {
    pub fn new(facet: Facet, dim: usize, vectors: Vec<Vec<f64>>, unit_norm: bool) -> Result<Self, ThemeError> {
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(ThemeError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: v.len(),
                });
            }
            if unit_norm {
                let norm = numeric::norm(v);
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(ThemeError::NotUnitNorm { index, norm });
                }
            }
        }
        Ok(TrajectoryEmbedding {
            facet,
            dim,
            vectors,
            unit_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Distances between consecutive sentence vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSeries {
    pub distances: Vec<f64>,
    pub metric: JumpMetric,
}

/// `1 - a.b / (|a||b|)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = numeric::norm(a);
    let nb = numeric::norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((1.0 - numeric::dot(a, b) / (na * nb)).max(0.0))
}

pub fn jump_series(emb: &TrajectoryEmbedding, metric: JumpMetric) -> Result<JumpSeries, ThemeError> {
    jump_series_of(&emb.vectors, metric)
}

pub fn jump_series_of<V: AsRef<[f64]>>(vectors: &[V], metric: JumpMetric) -> Result<JumpSeries, ThemeError> {
    if vectors.len() < 2 {
        return Err(ThemeError::TooFewSentences(vectors.len()));
    }
    let distances = vectors
        .windows(2)
        .enumerate()
        .map(|(t, w)| {
            let (prev, cur) = (w[0].as_ref(), w[1].as_ref());
            match metric {
                JumpMetric::L2 => Ok(numeric::l2_dist(cur, prev)),
                JumpMetric::Cosine => cosine_distance(cur, prev).ok_or(ThemeError::ZeroVector(t)),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JumpSeries { distances, metric })
}

/// sd(jumps) / mean(jumps).
pub fn jump_cv(series: &JumpSeries, divisor: SdDivisor) -> Result<f64, ThemeError> {
    let d = &series.distances;
    if d.len() < 2 {
        return Err(ThemeError::TooFewJumps(d.len()));
    }
    let m = numeric::mean(d);
    if m == 0.0 {
        return Err(ThemeError::DegenerateTrajectory);
    }
    Ok(numeric::sd(d, divisor) / m)
}
