use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::numeric::mean;

/// A metric with its linear dependence on realized length removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualizedMetric {
    pub original: Vec<f64>,
    pub lengths: Vec<f64>,
    pub intercept: f64,
    pub slope: f64,
    /// OLS residual plus the original mean, so the metric keeps its scale.
    pub residualized: Vec<f64>,
}

/// Fit `q = a + b T` by least squares and return `residual + mean(q)`.
pub fn residualize(q: &[f64], lengths: &[f64]) -> Result<ResidualizedMetric, StatsError> {
    if q.len() != lengths.len() {
        return Err(StatsError::InvalidArgument(format!(
            "{} values but {} lengths",
            q.len(),
            lengths.len()
        )));
    }
    if q.len() < 3 {
        return Err(StatsError::TooFewObservations(q.len()));
    }
    let q_bar = mean(q);
    let t_bar = mean(lengths);
    let sxx: f64 = lengths.iter().map(|t| (t - t_bar) * (t - t_bar)).sum();
    if sxx == 0.0 {
        return Err(StatsError::ConstantLength);
    }
    let sxy: f64 = lengths.iter().zip(q).map(|(t, y)| (t - t_bar) * (y - q_bar)).sum();
    let slope = sxy / sxx;
    let intercept = q_bar - slope * t_bar;
    let residualized = lengths
        .iter()
        .zip(q)
        .map(|(t, y)| (y - q_bar) - slope * (t - t_bar) + q_bar)
        .collect();
    Ok(ResidualizedMetric {
        original: q.to_vec(),
        lengths: lengths.to_vec(),
        intercept,
        slope,
        residualized,
    })
}
