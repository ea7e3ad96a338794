//! Cross-domain range of group means and its shrinkage between two endpoints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{percentile_interval, resample_indices, BootstrapConfig, CiMethod, MetricEstimate};
use super::StatsError;
use crate::seed;

/// How continuation-level values are pooled into a group mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every continuation counts once.
    #[default]
    Continuation,
    /// Every story counts once (mean of story means).
    Story,
}

/// Mean of the values of the stories selected by `idx` (repetition allowed).
pub fn grouped_mean(stories: &[Vec<f64>], idx: &[usize], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Continuation => {
            let (mut sum, mut n) = (0.0, 0usize);
            for &i in idx {
                sum += stories[i].iter().sum::<f64>();
                n += stories[i].len();
            }
            sum / n as f64
        }
        Weighting::Story => {
            let mut sum = 0.0;
            for &i in idx {
                sum += stories[i].iter().sum::<f64>() / stories[i].len() as f64;
            }
            sum / idx.len() as f64
        }
    }
}

/// Continuation values of one domain at one endpoint, grouped by story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainUnits {
    pub domain: String,
    pub stories: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeReduction {
    pub means_a: Vec<(String, f64)>,
    pub means_b: Vec<(String, f64)>,
    pub range_a: MetricEstimate,
    pub range_b: MetricEstimate,
    /// `1 - range_b / range_a`; `None` when `range_a` is zero and `range_b`
    /// is not.
    pub reduction: Option<f64>,
}

fn range_of(means: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
    hi - lo
}

fn endpoint_range(
    domains: &[DomainUnits],
    weighting: Weighting,
    cfg: &BootstrapConfig,
    label: &str,
) -> (Vec<(String, f64)>, MetricEstimate) {
    let means: Vec<(String, f64)> = domains
        .iter()
        .map(|d| {
            let idx: Vec<usize> = (0..d.stories.len()).collect();
            (d.domain.clone(), grouped_mean(&d.stories, &idx, weighting))
        })
        .collect();
    let value = range_of(means.iter().map(|(_, m)| *m));
    let n_units = domains.iter().map(|d| d.stories.len()).sum();
    if cfg.replicates == 0 {
        return (means, MetricEstimate::point(value, n_units));
    }
    let stream = seed::derive(cfg.seed, label);
    let reps: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive_indexed(stream, b as u64));
            range_of(domains.iter().map(|d| {
                let idx = resample_indices(&mut rng, d.stories.len());
                grouped_mean(&d.stories, &idx, weighting)
            }))
        })
        .collect();
    let (lo, hi) = percentile_interval(&reps, cfg.level).unwrap_or((value, value));
    (
        means,
        MetricEstimate {
            value,
            ci_low: lo,
            ci_high: hi,
            n_units,
            method: CiMethod::StoryBootstrap,
            replicates: cfg.replicates,
            seed: Some(cfg.seed),
        },
    )
}

/// Range of domain means at two endpoints with story-bootstrap intervals;
/// stories are resampled within each domain and endpoint.
pub fn range_reduction(
    endpoint_a: &[DomainUnits],
    endpoint_b: &[DomainUnits],
    weighting: Weighting,
    cfg: &BootstrapConfig,
) -> Result<RangeReduction, StatsError> {
    for ep in [endpoint_a, endpoint_b] {
        if ep.len() < 2 {
            return Err(StatsError::TooFewDomains(ep.len()));
        }
        if let Some(d) = ep
            .iter()
            .find(|d| d.stories.is_empty() || d.stories.iter().any(Vec::is_empty))
        {
            return Err(StatsError::InvalidArgument(format!(
                "domain {} has an empty story group",
                d.domain
            )));
        }
    }
    let (means_a, range_a) = endpoint_range(endpoint_a, weighting, cfg, "endpoint_a");
    let (means_b, range_b) = endpoint_range(endpoint_b, weighting, cfg, "endpoint_b");
    let reduction = if range_a.value > 0.0 {
        Some(1.0 - range_b.value / range_a.value)
    } else if range_b.value == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(RangeReduction {
        means_a,
        means_b,
        range_a,
        range_b,
        reduction,
    })
}
