//! Percentile bootstrap over stories or over sentence vectors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::numeric::quantile_sorted;
use crate::seed;

/// How a [`MetricEstimate`]'s interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    StoryBootstrap,
    SentenceBootstrap,
    ComponentBound,
    PointOnly,
}

impl CiMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CiMethod::StoryBootstrap => "story_bootstrap",
            CiMethod::SentenceBootstrap => "sentence_bootstrap",
            CiMethod::ComponentBound => "component_bound",
            CiMethod::PointOnly => "point_only",
        }
    }
}

/// A scalar metric with its interval and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_units: usize,
    pub method: CiMethod,
    pub replicates: usize,
    pub seed: Option<u64>,
}

impl MetricEstimate {
    pub fn point(value: f64, n_units: usize) -> Self {
        MetricEstimate {
            value,
            ci_low: value,
            ci_high: value,
            n_units,
            method: CiMethod::PointOnly,
            replicates: 0,
            seed: None,
        }
    }

    pub fn has_interval(&self) -> bool {
        self.method != CiMethod::PointOnly
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    /// Whether `x` lies inside the closed interval.
    pub fn covers(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// Apply a monotone increasing map to value and bounds.
    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        MetricEstimate {
            value: f(self.value),
            ci_low: f(self.ci_low),
            ci_high: f(self.ci_high),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 2000,
            seed: 0,
            level: 0.95,
        }
    }
}

impl BootstrapConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        BootstrapConfig { seed, ..self }
    }
}

/// Percentile interval of finite replicate values.
pub fn percentile_interval(replicates: &[f64], level: f64) -> Option<(f64, f64)> {
    let mut finite: Vec<f64> = replicates.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    finite.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Some((quantile_sorted(&finite, tail), quantile_sorted(&finite, 1.0 - tail)))
}

/// Draw `n` indices uniformly with replacement from `0..n`.
pub fn resample_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Replicate statistics for a story-level bootstrap. Replicate `b` uses its
/// own stream derived from `(seed, b)`.
pub fn story_replicates<F>(n_stories: usize, statistic: F, cfg: &BootstrapConfig) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive_indexed(cfg.seed, b as u64));
            statistic(&resample_indices(&mut rng, n_stories))
        })
        .collect()
}

fn finish(value: f64, n_units: usize, replicates: &[f64], cfg: &BootstrapConfig, method: CiMethod) -> MetricEstimate {
    match percentile_interval(replicates, cfg.level) {
        Some((lo, hi)) => MetricEstimate {
            value,
            ci_low: lo,
            ci_high: hi,
            n_units,
            method,
            replicates: cfg.replicates,
            seed: Some(cfg.seed),
        },
        None => MetricEstimate::point(value, n_units),
    }
}

/// Story-level percentile bootstrap. `statistic` receives story indices (with
/// repetition) and must accept the identity resample `0..n_stories`, which
/// yields the point estimate.
pub fn story_bootstrap_ci<F>(n_stories: usize, statistic: F, cfg: &BootstrapConfig) -> MetricEstimate
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let identity: Vec<usize> = (0..n_stories).collect();
    let value = statistic(&identity);
    if cfg.replicates == 0 {
        return MetricEstimate::point(value, n_stories);
    }
    if n_stories <= 1 {
        log::warn!("story bootstrap over {n_stories} story; interval is degenerate");
        return MetricEstimate {
            method: CiMethod::StoryBootstrap,
            replicates: cfg.replicates,
            seed: Some(cfg.seed),
            ..MetricEstimate::point(value, n_stories)
        };
    }
    let reps = story_replicates(n_stories, &statistic, cfg);
    finish(value, n_stories, &reps, cfg, CiMethod::StoryBootstrap)
}

/// Sentence-vector bootstrap: each group of sizes `group_sizes` is resampled
/// independently with replacement. `statistic` receives one index list per
/// group.
pub fn sentence_bootstrap_ci<F>(group_sizes: &[usize], statistic: F, cfg: &BootstrapConfig) -> MetricEstimate
where
    F: Fn(&[Vec<usize>]) -> f64 + Sync,
{
    let identity: Vec<Vec<usize>> = group_sizes.iter().map(|&n| (0..n).collect()).collect();
    let value = statistic(&identity);
    let n_units = group_sizes.iter().sum();
    if cfg.replicates == 0 {
        return MetricEstimate::point(value, n_units);
    }
    let reps: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive_indexed(cfg.seed, b as u64));
            let idx: Vec<Vec<usize>> = group_sizes.iter().map(|&n| resample_indices(&mut rng, n)).collect();
            statistic(&idx)
        })
        .collect();
    finish(value, n_units, &reps, cfg, CiMethod::SentenceBootstrap)
}

/// Sum of two estimates with bounds added component-wise.
pub fn component_bound_ci(a: &MetricEstimate, b: &MetricEstimate) -> Result<MetricEstimate, StatsError> {
    if !a.has_interval() || !b.has_interval() {
        return Err(StatsError::MissingInterval);
    }
    Ok(MetricEstimate {
        value: a.value + b.value,
        ci_low: a.ci_low + b.ci_low,
        ci_high: a.ci_high + b.ci_high,
        n_units: a.n_units.max(b.n_units),
        method: CiMethod::ComponentBound,
        replicates: a.replicates.max(b.replicates),
        seed: a.seed.or(b.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean;

    fn mean_of(values: &[f64]) -> impl Fn(&[usize]) -> f64 + Sync + '_ {
        move |idx: &[usize]| idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    }

    #[test]
    fn single_story_is_degenerate() {
        let v = [0.7];
        let est = story_bootstrap_ci(1, mean_of(&v), &BootstrapConfig::default());
        assert_eq!((est.ci_low, est.value, est.ci_high), (0.7, 0.7, 0.7));
        assert_eq!(est.method, CiMethod::StoryBootstrap);
    }

    #[test]
    fn zero_replicates_is_point_only() {
        let v = [0.1, 0.5, 0.9];
        let cfg = BootstrapConfig {
            replicates: 0,
            ..Default::default()
        };
        let est = story_bootstrap_ci(3, mean_of(&v), &cfg);
        assert_eq!(est.method, CiMethod::PointOnly);
        assert_eq!((est.ci_low, est.ci_high), (est.value, est.value));
        assert!(est.value.is_finite());
    }

    #[test]
    fn bootstrap_is_deterministic_under_seed() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = BootstrapConfig {
            replicates: 500,
            seed: 99,
            level: 0.95,
        };
        let a = story_bootstrap_ci(v.len(), mean_of(&v), &cfg);
        let b = story_bootstrap_ci(v.len(), mean_of(&v), &cfg);
        assert_eq!(a, b);
        assert!(a.ci_low <= a.value && a.value <= a.ci_high);
        assert!((a.value - mean(&v)).abs() < 1e-15);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| story_bootstrap_ci(v.len(), mean_of(&v), &cfg));
        assert_eq!(a, c);
    }

    #[test]
    fn identical_sentences_give_zero_width() {
        let v = [0.3; 20];
        let est = sentence_bootstrap_ci(
            &[20],
            |idx: &[Vec<usize>]| idx[0].iter().map(|&i| v[i]).sum::<f64>() / 20.0,
            &BootstrapConfig {
                replicates: 200,
                seed: 1,
                level: 0.95,
            },
        );
        assert_eq!(est.width(), 0.0);
        assert_eq!(est.method, CiMethod::SentenceBootstrap);
    }

    #[test]
    fn component_bound_examples() {
        let make = |v, lo, hi| MetricEstimate {
            value: v,
            ci_low: lo,
            ci_high: hi,
            n_units: 10,
            method: CiMethod::StoryBootstrap,
            replicates: 100,
            seed: Some(1),
        };
        let s = component_bound_ci(&make(0.21, 0.206, 0.214), &make(0.20, 0.196, 0.204)).unwrap();
        assert!((s.value - 0.41).abs() < 1e-15);
        assert!((s.ci_low - 0.402).abs() < 1e-15);
        assert!((s.ci_high - 0.418).abs() < 1e-15);
        assert_eq!(s.method, CiMethod::ComponentBound);

        let z = component_bound_ci(&make(0.1, 0.1, 0.1), &make(0.2, 0.2, 0.2)).unwrap();
        assert_eq!(z.width(), 0.0);

        assert_eq!(
            component_bound_ci(&make(0.1, 0.0, 0.2), &MetricEstimate::point(0.3, 1)),
            Err(StatsError::MissingInterval)
        );
    }
}
