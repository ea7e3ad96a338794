//! Across-story spread of style centroids, plain and with fixed-K centroids.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dims, StyleError};
use crate::numeric::{self, SdDivisor};
use crate::seed;
use crate::stats::{story_bootstrap_ci, BootstrapConfig, MetricEstimate};

/// Trace of the sample covariance (divisor n−1) of the centroid vectors.
pub fn across_story_variance<V: AsRef<[f64]>>(centroids: &[V]) -> Result<f64, StyleError> {
    let n = centroids.len();
    if n < 2 {
        return Err(StyleError::TooFewCentroids(n));
    }
    check_dims(&[centroids])?;
    let mean = numeric::mean_vector(centroids);
    let ss: f64 = centroids.iter().map(|c| numeric::sq_dist(c.as_ref(), &mean)).sum();
    Ok(ss / (n - 1) as f64)
}

/// `V_model / V_human`.
pub fn variance_ratio<V: AsRef<[f64]>>(model: &[V], human: &[V]) -> Result<f64, StyleError> {
    let vm = across_story_variance(model)?;
    let vh = across_story_variance(human)?;
    if vh == 0.0 {
        return Err(StyleError::ZeroHumanVariance);
    }
    Ok(vm / vh)
}

/// Story-bootstrap interval for `V_model / V_human`. Model centroids are
/// grouped by story and whole stories are resampled; the human variance is
/// held at its full-sample value.
pub fn variance_ratio_ci(
    model_by_story: &[Vec<Vec<f64>>],
    human_variance: f64,
    cfg: &BootstrapConfig,
) -> Result<MetricEstimate, StyleError> {
    if human_variance <= 0.0 {
        return Err(StyleError::ZeroHumanVariance);
    }
    let total: usize = model_by_story.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(StyleError::TooFewCentroids(total));
    }
    Ok(story_bootstrap_ci(
        model_by_story.len(),
        |idx| {
            let pooled: Vec<&[f64]> = idx
                .iter()
                .flat_map(|&i| model_by_story[i].iter().map(Vec::as_slice))
                .collect();
            across_story_variance(&pooled).map_or(f64::NAN, |v| v / human_variance)
        },
        cfg,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedKConfig {
    pub k: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for FixedKConfig {
    fn default() -> Self {
        FixedKConfig {
            k: 8,
            resamples: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedKEstimate {
    /// Mean over resamples of the across-story variance.
    pub variance: f64,
    /// Monte Carlo standard error of `variance`.
    pub mc_se: f64,
    pub resamples: usize,
}

/// Expected across-story variance when every centroid is the mean of `k`
/// sentences drawn with replacement from its continuation, estimated by
/// `resamples` Monte Carlo draws.
pub fn fixed_k_variance<V: AsRef<[f64]> + Sync>(
    continuations: &[Vec<V>],
    cfg: &FixedKConfig,
) -> Result<FixedKEstimate, StyleError> {
    if cfg.k == 0 || cfg.resamples == 0 {
        return Err(StyleError::InvalidConfig(
            "fixed-K needs k ≥ 1 and at least one resample".into(),
        ));
    }
    if continuations.len() < 2 {
        return Err(StyleError::TooFewCentroids(continuations.len()));
    }
    if continuations.iter().any(Vec::is_empty) {
        return Err(StyleError::InvalidConfig(
            "fixed-K continuation has no sentences".into(),
        ));
    }
    let dim = continuations[0][0].as_ref().len();
    let draws: Vec<f64> = (0..cfg.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive_indexed(cfg.seed, r as u64));
            let centroids: Vec<Vec<f64>> = continuations
                .iter()
                .map(|sents| {
                    let mut c = vec![0.0; dim];
                    for _ in 0..cfg.k {
                        let v = sents[rng.random_range(0..sents.len())].as_ref();
                        for (a, x) in c.iter_mut().zip(v) {
                            *a += x;
                        }
                    }
                    c.iter_mut().for_each(|a| *a /= cfg.k as f64);
                    c
                })
                .collect();
            across_story_variance(&centroids)
        })
        .collect::<Result<_, _>>()?;
    let mc_se = if draws.len() > 1 {
        numeric::sd(&draws, SdDivisor::Sample) / (draws.len() as f64).sqrt()
    } else {
        0.0
    };
    Ok(FixedKEstimate {
        variance: numeric::mean(&draws),
        mc_se,
        resamples: cfg.resamples,
    })
}

/// Fixed-K variance of `model` relative to the fixed-K human variance. The
/// two groups draw from separate streams derived from `cfg.seed`.
pub fn fixed_k_ratio<V: AsRef<[f64]> + Sync>(
    model: &[Vec<V>],
    human: &[Vec<V>],
    cfg: &FixedKConfig,
) -> Result<(f64, FixedKEstimate, FixedKEstimate), StyleError> {
    let m = fixed_k_variance(
        model,
        &FixedKConfig {
            seed: seed::derive(cfg.seed, "fixed_k/model"),
            ..*cfg
        },
    )?;
    let h = fixed_k_variance(
        human,
        &FixedKConfig {
            seed: seed::derive(cfg.seed, "fixed_k/human"),
            ..*cfg
        },
    )?;
    if h.variance == 0.0 {
        return Err(StyleError::ZeroHumanVariance);
    }
    Ok((m.variance / h.variance, m, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hand_examples() {
        assert_eq!(across_story_variance(&[vec![0.0], vec![2.0]]).unwrap(), 2.0);
        let same = vec![vec![1.0, 2.0]; 4];
        assert_eq!(across_story_variance(&same).unwrap(), 0.0);
        let human = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        assert_eq!(variance_ratio(&same, &human).unwrap(), 0.0);
        assert_eq!(variance_ratio(&human, &human).unwrap(), 1.0);
        assert_eq!(variance_ratio(&human, &same), Err(StyleError::ZeroHumanVariance));
        assert_eq!(across_story_variance(&[vec![1.0]]), Err(StyleError::TooFewCentroids(1)));
    }

    #[test]
    fn single_sentence_continuations_make_fixed_k_plain() {
        let conts: Vec<Vec<Vec<f64>>> = (0..10).map(|i| vec![vec![f64::from(i), 1.0 - f64::from(i)]]).collect();
        let plain: Vec<Vec<f64>> = conts.iter().map(|c| c[0].clone()).collect();
        let fk = fixed_k_variance(&conts, &FixedKConfig::default()).unwrap();
        let v = across_story_variance(&plain).unwrap();
        assert!((fk.variance - v).abs() < 1e-12);
        assert!(fk.mc_se < 1e-12);
    }

    #[test]
    fn zero_within_variance_keeps_plain_ratio() {
        let make = |scale: f64| -> Vec<Vec<Vec<f64>>> {
            (0..12)
                .map(|i| vec![vec![scale * f64::from(i), 0.5]; 3 + i as usize % 4])
                .collect()
        };
        let (model, human) = (make(0.5), make(1.0));
        let (ratio, _, _) = fixed_k_ratio(&model, &human, &FixedKConfig::default()).unwrap();
        let plain =
            |g: &[Vec<Vec<f64>>]| -> Vec<Vec<f64>> { g.iter().map(|c| crate::numeric::mean_vector(c)).collect() };
        let expected = variance_ratio(&plain(&model), &plain(&human)).unwrap();
        assert!((ratio - expected).abs() < 1e-12, "{ratio} vs {expected}");
    }

    /// With finitely many sentences per story the exact expectation is the
    /// plain variance plus the mean within-story (population) variance / K.
    #[test]
    fn matches_exact_with_replacement_expectation() {
        let mut rng = seed::rng(8);
        let conts: Vec<Vec<Vec<f64>>> = (0..40)
            .map(|_| {
                let center: f64 = StandardNormal.sample(&mut rng);
                let n = rng.random_range(2..12);
                (0..n)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        let f: f64 = StandardNormal.sample(&mut rng);
                        vec![center + e, 0.5 * f]
                    })
                    .collect()
            })
            .collect();
        let cfg = FixedKConfig {
            k: 8,
            resamples: 2000,
            seed: 3,
        };
        let fk = fixed_k_variance(&conts, &cfg).unwrap();
        let plain: Vec<Vec<f64>> = conts.iter().map(|c| crate::numeric::mean_vector(c)).collect();
        let within: f64 = conts
            .iter()
            .map(|c| {
                let m = crate::numeric::mean_vector(c);
                c.iter().map(|v| crate::numeric::sq_dist(v, &m)).sum::<f64>() / c.len() as f64
            })
            .sum::<f64>()
            / conts.len() as f64;
        let oracle = across_story_variance(&plain).unwrap() + within / 8.0;
        assert!(
            (fk.variance - oracle).abs() < 3.0 * fk.mc_se,
            "{} vs {oracle} (se {})",
            fk.variance,
            fk.mc_se
        );
    }

    #[test]
    fn ratio_ci_brackets_shrunk_model() {
        let mut rng = seed::rng(4);
        let human: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let model: Vec<Vec<Vec<f64>>> = (0..200)
            .map(|_| {
                vec![(0..4)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        0.5 * z
                    })
                    .collect()]
            })
            .collect();
        let vh = across_story_variance(&human).unwrap();
        let cfg = BootstrapConfig {
            replicates: 300,
            seed: 2,
            level: 0.95,
        };
        let est = variance_ratio_ci(&model, vh, &cfg).unwrap();
        assert!(est.covers(est.value));
        assert!(est.ci_high < 1.0);
        assert!((est.value - 0.25).abs() < 0.1, "{}", est.value);
    }
}
