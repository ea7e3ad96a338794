//! Fraction of model points that fall inside the human point cloud.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pca::{pca_view, Reference, Standardization};
use super::{check_dims, StyleError};
use crate::numeric::{self, quantile_sorted};

/// Which human-neighbor distance a model point is scored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborQuery {
    /// Distance to the nearest human point.
    #[default]
    Nearest,
    /// Distance to the `neighbor_k`-th nearest human point, matching the
    /// statistic used to calibrate the radius.
    KthNearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub pca_dims: usize,
    pub neighbor_k: usize,
    pub radius_quantile: f64,
    /// Z-score by human per-dimension mean and sd before PCA.
    pub standardize: bool,
    pub query: NeighborQuery,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig {
            pca_dims: 50,
            neighbor_k: 5,
            radius_quantile: 0.95,
            standardize: true,
            query: NeighborQuery::Nearest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldResult {
    pub precision: f64,
    pub epsilon: f64,
    pub n_human: usize,
    pub n_model: usize,
    /// Dimension of the space the distances were measured in.
    pub dims: usize,
}

/// The `k` smallest values of `dists`, ascending.
fn k_smallest(mut dists: Vec<f64>, k: usize) -> Vec<f64> {
    if dists.len() > k {
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        dists.truncate(k);
    }
    dists.sort_by(f64::total_cmp);
    dists
}

/// In-human-manifold precision of `model` against `human`.
///
/// Both sets are optionally standardized by the human moments and projected
/// onto at most `pca_dims` principal components fit on the human set. The
/// radius ε is the `radius_quantile` quantile of each human point's distance
/// to its `neighbor_k`-th nearest other human point.
pub fn manifold_precision<V: AsRef<[f64]>>(
    human: &[V],
    model: &[V],
    cfg: &ManifoldConfig,
) -> Result<ManifoldResult, StyleError> {
    if cfg.neighbor_k == 0 || !(cfg.radius_quantile > 0.0 && cfg.radius_quantile < 1.0) {
        return Err(StyleError::InvalidConfig(format!(
            "neighbor_k {} / radius quantile {}",
            cfg.neighbor_k, cfg.radius_quantile
        )));
    }
    if human.len() <= cfg.neighbor_k {
        return Err(StyleError::TooFewHumanPoints {
            found: human.len(),
            needed: cfg.neighbor_k,
        });
    }
    if model.is_empty() {
        return Err(StyleError::TooFewPoints {
            group: "model group",
            found: 0,
            needed: 1,
        });
    }
    let dim = check_dims(&[human, model])?;

    let scaled = |v: &V| -> Vec<f64> { v.as_ref().to_vec() };
    let (mut h, mut m): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
        (human.iter().map(scaled).collect(), model.iter().map(scaled).collect());
    if cfg.standardize {
        let r = Reference::from_points(&h);
        h = h.iter().map(|x| r.apply(x)).collect();
        m = m.iter().map(|x| r.apply(x)).collect();
    }
    let target = cfg.pca_dims.min(human.len() - 1);
    let mut dims = dim;
    if target > 0 && target < dim {
        let view = pca_view(&h, target, Standardization::None)?;
        m = m.iter().map(|x| view.model.transform(x)).collect();
        h = view.projection;
        dims = target;
    }

    let k = cfg.neighbor_k;
    let mut kth: Vec<f64> = (0..h.len())
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = h
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, y)| numeric::l2_dist(&h[i], y))
                .collect();
            k_smallest(d, k)[k - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    let epsilon = quantile_sorted(&kth, cfg.radius_quantile);

    let rank = match cfg.query {
        NeighborQuery::Nearest => 1,
        NeighborQuery::KthNearest => k,
    };
    let inside = m
        .par_iter()
        .filter(|x| {
            let d: Vec<f64> = h.iter().map(|y| numeric::l2_dist(x, y)).collect();
            k_smallest(d, rank)[rank - 1] <= epsilon
        })
        .count();
    Ok(ManifoldResult {
        precision: inside as f64 / m.len() as f64,
        epsilon,
        n_human: h.len(),
        n_model: m.len(),
        dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect()
    }

    #[test]
    fn identical_sets_are_fully_inside() {
        let mut rng = seed::rng(1);
        let h = cloud(&mut rng, 200, 10);
        let r = manifold_precision(&h, &h, &ManifoldConfig::default()).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!(r.epsilon > 0.0);
    }

    #[test]
    fn far_shift_is_fully_outside() {
        let mut rng = seed::rng(2);
        let h = cloud(&mut rng, 200, 10);
        let m: Vec<Vec<f64>> = cloud(&mut rng, 100, 10)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x + 50.0).collect())
            .collect();
        let r = manifold_precision(&h, &m, &ManifoldConfig::default()).unwrap();
        assert_eq!(r.precision, 0.0);
    }

    #[test]
    fn rotation_invariant_without_standardization() {
        let mut rng = seed::rng(3);
        let h = cloud(&mut rng, 150, 3);
        let m: Vec<Vec<f64>> = cloud(&mut rng, 80, 3)
            .into_iter()
            .map(|v| v.into_iter().map(|x| 1.2 * x + 0.3).collect())
            .collect();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let rot = |v: &Vec<f64>| vec![c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
        let cfg = ManifoldConfig {
            standardize: false,
            pca_dims: 3,
            ..ManifoldConfig::default()
        };
        let a = manifold_precision(&h, &m, &cfg).unwrap();
        let hr: Vec<Vec<f64>> = h.iter().map(rot).collect();
        let mr: Vec<Vec<f64>> = m.iter().map(rot).collect();
        let b = manifold_precision(&hr, &mr, &cfg).unwrap();
        assert_eq!(a.precision, b.precision);
        assert!((a.epsilon - b.epsilon).abs() < 1e-9);
    }

    #[test]
    fn kth_query_calibrates_to_quantile() {
        let mut rng = seed::rng(4);
        let pts = cloud(&mut rng, 2000, 8);
        let (h, m) = pts.split_at(1000);
        let cfg = ManifoldConfig {
            query: NeighborQuery::KthNearest,
            ..ManifoldConfig::default()
        };
        let r = manifold_precision(h, m, &cfg).unwrap();
        assert!((r.precision - 0.95).abs() < 0.03, "{}", r.precision);
    }

    #[test]
    fn needs_more_than_k_humans() {
        let h = vec![vec![0.0, 1.0]; 5];
        assert_eq!(
            manifold_precision(&h, &h, &ManifoldConfig::default()),
            Err(StyleError::TooFewHumanPoints { found: 5, needed: 5 })
        );
    }
}
