//! Principal components via eigendecomposition of the explicit covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_dims, StyleError};
use crate::numeric;

/// Per-dimension location and scale used to standardize inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub mean: Vec<f64>,
    /// Sample standard deviations; zero-variance dimensions carry 1 so they
    /// are centered but not scaled.
    pub sd: Vec<f64>,
}

impl Reference {
    pub fn from_points<V: AsRef<[f64]>>(points: &[V]) -> Self {
        let mean = numeric::mean_vector(points);
        let n = points.len();
        let sd = (0..mean.len())
            .map(|d| {
                if n < 2 {
                    return 1.0;
                }
                let ss: f64 = points.iter().map(|p| (p.as_ref()[d] - mean[d]).powi(2)).sum();
                let s = (ss / (n - 1) as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Reference { mean, sd }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Standardization {
    /// Center only.
    None,
    /// Z-score each dimension by the fitted points themselves.
    ZScoreSelf,
    /// Z-score each dimension by a reference group (e.g. human centroids).
    ZScoreReference(Reference),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Standardization applied before centering, if any.
    pub scaling: Option<Reference>,
    /// Mean of the standardized fit data.
    pub center: Vec<f64>,
    /// Unit-length components, one per row.
    pub components: Vec<Vec<f64>>,
    /// Variance along each retained component.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per retained component.
    pub shares: Vec<f64>,
    /// Numerical rank of the covariance.
    pub rank: usize,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.components.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(r) => r.apply(x),
            None => x.to_vec(),
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        let centered: Vec<f64> = z.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        self.components.iter().map(|c| numeric::dot(c, &centered)).collect()
    }

    /// Map projected coordinates back to the standardized input space.
    pub fn reconstruct_standardized(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.center.clone();
        for (c, w) in self.components.iter().zip(y) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += w * x;
            }
        }
        out
    }

    /// Map projected coordinates back to the original input space.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let z = self.reconstruct_standardized(y);
        match &self.scaling {
            Some(r) => z.iter().zip(&r.mean).zip(&r.sd).map(|((v, m), s)| v * s + m).collect(),
            None => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaView {
    pub model: PcaModel,
    /// Coordinates of the fit points, one row per input.
    pub projection: Vec<Vec<f64>>,
}

impl PcaView {
    pub fn shares(&self) -> &[f64] {
        &self.model.shares
    }
}

/// Fit `n_components` principal components to `points` and project them.
/// Components are ordered by decreasing variance; each is signed so that its
/// largest-magnitude entry is positive.
pub fn pca_view<V: AsRef<[f64]>>(
    points: &[V],
    n_components: usize,
    standardization: Standardization,
) -> Result<PcaView, StyleError> {
    let n = points.len();
    if n < n_components + 1 || n < 2 {
        return Err(StyleError::TooFewPoints {
            group: "PCA input",
            found: n,
            needed: n_components.max(1) + 1,
        });
    }
    let dim = check_dims(&[points])?;
    if n_components == 0 || n_components > dim {
        return Err(StyleError::InvalidConfig(format!(
            "{n_components} components requested for {dim}-d data"
        )));
    }
    let scaling = match standardization {
        Standardization::None => None,
        Standardization::ZScoreSelf => Some(Reference::from_points(points)),
        Standardization::ZScoreReference(r) => {
            if r.mean.len() != dim || r.sd.len() != dim {
                return Err(StyleError::DimensionMismatch {
                    expected: dim,
                    found: r.mean.len(),
                });
            }
            Some(r)
        }
    };
    let z: Vec<Vec<f64>> = points
        .iter()
        .map(|p| match &scaling {
            Some(r) => r.apply(p.as_ref()),
            None => p.as_ref().to_vec(),
        })
        .collect();
    let center = numeric::mean_vector(&z);
    let x = DMatrix::from_fn(n, dim, |i, j| z[i][j] - center[j]);
    let cov = (x.transpose() * &x) / (n - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * dim as f64 * f64::EPSILON * 16.0;
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();

    let mut components = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (pos, &i) in order.iter().take(n_components).enumerate() {
        let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let lead = c.iter().copied().enumerate().fold(
            (0, 0.0f64),
            |best, (j, v)| if v.abs() > best.1.abs() { (j, v) } else { best },
        );
        if lead.1 < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        eigenvalues.push(if pos < rank { eig.eigenvalues[i].max(0.0) } else { 0.0 });
    }
    let shares = eigenvalues
        .iter()
        .map(|l| if total_variance > 0.0 { l / total_variance } else { 0.0 })
        .collect();
    let model = PcaModel {
        scaling,
        center,
        components,
        eigenvalues,
        shares,
        rank,
        total_variance,
    };
    let projection = points.iter().map(|p| model.transform(p.as_ref())).collect();
    Ok(PcaView { model, projection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_points(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect()
    }

    #[test]
    fn line_in_high_dimension_has_one_component() {
        let mut rng = seed::rng(1);
        let dir: Vec<f64> = crate::numeric::normalized(&normal_points(&mut rng, 1, 768)[0]).unwrap();
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let t: f64 = StandardNormal.sample(&mut rng);
                dir.iter().map(|d| 0.1 + t * d).collect()
            })
            .collect();
        let v = pca_view(&pts, 3, Standardization::None).unwrap();
        assert!((v.shares()[0] - 1.0).abs() < 1e-9);
        assert_eq!(v.model.rank, 1);
        assert!(v.model.rank_deficient());
        assert_eq!(v.shares()[1], 0.0);
    }

    #[test]
    fn isotropic_cloud_splits_evenly() {
        let mut rng = seed::rng(2);
        let pts = normal_points(&mut rng, 20_000, 2);
        let v = pca_view(&pts, 2, Standardization::None).unwrap();
        assert!((v.shares()[0] - 0.5).abs() < 0.02);
        assert!((v.shares()[1] - 0.5).abs() < 0.02);
    }

    #[test]
    fn full_rank_reconstruction_round_trips() {
        let mut rng = seed::rng(3);
        let pts = normal_points(&mut rng, 30, 6);
        for std in [Standardization::None, Standardization::ZScoreSelf] {
            let v = pca_view(&pts, 6, std).unwrap();
            for (p, y) in pts.iter().zip(&v.projection) {
                let back = v.model.reconstruct(y);
                for (a, b) in p.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn sign_convention_is_applied() {
        let mut rng = seed::rng(4);
        let pts = normal_points(&mut rng, 50, 5);
        let v = pca_view(&pts, 5, Standardization::None).unwrap();
        for c in &v.model.components {
            let lead = c
                .iter()
                .copied()
                .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn reference_standardization_uses_reference_moments() {
        let human = vec![vec![0.0, 10.0], vec![2.0, 30.0], vec![4.0, 50.0]];
        let r = Reference::from_points(&human);
        assert_eq!(r.mean, vec![2.0, 30.0]);
        assert_eq!(r.sd, vec![2.0, 20.0]);
        assert_eq!(r.apply(&[4.0, 10.0]), vec![1.0, -1.0]);
        let constant = Reference::from_points(&[vec![1.0], vec![1.0]]);
        assert_eq!(constant.sd, vec![1.0]);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            pca_view(&pts, 2, Standardization::None),
            Err(StyleError::TooFewPoints { .. })
        ));
    }

    proptest! {
        #[test]
        fn shares_non_increasing_and_bounded(seed in 0u64..500, n in 4usize..30, dim in 1usize..8) {
            let mut rng = crate::seed::rng(seed);
            let pts = normal_points(&mut rng, n, dim);
            let k = dim.min(n - 1);
            let v = pca_view(&pts, k, Standardization::ZScoreSelf).unwrap();
            let s = v.shares();
            prop_assert!(s.iter().sum::<f64>() <= 1.0 + 1e-9);
            for w in s.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
