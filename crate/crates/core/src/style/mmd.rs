//! Unbiased MMD² with an RBF kernel on cosine distance.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dims, StyleError};
use crate::numeric::{self, quantile_sorted};
use crate::seed;
use crate::stats::{sentence_bootstrap_ci, BootstrapConfig, MetricEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Fixed σ; the median heuristic is used when absent.
    pub bandwidth: Option<f64>,
    pub subsample_cap: usize,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: None,
            subsample_cap: 1000,
            seed: 0,
        }
    }
}

impl KernelConfig {
    fn validate(&self) -> Result<(), StyleError> {
        if self.subsample_cap < 2 {
            return Err(StyleError::InvalidConfig(format!(
                "subsample cap {} is below 2",
                self.subsample_cap
            )));
        }
        if let Some(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(StyleError::InvalidConfig(format!("bandwidth {s} is not positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    pub value: f64,
    pub bandwidth: f64,
    pub n_h: usize,
    pub n_m: usize,
}

/// Unit vectors; cosine distance is then half the squared Euclidean
/// distance, which is exactly zero for identical directions.
fn unit_vectors<V: AsRef<[f64]>>(points: &[V]) -> Result<Vec<Vec<f64>>, StyleError> {
    points
        .iter()
        .map(|p| numeric::normalized(p.as_ref()).ok_or(StyleError::ZeroVector))
        .collect()
}

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * numeric::sq_dist(a, b)
}

fn median_of_units(units: &[Vec<f64>]) -> Result<f64, StyleError> {
    let n = units.len();
    if n < 2 {
        return Err(StyleError::TooFewPoints {
            group: "combined set",
            found: n,
            needed: 2,
        });
    }
    let mut d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| cos_dist(&units[i], &units[j]))
        .collect();
    d.sort_by(f64::total_cmp);
    let med = quantile_sorted(&d, 0.5);
    if med > 0.0 {
        return Ok(med);
    }
    d.into_iter().find(|x| *x > 0.0).ok_or(StyleError::DegenerateSample)
}

/// Median cosine distance over all unordered pairs `i < j`, zeros included.
/// A zero median falls back to the smallest positive distance.
pub fn median_bandwidth<V: AsRef<[f64]>>(points: &[V]) -> Result<f64, StyleError> {
    check_dims(&[points])?;
    median_of_units(&unit_vectors(points)?)
}

/// Up to `cap` rows of `group`, chosen without replacement by a stream that
/// depends only on `seed` and the group's contents. Order is preserved.
pub fn subsample<V: AsRef<[f64]> + Clone>(group: &[V], cap: usize, seed: u64) -> Vec<V> {
    if group.len() <= cap {
        return group.to_vec();
    }
    let mut rng = seed::rng(seed::derive_indexed(seed, seed::fingerprint(group)));
    let mut picked = index::sample(&mut rng, group.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| group[i].clone()).collect()
}

/// Kernel matrix `exp(-d²/2σ²)` over the concatenation of `h` then `m`.
pub fn kernel_matrix<V: AsRef<[f64]>>(h: &[V], m: &[V], bandwidth: f64) -> Result<Vec<Vec<f64>>, StyleError> {
    let units = unit_vectors(&h.iter().chain(m).map(AsRef::as_ref).collect::<Vec<_>>())?;
    Ok(kernel_of_units(&units, bandwidth))
}

fn kernel_of_units(units: &[Vec<f64>], bandwidth: f64) -> Vec<Vec<f64>> {
    let denom = 2.0 * bandwidth * bandwidth;
    (0..units.len())
        .into_par_iter()
        .map(|i| {
            units
                .iter()
                .map(|u| {
                    let d = cos_dist(&units[i], u);
                    (-d * d / denom).exp()
                })
                .collect()
        })
        .collect()
}

/// Three-term unbiased estimator from a kernel matrix. `h` and `m` index
/// rows of `k` and may repeat; pairs are excluded by position, not value.
pub fn mmd2_from_kernel(k: &[Vec<f64>], h: &[usize], m: &[usize]) -> f64 {
    let within = |idx: &[usize]| {
        let n = idx.len();
        let mut s = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                s += k[i][j];
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for &i in h {
        for &j in m {
            cross += k[i][j];
        }
    }
    within(h) + within(m) - 2.0 * cross / (h.len() * m.len()) as f64
}

/// Direct nested-loop evaluation of the estimator, used as a test oracle.
pub fn mmd2_brute_force<V: AsRef<[f64]>>(h: &[V], m: &[V], bandwidth: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d = crate::theme::cosine_distance(a, b).expect("non-zero vectors");
        (-d * d / (2.0 * bandwidth * bandwidth)).exp()
    };
    let (n, l) = (h.len() as f64, m.len() as f64);
    let mut hh = 0.0;
    for (i, a) in h.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            if i != j {
                hh += k(a.as_ref(), b.as_ref());
            }
        }
    }
    let mut mm = 0.0;
    for (i, a) in m.iter().enumerate() {
        for (j, b) in m.iter().enumerate() {
            if i != j {
                mm += k(a.as_ref(), b.as_ref());
            }
        }
    }
    let mut hm = 0.0;
    for a in h {
        for b in m {
            hm += k(a.as_ref(), b.as_ref());
        }
    }
    hh / (n * (n - 1.0)) + mm / (l * (l - 1.0)) - 2.0 * hm / (n * l)
}

struct Prepared {
    units: Vec<Vec<f64>>,
    n_h: usize,
    n_m: usize,
    bandwidth: f64,
}

/// Subsample both groups, put them in a content-determined order so the
/// result does not depend on argument order, and fix the bandwidth.
fn prepare<V: AsRef<[f64]>>(h: &[V], m: &[V], cfg: &KernelConfig) -> Result<Prepared, StyleError> {
    cfg.validate()?;
    check_dims(&[h, m])?;
    let h = subsample(
        &h.iter().map(AsRef::as_ref).collect::<Vec<_>>(),
        cfg.subsample_cap,
        cfg.seed,
    );
    let m = subsample(
        &m.iter().map(AsRef::as_ref).collect::<Vec<_>>(),
        cfg.subsample_cap,
        cfg.seed,
    );
    for (group, g) in [("human group", &h), ("model group", &m)] {
        if g.len() < 2 {
            return Err(StyleError::TooFewPoints {
                group,
                found: g.len(),
                needed: 2,
            });
        }
    }
    let (first, second) = if seed::fingerprint(&h) <= seed::fingerprint(&m) {
        (h, m)
    } else {
        (m, h)
    };
    let units = unit_vectors(&first.iter().chain(&second).collect::<Vec<_>>())?;
    let bandwidth = match cfg.bandwidth {
        Some(s) => s,
        None => median_of_units(&units)?,
    };
    Ok(Prepared {
        n_h: first.len(),
        n_m: second.len(),
        units,
        bandwidth,
    })
}

/// Unbiased MMD² between sentence sets. Each group is subsampled to the cap
/// and σ comes from the median heuristic on the combined subsample unless
/// fixed in `cfg`. `mmd2_unbiased(h, m)` and `mmd2_unbiased(m, h)` agree
/// bit for bit.
pub fn mmd2_unbiased<V: AsRef<[f64]>>(h: &[V], m: &[V], cfg: &KernelConfig) -> Result<MmdEstimate, StyleError> {
    let p = prepare(h, m, cfg)?;
    let k = kernel_of_units(&p.units, p.bandwidth);
    let hi: Vec<usize> = (0..p.n_h).collect();
    let mi: Vec<usize> = (p.n_h..p.n_h + p.n_m).collect();
    Ok(MmdEstimate {
        value: mmd2_from_kernel(&k, &hi, &mi),
        bandwidth: p.bandwidth,
        n_h: p.n_h,
        n_m: p.n_m,
    })
}

/// MMD² with a sentence-vector percentile bootstrap after subsampling. The
/// bandwidth is held at its value on the original subsample.
pub fn mmd2_with_ci<V: AsRef<[f64]>>(
    h: &[V],
    m: &[V],
    cfg: &KernelConfig,
    boot: &BootstrapConfig,
) -> Result<(MetricEstimate, MmdEstimate), StyleError> {
    let p = prepare(h, m, cfg)?;
    let k = kernel_of_units(&p.units, p.bandwidth);
    let offset = p.n_h;
    let est = sentence_bootstrap_ci(
        &[p.n_h, p.n_m],
        |idx| {
            let mi: Vec<usize> = idx[1].iter().map(|j| j + offset).collect();
            mmd2_from_kernel(&k, &idx[0], &mi)
        },
        boot,
    );
    let point = MmdEstimate {
        value: est.value,
        bandwidth: p.bandwidth,
        n_h: p.n_h,
        n_m: p.n_m,
    };
    Ok((est, point))
}
