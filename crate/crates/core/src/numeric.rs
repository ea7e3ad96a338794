//! Small vector and summary-statistic helpers shared across modules.

use serde::{Deserialize, Serialize};

/// Divisor used for sample variances and standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdDivisor {
    /// n - 1
    #[default]
    Sample,
    /// n
    Population,
}

impl SdDivisor {
    fn denom(self, n: usize) -> f64 {
        match self {
            SdDivisor::Sample => (n - 1) as f64,
            SdDivisor::Population => n as f64,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance with the given divisor. Needs at least two values for
/// [`SdDivisor::Sample`].
pub fn variance(xs: &[f64], divisor: SdDivisor) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / divisor.denom(xs.len())
}

pub fn sd(xs: &[f64], divisor: SdDivisor) -> f64 {
    variance(xs, divisor).sqrt()
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of unsorted data; NaNs sort last.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// `a / ||a||`, or `None` for the zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| a.iter().map(|x| x / n).collect())
}

/// Element-wise mean of equally sized vectors.
pub fn mean_vector<V: AsRef<[f64]>>(vs: &[V]) -> Vec<f64> {
    let dim = vs[0].as_ref().len();
    let mut acc = vec![0.0; dim];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_match_numpy_defaults() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.95) - 3.85).abs() < 1e-12);
        assert_eq!(median(&[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]), 1.0);
    }

    #[test]
    fn variance_divisors() {
        let xs = [0.0, 2.0];
        assert_eq!(variance(&xs, SdDivisor::Sample), 2.0);
        assert_eq!(variance(&xs, SdDivisor::Population), 1.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalized(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert!(normalized(&[0.0, 0.0]).is_none());
    }
}
