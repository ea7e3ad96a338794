use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    /// Adjusted p-values in the input order.
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Holm step-down correction. Adjusted values are the running maximum of
/// `(m - rank) * p` over the sorted p-values, capped at 1.
pub fn holm_bonferroni(p: &[f64], alpha: f64) -> Result<HolmResult, StatsError> {
    if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(StatsError::InvalidP(*bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));

    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|a| *a <= alpha).collect();
    Ok(HolmResult { adjusted, reject })
}
