//! Continuation-level metric values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::ExclusionReason;
use super::config::RunConfig;
use crate::affect::{affective_charge, prevalence, ChargeVariant, Family, FamilyScheme};
use crate::corpus::{ContinuationRecord, Dataset};
use crate::formats::{AffectStore, EmbeddingStore, FormatError};
use crate::theme::{jump_cv, jump_series_of, ThemeError};

/// Affect prevalence of one continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectSummary {
    /// Surprise-curiosity, conflict, neutral and other shares.
    pub main4: [f64; 4],
    /// Shares of the seven-family scheme in its family order.
    pub robust7: Vec<(Family, f64)>,
    /// Main, threat-inclusive and expanded affective charge.
    pub charge: [f64; 3],
}

impl AffectSummary {
    pub const MAIN4: [Family; 4] = [
        Family::SurpriseCuriosity,
        Family::Conflict,
        Family::Neutral,
        Family::Other,
    ];
    pub const CHARGES: [ChargeVariant; 3] = [
        ChargeVariant::Main,
        ChargeVariant::ThreatInclusive,
        ChargeVariant::Expanded,
    ];

    pub fn share(&self, family: Family) -> f64 {
        let i = Self::MAIN4.iter().position(|f| *f == family);
        match i {
            Some(i) => self.main4[i],
            None => self.robust7.iter().find(|(f, _)| *f == family).map_or(0.0, |(_, s)| *s),
        }
    }

    pub fn charge(&self, variant: ChargeVariant) -> f64 {
        self.charge[Self::CHARGES
            .iter()
            .position(|v| *v == variant)
            .expect("all variants listed")]
    }
}

/// Metric values of one continuation. A field is `None` when its metric is
/// disabled and `Err` when the continuation is excluded from it.
#[derive(Debug, Clone)]
pub struct ContinuationMetrics<'a> {
    pub record: &'a ContinuationRecord,
    pub theme_cv: Option<Result<f64, ExclusionReason>>,
    pub affect: Option<Result<AffectSummary, ExclusionReason>>,
    /// Sentence style vectors.
    pub style: Option<Result<Vec<&'a [f64]>, ExclusionReason>>,
}

impl ContinuationMetrics<'_> {
    pub fn style_centroid(&self) -> Option<Result<Vec<f64>, ExclusionReason>> {
        self.style
            .as_ref()
            .map(|s| s.as_ref().map(|v| crate::numeric::mean_vector(v)).map_err(|e| *e))
    }
}

fn theme_reason(e: ThemeError) -> ExclusionReason {
    match e {
        ThemeError::TooFewSentences(_) | ThemeError::TooFewJumps(_) => ExclusionReason::TooFewSentences,
        ThemeError::DegenerateTrajectory => ExclusionReason::DegenerateTrajectory,
        ThemeError::DimensionMismatch { .. } | ThemeError::NotUnitNorm { .. } | ThemeError::ZeroVector(_) => {
            ExclusionReason::InvalidVector
        }
    }
}

fn embedding_reason(e: FormatError) -> ExclusionReason {
    match e {
        FormatError::MissingEmbedding { .. } => ExclusionReason::MissingEmbedding,
        FormatError::MissingAffect { .. } => ExclusionReason::MissingAffect,
        _ => ExclusionReason::InvalidVector,
    }
}

fn theme_of(record: &ContinuationRecord, store: &EmbeddingStore, cfg: &RunConfig) -> Result<f64, ExclusionReason> {
    if record.is_empty() {
        return Err(ExclusionReason::EmptyContinuation);
    }
    let vectors = store.sentences(&record.key, record.len()).map_err(embedding_reason)?;
    let series = jump_series_of(&vectors, cfg.theme.metric).map_err(theme_reason)?;
    let cv = jump_cv(&series, cfg.theme.sd_divisor).map_err(theme_reason)?;
    if cv.is_finite() {
        Ok(cv)
    } else {
        Err(ExclusionReason::InvalidVector)
    }
}

fn affect_of(record: &ContinuationRecord, store: &AffectStore) -> Result<AffectSummary, ExclusionReason> {
    if record.is_empty() {
        return Err(ExclusionReason::EmptyContinuation);
    }
    let vectors = store.sentences(&record.key, record.len()).map_err(embedding_reason)?;
    let main = prevalence(&vectors, FamilyScheme::Main4).map_err(|_| ExclusionReason::EmptyContinuation)?;
    let robust = prevalence(&vectors, FamilyScheme::Robust7).map_err(|_| ExclusionReason::EmptyContinuation)?;
    let charge = AffectSummary::CHARGES.map(|v| affective_charge(&robust, v).expect("label counts are present"));
    Ok(AffectSummary {
        main4: AffectSummary::MAIN4.map(|f| main.share(f)),
        robust7: robust.shares(),
        charge,
    })
}

fn style_of<'a>(record: &ContinuationRecord, store: &'a EmbeddingStore) -> Result<Vec<&'a [f64]>, ExclusionReason> {
    if record.is_empty() {
        return Err(ExclusionReason::EmptyContinuation);
    }
    store.sentences(&record.key, record.len()).map_err(embedding_reason)
}

/// Compute every enabled metric for every continuation, in dataset order.
pub fn continuation_metrics<'a>(
    dataset: &'a Dataset,
    theme: Option<&'a EmbeddingStore>,
    style: Option<&'a EmbeddingStore>,
    affect: Option<&'a AffectStore>,
    cfg: &RunConfig,
) -> Vec<ContinuationMetrics<'a>> {
    let m = cfg.metrics;
    let style_on = m.style || m.fixed_k || m.manifold || m.pca;
    dataset
        .continuations()
        .par_iter()
        .map(|record| ContinuationMetrics {
            record,
            theme_cv: theme.filter(|_| m.theme).map(|s| theme_of(record, s, cfg)),
            affect: affect.filter(|_| m.affect).map(|s| affect_of(record, s)),
            style: style.filter(|_| style_on).map(|s| style_of(record, s)),
        })
        .collect()
}
