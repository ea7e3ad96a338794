//! Pooling continuation-level values into group means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::stats::{grouped_mean, Weighting};

/// Why a continuation contributed no value to a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    EmptyContinuation,
    /// Fewer than three sentences, so fewer than two jumps.
    TooFewSentences,
    /// Every jump is zero.
    DegenerateTrajectory,
    MissingEmbedding,
    MissingAffect,
    /// Zero or non-finite vector where a direction is needed.
    InvalidVector,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::EmptyContinuation => "empty_continuation",
            ExclusionReason::TooFewSentences => "too_few_sentences",
            ExclusionReason::DegenerateTrajectory => "degenerate_trajectory",
            ExclusionReason::MissingEmbedding => "missing_embedding",
            ExclusionReason::MissingAffect => "missing_affect",
            ExclusionReason::InvalidVector => "invalid_vector",
        }
    }
}

pub(super) fn describe(counts: &BTreeMap<ExclusionReason, usize>) -> String {
    if counts.is_empty() {
        return "no continuations".into();
    }
    counts
        .iter()
        .map(|(r, n)| format!("{}={n}", r.as_str()))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAggregate {
    pub mean: f64,
    pub n_included: usize,
    pub exclusions: BTreeMap<ExclusionReason, usize>,
    /// Story ids in sorted order, aligned with `stories`.
    pub story_ids: Vec<String>,
    /// Included values grouped by story, for story-level resampling.
    pub stories: Vec<Vec<f64>>,
}

impl GroupAggregate {
    pub fn n_excluded(&self) -> usize {
        self.exclusions.values().sum()
    }
}

/// Mean of the included values of one group, with exclusions counted by
/// reason. Items are `(story_id, value)`.
pub fn aggregate<'a, I>(group: &str, values: I, weighting: Weighting) -> Result<GroupAggregate, PipelineError>
where
    I: IntoIterator<Item = (&'a str, Result<f64, ExclusionReason>)>,
{
    let mut by_story: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut exclusions = BTreeMap::new();
    for (story, value) in values {
        match value {
            Ok(v) => by_story.entry(story).or_default().push(v),
            Err(r) => *exclusions.entry(r).or_insert(0) += 1,
        }
    }
    if by_story.is_empty() {
        return Err(PipelineError::EmptyGroup {
            group: group.to_string(),
            exclusions,
        });
    }
    let story_ids: Vec<String> = by_story.keys().map(|s| s.to_string()).collect();
    let stories: Vec<Vec<f64>> = by_story.into_values().collect();
    let idx: Vec<usize> = (0..stories.len()).collect();
    Ok(GroupAggregate {
        mean: grouped_mean(&stories, &idx, weighting),
        n_included: stories.iter().map(Vec::len).sum(),
        exclusions,
        story_ids,
        stories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_mean() {
        let g = aggregate("g", [("a", Ok(0.1)), ("b", Ok(0.2))], Weighting::Continuation).unwrap();
        assert!((g.mean - 0.15).abs() < 1e-15);
        assert_eq!(g.n_included, 2);
    }

    #[test]
    fn all_excluded_reports_reasons() {
        let values = [
            ("a", Err(ExclusionReason::TooFewSentences)),
            ("b", Err(ExclusionReason::TooFewSentences)),
            ("c", Err(ExclusionReason::DegenerateTrajectory)),
        ];
        match aggregate("Human/news", values, Weighting::Continuation) {
            Err(PipelineError::EmptyGroup { group, exclusions }) => {
                assert_eq!(group, "Human/news");
                assert_eq!(exclusions[&ExclusionReason::TooFewSentences], 2);
                assert_eq!(exclusions[&ExclusionReason::DegenerateTrajectory], 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pooled_mean_is_count_weighted_mean_of_cut_means() {
        let cut40 = [("s1", 0.3), ("s2", 0.5), ("s3", 0.4)];
        let cut90 = [("s1", 0.9), ("s2", 0.1)];
        let m40 = aggregate("40", cut40.iter().map(|(s, v)| (*s, Ok(*v))), Weighting::Continuation).unwrap();
        let m90 = aggregate("90", cut90.iter().map(|(s, v)| (*s, Ok(*v))), Weighting::Continuation).unwrap();
        let pooled = aggregate(
            "all",
            cut40.iter().chain(&cut90).map(|(s, v)| (*s, Ok(*v))),
            Weighting::Continuation,
        )
        .unwrap();
        let oracle = (3.0 * m40.mean + 2.0 * m90.mean) / 5.0;
        assert!((pooled.mean - oracle).abs() < 1e-15);
        assert_eq!(pooled.stories.len(), 3);
    }

    #[test]
    fn story_weighting_averages_story_means() {
        let values = [("a", Ok(1.0)), ("a", Ok(3.0)), ("b", Ok(4.0))];
        let g = aggregate("g", values, Weighting::Story).unwrap();
        assert_eq!(g.mean, 3.0);
        let g = aggregate("g", values, Weighting::Continuation).unwrap();
        assert!((g.mean - 8.0 / 3.0).abs() < 1e-15);
    }
}
