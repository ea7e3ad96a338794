use std::fmt;

use serde::{Deserialize, Serialize};

use super::segment::split_sentences;
use super::CorpusError;

/// The three canonical corpus domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalDomain {
    Professional,
    PromptGuided,
    PublicPlatform,
}

impl CanonicalDomain {
    pub const ALL: [CanonicalDomain; 3] = [
        CanonicalDomain::Professional,
        CanonicalDomain::PromptGuided,
        CanonicalDomain::PublicPlatform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CanonicalDomain::Professional => "professional",
            CanonicalDomain::PromptGuided => "prompt_guided",
            CanonicalDomain::PublicPlatform => "public_platform",
        }
    }
}

/// Free-form domain label. Unknown labels are accepted and flagged by the
/// validation report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Domain(pub String);

impl Domain {
    pub fn new(label: impl Into<String>) -> Self {
        Domain(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn canonical(&self) -> Option<CanonicalDomain> {
        CanonicalDomain::ALL.into_iter().find(|d| d.as_str() == self.0)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Author of a continuation: `Human` or a model stage name (Base, SFT, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Source(pub String);

impl Source {
    pub const HUMAN: &'static str = "Human";

    pub fn human() -> Self {
        Source(Self::HUMAN.to_string())
    }

    pub fn new(label: impl Into<String>) -> Self {
        Source(label.into())
    }

    pub fn is_human(&self) -> bool {
        self.0 == Self::HUMAN
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fraction of a story's sentences revealed as prefix. Stored as a whole
/// percentage so that prefix sizes are computed with exact integer floors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CutSpec(u8);

impl CutSpec {
    pub const STANDARD: [CutSpec; 4] = [CutSpec(40), CutSpec(60), CutSpec(80), CutSpec(90)];

    pub fn from_percent(percent: u8) -> Result<Self, CorpusError> {
        match percent {
            40 | 60 | 80 | 90 => Ok(CutSpec(percent)),
            other => Err(CorpusError::InvalidCut(other)),
        }
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    /// Prefix length for a story of `total` sentences: `floor(c * total)`
    /// clamped to `[1, total - 1]`.
    pub fn prefix_len(self, total: usize) -> usize {
        let n = total * usize::from(self.0) / 100;
        n.clamp(1, total.saturating_sub(1).max(1))
    }
}

impl TryFrom<u8> for CutSpec {
    type Error = CorpusError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        CutSpec::from_percent(value)
    }
}

impl From<CutSpec> for u8 {
    fn from(c: CutSpec) -> u8 {
        c.0
    }
}

impl fmt::Display for CutSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One source story with its derived sentence sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryRecord {
    pub story_id: String,
    pub domain: Domain,
    pub text: String,
    pub sentences: Vec<String>,
}

impl StoryRecord {
    /// Build a record, deriving sentences from `text`.
    pub fn new(story_id: impl Into<String>, domain: Domain, text: impl Into<String>) -> Self {
        let text = text.into();
        let sentences = split_sentences(&text);
        StoryRecord {
            story_id: story_id.into(),
            domain,
            text,
            sentences,
        }
    }
}

/// Grouping key shared by continuations, affect rows and embedding rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContinuationKey {
    pub story_id: String,
    pub domain: Domain,
    pub source: Source,
    pub cut: CutSpec,
    pub sample_id: u32,
}

impl fmt::Display for ContinuationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.domain, self.story_id, self.source, self.cut, self.sample_id
        )
    }
}

/// A human suffix or model sample continuing a story prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    #[serde(flatten)]
    pub key: ContinuationKey,
    pub sentences: Vec<String>,
}

impl ContinuationRecord {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Split a story at `cut`, returning `(prefix, continuation)`.
pub fn make_cut(story: &StoryRecord, cut: CutSpec) -> Result<(&[String], &[String]), CorpusError> {
    let total = story.sentences.len();
    if total < 2 {
        return Err(CorpusError::StoryTooShort {
            story_id: story.story_id.clone(),
            sentences: total,
        });
    }
    Ok(story.sentences.split_at(cut.prefix_len(total)))
}
