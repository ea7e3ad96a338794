//! Stories, continuations, segmentation and dataset loading.

mod load;
mod records;
mod segment;

pub use load::{load_dataset, parse_continuations, parse_stories, CountRow, Dataset, ValidationReport};
pub use records::{
    make_cut, CanonicalDomain, ContinuationKey, ContinuationRecord, CutSpec, Domain, Source, StoryRecord,
};
pub use segment::{normalize_whitespace, split_sentences, word_count};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("continuation {key} (line {line}) references unknown story {domain}/{story_id}")]
    Referential {
        key: String,
        line: usize,
        domain: String,
        story_id: String,
    },
    #[error("duplicate key {key}")]
    DuplicateKey { key: String },
    #[error("story {story_id} has {sentences} sentence(s); at least 2 are needed to cut")]
    StoryTooShort { story_id: String, sentences: usize },
    #[error("cut {0} is not one of 40, 60, 80, 90")]
    InvalidCut(u8),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
