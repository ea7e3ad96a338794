//! Line-delimited embedding and affect files.
//!
//! Both files start with a header record and then carry one sentence per
//! line, keyed by continuation key and sentence index:
//!
//! ```text
//! {"header":{"facet":"style","dim":768}}
//! {"story_id":"s1","domain":"new_yorker","source":"Human","cut":80,"sample_id":0,"sentence_index":0,"vector":[...]}
//! ```
//!
//! ```text
//! {"header":{"labels":["admiration", ...]}}
//! {"story_id":"s1",...,"sentence_index":0,"probs":[...28 floats...]}
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{AffectError, AffectVector, LABELS, N_LABELS};
use crate::corpus::{ContinuationKey, CutSpec, Domain, Source};
use crate::theme::Facet;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Header { path: String, message: String },
    #[error("{path}:{line}: vector has dimension {found}, header declares {expected}")]
    DimensionMismatch {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: duplicate row for {key} sentence {sentence_index}")]
    Duplicate {
        path: String,
        line: usize,
        key: String,
        sentence_index: usize,
    },
    #[error("no {facet} embedding for {key} sentence {sentence_index}")]
    MissingEmbedding {
        facet: &'static str,
        key: String,
        sentence_index: usize,
    },
    #[error("no affect row for {key} sentence {sentence_index}")]
    MissingAffect { key: String, sentence_index: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub facet: Facet,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine<H> {
    header: H,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AffectHeader {
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct KeyFields {
    story_id: String,
    domain: String,
    source: String,
    cut: u8,
    sample_id: u32,
    sentence_index: usize,
}

impl KeyFields {
    fn from_key(key: &ContinuationKey, sentence_index: usize) -> Self {
        KeyFields {
            story_id: key.story_id.clone(),
            domain: key.domain.0.clone(),
            source: key.source.0.clone(),
            cut: key.cut.percent(),
            sample_id: key.sample_id,
            sentence_index,
        }
    }

    fn into_key(self) -> Result<(ContinuationKey, usize), String> {
        let cut = CutSpec::from_percent(self.cut).map_err(|e| e.to_string())?;
        Ok((
            ContinuationKey {
                story_id: self.story_id,
                domain: Domain(self.domain),
                source: Source(self.source),
                cut,
                sample_id: self.sample_id,
            },
            self.sentence_index,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRow {
    #[serde(flatten)]
    key: KeyFields,
    vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AffectRow {
    #[serde(flatten)]
    key: KeyFields,
    probs: Vec<f64>,
}

/// Sentence-indexed rows per continuation key.
#[derive(Debug, Clone, PartialEq)]
struct Rows<T> {
    by_key: HashMap<ContinuationKey, Vec<Option<T>>>,
}

impl<T> Default for Rows<T> {
    fn default() -> Self {
        Rows { by_key: HashMap::new() }
    }
}

impl<T> Rows<T> {
    /// Returns false if the slot was already filled.
    fn insert(&mut self, key: ContinuationKey, index: usize, value: T) -> bool {
        let slots = self.by_key.entry(key).or_default();
        if slots.len() <= index {
            slots.resize_with(index + 1, || None);
        }
        if slots[index].is_some() {
            return false;
        }
        slots[index] = Some(value);
        true
    }

    fn get(&self, key: &ContinuationKey, index: usize) -> Option<&T> {
        self.by_key.get(key)?.get(index)?.as_ref()
    }

    fn n_rows(&self) -> usize {
        self.by_key
            .values()
            .map(|v| v.iter().filter(|x| x.is_some()).count())
            .sum()
    }
}

/// All embedding rows of one facet.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub header: EmbeddingHeader,
    rows: Rows<Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(facet: Facet, dim: usize) -> Self {
        EmbeddingStore {
            header: EmbeddingHeader { facet, dim },
            rows: Rows::default(),
        }
    }

    pub fn facet(&self) -> Facet {
        self.header.facet
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    /// Add one sentence vector. Returns false for a duplicate slot or a
    /// wrong dimension.
    pub fn insert(&mut self, key: ContinuationKey, sentence_index: usize, vector: Vec<f64>) -> bool {
        vector.len() == self.header.dim && self.rows.insert(key, sentence_index, vector)
    }

    pub fn get(&self, key: &ContinuationKey, sentence_index: usize) -> Option<&[f64]> {
        self.rows.get(key, sentence_index).map(Vec::as_slice)
    }

    /// Vectors for sentences `0..n` of `key`, failing on the first gap.
    pub fn sentences(&self, key: &ContinuationKey, n: usize) -> Result<Vec<&[f64]>, FormatError> {
        (0..n)
            .map(|i| {
                self.get(key, i).ok_or_else(|| FormatError::MissingEmbedding {
                    facet: self.header.facet.as_str(),
                    key: key.to_string(),
                    sentence_index: i,
                })
            })
            .collect()
    }
}

/// All affect rows, validated against the canonical label order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffectStore {
    rows: Rows<AffectVector>,
}

impl AffectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn insert(&mut self, key: ContinuationKey, sentence_index: usize, probs: AffectVector) -> bool {
        self.rows.insert(key, sentence_index, probs)
    }

    pub fn get(&self, key: &ContinuationKey, sentence_index: usize) -> Option<&AffectVector> {
        self.rows.get(key, sentence_index)
    }

    pub fn sentences(&self, key: &ContinuationKey, n: usize) -> Result<Vec<AffectVector>, FormatError> {
        (0..n)
            .map(|i| {
                self.get(key, i).copied().ok_or_else(|| FormatError::MissingAffect {
                    key: key.to_string(),
                    sentence_index: i,
                })
            })
            .collect()
    }
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_string(),
        source,
    }
}

fn parse_err(path: &str, line: usize, message: impl ToString) -> FormatError {
    FormatError::Parse {
        path: path.to_string(),
        line,
        message: message.to_string(),
    }
}

/// Non-blank lines with 1-based line numbers; the first is returned apart.
fn split_header<R: BufRead>(reader: R, path: &str) -> Result<(String, Vec<(usize, String)>), FormatError> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    if lines.is_empty() {
        return Err(FormatError::Header {
            path: path.to_string(),
            message: "file is empty; a header record is required".into(),
        });
    }
    let (_, header) = lines.remove(0);
    Ok((header, lines))
}

pub fn parse_embeddings<R: BufRead>(reader: R, path: &str) -> Result<EmbeddingStore, FormatError> {
    let (header, lines) = split_header(reader, path)?;
    let header: HeaderLine<EmbeddingHeader> = serde_json::from_str(&header).map_err(|e| FormatError::Header {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let mut store = EmbeddingStore::new(header.header.facet, header.header.dim);
    for (line_no, line) in lines {
        let row: EmbeddingRow = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e))?;
        if row.vector.len() != store.dim() {
            return Err(FormatError::DimensionMismatch {
                path: path.to_string(),
                line: line_no,
                expected: store.dim(),
                found: row.vector.len(),
            });
        }
        if row.vector.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(path, line_no, "vector contains non-finite values"));
        }
        let (key, sentence_index) = row.key.into_key().map_err(|e| parse_err(path, line_no, e))?;
        if !store.rows.insert(key.clone(), sentence_index, row.vector) {
            return Err(FormatError::Duplicate {
                path: path.to_string(),
                line: line_no,
                key: key.to_string(),
                sentence_index,
            });
        }
    }
    Ok(store)
}

pub fn parse_affect<R: BufRead>(reader: R, path: &str) -> Result<AffectStore, FormatError> {
    let (header, lines) = split_header(reader, path)?;
    let header: HeaderLine<AffectHeader> = serde_json::from_str(&header).map_err(|e| FormatError::Header {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    if header.header.labels.len() != N_LABELS || header.header.labels.iter().zip(LABELS).any(|(a, b)| a != b) {
        return Err(FormatError::Header {
            path: path.to_string(),
            message: "label order differs from the canonical 28-label order".into(),
        });
    }
    let mut store = AffectStore::new();
    for (line_no, line) in lines {
        let row: AffectRow = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e))?;
        let probs: [f64; N_LABELS] = row
            .probs
            .try_into()
            .map_err(|v: Vec<f64>| parse_err(path, line_no, AffectError::WrongLength(v.len())))?;
        let probs = AffectVector::new(probs).map_err(|e| parse_err(path, line_no, e))?;
        let (key, sentence_index) = row.key.into_key().map_err(|e| parse_err(path, line_no, e))?;
        if !store.insert(key.clone(), sentence_index, probs) {
            return Err(FormatError::Duplicate {
                path: path.to_string(),
                line: line_no,
                key: key.to_string(),
                sentence_index,
            });
        }
    }
    Ok(store)
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(io_err(&path.display().to_string()))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore, FormatError> {
    parse_embeddings(open(path)?, &path.display().to_string())
}

pub fn load_affect(path: &Path) -> Result<AffectStore, FormatError> {
    parse_affect(open(path)?, &path.display().to_string())
}

/// Streaming writer for embedding files.
pub struct EmbeddingWriter<W: Write> {
    out: W,
    dim: usize,
}

impl<W: Write> EmbeddingWriter<W> {
    pub fn new(mut out: W, facet: Facet, dim: usize) -> std::io::Result<Self> {
        serde_json::to_writer(
            &mut out,
            &HeaderLine {
                header: EmbeddingHeader { facet, dim },
            },
        )?;
        out.write_all(b"\n")?;
        Ok(EmbeddingWriter { out, dim })
    }

    pub fn write(&mut self, key: &ContinuationKey, sentence_index: usize, vector: &[f64]) -> std::io::Result<()> {
        assert_eq!(vector.len(), self.dim, "vector dimension differs from header");
        serde_json::to_writer(
            &mut self.out,
            &EmbeddingRow {
                key: KeyFields::from_key(key, sentence_index),
                vector: vector.to_vec(),
            },
        )?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming writer for affect files.
pub struct AffectWriter<W: Write> {
    out: W,
}

impl<W: Write> AffectWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        serde_json::to_writer(
            &mut out,
            &HeaderLine {
                header: AffectHeader {
                    labels: LABELS.iter().map(|s| s.to_string()).collect(),
                },
            },
        )?;
        out.write_all(b"\n")?;
        Ok(AffectWriter { out })
    }

    pub fn write(&mut self, key: &ContinuationKey, sentence_index: usize, probs: &AffectVector) -> std::io::Result<()> {
        serde_json::to_writer(
            &mut self.out,
            &AffectRow {
                key: KeyFields::from_key(key, sentence_index),
                probs: probs.probs().to_vec(),
            },
        )?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(&path.display().to_string()))
}
