use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{ContinuationKey, ContinuationRecord, CutSpec, Domain, Source, StoryRecord};
use super::CorpusError;

#[derive(Deserialize)]
struct StoryLine {
    story_id: String,
    domain: String,
    text: String,
}

#[derive(Deserialize)]
struct ContinuationLine {
    story_id: String,
    domain: String,
    source: String,
    cut: u8,
    sample_id: u32,
    sentences: Vec<String>,
}

/// Validated, immutable collection of stories and continuations.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    stories: BTreeMap<(Domain, String), StoryRecord>,
    continuations: Vec<ContinuationRecord>,
    index: HashMap<ContinuationKey, usize>,
}

impl Dataset {
    /// Validate in-memory records. Continuations are stored in key order.
    pub fn from_records(
        stories: Vec<StoryRecord>,
        continuations: Vec<ContinuationRecord>,
    ) -> Result<Self, CorpusError> {
        let mut by_key = BTreeMap::new();
        for story in stories {
            let key = (story.domain.clone(), story.story_id.clone());
            if by_key.contains_key(&key) {
                return Err(CorpusError::DuplicateKey {
                    key: format!("story {}/{}", key.0, key.1),
                });
            }
            by_key.insert(key, story);
        }
        let mut dataset = Dataset {
            stories: by_key,
            continuations: Vec::new(),
            index: HashMap::new(),
        };
        dataset.attach(continuations.into_iter().enumerate().map(|(i, c)| (i + 1, c)).collect())?;
        Ok(dataset)
    }

    fn attach(&mut self, rows: Vec<(usize, ContinuationRecord)>) -> Result<(), CorpusError> {
        let mut seen: BTreeMap<ContinuationKey, ContinuationRecord> = BTreeMap::new();
        for (line, record) in rows {
            self.check_continuation(&record.key, line)?;
            if seen.contains_key(&record.key) {
                return Err(CorpusError::DuplicateKey {
                    key: format!("{} (line {line})", record.key),
                });
            }
            seen.insert(record.key.clone(), record);
        }
        self.continuations = seen.into_values().collect();
        self.index = self
            .continuations
            .iter()
            .enumerate()
            .map(|(i, c)| (c.key.clone(), i))
            .collect();
        Ok(())
    }

    fn check_continuation(&self, key: &ContinuationKey, line: usize) -> Result<(), CorpusError> {
        if !self.stories.contains_key(&(key.domain.clone(), key.story_id.clone())) {
            return Err(CorpusError::Referential {
                key: key.to_string(),
                line,
                domain: key.domain.to_string(),
                story_id: key.story_id.clone(),
            });
        }
        Ok(())
    }

    pub fn stories(&self) -> impl Iterator<Item = &StoryRecord> {
        self.stories.values()
    }

    pub fn story(&self, domain: &Domain, story_id: &str) -> Option<&StoryRecord> {
        self.stories.get(&(domain.clone(), story_id.to_string()))
    }

    pub fn n_stories(&self) -> usize {
        self.stories.len()
    }

    pub fn continuations(&self) -> &[ContinuationRecord] {
        &self.continuations
    }

    pub fn continuation(&self, key: &ContinuationKey) -> Option<&ContinuationRecord> {
        self.index.get(key).map(|&i| &self.continuations[i])
    }

    pub fn report(&self) -> ValidationReport {
        let mut stories_per_domain = BTreeMap::new();
        let mut short_stories = 0;
        for s in self.stories.values() {
            *stories_per_domain.entry(s.domain.to_string()).or_insert(0) += 1;
            if s.sentences.len() < 2 {
                short_stories += 1;
            }
        }
        let mut counts: BTreeMap<(String, String, u8), usize> = BTreeMap::new();
        let mut empty = 0;
        for c in &self.continuations {
            *counts
                .entry((c.key.domain.to_string(), c.key.source.to_string(), c.key.cut.percent()))
                .or_insert(0) += 1;
            if c.sentences.is_empty() {
                empty += 1;
            }
        }
        let unknown_domains: BTreeSet<String> = self
            .stories
            .values()
            .filter(|s| s.domain.canonical().is_none())
            .map(|s| s.domain.to_string())
            .collect();
        ValidationReport {
            n_stories: self.stories.len(),
            n_continuations: self.continuations.len(),
            stories_per_domain,
            continuation_counts: counts
                .into_iter()
                .map(|((domain, source, cut), count)| CountRow {
                    domain,
                    source,
                    cut,
                    count,
                })
                .collect(),
            unknown_domains: unknown_domains.into_iter().collect(),
            short_stories,
            empty_continuations: empty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub domain: String,
    pub source: String,
    pub cut: u8,
    pub count: usize,
}

/// Counts per domain, source and cut, plus flagged anomalies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_stories: usize,
    pub n_continuations: usize,
    pub stories_per_domain: BTreeMap<String, usize>,
    pub continuation_counts: Vec<CountRow>,
    pub unknown_domains: Vec<String>,
    pub short_stories: usize,
    pub empty_continuations: usize,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "stories: {}  continuations: {}",
            self.n_stories, self.n_continuations
        )?;
        for (domain, n) in &self.stories_per_domain {
            writeln!(f, "  domain {domain}: {n} stories")?;
        }
        if self.n_continuations == 0 {
            writeln!(f, "  no continuations loaded")?;
        }
        for row in &self.continuation_counts {
            writeln!(f, "  {} / {} / cut {}: {}", row.domain, row.source, row.cut, row.count)?;
        }
        if !self.unknown_domains.is_empty() {
            writeln!(
                f,
                "  warning: non-canonical domains: {}",
                self.unknown_domains.join(", ")
            )?;
        }
        if self.short_stories > 0 {
            writeln!(
                f,
                "  warning: {} stories have fewer than 2 sentences",
                self.short_stories
            )?;
        }
        if self.empty_continuations > 0 {
            writeln!(f, "  warning: {} empty continuations", self.empty_continuations)?;
        }
        Ok(())
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn lines_of<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a str,
) -> impl Iterator<Item = Result<(usize, String), CorpusError>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| match line {
        Err(source) => Some(Err(CorpusError::Io {
            path: path.to_string(),
            source,
        })),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
    })
}

/// Parse a stories file (`{story_id, domain, text}` per line). Sentences are
/// always derived from the text.
pub fn parse_stories<R: BufRead>(reader: R, path: &str) -> Result<Vec<StoryRecord>, CorpusError> {
    let mut out = Vec::new();
    for item in lines_of(reader, path) {
        let (line_no, line) = item?;
        let row: StoryLine = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        out.push(StoryRecord::new(row.story_id, Domain(row.domain), row.text));
    }
    Ok(out)
}

/// Parse a continuations file. Returns records paired with their line numbers.
pub fn parse_continuations<R: BufRead>(reader: R, path: &str) -> Result<Vec<(usize, ContinuationRecord)>, CorpusError> {
    let mut out = Vec::new();
    for item in lines_of(reader, path) {
        let (line_no, line) = item?;
        let row: ContinuationLine = serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let cut = CutSpec::from_percent(row.cut).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let source = Source(row.source);
        if source.is_human() && row.sample_id != 0 {
            return Err(parse_err(
                path,
                line_no,
                format!("human continuation must have sample_id 0, got {}", row.sample_id),
            ));
        }
        out.push((
            line_no,
            ContinuationRecord {
                key: ContinuationKey {
                    story_id: row.story_id,
                    domain: Domain(row.domain),
                    source,
                    cut,
                    sample_id: row.sample_id,
                },
                sentences: row.sentences,
            },
        ));
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and cross-validate a stories file and an optional continuations file.
pub fn load_dataset(
    stories_path: &Path,
    continuations_path: Option<&Path>,
) -> Result<(Dataset, ValidationReport), CorpusError> {
    let stories = parse_stories(open(stories_path)?, &stories_path.display().to_string())?;
    let mut dataset = Dataset::from_records(stories, Vec::new())?;
    if let Some(path) = continuations_path {
        let rows = parse_continuations(open(path)?, &path.display().to_string())?;
        dataset.attach(rows)?;
    }
    let report = dataset.report();
    Ok((dataset, report))
}
