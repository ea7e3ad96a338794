use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::client::{run_concurrent, Client, Generation};
use super::prompt::{build_prompt, DecodingConfig, Interface};
use super::GenError;
use crate::corpus::{make_cut, split_sentences, word_count, ContinuationKey, CutSpec, Dataset, Source};
use crate::formats::EmbeddingWriter;
use crate::theme::Facet;

/// One continuation to request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationJob {
    pub key: ContinuationKey,
    pub prefix: Vec<String>,
    /// Word count of the held-out human suffix.
    pub target_words: usize,
}

impl GenerationJob {
    /// Jobs for every story and cut, `samples` per pair, labelled `source`.
    /// Stories too short to cut are skipped.
    pub fn for_dataset(dataset: &Dataset, source: &Source, cuts: &[CutSpec], samples: u32) -> Vec<Self> {
        let mut jobs = Vec::new();
        for story in dataset.stories() {
            for &cut in cuts {
                let Ok((prefix, suffix)) = make_cut(story, cut) else {
                    continue;
                };
                let target_words = word_count(suffix);
                for sample_id in 0..samples {
                    jobs.push(GenerationJob {
                        key: ContinuationKey {
                            story_id: story.story_id.clone(),
                            domain: story.domain.clone(),
                            source: source.clone(),
                            cut,
                            sample_id,
                        },
                        prefix: prefix.to_vec(),
                        target_words,
                    });
                }
            }
        }
        jobs
    }
}

#[derive(Debug)]
pub struct GenerationOutcome {
    pub key: ContinuationKey,
    pub result: Result<Generation, GenError>,
}

pub fn generate_continuations(
    client: &Client,
    jobs: &[GenerationJob],
    interface: Interface,
    max_in_flight: usize,
) -> Vec<GenerationOutcome> {
    run_concurrent(jobs, max_in_flight, |job| GenerationOutcome {
        key: job.key.clone(),
        result: build_prompt(&job.prefix, job.target_words, interface)
            .and_then(|p| client.fetch_continuation(&p, &DecodingConfig::for_target(job.target_words))),
    })
}

/// Write successful generations in the continuations format and every
/// outcome's metadata to a sidecar. Returns the number of failures.
pub fn write_archive(
    outcomes: &[GenerationOutcome],
    continuations: &mut impl Write,
    metadata: &mut impl Write,
) -> Result<usize, GenError> {
    let mut failures = 0;
    for o in outcomes {
        let k = &o.key;
        let base = json!({
            "story_id": k.story_id,
            "domain": k.domain,
            "source": k.source,
            "cut": k.cut.percent(),
            "sample_id": k.sample_id,
        });
        match &o.result {
            Ok(g) => {
                let mut row = base.clone();
                row["sentences"] = json!(split_sentences(&g.text));
                serde_json::to_writer(&mut *continuations, &row).map_err(std::io::Error::from)?;
                continuations.write_all(b"\n")?;
                let mut meta = base;
                meta["generation"] = serde_json::to_value(g).map_err(std::io::Error::from)?;
                serde_json::to_writer(&mut *metadata, &meta).map_err(std::io::Error::from)?;
            }
            Err(e) => {
                failures += 1;
                let mut meta = base;
                meta["error"] = json!(e.to_string());
                serde_json::to_writer(&mut *metadata, &meta).map_err(std::io::Error::from)?;
            }
        }
        metadata.write_all(b"\n")?;
    }
    Ok(failures)
}

/// Embed every sentence of every continuation and write an embeddings file.
pub fn embed_dataset(
    client: &Client,
    dataset: &Dataset,
    facet: Facet,
    dim: usize,
    batch_size: usize,
    path: &Path,
) -> Result<usize, GenError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut writer = EmbeddingWriter::new(file, facet, dim)?;
    let mut rows = 0;
    for c in dataset.continuations().iter().filter(|c| !c.is_empty()) {
        let vectors = client.fetch_embeddings(&c.sentences, facet, dim, batch_size)?;
        for (i, v) in vectors.iter().enumerate() {
            writer.write(&c.key, i, v)?;
            rows += 1;
        }
    }
    writer.finish()?;
    Ok(rows)
}
