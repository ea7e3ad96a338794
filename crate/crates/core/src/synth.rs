//! Synthetic corpora with planted differences between human and model
//! continuations, for fixtures and end-to-end checks.
//!
//! Human stories are random walks in a theme space with jump sizes
//! `|mean + sd z|`, style vectors `domain_mean + story_center + noise`, and
//! affect labels drawn per family with stratified counts so that every
//! contiguous cut segment matches the family shares up to rounding. Human
//! continuations are the held-out suffixes. Model continuations are fresh
//! sequences of matched length whose jump sd, neutral share and style spread
//! are altered by the source profile.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::affect::{label_index, AffectVector, N_LABELS};
use crate::corpus::{make_cut, ContinuationKey, ContinuationRecord, CutSpec, Dataset, Domain, Source, StoryRecord};
use crate::formats::{AffectStore, AffectWriter, EmbeddingStore, EmbeddingWriter};
use crate::pipeline::{Inputs, PipelineError, RunConfig, RunInputs};
use crate::seed;
use crate::theme::Facet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    pub n_stories: usize,
    /// Sd of human jump sizes around `SynthConfig::jump_mean`.
    pub jump_sd: f64,
    /// Human shares of surprise-curiosity, conflict, neutral and other.
    pub families: [f64; 4],
    /// Offset of the domain's style mean along the second axis.
    pub style_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub name: String,
    pub samples: u32,
    /// Multiplier on the human jump sd.
    pub jump_sd_scale: f64,
    /// Added to the neutral share; other families shrink proportionally.
    pub neutral_shift: f64,
    /// Multiplier on style deviations from the source mean.
    pub style_shrink: f64,
    /// Offset of the source's style mean along the third axis.
    pub style_shift: f64,
    /// Continuation length differs from the human suffix by at most this.
    pub length_jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub domains: Vec<DomainProfile>,
    pub sources: Vec<SourceProfile>,
    pub cuts: Vec<u8>,
    /// Inclusive range of story lengths in sentences.
    pub story_sentences: (usize, usize),
    pub theme_dim: usize,
    pub style_dim: usize,
    pub jump_mean: f64,
    pub style_between_sd: f64,
    pub style_within_sd: f64,
}

impl SynthConfig {
    /// Small multi-domain, multi-stage corpus used as the bundled fixture.
    pub fn bundled() -> Self {
        let domain = |name: &str, jump_sd: f64, families: [f64; 4], style_offset: f64| DomainProfile {
            name: name.into(),
            n_stories: 8,
            jump_sd,
            families,
            style_offset,
        };
        let source = |name: &str, scale: f64, neutral: f64, shrink: f64, shift: f64| SourceProfile {
            name: name.into(),
            samples: 2,
            jump_sd_scale: scale,
            neutral_shift: neutral,
            style_shrink: shrink,
            style_shift: shift,
            length_jitter: 2,
        };
        SynthConfig {
            seed: 20250101,
            domains: vec![
                domain("professional", 0.45, [0.14, 0.12, 0.44, 0.30], 0.0),
                domain("prompt_guided", 0.35, [0.12, 0.10, 0.48, 0.30], 0.8),
                domain("public_platform", 0.30, [0.10, 0.08, 0.52, 0.30], 1.6),
            ],
            sources: vec![
                source("Base", 1.1, -0.05, 1.2, 0.3),
                source("SFT", 0.8, 0.05, 0.9, 0.6),
                source("DPO", 0.6, 0.12, 0.7, 0.9),
                source("RLVR", 0.55, 0.15, 0.65, 1.0),
            ],
            cuts: vec![40, 60, 80, 90],
            story_sentences: (12, 22),
            theme_dim: 8,
            style_dim: 6,
            jump_mean: 1.0,
            style_between_sd: 0.5,
            style_within_sd: 0.8,
        }
    }

    /// One domain of `n_stories` stories and one model source whose jump sd
    /// is halved, neutral share raised by 0.2 and style spread halved.
    pub fn flattening(n_stories: usize) -> Self {
        SynthConfig {
            seed: 7,
            domains: vec![DomainProfile {
                name: "professional".into(),
                n_stories,
                jump_sd: 0.3,
                families: [0.2, 0.2, 0.3, 0.3],
                style_offset: 0.0,
            }],
            sources: vec![SourceProfile {
                name: "Model".into(),
                samples: 1,
                jump_sd_scale: 0.5,
                neutral_shift: 0.2,
                style_shrink: 0.5,
                style_shift: 0.0,
                length_jitter: 0,
            }],
            cuts: vec![40, 60, 80, 90],
            story_sentences: (30, 50),
            theme_dim: 16,
            style_dim: 16,
            jump_mean: 1.0,
            style_between_sd: 0.6,
            style_within_sd: 0.6,
        }
    }

    /// Stage order matching the sources, human first.
    pub fn stage_order(&self) -> Vec<String> {
        std::iter::once(Source::human().to_string())
            .chain(self.sources.iter().map(|s| s.name.clone()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub stories: Vec<StoryRecord>,
    pub continuations: Vec<ContinuationRecord>,
    pub theme: EmbeddingStore,
    pub style: EmbeddingStore,
    pub affect: AffectStore,
}

const WORDS: [&str; 24] = [
    "lantern", "river", "quiet", "stone", "harbor", "letter", "winter", "garden", "window", "shadow", "market",
    "signal", "bridge", "orchard", "engine", "ribbon", "meadow", "copper", "whisper", "candle", "station", "forest",
    "mirror", "thread",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(4..10);
    let mut words: Vec<String> = (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect();
    let first = &mut words[0];
    *first = first[..1].to_uppercase() + &first[1..];
    format!("{}.", words.join(" "))
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Random walk of `n` points with jump sizes `|mean + sd z|` in uniformly
/// random directions.
fn walk(rng: &mut ChaCha8Rng, n: usize, dim: usize, mean: f64, sd: f64) -> Vec<Vec<f64>> {
    let mut x = gaussian(rng, dim, 1.0);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        if t > 0 {
            let z: f64 = StandardNormal.sample(rng);
            let step = (mean + sd * z).abs();
            let dir = gaussian(rng, dim, 1.0);
            let norm = crate::numeric::norm(&dir);
            for (a, d) in x.iter_mut().zip(&dir) {
                *a += step * d / norm;
            }
        }
        out.push(x.clone());
    }
    out
}

fn family_labels(family: usize) -> Vec<usize> {
    let names: &[&str] = match family {
        0 => &["confusion", "curiosity", "realization", "surprise"],
        1 => &["anger", "annoyance", "disapproval", "disgust"],
        2 => &["neutral"],
        _ => &[],
    };
    if family < 3 {
        return names.iter().map(|n| label_index(n).expect("canonical")).collect();
    }
    let taken: Vec<usize> = (0..3).flat_map(family_labels).collect();
    (0..N_LABELS).filter(|i| !taken.contains(i)).collect()
}

/// Family indices for `n` sentences: counts by systematic rounding of the
/// cumulative shares, then shuffled.
fn stratified(rng: &mut ChaCha8Rng, n: usize, shares: &[f64; 4]) -> Vec<usize> {
    let u: f64 = rng.random();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (f, s) in shares.iter().enumerate() {
        cum += s;
        let upto = if f == 3 {
            n
        } else {
            ((n as f64 * cum + u).floor() as usize).min(n)
        };
        out.extend(std::iter::repeat_n(f, upto.saturating_sub(prev)));
        prev = prev.max(upto);
    }
    out.shuffle(rng);
    out
}

/// Probability vector whose top-1 label belongs to `family`.
fn affect_vector(rng: &mut ChaCha8Rng, family: usize) -> AffectVector {
    let labels = family_labels(family);
    let top = labels[rng.random_range(0..labels.len())];
    let mut w: Vec<f64> = (0..N_LABELS).map(|_| rng.random::<f64>()).collect();
    w[top] = 0.0;
    let total: f64 = w.iter().sum();
    let mut probs = [0.0; N_LABELS];
    for (p, x) in probs.iter_mut().zip(&w) {
        *p = 0.5 * x / total;
    }
    probs[top] = 0.5;
    AffectVector::new(probs).expect("valid probabilities")
}

fn shifted(shares: &[f64; 4], neutral_shift: f64) -> [f64; 4] {
    let neutral = (shares[2] + neutral_shift).clamp(0.0, 1.0);
    let rest = 1.0 - shares[2];
    let scale = if rest > 0.0 { (1.0 - neutral) / rest } else { 0.0 };
    [shares[0] * scale, shares[1] * scale, neutral, shares[3] * scale]
}

fn axis(dim: usize, i: usize, x: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if dim > 0 {
        v[i.min(dim - 1)] = x;
    }
    v
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Generate a corpus. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut stories = Vec::new();
    let mut continuations = Vec::new();
    let mut theme = EmbeddingStore::new(Facet::Theme, cfg.theme_dim);
    let mut style = EmbeddingStore::new(Facet::Style, cfg.style_dim);
    let mut affect = AffectStore::new();
    let cuts: Vec<CutSpec> = cfg
        .cuts
        .iter()
        .map(|c| CutSpec::from_percent(*c).expect("valid cut"))
        .collect();
    let base = axis(cfg.style_dim, 0, 3.0);

    for d in &cfg.domains {
        let domain = Domain::new(d.name.clone());
        let domain_mean = add(&base, &axis(cfg.style_dim, 1, d.style_offset));
        for s in 0..d.n_stories {
            let story_id = format!("{}-{s:04}", d.name);
            let mut rng = seed::rng(seed::derive(cfg.seed, &story_id));
            let (lo, hi) = cfg.story_sentences;
            let t = rng.random_range(lo.max(2)..=hi.max(lo.max(2)));
            let sentences: Vec<String> = (0..t).map(|_| sentence(&mut rng)).collect();
            let story = StoryRecord::new(story_id.clone(), domain.clone(), sentences.join(" "));
            debug_assert_eq!(story.sentences, sentences);

            let trajectory = walk(&mut rng, t, cfg.theme_dim, cfg.jump_mean, d.jump_sd);
            let center = gaussian(&mut rng, cfg.style_dim, cfg.style_between_sd);
            let styles: Vec<Vec<f64>> = (0..t)
                .map(|_| {
                    add(
                        &add(&domain_mean, &center),
                        &gaussian(&mut rng, cfg.style_dim, cfg.style_within_sd),
                    )
                })
                .collect();
            // Stratify family labels within every segment between cut boundaries.
            let mut bounds: Vec<usize> = cuts.iter().map(|c| c.prefix_len(t)).collect();
            bounds.extend([0, t]);
            bounds.sort_unstable();
            bounds.dedup();
            let families: Vec<usize> = bounds
                .windows(2)
                .flat_map(|w| stratified(&mut rng, w[1] - w[0], &d.families))
                .collect();
            let affects: Vec<AffectVector> = families.iter().map(|f| affect_vector(&mut rng, *f)).collect();

            for &cut in &cuts {
                let Ok((prefix, suffix)) = make_cut(&story, cut) else {
                    continue;
                };
                let start = prefix.len();
                let key = ContinuationKey {
                    story_id: story_id.clone(),
                    domain: domain.clone(),
                    source: Source::human(),
                    cut,
                    sample_id: 0,
                };
                for i in 0..suffix.len() {
                    theme.insert(key.clone(), i, trajectory[start + i].clone());
                    style.insert(key.clone(), i, styles[start + i].clone());
                    affect.insert(key.clone(), i, affects[start + i]);
                }
                continuations.push(ContinuationRecord {
                    key,
                    sentences: suffix.to_vec(),
                });

                for src in &cfg.sources {
                    let mean = add(&domain_mean, &axis(cfg.style_dim, 2, src.style_shift));
                    let shares = shifted(&d.families, src.neutral_shift);
                    for sample_id in 0..src.samples {
                        let key = ContinuationKey {
                            source: Source::new(src.name.clone()),
                            sample_id,
                            ..continuations.last().expect("human row").key.clone()
                        };
                        let mut rng = seed::rng(seed::derive(cfg.seed, &key.to_string()));
                        let j = src.length_jitter as i64;
                        let n = (suffix.len() as i64 + rng.random_range(-j..=j)).max(1) as usize;
                        let text: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
                        let traj = walk(&mut rng, n, cfg.theme_dim, cfg.jump_mean, d.jump_sd * src.jump_sd_scale);
                        let fams = stratified(&mut rng, n, &shares);
                        for i in 0..n {
                            theme.insert(key.clone(), i, traj[i].clone());
                            let noise = gaussian(&mut rng, cfg.style_dim, cfg.style_within_sd);
                            let dev: Vec<f64> = add(&center, &noise).iter().map(|x| src.style_shrink * x).collect();
                            style.insert(key.clone(), i, add(&mean, &dev));
                            affect.insert(key.clone(), i, affect_vector(&mut rng, fams[i]));
                        }
                        continuations.push(ContinuationRecord { key, sentences: text });
                    }
                }
            }
            stories.push(story);
        }
    }
    SynthCorpus {
        stories,
        continuations,
        theme,
        style,
        affect,
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl SynthCorpus {
    pub fn dataset(&self) -> Dataset {
        Dataset::from_records(self.stories.clone(), self.continuations.clone())
            .expect("synthetic records are consistent")
    }

    /// In-memory pipeline inputs.
    pub fn inputs(&self) -> RunInputs {
        let dataset = self.dataset();
        RunInputs {
            validation: dataset.report(),
            dataset,
            theme: Some(self.theme.clone()),
            style: Some(self.style.clone()),
            affect: Some(self.affect.clone()),
        }
    }

    /// Write the corpus as JSONL input files plus a `config.toml` that
    /// analyzes them, and return that config.
    pub fn write(&self, dir: &Path, stage_order: Vec<String>) -> Result<RunConfig, PipelineError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let open = |name: &str| -> Result<std::io::BufWriter<std::fs::File>, PipelineError> {
            let p = dir.join(name);
            std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(io(&p))
        };
        let p = dir.join("stories.jsonl");
        let mut w = open("stories.jsonl")?;
        for s in &self.stories {
            let row = json!({"story_id": s.story_id, "domain": s.domain, "text": s.text});
            writeln!(w, "{row}").map_err(io(&p))?;
        }
        w.flush().map_err(io(&p))?;

        let p = dir.join("continuations.jsonl");
        let mut w = open("continuations.jsonl")?;
        for c in &self.continuations {
            let row = serde_json::to_string(c).expect("record serializes");
            writeln!(w, "{row}").map_err(io(&p))?;
        }
        w.flush().map_err(io(&p))?;

        for (name, store) in [("theme.jsonl", &self.theme), ("style.jsonl", &self.style)] {
            let p = dir.join(name);
            let mut ew = EmbeddingWriter::new(open(name)?, store.facet(), store.dim()).map_err(io(&p))?;
            for c in &self.continuations {
                for i in 0..c.len() {
                    if let Some(v) = store.get(&c.key, i) {
                        ew.write(&c.key, i, v).map_err(io(&p))?;
                    }
                }
            }
            ew.finish().map_err(io(&p))?.flush().map_err(io(&p))?;
        }

        let p = dir.join("affect.jsonl");
        let mut aw = AffectWriter::new(open("affect.jsonl")?).map_err(io(&p))?;
        for c in &self.continuations {
            for i in 0..c.len() {
                if let Some(v) = self.affect.get(&c.key, i) {
                    aw.write(&c.key, i, v).map_err(io(&p))?;
                }
            }
        }
        aw.finish().map_err(io(&p))?.flush().map_err(io(&p))?;

        let cfg = RunConfig {
            output: "report".into(),
            endpoints: (
                stage_order.first().cloned().unwrap_or_default(),
                stage_order.last().cloned().unwrap_or_default(),
            ),
            stage_order,
            inputs: Inputs {
                stories: Some("stories.jsonl".into()),
                continuations: Some("continuations.jsonl".into()),
                theme_embeddings: Some("theme.jsonl".into()),
                style_embeddings: Some("style.jsonl".into()),
                affect: Some("affect.jsonl".into()),
            },
            ..RunConfig::default()
        };
        let p = dir.join("config.toml");
        let text = toml::to_string_pretty(&cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
        std::fs::write(&p, text).map_err(io(&p))?;
        let mut resolved = cfg;
        resolved.resolve_relative(dir);
        Ok(resolved)
    }
}
