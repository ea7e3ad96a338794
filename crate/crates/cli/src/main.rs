use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use storyflat::corpus::{load_dataset, make_cut, word_count, CutSpec, Source};
use storyflat::genclient::{
    embed_dataset, generate_continuations, write_archive, Client, Endpoint, GenerationJob, Interface, RetryPolicy,
};
use storyflat::pipeline::{self, render_markdown, PipelineError, Report, RunConfig};
use storyflat::stats::Weighting;
use storyflat::synth::{self, SynthConfig};
use storyflat::theme::Facet;

#[derive(Parser)]
#[command(
    name = "storyflat",
    version,
    about = "Measure narrative flattening in story continuations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct EndpointArgs {
    /// Base URL of an OpenAI-compatible API, e.g. http://localhost:8000/v1
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    model: String,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 4)]
    max_retries: u32,
}

impl EndpointArgs {
    fn client(&self) -> Client {
        let endpoint = Endpoint {
            api_key_env: self.api_key_env.clone(),
            ..Endpoint::new(&self.base_url, &self.model)
        };
        Client::new(
            endpoint,
            RetryPolicy {
                max_retries: self.max_retries,
                ..RetryPolicy::default()
            },
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterfaceArg {
    RawPrefix,
    Chat,
    PromptControl,
}

#[derive(Clone, Copy, ValueEnum)]
enum FacetArg {
    Theme,
    Style,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Bundled,
    Flattening,
}

#[derive(Subcommand)]
enum Command {
    /// Load stories and continuations and print integrity counts.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stories: Option<PathBuf>,
        #[arg(long)]
        continuations: Option<PathBuf>,
    },
    /// Split stories into sentences and write prefix/suffix pairs per cut.
    Segment {
        #[arg(long)]
        stories: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "40,60,80,90")]
        cuts: Vec<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Request model continuations for every story and cut.
    Generate {
        #[arg(long)]
        stories: PathBuf,
        #[command(flatten)]
        endpoint: EndpointArgs,
        /// Source label written to the continuations file.
        #[arg(long)]
        source: String,
        #[arg(long, value_enum, default_value = "raw-prefix")]
        interface: InterfaceArg,
        #[arg(long, default_value_t = 1)]
        samples: u32,
        #[arg(long, value_delimiter = ',', default_value = "40,60,80,90")]
        cuts: Vec<u8>,
        #[arg(long, default_value_t = 8)]
        max_in_flight: usize,
        /// Continuations output (JSONL); metadata goes to `<out>.meta.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every continuation sentence.
    Embed {
        #[arg(long)]
        stories: PathBuf,
        #[arg(long)]
        continuations: PathBuf,
        #[command(flatten)]
        endpoint: EndpointArgs,
        #[arg(long, value_enum)]
        facet: FacetArg,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured analyses and write report tables.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Weight stories equally instead of continuations.
        #[arg(long)]
        weight_by_story: bool,
    },
    /// Print a Markdown summary of a finished analysis.
    Report {
        /// Output directory of `analyze`, or its results.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with a ready-to-run config.
    Synth {
        #[arg(long, value_enum, default_value = "bundled")]
        preset: Preset,
        /// Story count for the flattening preset.
        #[arg(long, default_value_t = 500)]
        stories: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with its exit status: 1 for configuration, 2 for data.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    PipelineError::Config(msg.into()).into()
}

fn cuts_of(cuts: &[u8]) -> Result<Vec<CutSpec>, Failure> {
    cuts.iter()
        .map(|c| CutSpec::from_percent(*c).map_err(|e| config_error(e.to_string())))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| data(anyhow::Error::from(e).context(format!("creating {}", path.display()))))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate {
            config,
            stories,
            continuations,
        } => {
            let (stories, continuations) = match (config, stories) {
                (Some(path), _) => {
                    let cfg = RunConfig::load(&path)?;
                    let s = cfg
                        .inputs
                        .stories
                        .ok_or_else(|| config_error("no stories input configured"))?;
                    (s, cfg.inputs.continuations)
                }
                (None, Some(s)) => (s, continuations),
                (None, None) => return Err(config_error("pass --config or --stories")),
            };
            let (_, report) = load_dataset(&stories, continuations.as_deref()).map_err(data)?;
            print!("{report}");
        }
        Command::Segment { stories, cuts, out } => {
            let cuts = cuts_of(&cuts)?;
            let (dataset, _) = load_dataset(&stories, None).map_err(data)?;
            let mut w = create(&out)?;
            for story in dataset.stories() {
                for &cut in &cuts {
                    let row = match make_cut(story, cut) {
                        Ok((prefix, suffix)) => json!({
                            "story_id": story.story_id,
                            "domain": story.domain,
                            "cut": cut.percent(),
                            "prefix": prefix,
                            "suffix": suffix,
                            "target_words": word_count(suffix),
                        }),
                        Err(e) => {
                            log::warn!("{}: {e}", story.story_id);
                            continue;
                        }
                    };
                    writeln!(w, "{row}").map_err(data)?;
                }
            }
            w.flush().map_err(data)?;
        }
        Command::Generate {
            stories,
            endpoint,
            source,
            interface,
            samples,
            cuts,
            max_in_flight,
            out,
        } => {
            let cuts = cuts_of(&cuts)?;
            let (dataset, _) = load_dataset(&stories, None).map_err(data)?;
            let jobs = GenerationJob::for_dataset(&dataset, &Source::new(source), &cuts, samples);
            let interface = match interface {
                InterfaceArg::RawPrefix => Interface::RawPrefix,
                InterfaceArg::Chat => Interface::Chat,
                InterfaceArg::PromptControl => Interface::PromptControl,
            };
            log::info!("{} generation jobs", jobs.len());
            let outcomes = generate_continuations(&endpoint.client(), &jobs, interface, max_in_flight);
            let mut cw = create(&out)?;
            let mut meta_path = out.clone().into_os_string();
            meta_path.push(".meta.jsonl");
            let mut mw = create(Path::new(&meta_path))?;
            let failures = write_archive(&outcomes, &mut cw, &mut mw).map_err(data)?;
            cw.flush().map_err(data)?;
            mw.flush().map_err(data)?;
            if failures > 0 {
                return Err(data(anyhow::anyhow!(
                    "{failures} of {} generations failed",
                    outcomes.len()
                )));
            }
        }
        Command::Embed {
            stories,
            continuations,
            endpoint,
            facet,
            dim,
            batch_size,
            out,
        } => {
            let (dataset, _) = load_dataset(&stories, Some(&continuations)).map_err(data)?;
            let facet = match facet {
                FacetArg::Theme => Facet::Theme,
                FacetArg::Style => Facet::Style,
            };
            let rows = embed_dataset(&endpoint.client(), &dataset, facet, dim, batch_size, &out).map_err(data)?;
            log::info!("wrote {rows} embeddings to {}", out.display());
        }
        Command::Analyze {
            config,
            seed,
            out,
            weight_by_story,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            if weight_by_story {
                cfg.weighting = Weighting::Story;
            }
            let (report, manifest) = pipeline::run(&cfg)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            println!(
                "wrote {} files to {} (config {})",
                manifest.outputs.len() + 1,
                cfg.output.display(),
                &manifest.config_hash[..12]
            );
        }
        Command::Report { out } => {
            let path = if out.is_dir() { out.join("results.json") } else { out };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| data(anyhow::Error::from(e).context(format!("reading {}", path.display()))))?;
            let report: Report = serde_json::from_str(&text).map_err(data)?;
            print!("{}", render_markdown(&report));
        }
        Command::Synth {
            preset,
            stories,
            seed,
            out,
        } => {
            let mut cfg = match preset {
                Preset::Bundled => SynthConfig::bundled(),
                Preset::Flattening => SynthConfig::flattening(stories),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let corpus = synth::generate(&cfg);
            corpus.write(&out, cfg.stage_order())?;
            println!(
                "wrote {} stories and {} continuations to {}",
                corpus.stories.len(),
                corpus.continuations.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
